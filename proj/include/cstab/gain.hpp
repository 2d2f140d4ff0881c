#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "cstab/certifier.hpp"
#include "cstab/trajectory.hpp"

namespace cstab {

enum class EnvelopeMode { kUniform, kLocal };

const char* to_string(EnvelopeMode mode);

/// Admissible constant gain interval (0, lambda_max) with the decay envelope
/// ‖z(t)‖ ≤ M_env e^{−σt}‖z₀‖ at the chosen gain.
struct GainEnvelope {
  EnvelopeMode mode = EnvelopeMode::kUniform;
  std::optional<double> radius;  // local mode: validity for ‖z₀‖ ≤ R
  double lambda_max = 0.0;
  double lambda = 0.0;
  double gamma = 1.0;
  double sigma = 0.0;
  double M_env = 1.0;
  /// K̃ in uniform mode, L_R in local mode.
  double K_tilde = 0.0;
  double lipschitz = 0.0;
  double T = 0.0;
  double delta = 0.0;
  std::optional<double> v_max;
  double eta1 = 0.0;  // uniform mode
  double eta2 = 0.0;  // uniform: γ > 0 boundary; local: η
  std::string certificate_model;

  /// γ(λ) for this envelope's constants.
  double gamma_at(double lambda) const;
  /// σ(λ) = −ln γ(λ) / (2T).
  double sigma_at(double lambda) const;
};

nlohmann::json to_json(const GainEnvelope& env);

/// K = T·L·e^{η₁LT} and K̃ = 2KL(1 + e^{η₁LT}).
double k_constant(double L, double T, double eta1);
double k_tilde(double L, double T, double eta1);

struct UniformOptions {
  std::optional<double> v_max;
  std::optional<double> eta1;    // default 1/(L·T)
  std::optional<double> lambda;  // default: the γ-minimizing λ*
};

/// Interval min(η₁, η₂, δ/(TK̃), v_max) with λ* = δ/(2TK̃) clipped to
/// 0.99·lambda_max; M_env = e^{λLT}/√γ.
GainEnvelope synthesize_uniform(const Certificate& cert, double L,
                                const UniformOptions& options = {});

/// λ_R = inf(η, δ/(2T²L_R²)) with default λ = δ/(4T²L_R²); M_R = 1/√γ.
/// Requires `b_positive`.
GainEnvelope synthesize_local(const Certificate& cert, double L_R, double R,
                              bool b_positive, std::optional<double> lambda = std::nullopt);

struct EnvelopeReport {
  bool pass = true;
  double worst_ratio = 0.0;  // max_k ‖z(t_k)‖ / (M e^{−σt_k}‖z₀‖)
  std::optional<double> first_violation;
  std::optional<DecayFit> fit;
  int samples = 0;
};

nlohmann::json to_json(const EnvelopeReport& r);

/// Checks every stored sample against the envelope (relative slack 1e-6) and
/// fits the empirical decay over the trailing half.
EnvelopeReport envelope_check(const Trajectory& traj, const GainEnvelope& env);

}  // namespace cstab
