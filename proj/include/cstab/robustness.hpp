#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cstab/common.hpp"
#include "cstab/gain.hpp"
#include "cstab/gallery.hpp"
#include "cstab/operator_core.hpp"
#include "cstab/trajectory.hpp"

namespace cstab {

/// δ_a = δ − T²L_B‖a‖(2 + T‖a‖): the observability constant left after a
/// dynamic perturbation A → A + a. May be ≤ 0.
double perturbed_delta(double delta, double T, double L_B, double a_norm);

/// P(X) = c2 X² + c1 X + c0 = (T³L_B) X² + 2(T²L_B) X + (λTK̃ − δ).
struct PPoly {
  double c2 = 0.0, c1 = 0.0, c0 = 0.0;
  double operator()(double x) const { return (c2 * x + c1) * x + c0; }
};

PPoly p_poly(double delta, double T, double L_B, double lambda, double K_tilde);

struct RadiusResult {
  std::optional<double> r;  // positive root of P; empty when no margin exists
  double radicand = 0.0;    // 1 + δ/(T L_B) − λK̃/L_B
  std::string reason;       // set when r is empty
};

/// Admissible ‖a‖ for dynamic perturbations: r = (−1 + √radicand)/T.
RadiusResult dynamic_radius(double delta, double T, double L_B, double lambda, double K_tilde);

struct JointBounds {
  RadiusResult radius;
  double r_tilde = 0.0;
  PPoly poly;
  double Lb_bound = 0.0;        // −P(r̃)/T
  double Ln_bound = 0.0;        // σ/M
  double combined_bound = 0.0;  // threshold for L_a + λL_b
  double separate_additive = 0.0;  // σ/(2M)
  double separate_control = 0.0;   // σTK̃/(2Mδ)
  double sigma = 0.0, M = 1.0;
  std::string source = "envelope";  // or "empirical"
};

/// Empirical decay constants used in place of the envelope's σ, M_env.
struct EmpiricalDecay {
  double sigma = 0.0;
  double M = 1.0;
};

/// Throws kPrecondition when no dynamic margin exists or r̃ ≥ r.
JointBounds joint_bounds(const GainEnvelope& env, double L_B, double r_tilde,
                         std::optional<EmpiricalDecay> empirical = std::nullopt);

/// Closed forms for the velocity-feedback string: γ = 8λ² − 2λ + 1,
/// p-bound = −√γ ln γ / 4, q-bound = −√γ ln γ. Valid for 0 < λ < 1/4.
struct WaveClosedForms {
  double lambda = 0.0;
  double gamma = 1.0;
  double p_bound = 0.0;
  double q_bound = 0.0;
};

WaveClosedForms wave_closed_form_bounds(double lambda);

enum class PerturbationKind { kDynamic, kControl, kAdditive };

const char* to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(const std::string& s);

using PerturbationOperator = std::variant<LinearOperator, NonlinearOperator>;

struct ValidationOptions {
  std::uint64_t seed = 0;
  double t_end = 0.0;          // 0 picks a horizon from the envelope rate
  std::optional<Vector> z0;    // default: seeded random unit state
  int dissipativity_samples = 200;
  std::string label;           // run key, e.g. "additive@0.5"
};

struct ValidationRun {
  std::string key;
  PerturbationKind kind = PerturbationKind::kAdditive;
  double magnitude = 0.0;      // ‖a‖, L_b or L_n
  bool inside = true;
  DecayFit fit;
  bool diverged = false;
  std::optional<bool> verdict;  // empty for informational (outside) probes
  std::optional<double> predicted_rate;  // σ − M L_n for additive runs
};

nlohmann::json to_json(const ValidationRun& run);

/// Model with B replaced by B + b.
SystemModel with_control_perturbation(const SystemModel& model, const PerturbationOperator& b);

/// Simulates the perturbed closed loop under v ≡ −λ_env. kPrecondition when
/// the perturbation lacks norm/Lipschitz metadata or, for dynamic
/// perturbations, is not dissipative (outside P_L).
ValidationRun validate_margin(const SystemModel& model, const GainEnvelope& env,
                              const PerturbationOperator& perturbation, PerturbationKind kind,
                              bool inside, const ValidationOptions& options = {});

struct RobustnessReport {
  std::string model_id;
  JointBounds bounds;
  std::optional<std::string> bounds_error;  // joint bounds unavailable
  std::vector<ValidationRun> runs;          // sorted by key
};

nlohmann::json to_json(const RobustnessReport& report);

struct RobustnessOptions {
  std::optional<double> r_tilde;           // default r/2
  std::vector<double> probes{0.5, 1.5};    // fractions of each bound
  std::uint64_t seed = 0;
  Index max_validation_dimension = 128;
  std::optional<EmpiricalDecay> empirical;
};

/// Bounds plus probe runs for the three perturbation kinds along seeded
/// random directions: skew (dissipative) a, linear b, linear n.
RobustnessReport analyze_robustness(const SystemModel& model, const GainEnvelope& env,
                                    double L_B, const RobustnessOptions& options = {});

/// Decay fit of a gallery entry's built-in perturbation under v ≡ −λ.
DecayFit simulate_perturbed_decay(const gallery::GalleryEntry& entry, std::uint64_t seed,
                                  double t_end = 60.0);

}  // namespace cstab
