#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cstab/common.hpp"

namespace cstab {

enum class LawKind { kConstant, kQuadratic, kNormalized, kSwitching };

const char* to_string(LawKind kind);
LawKind law_kind_from_string(const std::string& s);

/// Scalar feedback v(t) for ż = Az + vBz:
///   constant    v = −λ
///   quadratic   v = −⟨Bz, z⟩
///   normalized  v = −ρ⟨z, Bz⟩/‖z‖²  (0 at z = 0)
///   switching   v = −ρ·sign⟨z, Bz⟩   (sign 0 = 0)
struct ControlLaw {
  LawKind kind = LawKind::kConstant;
  double gain = 0.0;  // λ for constant, ρ for normalized/switching, unused for quadratic

  static ControlLaw constant(double lambda) { return {LawKind::kConstant, lambda}; }
  static ControlLaw quadratic() { return {LawKind::kQuadratic, 1.0}; }
  static ControlLaw normalized(double rho) { return {LawKind::kNormalized, rho}; }
  static ControlLaw switching(double rho) { return {LawKind::kSwitching, rho}; }

  /// v as a function of the form ⟨Bz, z⟩_P and ‖z‖²_P.
  double value(double form, double norm_sq) const;
  std::string label() const;
};

struct IntegratorStats {
  long steps = 0;
  long rejected = 0;
  long evaluations = 0;
  long events = 0;  // located sign changes (switching law)
};

/// Sampled closed-loop run. Samples lie on a uniform output grid (plus the
/// final time and event times), so quadratures over them are well behaved.
struct Trajectory {
  std::string model_id;
  ControlLaw law;
  std::vector<double> times;
  std::vector<double> norms;     // ‖z(t)‖_P
  std::vector<double> controls;  // v(t)
  std::vector<double> forms;     // ⟨Bz(t), z(t)⟩_P
  /// ∫₀ᵗ⟨Bz, z⟩_P dτ at each sample, by Gauss–Legendre on the solver's dense
  /// output; empty when the run was assembled from samples alone.
  std::vector<double> dissipation;
  std::vector<std::pair<double, Vector>> snapshots;
  Vector final_state;
  IntegratorStats stats;
  bool diverged = false;
  /// Lipschitz constant of B used for the growth bound e^{λLt}, if known.
  std::optional<double> lipschitz;

  double initial_norm() const { return norms.empty() ? 0.0 : norms.front(); }
};

struct DecayFit {
  double rate = 0.0;        // −slope of ln‖z‖
  double overshoot = 1.0;   // max_k ‖z(t_k)‖ e^{rate t_k} / ‖z₀‖
  double r_squared = 1.0;
  int samples = 0;
  bool extinct = false;     // the trajectory reached exactly zero
  bool non_exponential = false;  // r² < 0.99
};

/// Least-squares line through (t, ln‖z‖) over the trailing `window` fraction
/// of the time span.
DecayFit fit_decay(const Trajectory& traj, double window = 0.5);

/// Same fit on raw samples restricted to [t_from, t_to].
DecayFit fit_decay(const std::vector<double>& times, const std::vector<double>& norms,
                   double t_from, double t_to);

/// Slope of ln‖z‖ against ln t over [t_from, t_to] (power-law exponent).
double fit_power_law(const Trajectory& traj, double t_from, double t_to,
                     double* r_squared = nullptr);

nlohmann::json to_json(const DecayFit& fit);

}  // namespace cstab
