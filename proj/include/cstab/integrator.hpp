#pragma once

#include <functional>
#include <limits>
#include <optional>

#include "cstab/common.hpp"

namespace cstab {

struct OdeOptions {
  double rtol = 1e-9;
  double atol = 1e-12;
  double initial_step = 0.0;  // 0 picks a step from the initial slope
  double max_step = std::numeric_limits<double>::infinity();
  long max_steps = 50'000'000;
  /// Stop and report divergence once ‖z‖∞ exceeds this multiple of ‖z₀‖∞.
  double blowup_factor = 1e12;
};

using OdeRhs = std::function<void(double t, const Vector& z, Vector& dz)>;

/// One accepted step with its continuous extension.
struct DenseStep {
  double t0 = 0.0;
  double h = 0.0;
  Vector y0, y1;
  Vector r2, r3, r4, r5;

  double t1() const { return t0 + h; }
  Vector eval(double t) const;
};

struct OdeResult {
  double t = 0.0;
  Vector z;
  long steps = 0;
  long rejected = 0;
  long evaluations = 0;
  bool diverged = false;
  bool stopped = false;  // an observer requested an early stop
};

/// Dormand–Prince 5(4) embedded pair with its fourth-order dense output.
/// The observer sees every accepted step; returning a time inside the step
/// truncates integration there (event location).
class Dopri5 {
 public:
  using Observer = std::function<std::optional<double>(const DenseStep&)>;

  Dopri5(OdeRhs rhs, OdeOptions options) : rhs_(std::move(rhs)), opt_(options) {}

  /// Throws kStepUnderflow with the failure time when the step collapses.
  OdeResult integrate(double t0, const Vector& z0, double t1,
                      const Observer& observer = {}) const;

 private:
  OdeRhs rhs_;
  OdeOptions opt_;
};

}  // namespace cstab
