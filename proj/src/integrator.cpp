#include "cstab/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cstab {
namespace {

// Dormand–Prince coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187,
                 a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192,
                 a75 = -2187.0 / 6784, a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                 e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense output.
constexpr double d1 = -12715105075.0 / 11282082432.0,
                 d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0,
                 d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0,
                 d7 = 69997945.0 / 29380423.0;

}  // namespace

Vector DenseStep::eval(double t) const {
  const double theta = (t - t0) / h;
  const double theta1 = 1.0 - theta;
  return y0 + theta * (r2 + theta1 * (r3 + theta * (r4 + theta1 * r5)));
}

OdeResult Dopri5::integrate(double t0, const Vector& z0, double t1,
                            const Observer& observer) const {
  OdeResult result;
  const Index n = z0.size();
  Vector y = z0;
  double t = t0;
  Vector k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), tmp(n), y1(n), err(n);
  rhs_(t, y, k1);
  result.evaluations = 1;
  if (t1 <= t0) {
    result.t = t0;
    result.z = y;
    return result;
  }

  const double scale0 = std::max(z0.lpNorm<Eigen::Infinity>(), 1e-300);
  double h = opt_.initial_step;
  if (h <= 0.0) {
    const double slope = k1.lpNorm<Eigen::Infinity>();
    h = slope > 0 ? 0.01 * scale0 / slope : 0.01 * (t1 - t0);
    h = std::min(h, 0.1 * (t1 - t0));
    h = std::max(h, 1e-10 * (t1 - t0));
  }
  h = std::min(h, opt_.max_step);

  while (t < t1) {
    if (result.steps + result.rejected >= opt_.max_steps) {
      std::ostringstream os;
      os << "step budget exhausted at t=" << t;
      throw_error(ErrorCode::kStepUnderflow, os.str());
    }
    bool last = false;
    // Absorb rounding remnants into the final step.
    if (t + h >= t1 || t1 - (t + h) < 1e-12 * std::max(1.0, std::abs(t1))) {
      h = t1 - t;
      last = true;
    }
    if (h < 1e-14 * std::max(1.0, std::abs(t))) {
      std::ostringstream os;
      os << "step size underflow at t=" << t;
      throw_error(ErrorCode::kStepUnderflow, os.str());
    }

    tmp = y + h * a21 * k1;
    rhs_(t + c2 * h, tmp, k2);
    tmp = y + h * (a31 * k1 + a32 * k2);
    rhs_(t + c3 * h, tmp, k3);
    tmp = y + h * (a41 * k1 + a42 * k2 + a43 * k3);
    rhs_(t + c4 * h, tmp, k4);
    tmp = y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    rhs_(t + c5 * h, tmp, k5);
    tmp = y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    rhs_(t + h, tmp, k6);
    y1 = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    rhs_(t + h, y1, k7);
    result.evaluations += 6;

    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    double sq = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double sc = opt_.atol * scale0 +
                        opt_.rtol * std::max(std::abs(y[i]), std::abs(y1[i]));
      const double q = err[i] / sc;
      sq += q * q;
    }
    const double e = n > 0 ? std::sqrt(sq / static_cast<double>(n)) : 0.0;
    if (!std::isfinite(e)) {
      h *= 0.2;
      ++result.rejected;
      continue;
    }

    if (e <= 1.0) {
      DenseStep step;
      step.t0 = t;
      step.h = h;
      step.y0 = y;
      step.y1 = y1;
      step.r2 = y1 - y;
      step.r3 = h * k1 - step.r2;
      step.r4 = step.r2 - h * k7 - step.r3;
      step.r5 = h * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);
      ++result.steps;

      std::optional<double> stop;
      if (observer) stop = observer(step);
      if (stop && *stop < step.t1()) {
        result.t = std::max(*stop, t);
        result.z = step.eval(result.t);
        result.stopped = true;
        return result;
      }
      y = y1;
      k1 = k7;
      t = last ? t1 : t + h;
      if (stop) {
        result.t = t;
        result.z = y;
        result.stopped = true;
        return result;
      }
      if (y.lpNorm<Eigen::Infinity>() > opt_.blowup_factor * scale0) {
        result.diverged = true;
        break;
      }
    } else {
      ++result.rejected;
      last = false;
    }
    const double factor =
        e > 0 ? std::clamp(0.9 * std::pow(e, -0.2), 0.2, 5.0) : 5.0;
    h = std::min(h * factor, opt_.max_step);
  }
  result.t = t;
  result.z = y;
  return result;
}

}  // namespace cstab
