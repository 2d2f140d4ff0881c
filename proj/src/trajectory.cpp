#include "cstab/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cstab {

const char* to_string(LawKind kind) {
  switch (kind) {
    case LawKind::kConstant: return "constant";
    case LawKind::kQuadratic: return "quadratic";
    case LawKind::kNormalized: return "normalized";
    case LawKind::kSwitching: return "switching";
  }
  return "unknown";
}

LawKind law_kind_from_string(const std::string& s) {
  if (s == "constant") return LawKind::kConstant;
  if (s == "quadratic") return LawKind::kQuadratic;
  if (s == "normalized") return LawKind::kNormalized;
  if (s == "switching") return LawKind::kSwitching;
  throw_error(ErrorCode::kParse, "unknown control law '" + s +
                                     "' (expected constant, quadratic, normalized, switching)");
}

double ControlLaw::value(double form, double norm_sq) const {
  switch (kind) {
    case LawKind::kConstant:
      return -gain;
    case LawKind::kQuadratic:
      return -form;
    case LawKind::kNormalized:
      return norm_sq > 0 ? -gain * form / norm_sq : 0.0;
    case LawKind::kSwitching:
      return form > 0 ? -gain : (form < 0 ? gain : 0.0);
  }
  return 0.0;
}

std::string ControlLaw::label() const {
  std::ostringstream os;
  os.precision(17);
  os << to_string(kind);
  if (kind != LawKind::kQuadratic) os << "(" << gain << ")";
  return os.str();
}

namespace {

struct Line {
  double slope = 0;
  double intercept = 0;
  double r_squared = 1;
};

Line least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  Line l;
  l.slope = sxx > 0 ? sxy / sxx : 0.0;
  l.intercept = my - l.slope * mx;
  double sse = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (l.intercept + l.slope * x[i]);
    sse += r * r;
  }
  // Constant data is fitted exactly by a flat line.
  l.r_squared = syy > 1e-300 ? 1.0 - sse / syy : 1.0;
  return l;
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& times, const std::vector<double>& norms,
                   double t_from, double t_to) {
  if (times.size() != norms.size()) {
    throw_error(ErrorCode::kDimensionMismatch, "times and norms differ in length");
  }
  DecayFit fit;
  std::vector<double> x, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < t_from || times[i] > t_to) continue;
    if (norms[i] <= 0.0) {
      fit.extinct = true;
      break;
    }
    x.push_back(times[i]);
    y.push_back(std::log(norms[i]));
  }
  if (x.size() < 10) {
    std::ostringstream os;
    os << "decay fit needs at least 10 positive samples in the window, got " << x.size();
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  const Line l = least_squares(x, y);
  fit.rate = -l.slope;
  fit.r_squared = l.r_squared;
  fit.samples = static_cast<int>(x.size());
  fit.non_exponential = fit.r_squared < 0.99;
  const double z0 = norms.front();
  if (z0 > 0) {
    double worst = 0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      worst = std::max(worst, norms[i] * std::exp(fit.rate * (times[i] - times.front())) / z0);
    }
    fit.overshoot = worst;
  }
  return fit;
}

DecayFit fit_decay(const Trajectory& traj, double window) {
  if (!(window > 0 && window <= 1)) throw_error(ErrorCode::kPrecondition, "window must lie in (0, 1]");
  if (traj.times.empty()) throw_error(ErrorCode::kPrecondition, "empty trajectory");
  const double t0 = traj.times.front(), t1 = traj.times.back();
  return fit_decay(traj.times, traj.norms, t1 - window * (t1 - t0), t1);
}

double fit_power_law(const Trajectory& traj, double t_from, double t_to, double* r_squared) {
  std::vector<double> x, y;
  for (std::size_t i = 0; i < traj.times.size(); ++i) {
    const double t = traj.times[i];
    if (t < t_from || t > t_to || t <= 0 || traj.norms[i] <= 0) continue;
    x.push_back(std::log(t));
    y.push_back(std::log(traj.norms[i]));
  }
  if (x.size() < 10) throw_error(ErrorCode::kPrecondition, "power-law fit needs at least 10 samples");
  const Line l = least_squares(x, y);
  if (r_squared) *r_squared = l.r_squared;
  return l.slope;
}

nlohmann::json to_json(const DecayFit& fit) {
  return {{"rate", fit.rate},
          {"overshoot", fit.overshoot},
          {"r_squared", fit.r_squared},
          {"samples", fit.samples},
          {"extinct", fit.extinct},
          {"non_exponential", fit.non_exponential}};
}

}  // namespace cstab
