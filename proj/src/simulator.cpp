#include "cstab/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "cstab/integrator.hpp"

namespace cstab {
namespace {

std::vector<double> output_grid(double t_end, double dt) {
  std::vector<double> grid;
  const long count = static_cast<long>(std::floor(t_end / dt * (1 + 1e-14)));
  grid.reserve(count + 2);
  for (long k = 0; k <= count; ++k) grid.push_back(static_cast<double>(k) * dt);
  if (t_end - grid.back() > 1e-12 * t_end) grid.push_back(t_end);
  else grid.back() = t_end;
  return grid;
}

// 4-point Gauss–Legendre on [a, b].
template <typename F>
double gauss4(const F& f, double a, double b) {
  static constexpr double x[2] = {0.3399810435848563, 0.8611363115940526};
  static constexpr double w[2] = {0.6521451548625461, 0.3478548451374538};
  if (!(b > a)) return 0.0;
  const double c = 0.5 * (a + b), r = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 2; ++i) s += w[i] * (f(c - r * x[i]) + f(c + r * x[i]));
  return r * s;
}

// sign of ⟨Bz, z⟩ with a relative dead zone around zero.
int form_sign(double form, double norm_sq, double rel = 1e-12) {
  const double thr = rel * norm_sq;
  if (form > thr) return 1;
  if (form < -thr) return -1;
  return 0;
}

// Leaving the control-off mode needs a wider margin than entering it, so a
// state parked on ⟨Bz, z⟩ = 0 does not re-trigger at once.
constexpr double kLeaveZeroMode = 1e-7;

double form_of(const SystemModel& model, const Vector& z) {
  return model.inner.dot(model.B.apply(z), z);
}

// Mode after a located sign change. When the field of the new sign drives
// ⟨Bz, z⟩ straight back to zero the state is on a sliding surface; the
// control is then switched off (sign 0 = 0) instead of chattering.
int next_switching_mode(const SystemModel& model, double rho, const Vector& z,
                        const std::optional<NonlinearOperator>& drift) {
  const double ns = model.inner.norm_sq(z);
  const int m = form_sign(form_of(model, z), ns);
  if (m == 0) return 0;
  Vector f = model.A.apply(z) - rho * m * model.B.apply(z);
  if (drift) f += (*drift)(z);
  const double eps = 1e-7 * std::max(1.0, std::sqrt(ns)) / std::max(1.0, f.norm());
  const double rate = (form_of(model, z + eps * f) - form_of(model, z - eps * f)) / (2 * eps);
  return m * rate < 0 ? 0 : m;
}

}  // namespace

Trajectory closed_loop_evolve(const SystemModel& model, const ControlLaw& law, const Vector& z0,
                              double t_end, const SimulationOptions& options) {
  if (z0.size() != model.size()) {
    std::ostringstream os;
    os << "initial state has size " << z0.size() << " but model '" << model.id << "' has "
       << model.size();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  if (!(t_end > 0) || !std::isfinite(t_end)) throw_error(ErrorCode::kPrecondition, "t_end must be positive");
  const double dt = options.dt_out > 0 ? options.dt_out : t_end / 2000.0;
  const std::vector<double> grid = output_grid(t_end, dt);
  std::vector<double> snaps = options.snapshot_times;
  std::sort(snaps.begin(), snaps.end());

  Trajectory traj;
  traj.model_id = model.id;
  traj.law = law;
  traj.lipschitz = model.B.as_nonlinear().lipschitz_global;
  const InnerProduct& ip = model.inner;
  const double z0_norm = ip.norm(z0);

  int mode = 0;  // frozen sign for the switching law
  auto control = [&](double form, double norm_sq) {
    if (law.kind == LawKind::kSwitching) return -law.gain * mode;
    return law.value(form, norm_sq);
  };
  double acc = 0.0, acc_t = 0.0;  // ∫₀^{acc_t}⟨Bz, z⟩
  auto advance = [&](const DenseStep& step, double t) {
    if (t <= acc_t) return;
    acc += gauss4(
        [&](double s) {
          const Vector y = step.eval(s);
          return ip.dot(model.B.apply(y), y);
        },
        acc_t, t);
    acc_t = t;
  };
  auto record = [&](double t, const Vector& z) {
    const double ns = ip.norm_sq(z);
    const double form = ip.dot(model.B.apply(z), z);
    traj.dissipation.push_back(acc);
    traj.times.push_back(t);
    traj.norms.push_back(std::sqrt(ns));
    traj.forms.push_back(form);
    traj.controls.push_back(control(form, ns));
  };

  if (law.kind == LawKind::kConstant && model.exact_flow && options.use_exact_flow &&
      !options.drift) {
    for (double t : grid) {
      const auto [ns, form] = model.exact_flow->norm_sq_and_form(z0, law.gain, t);
      traj.times.push_back(t);
      traj.norms.push_back(std::sqrt(std::max(ns, 0.0)));
      traj.forms.push_back(form);
      traj.controls.push_back(-law.gain);
      const double prev_t = traj.times.size() > 1 ? traj.times[traj.times.size() - 2] : t;
      const double acc = traj.dissipation.empty() ? 0.0 : traj.dissipation.back();
      // Composite Simpson with panels of at most 0.01, reusing the sampled
      // endpoint forms; the exact form is only piecewise smooth.
      auto form_at = [&](double s) { return model.exact_flow->norm_sq_and_form(z0, law.gain, s).second; };
      double piece = 0.0;
      if (traj.times.size() > 1) {
        const int panels = std::max(1, static_cast<int>(std::ceil((t - prev_t) / 0.01 - 1e-9)));
        const double w = (t - prev_t) / panels;
        double left = traj.forms[traj.forms.size() - 2];
        for (int p = 0; p < panels; ++p) {
          const double a = prev_t + w * p;
          const double right = p + 1 == panels ? form : form_at(a + w);
          piece += w / 6 * (left + 4 * form_at(a + 0.5 * w) + right);
          left = right;
        }
      }
      traj.dissipation.push_back(acc + piece);
      if (!(traj.norms.back() <= options.blowup_factor * std::max(z0_norm, 1e-300))) {
        traj.diverged = true;
        break;
      }
    }
    for (double t : snaps) {
      if (t >= 0 && t <= t_end) traj.snapshots.emplace_back(t, model.exact_flow->state(z0, law.gain, t));
    }
    traj.final_state = model.exact_flow->state(z0, law.gain, traj.times.back());
    return traj;
  }

  if (law.kind == LawKind::kSwitching) mode = form_sign(ip.dot(model.B.apply(z0), z0), ip.norm_sq(z0));

  Vector bz(model.size());
  OdeRhs rhs = [&](double, const Vector& z, Vector& dz) {
    bz = model.B.apply(z);
    double v;
    if (law.kind == LawKind::kConstant) {
      v = -law.gain;
    } else if (law.kind == LawKind::kSwitching) {
      v = -law.gain * mode;
    } else {
      v = law.value(ip.dot(bz, z), ip.norm_sq(z));
    }
    dz = model.A.apply(z) + v * bz;
    if (options.drift) dz += (*options.drift)(z);
  };
  OdeOptions ode;
  ode.rtol = options.rtol;
  ode.atol = options.atol;
  ode.max_steps = options.max_steps;
  ode.blowup_factor = options.blowup_factor;
  ode.max_step = std::max(dt, t_end / 50.0);
  const Dopri5 solver(rhs, ode);

  std::size_t next = 0, next_snap = 0;
  while (next_snap < snaps.size() && snaps[next_snap] < 0) ++next_snap;
  record(0.0, z0);
  next = 1;
  if (next_snap < snaps.size() && snaps[next_snap] == 0.0) traj.snapshots.emplace_back(0.0, z0), ++next_snap;

  auto emit_until = [&](const DenseStep& step, double limit) {
    while (next < grid.size() && grid[next] <= limit + 1e-14 * std::max(1.0, limit)) {
      const double tk = std::min(grid[next], step.t1());
      advance(step, tk);
      record(grid[next], step.eval(tk));
      ++next;
    }
    advance(step, std::min(limit, step.t1()));
    while (next_snap < snaps.size() && snaps[next_snap] <= limit && snaps[next_snap] <= t_end) {
      traj.snapshots.emplace_back(snaps[next_snap], step.eval(snaps[next_snap]));
      ++next_snap;
    }
  };

  double t = 0.0;
  Vector z = z0;
  while (t < t_end) {
    Dopri5::Observer observer = [&](const DenseStep& step) -> std::optional<double> {
      if (law.kind == LawKind::kSwitching) {
        auto changed = [&](const Vector& y) {
          const double f = ip.dot(model.B.apply(y), y), ns = ip.norm_sq(y);
          if (mode == 0) return form_sign(f, ns, kLeaveZeroMode) != 0;
          return form_sign(f, ns) != mode;
        };
        if (changed(step.y1)) {
          double lo = step.t0, hi = step.t1();
          while (hi - lo > 1e-10) {
            const double mid = 0.5 * (lo + hi);
            if (changed(step.eval(mid))) hi = mid;
            else lo = mid;
          }
          emit_until(step, hi);
          return hi;
        }
      }
      emit_until(step, step.t1());
      return std::nullopt;
    };
    const OdeResult res = solver.integrate(t, z, t_end, observer);
    traj.stats.steps += res.steps;
    traj.stats.rejected += res.rejected;
    traj.stats.evaluations += res.evaluations;
    t = res.t;
    z = res.z;
    if (res.diverged) {
      traj.diverged = true;
      break;
    }
    if (res.stopped) {
      ++traj.stats.events;
      if (traj.stats.events > options.max_events) {
        std::ostringstream os;
        os << "switching law exceeded " << options.max_events << " sign changes at t=" << t;
        throw_error(ErrorCode::kStepUnderflow, os.str());
      }
      mode = next_switching_mode(model, law.gain, z, options.drift);
    }
  }
  traj.final_state = z;
  return traj;
}

Trajectory simulate(const SystemModel& model, const ControlLaw& law, const Vector& z0,
                    double t_end, const SimulationOptions& options) {
  if (!std::isfinite(law.gain)) throw_error(ErrorCode::kPrecondition, "control gain must be finite");
  if ((law.kind == LawKind::kNormalized || law.kind == LawKind::kSwitching) && !(law.gain > 0)) {
    throw_error(ErrorCode::kPrecondition, "feedback gain rho must be positive");
  }
  return closed_loop_evolve(model, law, z0, t_end, options);
}

DissipationAudit dissipation_audit(const Trajectory& traj, double tolerance) {
  if (traj.law.kind != LawKind::kConstant) {
    throw_error(ErrorCode::kPrecondition, "dissipation audit needs a constant-control run");
  }
  DissipationAudit audit;
  audit.tolerance = tolerance;
  if (traj.times.empty()) return audit;
  const double lambda = traj.law.gain;
  const double scale = std::max(traj.norms.front() * traj.norms.front(), 1e-300);
  const bool integrated = traj.dissipation.size() == traj.times.size();
  double integral = 0.0;
  double running_min = traj.norms.front() * traj.norms.front();
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    if (integrated) {
      integral = traj.dissipation[k] - traj.dissipation.front();
    } else {
      integral += 0.5 * (traj.times[k] - traj.times[k - 1]) * (traj.forms[k] + traj.forms[k - 1]);
    }
    const double F = traj.norms[k] * traj.norms[k] + 2 * lambda * integral;
    audit.max_violation = std::max(audit.max_violation, (F - running_min) / scale);
    running_min = std::min(running_min, F);
  }
  audit.pass = audit.max_violation <= tolerance;
  return audit;
}

GrowthAudit growth_bound_audit(const Trajectory& traj) {
  if (traj.law.kind != LawKind::kConstant) {
    throw_error(ErrorCode::kPrecondition, "growth audit needs a constant-control run");
  }
  if (!traj.lipschitz) throw_error(ErrorCode::kPrecondition, "trajectory has no Lipschitz metadata");
  GrowthAudit audit;
  const double z0 = traj.initial_norm();
  if (z0 == 0) return audit;
  const double rate = std::abs(traj.law.gain) * *traj.lipschitz;
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double ratio = traj.norms[k] / (std::exp(rate * (traj.times[k] - traj.times.front())) * z0);
    audit.max_ratio = std::max(audit.max_ratio, ratio);
  }
  audit.pass = audit.max_ratio <= 1 + 1e-6;
  return audit;
}

double max_norm_drift(const Trajectory& traj) {
  double worst = 0.0;
  for (std::size_t k = 1; k < traj.times.size(); ++k) {
    const double dt = traj.times[k] - traj.times[k - 1];
    if (traj.norms[k - 1] > 0 && dt > 0) {
      worst = std::max(worst, (traj.norms[k] - traj.norms[k - 1]) / (traj.norms[k - 1] * dt));
    }
  }
  return worst;
}

nlohmann::json summary_json(const Trajectory& traj) {
  nlohmann::json j;
  j["model"] = traj.model_id;
  j["law"] = to_string(traj.law.kind);
  j["gain"] = traj.law.gain;
  j["samples"] = traj.times.size();
  j["t_end"] = traj.times.empty() ? 0.0 : traj.times.back();
  j["initial_norm"] = traj.initial_norm();
  j["final_norm"] = traj.norms.empty() ? 0.0 : traj.norms.back();
  j["diverged"] = traj.diverged;
  j["integrator"] = {{"steps", traj.stats.steps},
                     {"rejected", traj.stats.rejected},
                     {"evaluations", traj.stats.evaluations},
                     {"events", traj.stats.events}};
  return j;
}

void write_csv(const Trajectory& traj, std::ostream& out) {
  out << "t,norm,control\n" << std::setprecision(17);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    out << traj.times[k] << ',' << traj.norms[k] << ',' << traj.controls[k] << '\n';
  }
}

void write_snapshots_csv(const Trajectory& traj, std::ostream& out) {
  if (traj.snapshots.empty()) {
    out << "t\n";
    return;
  }
  out << 't';
  for (Index i = 0; i < traj.snapshots.front().second.size(); ++i) out << ",z_" << i;
  out << '\n' << std::setprecision(17);
  for (const auto& [t, z] : traj.snapshots) {
    out << t;
    for (Index i = 0; i < z.size(); ++i) out << ',' << z[i];
    out << '\n';
  }
}

}  // namespace cstab
