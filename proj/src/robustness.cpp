#include "cstab/robustness.hpp"

#include <cmath>
#include <sstream>

#include "cstab/simulator.hpp"

namespace cstab {

namespace {

void require_nonneg(double x, const char* name) {
  if (!(x >= 0) || !std::isfinite(x)) {
    throw_error(ErrorCode::kPrecondition, std::string(name) + " must be finite and >= 0");
  }
}

void require_positive(double x, const char* name) {
  if (!(x > 0) || !std::isfinite(x)) {
    throw_error(ErrorCode::kPrecondition, std::string(name) + " must be finite and > 0");
  }
}

nlohmann::json optional_number(const std::optional<double>& x) {
  return x ? nlohmann::json(*x) : nlohmann::json(nullptr);
}

double magnitude_of(const PerturbationOperator& p) {
  if (const auto* op = std::get_if<LinearOperator>(&p)) {
    if (!op->operator_norm()) {
      throw_error(ErrorCode::kPrecondition, "linear perturbation has no operator-norm metadata");
    }
    return *op->operator_norm();
  }
  const auto& n = std::get<NonlinearOperator>(p);
  if (!n.lipschitz_global) {
    throw_error(ErrorCode::kPrecondition, "nonlinear perturbation has no Lipschitz constant");
  }
  return *n.lipschitz_global;
}

NonlinearOperator as_nonlinear(const PerturbationOperator& p, const InnerProduct& ip) {
  if (const auto* op = std::get_if<LinearOperator>(&p)) {
    return NonlinearOperator::from_linear(*op, ip);
  }
  return std::get<NonlinearOperator>(p);
}

// Random P-unit linear map: P-skew when `skew` (so ⟨az, z⟩_P = 0).
LinearOperator random_direction(const InnerProduct& ip, Rng& rng, bool skew) {
  const Index n = ip.dimension();
  Matrix X(n, n);
  for (Index j = 0; j < n; ++j) X.col(j) = random_normal(n, rng);
  // Work in Euclidean coordinates w = Cz, then map back.
  const Matrix E = skew ? Matrix(X - X.transpose()) : X;
  Matrix M = ip.factor_inverse() * E * ip.factor();
  double norm = operator_norm(M, ip);
  // No nonzero skew direction exists in one dimension; −I is dissipative too.
  if (!(norm > 0)) {
    M = -Matrix::Identity(n, n);
    norm = 1.0;
  }
  return LinearOperator::dense(M / norm).with_operator_norm(1.0);
}

LinearOperator scaled(const LinearOperator& op, double s) {
  return LinearOperator::dense(s * op.matrix()).with_operator_norm(std::abs(s) * *op.operator_norm());
}

Vector unit_state(const SystemModel& model, Rng& rng) {
  const Vector z = random_normal(model.size(), rng);
  return z / model.inner.norm(z);
}

}  // namespace

double perturbed_delta(double delta, double T, double L_B, double a_norm) {
  require_positive(delta, "delta");
  require_nonneg(T, "T");
  require_nonneg(L_B, "L_B");
  require_nonneg(a_norm, "|a|");
  return delta - T * T * L_B * a_norm * (2 + T * a_norm);
}

PPoly p_poly(double delta, double T, double L_B, double lambda, double K_tilde) {
  return {T * T * T * L_B, 2 * T * T * L_B, lambda * T * K_tilde - delta};
}

RadiusResult dynamic_radius(double delta, double T, double L_B, double lambda, double K_tilde) {
  require_positive(delta, "delta");
  require_positive(T, "T");
  require_positive(L_B, "L_B");
  require_positive(lambda, "lambda");
  require_positive(K_tilde, "K_tilde");
  RadiusResult out;
  out.radicand = 1 + delta / (T * L_B) - lambda * K_tilde / L_B;
  if (out.radicand < 0) {
    out.reason = "radicand 1 + delta/(T L_B) - lambda K~/L_B is negative";
  } else if (out.radicand <= 1) {
    out.reason = "lambda T K~ >= delta: no positive dynamic margin";
  } else {
    out.r = (-1 + std::sqrt(out.radicand)) / T;
  }
  return out;
}

JointBounds joint_bounds(const GainEnvelope& env, double L_B, double r_tilde,
                         std::optional<EmpiricalDecay> empirical) {
  if (env.mode != EnvelopeMode::kUniform) {
    throw_error(ErrorCode::kPrecondition, "joint bounds need a uniform-mode envelope");
  }
  require_nonneg(r_tilde, "r_tilde");
  JointBounds b;
  b.radius = dynamic_radius(env.delta, env.T, L_B, env.lambda, env.K_tilde);
  if (!b.radius.r) throw_error(ErrorCode::kPrecondition, b.radius.reason);
  if (r_tilde >= *b.radius.r) {
    std::ostringstream os;
    os << "r_tilde = " << r_tilde << " must be below the dynamic radius r = " << *b.radius.r;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  b.r_tilde = r_tilde;
  b.poly = p_poly(env.delta, env.T, L_B, env.lambda, env.K_tilde);
  b.Lb_bound = -b.poly(r_tilde) / env.T;
  b.sigma = env.sigma;
  b.M = env.M_env;
  if (empirical) {
    require_positive(empirical->M, "empirical M");
    b.sigma = empirical->sigma;
    b.M = empirical->M;
    b.source = "empirical";
  }
  b.Ln_bound = b.sigma / b.M;
  b.combined_bound = b.sigma / b.M;
  b.separate_additive = b.sigma / (2 * b.M);
  b.separate_control = b.sigma * env.T * env.K_tilde / (2 * b.M * env.delta);
  return b;
}

WaveClosedForms wave_closed_form_bounds(double lambda) {
  if (!(lambda > 0 && lambda < 0.25)) {
    throw_error(ErrorCode::kPrecondition, "wave closed forms need 0 < lambda < 1/4");
  }
  WaveClosedForms w;
  w.lambda = lambda;
  w.gamma = 8 * lambda * lambda - 2 * lambda + 1;
  const double root = std::sqrt(w.gamma), lg = std::log(w.gamma);
  w.p_bound = -root * lg / 4;
  w.q_bound = -root * lg;
  return w;
}

const char* to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kDynamic: return "dynamic";
    case PerturbationKind::kControl: return "control";
    case PerturbationKind::kAdditive: return "additive";
  }
  return "unknown";
}

PerturbationKind perturbation_kind_from_string(const std::string& s) {
  if (s == "dynamic") return PerturbationKind::kDynamic;
  if (s == "control") return PerturbationKind::kControl;
  if (s == "additive") return PerturbationKind::kAdditive;
  throw_error(ErrorCode::kParse,
              "unknown perturbation kind '" + s + "' (expected dynamic, control, additive)");
}

nlohmann::json to_json(const ValidationRun& run) {
  nlohmann::json j;
  j["key"] = run.key;
  j["kind"] = to_string(run.kind);
  j["magnitude"] = run.magnitude;
  j["inside"] = run.inside;
  j["fit"] = to_json(run.fit);
  j["diverged"] = run.diverged;
  j["verdict"] = run.verdict ? nlohmann::json(*run.verdict ? "pass" : "fail")
                             : nlohmann::json("informational");
  j["predicted_rate"] = optional_number(run.predicted_rate);
  return j;
}

SystemModel with_control_perturbation(const SystemModel& model, const PerturbationOperator& b) {
  SystemModel out = model;
  const auto* lin = std::get_if<LinearOperator>(&b);
  if (lin && model.B.is_linear()) {
    out.B = ControlOperator(LinearOperator::sum({model.B.linear(), *lin}), model.inner);
  } else {
    const NonlinearOperator base = model.B.as_nonlinear();
    const NonlinearOperator extra = as_nonlinear(b, model.inner);
    NonlinearOperator sum;
    sum.dimension = base.dimension;
    sum.map = [base, extra](const Vector& z) { return Vector(base(z) + extra(z)); };
    if (base.jacobian && extra.jacobian) {
      sum.jacobian = [base, extra](const Vector& z) {
        return Matrix(base.jacobian(z) + extra.jacobian(z));
      };
    }
    if (base.lipschitz_global && extra.lipschitz_global) {
      sum.lipschitz_global = *base.lipschitz_global + *extra.lipschitz_global;
    }
    sum.vanishes_at_zero = base.vanishes_at_zero && extra.vanishes_at_zero;
    out.B = ControlOperator(sum);
  }
  // Representation hooks were specific to the nominal B.
  out.kernel.reset();
  out.exact_flow.reset();
  return out;
}

ValidationRun validate_margin(const SystemModel& model, const GainEnvelope& env,
                              const PerturbationOperator& perturbation, PerturbationKind kind,
                              bool inside, const ValidationOptions& options) {
  ValidationRun run;
  run.kind = kind;
  run.inside = inside;
  run.magnitude = magnitude_of(perturbation);
  run.key = options.label.empty() ? std::string(to_string(kind)) : options.label;
  Rng rng(options.seed);

  const NonlinearOperator as_map = as_nonlinear(perturbation, model.inner);
  if (as_map.dimension != model.size()) {
    std::ostringstream os;
    os << "perturbation of dimension " << as_map.dimension << " for a model of dimension "
       << model.size();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }

  SystemModel target = model;
  SimulationOptions sim;
  if (kind == PerturbationKind::kDynamic) {
    const auto* a = std::get_if<LinearOperator>(&perturbation);
    if (!a) throw_error(ErrorCode::kPrecondition, "dynamic perturbations must be linear");
    double worst = -std::numeric_limits<double>::infinity();
    for (int s = 0; s < options.dissipativity_samples; ++s) {
      const Vector z = unit_state(model, rng);
      worst = std::max(worst, model.inner.dot(a->apply(z), z));
    }
    if (worst > tolerances().algebraic * std::max(1.0, run.magnitude)) {
      std::ostringstream os;
      os << "dynamic perturbation is not in P_L: sampled <az, z> = " << worst << " > 0";
      throw_error(ErrorCode::kPrecondition, os.str());
    }
    sim.drift = as_map;
  } else if (kind == PerturbationKind::kControl) {
    target = with_control_perturbation(model, perturbation);
  } else {
    sim.drift = as_map;
    run.predicted_rate = env.sigma - env.M_env * run.magnitude;
  }
  // Drift disables the exact flow anyway; the shift structure still holds.
  if (sim.drift) {
    target.kernel.reset();
    target.exact_flow.reset();
  }

  const Vector z0 = options.z0 ? *options.z0 : unit_state(model, rng);
  double t_end = options.t_end;
  if (!(t_end > 0)) t_end = env.sigma > 0 ? std::clamp(3.0 / env.sigma, 10.0, 100.0) : 50.0;
  const Trajectory traj = simulate(target, ControlLaw::constant(env.lambda), z0, t_end, sim);
  run.diverged = traj.diverged;
  run.fit = fit_decay(traj);
  if (inside) run.verdict = !run.diverged && (run.fit.extinct || run.fit.rate > 0);
  return run;
}

nlohmann::json to_json(const RobustnessReport& report) {
  nlohmann::json j;
  j["model"] = report.model_id;
  const JointBounds& b = report.bounds;
  if (report.bounds_error) {
    j["bounds_error"] = *report.bounds_error;
  }
  j["r"] = optional_number(b.radius.r);
  j["radicand"] = b.radius.radicand;
  if (!b.radius.r) j["r_reason"] = b.radius.reason;
  if (!report.bounds_error) {
    j["r_tilde"] = b.r_tilde;
    j["Lb_bound"] = b.Lb_bound;
    j["Ln_bound"] = b.Ln_bound;
    j["combined_bound"] = b.combined_bound;
    j["separate_bounds"] = {b.separate_additive, b.separate_control};
    j["P_poly"] = {b.poly.c2, b.poly.c1, b.poly.c0};
    j["sigma"] = b.sigma;
    j["M"] = b.M;
    j["source"] = b.source;
  }
  nlohmann::json runs = nlohmann::json::array();
  for (const ValidationRun& r : report.runs) runs.push_back(to_json(r));
  j["validation_runs"] = runs;
  return j;
}

RobustnessReport analyze_robustness(const SystemModel& model, const GainEnvelope& env,
                                    double L_B, const RobustnessOptions& options) {
  RobustnessReport report;
  report.model_id = model.id;
  try {
    const RadiusResult radius = dynamic_radius(env.delta, env.T, L_B, env.lambda, env.K_tilde);
    const double r_tilde = options.r_tilde ? *options.r_tilde : (radius.r ? *radius.r / 2 : 0.0);
    report.bounds = joint_bounds(env, L_B, r_tilde, options.empirical);
  } catch (const Error& e) {
    report.bounds_error = e.what();
    report.bounds.radius.radicand = 0.0;
    if (env.mode == EnvelopeMode::kUniform && env.delta > 0 && env.T > 0 && L_B > 0 &&
        env.lambda > 0 && env.K_tilde > 0) {
      report.bounds.radius = dynamic_radius(env.delta, env.T, L_B, env.lambda, env.K_tilde);
    }
  }
  if (report.bounds_error || model.size() > options.max_validation_dimension) return report;

  Rng rng(options.seed);
  const LinearOperator skew = random_direction(model.inner, rng, true);
  const LinearOperator control = random_direction(model.inner, rng, false);
  const LinearOperator additive = random_direction(model.inner, rng, false);
  const Vector z0 = unit_state(model, rng);
  const JointBounds& b = report.bounds;
  struct Probe {
    PerturbationKind kind;
    const LinearOperator* direction;
    double bound;
  };
  const std::vector<Probe> probes{{PerturbationKind::kAdditive, &additive, b.Ln_bound},
                                  {PerturbationKind::kControl, &control, b.Lb_bound},
                                  {PerturbationKind::kDynamic, &skew, b.r_tilde > 0 ? *b.radius.r : 0}};
  for (const Probe& p : probes) {
    if (!(p.bound > 0)) continue;
    for (double f : options.probes) {
      std::ostringstream key;
      key << to_string(p.kind) << "@" << f;
      ValidationOptions vo;
      vo.seed = options.seed;
      vo.z0 = z0;
      vo.label = key.str();
      report.runs.push_back(validate_margin(model, env, scaled(*p.direction, f * p.bound), p.kind,
                                            f < 1.0, vo));
    }
  }
  std::sort(report.runs.begin(), report.runs.end(),
            [](const ValidationRun& x, const ValidationRun& y) { return x.key < y.key; });
  return report;
}

DecayFit simulate_perturbed_decay(const gallery::GalleryEntry& entry, std::uint64_t seed,
                                  double t_end) {
  if (!entry.perturbation) {
    throw_error(ErrorCode::kPrecondition, "gallery entry '" + entry.id + "' has no perturbation");
  }
  const gallery::Perturbation& p = *entry.perturbation;
  SystemModel model = entry.model;
  if (p.control) model = with_control_perturbation(model, *p.control);
  SimulationOptions sim;
  sim.drift = p.additive;
  Rng rng(seed);
  const Vector z0 = unit_state(model, rng);
  const Trajectory traj = simulate(model, ControlLaw::constant(p.lambda), z0, t_end, sim);
  if (traj.diverged) throw_error(ErrorCode::kEvaluation, "perturbed closed loop diverged");
  return fit_decay(traj);
}

}  // namespace cstab
