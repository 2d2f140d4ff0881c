#include "cstab/gain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace cstab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

nlohmann::json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

nlohmann::json finite_or_string(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("inf");
}

void check_certificate(const Certificate& cert) {
  if (cert.variant != Variant::kQuadratic && cert.variant != Variant::kSqrtForm) {
    throw_error(ErrorCode::kPrecondition,
                std::string("gain synthesis needs a quadratic certificate, got ") + to_string(cert.variant));
  }
  if (!(cert.horizon_T > 0)) throw_error(ErrorCode::kPrecondition, "certificate horizon must be positive");
  if (!(cert.delta > 0)) {
    std::ostringstream os;
    os << "certificate delta=" << cert.delta << " at T=" << cert.horizon_T
       << " admits no constant gain";
    throw_error(ErrorCode::kNoAdmissibleGain, os.str());
  }
}

}  // namespace

const char* to_string(EnvelopeMode mode) {
  return mode == EnvelopeMode::kUniform ? "uniform" : "local";
}

double GainEnvelope::gamma_at(double l) const {
  if (mode == EnvelopeMode::kUniform) return 1 - 2 * l * (delta - l * T * K_tilde);
  return 1 - 2 * l * (delta - 2 * l * T * T * K_tilde * K_tilde);
}

double GainEnvelope::sigma_at(double l) const { return -std::log(gamma_at(l)) / (2 * T); }

double k_constant(double L, double T, double eta1) {
  if (!(L >= 0) || !(T > 0) || !(eta1 > 0)) {
    throw_error(ErrorCode::kPrecondition, "K needs L >= 0, T > 0, eta1 > 0");
  }
  return T * L * std::exp(eta1 * L * T);
}

double k_tilde(double L, double T, double eta1) {
  const double K = k_constant(L, T, eta1);
  return 2 * K * L * (1 + std::exp(eta1 * L * T));
}

GainEnvelope synthesize_uniform(const Certificate& cert, double L, const UniformOptions& options) {
  check_certificate(cert);
  if (!(L > 0) || !std::isfinite(L)) throw_error(ErrorCode::kPrecondition, "Lipschitz constant must be positive");
  GainEnvelope env;
  env.mode = EnvelopeMode::kUniform;
  env.T = cert.horizon_T;
  env.delta = cert.delta;
  env.lipschitz = L;
  env.v_max = options.v_max;
  env.certificate_model = cert.model_id;
  const double T = env.T, d = env.delta;
  env.eta1 = options.eta1 ? *options.eta1 : 1.0 / (L * T);
  env.K_tilde = k_tilde(L, T, env.eta1);
  const double TK = T * env.K_tilde;
  // γ(λ) = 1 − 2λδ + 2λ²TK̃ stays positive below its smaller root.
  env.eta2 = d * d >= 2 * TK ? (d - std::sqrt(d * d - 2 * TK)) / (2 * TK) : kInf;
  env.lambda_max = std::min({env.eta1, env.eta2, d / TK});
  if (options.v_max) env.lambda_max = std::min(env.lambda_max, *options.v_max);
  if (!(env.lambda_max > 0)) {
    std::ostringstream os;
    os << "admissible gain interval is empty (lambda_max=" << env.lambda_max << ")";
    throw_error(ErrorCode::kInfeasibleConstraint, os.str());
  }
  if (options.lambda) {
    if (!(*options.lambda > 0 && *options.lambda < env.lambda_max)) {
      std::ostringstream os;
      os << "requested lambda=" << *options.lambda << " is outside (0, " << env.lambda_max << ")";
      throw_error(ErrorCode::kInfeasibleConstraint, os.str());
    }
    env.lambda = *options.lambda;
  } else {
    const double best = d / (2 * TK);
    env.lambda = best < env.lambda_max ? best : 0.99 * env.lambda_max;
  }
  env.gamma = env.gamma_at(env.lambda);
  if (!(env.gamma > 0 && env.gamma < 1)) {
    std::ostringstream os;
    os << "gamma=" << env.gamma << " outside (0, 1) at lambda=" << env.lambda;
    throw_error(ErrorCode::kInternal, os.str());
  }
  env.sigma = -std::log(env.gamma) / (2 * T);
  env.M_env = std::exp(env.lambda * L * T) / std::sqrt(env.gamma);
  return env;
}

GainEnvelope synthesize_local(const Certificate& cert, double L_R, double R, bool b_positive,
                              std::optional<double> lambda) {
  check_certificate(cert);
  if (!b_positive) {
    throw_error(ErrorCode::kPrecondition, "local synthesis requires a positive control operator B");
  }
  if (!(L_R > 0) || !(R > 0)) throw_error(ErrorCode::kPrecondition, "L_R and R must be positive");
  GainEnvelope env;
  env.mode = EnvelopeMode::kLocal;
  env.radius = R;
  env.T = cert.horizon_T;
  env.delta = cert.delta;
  env.K_tilde = L_R;
  env.lipschitz = L_R;
  env.certificate_model = cert.model_id;
  const double T = env.T, d = env.delta;
  const double c = 2 * T * T * L_R * L_R;  // γ = 1 − 2λδ + 2λ²c
  env.eta2 = d >= 2 * T * L_R ? (d - std::sqrt(d * d - 2 * c)) / (2 * c) : kInf;
  env.lambda_max = std::min(env.eta2, d / c);
  if (lambda) {
    if (!(*lambda > 0 && *lambda < env.lambda_max)) {
      std::ostringstream os;
      os << "requested lambda=" << *lambda << " is outside (0, " << env.lambda_max << ")";
      throw_error(ErrorCode::kInfeasibleConstraint, os.str());
    }
    env.lambda = *lambda;
  } else {
    const double best = d / (2 * c);
    env.lambda = best < env.lambda_max ? best : 0.99 * env.lambda_max;
  }
  env.gamma = env.gamma_at(env.lambda);
  if (!(env.gamma > 0 && env.gamma < 1)) {
    std::ostringstream os;
    os << "gamma=" << env.gamma << " outside (0, 1) at lambda=" << env.lambda;
    throw_error(ErrorCode::kInternal, os.str());
  }
  env.sigma = -std::log(env.gamma) / (2 * T);
  env.M_env = 1 / std::sqrt(env.gamma);
  return env;
}

nlohmann::json to_json(const GainEnvelope& env) {
  nlohmann::json j;
  j["mode"] = to_string(env.mode);
  j["radius"] = optional_number(env.radius);
  j["lambda_max"] = env.lambda_max;
  j["lambda"] = env.lambda;
  j["gamma"] = env.gamma;
  j["sigma"] = env.sigma;
  j["M_env"] = env.M_env;
  j[env.mode == EnvelopeMode::kUniform ? "K_tilde" : "L_R"] = env.K_tilde;
  j["T"] = env.T;
  j["delta"] = env.delta;
  j["v_max"] = optional_number(env.v_max);
  if (env.mode == EnvelopeMode::kUniform) {
    j["eta1"] = env.eta1;
    j["eta2"] = finite_or_string(env.eta2);
  } else {
    j["eta"] = finite_or_string(env.eta2);
  }
  j["certificate"] = env.certificate_model;
  return j;
}

nlohmann::json to_json(const EnvelopeReport& r) {
  nlohmann::json j;
  j["pass"] = r.pass;
  j["worst_ratio"] = r.worst_ratio;
  j["first_violation"] = optional_number(r.first_violation);
  j["fit"] = r.fit ? to_json(*r.fit) : nlohmann::json(nullptr);
  j["samples"] = r.samples;
  return j;
}

EnvelopeReport envelope_check(const Trajectory& traj, const GainEnvelope& env) {
  if (traj.law.kind != LawKind::kConstant ||
      std::abs(traj.law.gain - env.lambda) > 1e-15 * std::max(1.0, env.lambda)) {
    std::ostringstream os;
    os << "trajectory control " << traj.law.label() << " does not match envelope gain "
       << env.lambda;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  EnvelopeReport rep;
  rep.samples = static_cast<int>(traj.times.size());
  const double z0 = traj.initial_norm();
  if (z0 == 0.0) {
    for (double n : traj.norms) {
      if (n != 0.0) {
        rep.pass = false;
        break;
      }
    }
    return rep;
  }
  if (env.radius && z0 > *env.radius * (1 + 1e-12)) {
    throw_error(ErrorCode::kPrecondition, "initial state lies outside the local envelope radius");
  }
  const double t0 = traj.times.front();
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double bound = env.M_env * std::exp(-env.sigma * (traj.times[k] - t0)) * z0;
    const double ratio = traj.norms[k] / bound;
    rep.worst_ratio = std::max(rep.worst_ratio, ratio);
    if (ratio > 1 + 1e-6 && rep.pass) {
      rep.pass = false;
      rep.first_violation = traj.times[k];
    }
  }
  if (traj.diverged) rep.pass = false;
  try {
    rep.fit = fit_decay(traj, 0.5);
  } catch (const Error&) {
    // Too few samples for a fit; the pointwise verdict stands on its own.
  }
  return rep;
}

}  // namespace cstab
