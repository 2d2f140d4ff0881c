#include "cstab/certifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "cstab/semigroup.hpp"

namespace cstab {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kQuadratic: return "quadratic";
    case Variant::kAbsolute: return "absolute";
    case Variant::kL1Image: return "l1-image";
    case Variant::kSqrtForm: return "sqrt-form";
  }
  return "unknown";
}

const char* to_string(CertificateMethod m) {
  switch (m) {
    case CertificateMethod::kGramEigenvalue: return "gram-eigenvalue";
    case CertificateMethod::kMultistartSphere: return "multistart-sphere";
    case CertificateMethod::kSampledLowerBound: return "sampled-lower-bound";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  if (s == "quadratic") return Variant::kQuadratic;
  if (s == "absolute") return Variant::kAbsolute;
  if (s == "l1-image" || s == "l1") return Variant::kL1Image;
  if (s == "sqrt-form" || s == "sqrt") return Variant::kSqrtForm;
  throw_error(ErrorCode::kParse, "unknown certificate variant '" + s +
                                     "' (expected quadratic, absolute, l1-image, sqrt-form)");
}

nlohmann::json to_json(const Certificate& c) {
  nlohmann::json j;
  j["model"] = c.model_id;
  j["variant"] = to_string(c.variant);
  j["horizon_T"] = c.horizon_T;
  j["delta"] = c.delta;
  j["method"] = to_string(c.method);
  j["certified"] = c.certified;
  if (c.witness) {
    j["witness"] = std::vector<double>(c.witness->data(), c.witness->data() + c.witness->size());
  } else {
    j["witness"] = nullptr;
  }
  j["quadrature"] = {{"nodes", c.quadrature.nodes},
                     {"last_change", c.quadrature.last_change},
                     {"converged", c.quadrature.converged},
                     {"exact", c.quadrature.exact}};
  if (c.method == CertificateMethod::kMultistartSphere) j["starts"] = c.starts;
  return j;
}

namespace {

constexpr int kOrder = 16;

TimeQuadrature rule_with_nodes(double T, int nodes, const std::vector<double>& breaks) {
  if (nodes % kOrder == 0) return composite_rule(T, nodes / kOrder, kOrder, breaks);
  return composite_rule(T, 1, nodes, breaks);
}

// Panel count per smooth segment giving roughly `nodes` nodes overall.
int panels_for(int nodes, std::size_t segments) {
  return std::max(1, static_cast<int>(nodes / (kOrder * static_cast<int>(segments))));
}

using MatrixOfTime = std::function<Matrix(double)>;

Matrix assemble(const MatrixOfTime& f, const TimeQuadrature& rule, Index n) {
  Matrix W = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < rule.size(); ++i) W += rule.w[i] * f(rule.t[i]);
  return 0.5 * (W + W.transpose());
}

GramResult doubling(const MatrixOfTime& f, Index n, double T,
                    const std::vector<double>& breaks, double tol, int initial_nodes,
                    int max_nodes) {
  const std::size_t segments = breaks.size() + 1;
  int panels = panels_for(initial_nodes, segments);
  TimeQuadrature rule = composite_rule(T, panels, kOrder, breaks);
  Matrix prev = assemble(f, rule, n);
  GramResult out;
  while (true) {
    panels *= 2;
    rule = composite_rule(T, panels, kOrder, breaks);
    Matrix next = assemble(f, rule, n);
    out.quadrature.last_change = (next - prev).cwiseAbs().maxCoeff();
    out.quadrature.nodes = static_cast<int>(rule.size());
    prev = std::move(next);
    if (out.quadrature.last_change < tol) {
      out.quadrature.converged = true;
      break;
    }
    if (static_cast<int>(rule.size()) >= max_nodes) break;
  }
  out.W = std::move(prev);
  return out;
}

struct PencilMin {
  double value;
  Vector vector;
};

Vector canonical_sign(Vector v) {
  Index imax = 0;
  for (Index i = 1; i < v.size(); ++i) {
    if (std::abs(v[i]) > std::abs(v[imax]) * (1 + 1e-12)) imax = i;
  }
  if (v[imax] < 0) v = -v;
  return v;
}

PencilMin smallest_pencil_eigen(const Matrix& W, const InnerProduct& ip) {
  if (ip.is_identity()) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(W);
    return {es.eigenvalues()[0], canonical_sign(es.eigenvectors().col(0))};
  }
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(W, ip.weight(),
                                                      Eigen::ComputeEigenvectors | Eigen::Ax_lBx);
  Vector v = es.eigenvectors().col(0);
  v /= ip.norm(v);
  return {es.eigenvalues()[0], canonical_sign(v)};
}

Certificate quadratic_from_kernel(const ObservationKernel& kernel, double T) {
  if (!(T > 0)) throw_error(ErrorCode::kPrecondition, "horizon T must be positive");
  const GramResult g = adaptive_gram(kernel, T);
  const PencilMin m = smallest_pencil_eigen(g.W, kernel.inner());
  Certificate c;
  c.variant = Variant::kQuadratic;
  c.horizon_T = T;
  c.delta = m.value;
  c.method = CertificateMethod::kGramEigenvalue;
  c.certified = true;
  c.witness = m.vector;
  c.quadrature = g.quadrature;
  return c;
}

// ---------------------------------------------------------------------------
// Sphere minimization.

class SphereFunctional {
 public:
  SphereFunctional(const ObservationKernel& kernel, TimeQuadrature rule, Variant variant)
      : kernel_(kernel), rule_(std::move(rule)), variant_(variant) {
    const Index n = kernel.dimension();
    const double entries = static_cast<double>(rule_.size()) * static_cast<double>(n * n);
    if (kernel.is_linear() && n <= 64 && entries <= 3e7) {
      if (variant_ == Variant::kQuadratic) {
        sum_ = Matrix::Zero(n, n);
        for (std::size_t i = 0; i < rule_.size(); ++i) sum_ += rule_.w[i] * kernel.form_matrix(rule_.t[i]);
        sum_ = 0.5 * (sum_ + sum_.transpose());
        use_sum_ = true;
      } else {
        // All node matrices stacked so one product gives every Q_i y.
        stacked_.resize(static_cast<Index>(rule_.size()) * n, n);
        for (std::size_t i = 0; i < rule_.size(); ++i) {
          stacked_.middleRows(static_cast<Index>(i) * n, n) =
              variant_ == Variant::kAbsolute ? kernel.form_matrix(rule_.t[i])
                                             : kernel.image_matrix(rule_.t[i]);
        }
        use_stack_ = true;
      }
    }
  }

  double operator()(const Vector& y, Vector* grad) const {
    if (use_sum_) {
      const Vector gy = sum_ * y;
      if (grad) *grad = 2.0 * gy;
      return gy.dot(y);
    }
    double value = 0.0;
    const Index n = y.size();
    if (grad) *grad = Vector::Zero(n);
    if (use_stack_) {
      const Vector all = stacked_ * y;
      Vector coeff(static_cast<Index>(rule_.size()));
      for (std::size_t i = 0; i < rule_.size(); ++i) {
        const double q = all.segment(static_cast<Index>(i) * n, n).dot(y);
        const double w = rule_.w[i];
        if (variant_ == Variant::kAbsolute) {
          value += w * std::abs(q);
          coeff[i] = q > 0 ? w : (q < 0 ? -w : 0.0);
        } else {
          const double s = std::sqrt(std::max(q, 0.0));
          value += w * s;
          coeff[i] = s > 1e-150 ? w / (2 * s) : 0.0;
        }
      }
      if (grad) {
        for (std::size_t i = 0; i < rule_.size(); ++i) {
          if (coeff[i] != 0.0) *grad += (2.0 * coeff[i]) * all.segment(static_cast<Index>(i) * n, n);
        }
      }
      return value;
    }
    Vector g;
    for (std::size_t i = 0; i < rule_.size(); ++i) {
      double q;
      if (variant_ == Variant::kL1Image) {
        q = kernel_.image_norm_sq(rule_.t[i], y, grad ? &g : nullptr);
      } else {
        q = kernel_.form(rule_.t[i], y, grad ? &g : nullptr);
      }
      const double w = rule_.w[i];
      switch (variant_) {
        case Variant::kQuadratic:
          value += w * q;
          if (grad) *grad += w * g;
          break;
        case Variant::kAbsolute:
          value += w * std::abs(q);
          if (grad && q != 0.0) *grad += (q > 0 ? w : -w) * g;
          break;
        case Variant::kL1Image: {
          const double s = std::sqrt(std::max(q, 0.0));
          value += w * s;
          if (grad && s > 1e-150) *grad += (w / (2 * s)) * g;
          break;
        }
        case Variant::kSqrtForm:
          throw_error(ErrorCode::kUnsupportedVariant, "sqrt-form is certified through its Gram");
      }
    }
    return value;
  }

 private:
  const ObservationKernel& kernel_;
  TimeQuadrature rule_;
  Variant variant_;
  bool use_sum_ = false;
  bool use_stack_ = false;
  Matrix sum_;
  Matrix stacked_;
};

struct Descent {
  double value;
  Vector y;
};

// Projected gradient on {‖y‖_P = 1} with Barzilai–Borwein trial steps and
// Armijo backtracking; retraction by normalization.
Descent descend(const SphereFunctional& F, const InnerProduct& ip, Vector y,
                const MultistartOptions& opt) {
  y /= ip.norm(y);
  Vector g;
  double f = F(y, &g);
  auto tangent = [&](const Vector& grad, const Vector& at) {
    // P-gradient P⁻¹g projected onto the P-tangent space at `at`.
    Vector pg = ip.solve_weight(grad);
    return Vector(pg - grad.dot(at) * at);
  };
  Vector d = tangent(g, y);
  double alpha = 1.0 / std::max(1e-300, ip.norm(d));
  double checkpoint = f;
  for (int it = 0; it < opt.max_iterations; ++it) {
    // Nonsmooth variants never reach a small gradient; stop once progress
    // over a window of iterations stalls.
    if (it % 50 == 49) {
      if (checkpoint - f <= 1e-12 * std::max(1.0, std::abs(f))) break;
      checkpoint = f;
    }
    const double gnorm2 = ip.norm_sq(d);
    if (std::sqrt(gnorm2) <= opt.gradient_tolerance * std::max(1.0, std::abs(f))) break;
    double step = alpha;
    Vector y_new;
    Vector g_new;
    double f_new = f;
    bool accepted = false;
    for (int bt = 0; bt < 40; ++bt) {
      y_new = y - step * d;
      y_new /= ip.norm(y_new);
      f_new = F(y_new, &g_new);
      if (f_new <= f - 1e-4 * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vector d_new = tangent(g_new, y_new);
    const Vector s = y_new - y;
    const Vector dy = d_new - d;
    const double sy = ip.dot(s, dy);
    alpha = std::abs(sy) > 1e-300 ? ip.norm_sq(s) / std::abs(sy) : 2 * step;
    alpha = std::clamp(alpha, 1e-12, 1e12);
    const double improvement = f - f_new;
    y = std::move(y_new);
    f = f_new;
    d = d_new;
    if (improvement <= 1e-16 * std::max(1.0, std::abs(f)) && std::sqrt(gnorm2) < 1e-6) break;
  }
  return {f, y};
}

bool lexicographically_less(const Vector& a, const Vector& b) {
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] < b[i]) return true;
    if (a[i] > b[i]) return false;
  }
  return false;
}

}  // namespace

// ---------------------------------------------------------------------------

Matrix gram_operator(const SystemModel& model, double T, int quad_points) {
  if (!(T > 0)) throw_error(ErrorCode::kPrecondition, "horizon T must be positive");
  if (quad_points < 1) throw_error(ErrorCode::kPrecondition, "need at least one quadrature node");
  const KernelPtr kernel = observation_kernel(model);
  if (!kernel->is_linear()) {
    throw_error(ErrorCode::kUnsupportedVariant,
                "Gram operator needs a linear B; use estimate_nonquadratic (multistart) instead");
  }
  const TimeQuadrature rule = rule_with_nodes(T, quad_points, kernel->breakpoints(T));
  return assemble([&](double t) { return kernel->form_matrix(t); }, rule, kernel->dimension());
}

GramResult adaptive_gram(const ObservationKernel& kernel, double T, double tol,
                         int initial_nodes, int max_nodes) {
  if (!kernel.is_linear()) {
    throw_error(ErrorCode::kUnsupportedVariant,
                "Gram operator needs a linear B; use estimate_nonquadratic (multistart) instead");
  }
  if (auto exact = kernel.exact_gram(T)) {
    GramResult out;
    out.W = 0.5 * (*exact + exact->transpose());
    out.quadrature.exact = true;
    out.quadrature.converged = true;
    return out;
  }
  return doubling([&](double t) { return kernel.form_matrix(t); }, kernel.dimension(), T,
                  kernel.breakpoints(T), tol, initial_nodes, max_nodes);
}

TimeQuadrature resolved_rule(const ObservationKernel& kernel, double T, QuadratureInfo* info,
                             double tol) {
  const std::vector<double> breaks = kernel.breakpoints(T);
  const std::size_t segments = breaks.size() + 1;
  const Index n = kernel.dimension();
  int panels = panels_for(64, segments);
  std::function<Vector(const TimeQuadrature&)> summary;
  if (kernel.is_linear() && n <= 64) {
    summary = [&](const TimeQuadrature& rule) {
      Matrix W = assemble([&](double t) { return kernel.form_matrix(t); }, rule, n);
      Matrix R = assemble([&](double t) { return kernel.image_matrix(t); }, rule, n);
      Vector v(2 * n * n);
      v << Eigen::Map<const Vector>(W.data(), n * n), Eigen::Map<const Vector>(R.data(), n * n);
      return v;
    };
  } else {
    Rng rng(0x5eed);
    std::vector<Vector> probes;
    for (int k = 0; k < 4; ++k) {
      Vector p = random_normal(n, rng);
      probes.push_back(p / kernel.inner().norm(p));
    }
    summary = [&, probes](const TimeQuadrature& rule) {
      Vector v(3 * probes.size());
      for (std::size_t k = 0; k < probes.size(); ++k) {
        double q = 0, a = 0, r = 0;
        for (std::size_t i = 0; i < rule.size(); ++i) {
          const double f = kernel.form(rule.t[i], probes[k], nullptr);
          q += rule.w[i] * f;
          a += rule.w[i] * std::abs(f);
          r += rule.w[i] * std::sqrt(std::max(0.0, kernel.image_norm_sq(rule.t[i], probes[k], nullptr)));
        }
        v.segment<3>(3 * k) << q, a, r;
      }
      return v;
    };
  }
  TimeQuadrature rule = composite_rule(T, panels, kOrder, breaks);
  Vector prev = summary(rule);
  QuadratureInfo local;
  while (true) {
    panels *= 2;
    TimeQuadrature next_rule = composite_rule(T, panels, kOrder, breaks);
    Vector next = summary(next_rule);
    local.last_change = (next - prev).cwiseAbs().maxCoeff();
    local.nodes = static_cast<int>(next_rule.size());
    rule = std::move(next_rule);
    prev = std::move(next);
    if (local.last_change < tol * std::max(1.0, prev.cwiseAbs().maxCoeff())) {
      local.converged = true;
      break;
    }
    if (local.nodes >= 16384) break;
  }
  if (info) *info = local;
  return rule;
}

Certificate certify_quadratic(const SystemModel& model, double T) {
  const KernelPtr kernel = observation_kernel(model);
  Certificate c = quadratic_from_kernel(*kernel, T);
  c.model_id = model.id;
  return c;
}

double functional_value(const ObservationKernel& kernel, const TimeQuadrature& rule,
                        Variant variant, const Vector& y) {
  if (variant == Variant::kSqrtForm) {
    throw_error(ErrorCode::kUnsupportedVariant, "sqrt-form is certified through its Gram");
  }
  double value = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    switch (variant) {
      case Variant::kQuadratic:
        value += rule.w[i] * kernel.form(rule.t[i], y, nullptr);
        break;
      case Variant::kAbsolute:
        value += rule.w[i] * std::abs(kernel.form(rule.t[i], y, nullptr));
        break;
      default:
        value += rule.w[i] * std::sqrt(std::max(0.0, kernel.image_norm_sq(rule.t[i], y, nullptr)));
    }
  }
  return value;
}

Certificate minimize_on_sphere(const ObservationKernel& kernel, double T, Variant variant,
                               const MultistartOptions& options, const std::string& model_id) {
  if (!(T > 0)) throw_error(ErrorCode::kPrecondition, "horizon T must be positive");
  if (options.starts < 1 && options.extra_starts.empty()) {
    throw_error(ErrorCode::kPrecondition, "multistart needs at least one start");
  }
  if (variant == Variant::kSqrtForm) {
    throw_error(ErrorCode::kUnsupportedVariant, "sqrt-form is certified through its Gram");
  }
  const Index n = kernel.dimension();
  const InnerProduct& ip = kernel.inner();
  Certificate c;
  c.model_id = model_id;
  c.variant = variant;
  c.horizon_T = T;
  c.method = CertificateMethod::kMultistartSphere;
  c.certified = false;
  TimeQuadrature rule = resolved_rule(kernel, T, &c.quadrature);
  const SphereFunctional F(kernel, rule, variant);

  std::vector<Vector> starts;
  if (options.use_quadratic_witness && kernel.is_linear()) {
    starts.push_back(*quadratic_from_kernel(kernel, T).witness);
  }
  for (const Vector& s : options.extra_starts) {
    if (s.size() != n) throw_error(ErrorCode::kDimensionMismatch, "extra start has wrong dimension");
    if (ip.norm(s) > 0) starts.push_back(s);
  }
  Rng rng(options.seed);
  const std::size_t target = starts.size() + static_cast<std::size_t>(std::max(0, options.starts));
  while (starts.size() < target) {
    // A batch of P-orthonormal directions from the QR factor of a Gaussian matrix.
    Matrix G(n, n);
    for (Index j = 0; j < n; ++j) G.col(j) = random_normal(n, rng);
    const Matrix Q = Eigen::HouseholderQR<Matrix>(G).householderQ();
    for (Index j = 0; j < n && starts.size() < target; ++j) {
      starts.push_back(ip.factor_inverse() * Q.col(j));
    }
  }
  c.starts = static_cast<int>(starts.size());

  std::optional<Descent> best;
  for (const Vector& s : starts) {
    Descent d = descend(F, ip, s, options);
    if (kernel.is_linear()) d.y = canonical_sign(d.y);
    if (!best) {
      best = std::move(d);
      continue;
    }
    const double tie = 1e-12 * std::max(1.0, std::abs(best->value));
    if (d.value < best->value - tie ||
        (std::abs(d.value - best->value) <= tie && lexicographically_less(d.y, best->y))) {
      best = std::move(d);
    }
  }
  c.delta = best->value;
  c.witness = best->y;
  return c;
}

Certificate estimate_nonquadratic(const SystemModel& model, double T, Variant variant,
                                  const MultistartOptions& options) {
  const KernelPtr kernel = observation_kernel(model);
  return minimize_on_sphere(*kernel, T, variant, options, model.id);
}

Matrix operator_sqrt(const Matrix& B, const InnerProduct& ip) {
  if (B.rows() != ip.dimension() || B.cols() != ip.dimension()) {
    throw_error(ErrorCode::kDimensionMismatch, "operator square root dimension mismatch");
  }
  const Matrix pb = ip.weight() * B;
  const double scale = std::max(1.0, pb.cwiseAbs().maxCoeff());
  if ((pb - pb.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw_error(ErrorCode::kPrecondition, "B is not self-adjoint in the model inner product");
  }
  // C B C⁻¹ is symmetric when PB is; take its root and map back.
  Matrix conj = ip.factor() * B * ip.factor_inverse();
  conj = 0.5 * (conj + conj.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(conj);
  if (es.eigenvalues().minCoeff() < -1e-10 * scale) {
    throw_error(ErrorCode::kPrecondition, "B is not positive semidefinite in the model inner product");
  }
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Matrix half = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
  return ip.factor_inverse() * half * ip.factor();
}

Certificate sqrt_form_certificate(const SystemModel& model, double T) {
  if (!model.B.is_linear()) {
    throw_error(ErrorCode::kUnsupportedVariant, "sqrt-form needs a linear B");
  }
  if (model.kernel) {
    throw_error(ErrorCode::kUnsupportedVariant,
                "sqrt-form needs a dense semigroup; model '" + model.id + "' uses a custom kernel");
  }
  if (!(T > 0)) throw_error(ErrorCode::kPrecondition, "horizon T must be positive");
  const Matrix half = operator_sqrt(model.B.linear().matrix(), model.inner);
  SystemModel rooted = model;
  rooted.B = ControlOperator(LinearOperator::dense(half), model.inner);
  const DenseKernel kernel(rooted);
  const GramResult g = doubling([&](double t) { return kernel.image_matrix(t); }, kernel.dimension(),
                                T, {}, 1e-10, 64, 65536);
  const PencilMin m = smallest_pencil_eigen(g.W, model.inner);
  const Certificate quad = certify_quadratic(model, T);
  if (std::abs(m.value - quad.delta) > 1e-9 * std::max(1.0, std::abs(quad.delta))) {
    std::ostringstream os;
    os << "sqrt-form delta " << m.value << " disagrees with quadratic delta " << quad.delta;
    throw_error(ErrorCode::kInternal, os.str());
  }
  Certificate c;
  c.model_id = model.id;
  c.variant = Variant::kSqrtForm;
  c.horizon_T = T;
  c.delta = m.value;
  c.method = CertificateMethod::kGramEigenvalue;
  c.certified = true;
  c.witness = m.vector;
  c.quadrature = g.quadrature;
  return c;
}

double necessity_delta(double M, double sigma, double lambda, double T, double normB) {
  if (!(M >= 1)) throw_error(ErrorCode::kPrecondition, "necessity bound needs M >= 1");
  if (!(sigma > 0)) throw_error(ErrorCode::kPrecondition, "necessity bound needs sigma > 0");
  if (lambda == 0 || !std::isfinite(lambda)) {
    throw_error(ErrorCode::kPrecondition, "necessity bound needs a nonzero gain");
  }
  if (!(normB >= 0)) throw_error(ErrorCode::kPrecondition, "operator norm must be nonnegative");
  if (!(T > std::log(M) / sigma)) {
    std::ostringstream os;
    os << "horizon T=" << T << " must exceed ln(M)/sigma=" << std::log(M) / sigma;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  const double a = std::abs(lambda) * T * normB;
  return (1 - M * std::exp(-sigma * T)) / (2 * M * std::abs(lambda)) / (1 + a * std::exp(a));
}

std::vector<Certificate> sweep_horizon(const SystemModel& model, double T_min, double T_max,
                                       int count) {
  if (!(T_min > 0) || !(T_max >= T_min) || count < 1) {
    throw_error(ErrorCode::kPrecondition, "invalid horizon sweep");
  }
  std::vector<Certificate> out;
  for (int k = 0; k < count; ++k) {
    const double T = count == 1 ? T_min
                                : T_min * std::pow(T_max / T_min, static_cast<double>(k) / (count - 1));
    out.push_back(certify_quadratic(model, T));
  }
  return out;
}

}  // namespace cstab
