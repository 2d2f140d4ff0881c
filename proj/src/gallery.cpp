#include "cstab/gallery.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "cstab/certifier.hpp"
#include "cstab/finite_dim.hpp"
#include "cstab/observation.hpp"
#include "cstab/robustness.hpp"
#include "cstab/semigroup.hpp"
#include "cstab/simulator.hpp"

namespace cstab {
namespace gallery {

const char* to_string(Evidence e) {
  switch (e) {
    case Evidence::kClaimed: return "claimed";
    case Evidence::kTrivial: return "trivial";
    case Evidence::kDerived: return "derived";
  }
  return "unknown";
}

namespace {

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(10);
  os << x;
  return os.str();
}

CheckOutcome outcome(bool pass, const std::string& detail) { return {pass, detail}; }

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b,
       c, d;
  return m;
}

double spectral_abscissa(const Matrix& m) {
  return Eigen::EigenSolver<Matrix>(m, false).eigenvalues().real().maxCoeff();
}

// ---------------------------------------------------------------------------
// Piecewise-linear grids: nodes x_i = i·h, i = 1..n, z(0) = 0, and a half hat
// at x_n (states vanish beyond x_n).

struct Tridiag {
  Vector d;  // ∫ w φ_i²
  Vector e;  // ∫ w φ_i φ_{i+1}

  Vector apply(const Vector& y) const {
    Vector out = d.cwiseProduct(y);
    const Index n = d.size();
    out.head(n - 1) += e.cwiseProduct(y.tail(n - 1));
    out.tail(n - 1) += e.cwiseProduct(y.head(n - 1));
    return out;
  }

  Matrix dense() const {
    const Index n = d.size();
    Matrix m = Matrix::Zero(n, n);
    m.diagonal() = d;
    for (Index i = 0; i + 1 < n; ++i) m(i, i + 1) = m(i + 1, i) = e[i];
    return m;
  }
};

struct GaussRule {
  Vector x, w;  // on [0, 1]
};

const GaussRule& gauss_rule(int order) {
  static std::map<int, GaussRule> rules;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = rules.find(order);
  if (it == rules.end()) {
    GaussRule r;
    gauss_legendre(order, &r.x, &r.w);
    r.x = 0.5 * (r.x.array() + 1.0);
    r.w *= 0.5;
    it = rules.emplace(order, r).first;
  }
  return it->second;
}

// Integration pieces of element [a, b] split at the given kinks.
std::vector<std::pair<double, double>> pieces(double a, double b, const std::vector<double>& kinks) {
  std::vector<double> cuts{a};
  for (double k : kinks) {
    if (k > a && k < b) cuts.push_back(k);
  }
  cuts.push_back(b);
  std::sort(cuts.begin(), cuts.end());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    if (cuts[i + 1] > cuts[i]) out.emplace_back(cuts[i], cuts[i + 1]);
  }
  return out;
}

// ∫₀^{nh} w φ_i φ_j; w must be polynomial of degree ≤ 2·order − 3 between kinks.
Tridiag weighted_mass(Index n, double h, const std::function<double(double)>& w,
                      const std::vector<double>& kinks, int order = 3) {
  Tridiag out{Vector::Zero(n), Vector::Zero(std::max<Index>(n - 1, 0))};
  const GaussRule& g = gauss_rule(order);
  for (Index e = 1; e <= n; ++e) {
    const double xa = static_cast<double>(e - 1) * h, xb = static_cast<double>(e) * h;
    double ll = 0, lr = 0, rr = 0;
    for (const auto& [a, b] : pieces(xa, xb, kinks)) {
      for (Index q = 0; q < g.x.size(); ++q) {
        const double x = a + (b - a) * g.x[q];
        const double wq = (b - a) * g.w[q] * w(x);
        const double pr = (x - xa) / h, pl = 1.0 - pr;
        ll += wq * pl * pl;
        lr += wq * pl * pr;
        rr += wq * pr * pr;
      }
    }
    out.d[e - 1] += rr;
    if (e >= 2) {
      out.d[e - 2] += ll;
      out.e[e - 2] += lr;
    }
  }
  return out;
}

// K_ij = −∫ φ_j' φ_i, the Galerkin form of −d/dx.
Matrix advection_matrix(Index n, double h) {
  (void)h;
  Matrix K = Matrix::Zero(n, n);
  for (Index e = 1; e <= n; ++e) {
    // On the element φ_L' = −1/h, φ_R' = 1/h and ∫φ_L = ∫φ_R = h/2.
    const Index R = e - 1;
    K(R, R) += -0.5;
    if (e >= 2) {
      const Index L = e - 2;
      K(L, L) += 0.5;
      K(L, R) += -0.5;
      K(R, L) += 0.5;
    }
  }
  return K;
}

double hat_value(const Vector& nodal, double h, double x) {
  const Index n = nodal.size();
  if (x <= 0 || x > static_cast<double>(n) * h) return 0.0;
  const double s = x / h;
  const Index e = std::min<Index>(static_cast<Index>(std::ceil(s)), n);  // element [e−1, e]
  const double pr = s - static_cast<double>(e - 1);
  const double left = e >= 2 ? nodal[e - 2] : 0.0;
  return (1 - pr) * left + pr * nodal[e - 1];
}

// Transport weight g: −1 on (0,1), 1 on [1,3], c beyond; Γ its antiderivative.
struct TransportWeight {
  double c = 1.0;

  double g(double x) const {
    if (x < 1) return -1.0;
    if (x <= 3) return 1.0;
    return c;
  }
  double primitive(double u) const {
    if (u <= 1) return -u;
    if (u <= 3) return -1.0 + (u - 1);
    return 1.0 + c * (u - 3);
  }
  double window(double x, double T) const { return primitive(x + T) - primitive(x); }
  static std::vector<double> kinks() { return {1.0, 3.0}; }
};

class TransportKernel final : public ObservationKernel {
 public:
  TransportKernel(Index n, double h, TransportWeight weight, InnerProduct inner)
      : n_(n), h_(h), weight_(weight), inner_(std::move(inner)) {}

  Index dimension() const override { return n_; }
  const InnerProduct& inner() const override { return inner_; }
  bool is_linear() const override { return true; }

  double form(double t, const Vector& y, Vector* grad) const override {
    const Vector v = shifted(t, false).apply(y);
    if (grad) *grad = 2.0 * v;
    return v.dot(y);
  }
  double image_norm_sq(double t, const Vector& y, Vector* grad) const override {
    const Vector v = shifted(t, true).apply(y);
    if (grad) *grad = 2.0 * v;
    return v.dot(y);
  }
  Matrix form_matrix(double t) const override { return shifted(t, false).dense(); }
  Matrix image_matrix(double t) const override { return shifted(t, true).dense(); }

  // ∫₀ᵀ ∫ g(x+t) y(x)² dx dt = ∫ y(x)² G_T(x) dx with G_T piecewise linear.
  std::optional<Matrix> exact_gram(double T) const override {
    std::vector<double> kinks;
    for (double b : TransportWeight::kinks()) {
      kinks.push_back(b);
      kinks.push_back(b - T);
    }
    return weighted_mass(n_, h_, [&](double x) { return weight_.window(x, T); }, kinks).dense();
  }

  std::vector<double> breakpoints(double T) const override {
    std::vector<double> out;
    for (double b : TransportWeight::kinks()) {
      if (b < T) out.push_back(b);
    }
    return out;
  }

 private:
  Tridiag shifted(double t, bool squared) const {
    std::vector<double> kinks;
    for (double b : TransportWeight::kinks()) kinks.push_back(b - t);
    return weighted_mass(
        n_, h_,
        [&](double x) {
          const double g = weight_.g(x + t);
          return squared ? g * g : g;
        },
        kinks);
  }

  Index n_;
  double h_;
  TransportWeight weight_;
  InnerProduct inner_;
};

// Characteristics of z_t = −z_x − λ g z: z(x, t) = z₀(ξ) e^{−λ G_t(ξ)}, ξ = x − t.
class TransportFlow final : public ExactFlow {
 public:
  TransportFlow(Index n, double h, TransportWeight weight) : n_(n), h_(h), weight_(weight) {}

  std::pair<double, double> norm_sq_and_form(const Vector& z0, double lambda,
                                             double t) const override {
    std::vector<double> kinks;
    for (double b : TransportWeight::kinks()) {
      kinks.push_back(b);
      kinks.push_back(b - t);
    }
    const GaussRule& g = gauss_rule(6);
    double ns = 0.0, form = 0.0;
    for (Index e = 1; e <= n_; ++e) {
      const double xa = static_cast<double>(e - 1) * h_, xb = static_cast<double>(e) * h_;
      const double left = e >= 2 ? z0[e - 2] : 0.0, right = z0[e - 1];
      for (const auto& [a, b] : pieces(xa, xb, kinks)) {
        for (Index q = 0; q < g.x.size(); ++q) {
          const double xi = a + (b - a) * g.x[q];
          const double pr = (xi - xa) / h_;
          const double z = (1 - pr) * left + pr * right;
          const double v = (b - a) * g.w[q] * z * z * std::exp(-2 * lambda * weight_.window(xi, t));
          ns += v;
          form += v * weight_.g(xi + t);
        }
      }
    }
    return {ns, form};
  }

  Vector state(const Vector& z0, double lambda, double t) const override {
    Vector out(n_);
    for (Index i = 0; i < n_; ++i) {
      const double xi = static_cast<double>(i + 1) * h_ - t;
      out[i] = xi > 0 ? hat_value(z0, h_, xi) * std::exp(-lambda * weight_.window(xi, t)) : 0.0;
    }
    return out;
  }

 private:
  Index n_;
  double h_;
  TransportWeight weight_;
};

// By = Σ_{j≤J} (1/j)⟨y, φ_j⟩φ_j with φ_j = √2 sin(jπx) on (0, 1).
class CompactTransportKernel final : public ObservationKernel {
 public:
  CompactTransportKernel(Index n, double h, int modes, InnerProduct inner)
      : n_(n), h_(h), modes_(modes), inner_(std::move(inner)) {
    weights_.resize(modes);
    for (int j = 0; j < modes; ++j) weights_[j] = 1.0 / (j + 1);
  }

  Index dimension() const override { return n_; }
  const InnerProduct& inner() const override { return inner_; }
  bool is_linear() const override { return true; }

  /// V_ij = ⟨S₀(t)φ̂_i, φ_j⟩ = ∫₀^{1−t} φ̂_i(ξ) φ_j(ξ + t) dξ.
  Matrix projections(double t) const {
    Matrix V = Matrix::Zero(n_, modes_);
    if (t >= 1.0) return V;
    const GaussRule& g = gauss_rule(8);
    const double end = 1.0 - t;
    for (Index e = 1; e <= n_; ++e) {
      const double xa = static_cast<double>(e - 1) * h_;
      const double xb = std::min(static_cast<double>(e) * h_, end);
      if (xb <= xa) break;
      for (Index q = 0; q < g.x.size(); ++q) {
        const double xi = xa + (xb - xa) * g.x[q];
        const double w = (xb - xa) * g.w[q];
        const double pr = (xi - xa) / h_, pl = 1.0 - pr;
        for (int j = 0; j < modes_; ++j) {
          const double phi = std::sqrt(2.0) * std::sin((j + 1) * M_PI * (xi + t));
          V(e - 1, j) += w * pr * phi;
          if (e >= 2) V(e - 2, j) += w * pl * phi;
        }
      }
    }
    return V;
  }

  double form(double t, const Vector& y, Vector* grad) const override {
    return weighted(t, y, grad, false);
  }
  double image_norm_sq(double t, const Vector& y, Vector* grad) const override {
    return weighted(t, y, grad, true);
  }
  Matrix form_matrix(double t) const override {
    const Matrix V = projections(t);
    return V * weights_.asDiagonal() * V.transpose();
  }
  Matrix image_matrix(double t) const override {
    const Matrix V = projections(t);
    return V * weights_.cwiseAbs2().asDiagonal() * V.transpose();
  }
  std::vector<double> breakpoints(double T) const override {
    if (T > 1.0) return {1.0};
    return {};
  }

 private:
  double weighted(double t, const Vector& y, Vector* grad, bool squared) const {
    const Matrix V = projections(t);
    const Vector c = V.transpose() * y;
    const Vector d = squared ? Vector(weights_.cwiseAbs2()) : weights_;
    const Vector dc = d.cwiseProduct(c);
    if (grad) *grad = 2.0 * V * dc;
    return dc.dot(c);
  }

  Index n_;
  double h_;
  int modes_;
  InnerProduct inner_;
  Vector weights_;
};

InnerProduct grid_inner_product(Index n, double h) {
  return InnerProduct(weighted_mass(n, h, [](double) { return 1.0; }, {}).dense());
}

Vector grid_interpolant(Index n, double h, const std::function<double(double)>& f) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = f(static_cast<double>(i + 1) * h);
  return v;
}

Index grid_size(double length, double h) {
  const double k = length / h;
  const Index n = static_cast<Index>(std::llround(k));
  if (n < 2 || std::abs(k - static_cast<double>(n)) > 1e-9 * k) {
    std::ostringstream os;
    os << "grid spacing " << h << " does not divide the length " << length;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  return n;
}

// ---------------------------------------------------------------------------
// Modal wave on (0, 1): ω_j = jπ, energy coordinates (a_j, b_j).

std::vector<double> wave_frequencies(int modes) {
  std::vector<double> w(modes);
  for (int j = 0; j < modes; ++j) w[j] = M_PI * (j + 1);
  return w;
}

LinearOperator wave_generator(int modes) {
  std::vector<Eigen::Matrix2d> blocks;
  for (double w : wave_frequencies(modes)) {
    Eigen::Matrix2d blk;
    blk << 0, w,
          -w, 0;
    blocks.push_back(blk);
  }
  return LinearOperator::modal_block(std::move(blocks));
}

SystemModel wave_model(std::string id, int modes) {
  if (modes < 2) throw_error(ErrorCode::kPrecondition, "wave models need at least 2 modes");
  SystemModel m;
  m.id = std::move(id);
  m.A = wave_generator(modes);
  m.inner = InnerProduct::identity(2 * modes);
  m.semigroup_class = SemigroupClass::kIsometry;
  m.dimension.coords = 2 * modes;
  m.dimension.modal_modes = modes;
  m.basis = BasisTag::kModal;
  m.semigroup = std::make_shared<ModalRotationSemigroup>(wave_frequencies(modes));
  return m;
}

// Velocity-coordinate matrix of G(y) = ⟨y, φ₂⟩φ₁ + 2y.
Matrix wave_case2_control(int modes) {
  Matrix B = Matrix::Zero(2 * modes, 2 * modes);
  for (int j = 0; j < modes; ++j) B(2 * j + 1, 2 * j + 1) = 2.0;
  B(1, 3) += 1.0;
  return B;
}

// M_jk = ∫_a^b φ_j φ_k, φ_j = √2 sin(jπx).
Matrix localization_matrix(int modes, double a, double b) {
  Matrix M(modes, modes);
  auto prim = [](double k, double x) { return k == 0 ? x : std::sin(k * M_PI * x) / (k * M_PI); };
  for (int j = 1; j <= modes; ++j) {
    for (int k = 1; k <= modes; ++k) {
      const double dm = j - k, dp = j + k;
      M(j - 1, k - 1) = (prim(dm, b) - prim(dm, a)) - (prim(dp, b) - prim(dp, a));
    }
  }
  return 0.5 * (M + M.transpose());
}

// ---------------------------------------------------------------------------
// Checks shared by several entries.

Certificate quadratic(const SystemModel& m, double T) { return certify_quadratic(m, T); }

double witness_value(const SystemModel& model, double T, Variant v, const Vector& y,
                     std::optional<TimeQuadrature> fixed = std::nullopt) {
  const KernelPtr k = observation_kernel(model);
  const TimeQuadrature rule = fixed ? *fixed : resolved_rule(*k, T);
  const double n = model.inner.norm(y);
  const double value = functional_value(*k, rule, v, y);
  return v == Variant::kL1Image ? value / n : value / (n * n);
}

CheckOutcome decreasing_along_witnesses(const GalleryEntry& e, double T, Variant v, int count) {
  std::vector<double> values;
  for (int j = 0; j < count && j < static_cast<int>(e.mode_witnesses.size()); ++j) {
    values.push_back(witness_value(e.model, T, v, e.mode_witnesses[j]));
  }
  std::ostringstream os;
  bool pass = values.size() == static_cast<std::size_t>(count);
  for (std::size_t j = 0; j < values.size(); ++j) {
    os << (j ? ", " : "") << fmt(values[j]);
    if (j > 0 && !(values[j] < values[j - 1])) pass = false;
  }
  return outcome(pass, "witness values: " + os.str());
}

// ---------------------------------------------------------------------------
// Entries.

GalleryEntry scalar_abs() {
  GalleryEntry e;
  e.id = "scalar-abs";
  NonlinearOperator B;
  B.dimension = 1;
  B.map = [](const Vector& z) { return Vector(z.cwiseAbs()); };
  B.jacobian = [](const Vector& z) {
    Matrix J(1, 1);
    J(0, 0) = z[0] > 0 ? 1.0 : (z[0] < 0 ? -1.0 : 0.0);
    return J;
  };
  B.lipschitz_global = 1.0;
  B.positive = false;
  e.model = make_dense_model(e.id, Matrix::Zero(1, 1), B, std::nullopt, SemigroupClass::kIsometry);
  e.horizon_T = 1.0;
  e.notes = "Scalar system z' = v|z|: the absolute observability inequality holds, yet a "
            "constant negative control pushes negative states away from zero.";
  const SystemModel model = e.model;
  e.expected.push_back({"estimate-absolute", "absolute-variant delta(T=1) = 1", Evidence::kDerived,
                        [model] {
                          const Certificate c = estimate_nonquadratic(model, 1.0, Variant::kAbsolute);
                          return outcome(std::abs(c.delta - 1.0) <= 1e-6, "delta = " + fmt(c.delta));
                        }});
  e.expected.push_back({"simulate", "constant control v = -0.5 from z0 = -1 grows like e^{0.5 t}",
                        Evidence::kClaimed, [model] {
                          const Trajectory tr =
                              simulate(model, ControlLaw::constant(0.5), -Vector::Ones(1), 4.0);
                          const double ratio = tr.norms.back() / std::exp(2.0);
                          return outcome(std::abs(ratio - 1.0) <= 1e-6,
                                         "|z(4)| / e^2 = " + fmt(ratio));
                        }});
  return e;
}

GalleryEntry jordan_indefinite() {
  GalleryEntry e;
  e.id = "jordan-indefinite";
  const Matrix A = mat2(0, 1, 0, 0), B = mat2(1, 0, 0, -1);
  e.model = make_dense_model(e.id, A, B);
  e.horizon_T = 20.0;
  e.notes = "Nilpotent drift with indefinite diagonal control: the quadratic observability "
            "inequality holds for long horizons although no constant control stabilizes.";
  const SystemModel model = e.model;
  e.expected.push_back({"certify-quadratic", "delta(T=20) > 0", Evidence::kClaimed, [model] {
                          const Certificate c = quadratic(model, 20.0);
                          return outcome(c.delta > 0, "delta = " + fmt(c.delta));
                        }});
  e.expected.push_back(
      {"certify-quadratic", "delta(T) equals the smallest eigenvalue of [[T, T^2/2], [T^2/2, T^3/3 - T]]",
       Evidence::kDerived, [model] {
         double worst = 0.0;
         for (double T : {1.0, 2.0, 5.0, 20.0}) {
           const Matrix W = mat2(T, T * T / 2, T * T / 2, T * T * T / 3 - T);
           const double expected =
               Eigen::SelfAdjointEigenSolver<Matrix>(W).eigenvalues().minCoeff();
           worst = std::max(worst, std::abs(quadratic(model, T).delta - expected) /
                                       std::max(1.0, std::abs(expected)));
         }
         return outcome(worst <= 1e-9, "max relative deviation = " + fmt(worst));
       }});
  e.expected.push_back(
      {"spectrum", "max Re eig(A - lambda B) >= |lambda| for lambda in {+-1e-3, ..., +-10}",
       Evidence::kClaimed, [A, B] {
         double worst = std::numeric_limits<double>::infinity();
         for (int k = -3; k <= 1; ++k) {
           for (double s : {1.0, -1.0}) {
             const double lam = s * std::pow(10.0, k);
             worst = std::min(worst, spectral_abscissa(A - lam * B) - std::abs(lam));
           }
         }
         return outcome(worst >= -1e-12, "min(abscissa - |lambda|) = " + fmt(worst));
       }});
  e.expected.push_back({"dissipativity", "A is not dissipative, so the decay envelope does not apply",
                        Evidence::kDerived, [model] {
                          Rng rng(7);
                          const double worst = sampled_dissipation(model, 200, rng);
                          return outcome(worst > 0, "max sampled <Az,z>/|z|^2 = " + fmt(worst));
                        }});
  return e;
}

GalleryEntry rotation_b() {
  GalleryEntry e;
  e.id = "rotation-B";
  e.model = make_dense_model(e.id, Matrix::Zero(2, 2), mat2(0, 1, -1, 0), std::nullopt,
                             SemigroupClass::kIsometry);
  e.horizon_T = 1.0;
  e.notes = "Zero drift with a rotation as control: the image never vanishes but the "
            "quadratic form is identically zero.";
  const SystemModel model = e.model;
  e.expected.push_back({"estimate-l1-image", "l1-image delta(T=1) = 1", Evidence::kDerived, [model] {
                          const Certificate c = estimate_nonquadratic(model, 1.0, Variant::kL1Image);
                          return outcome(std::abs(c.delta - 1.0) <= 1e-6, "delta = " + fmt(c.delta));
                        }});
  e.expected.push_back({"estimate-absolute", "absolute-variant delta(T=1) = 0", Evidence::kClaimed,
                        [model] {
                          const Certificate c = estimate_nonquadratic(model, 1.0, Variant::kAbsolute);
                          return outcome(std::abs(c.delta) < 1e-8, "delta = " + fmt(c.delta));
                        }});
  return e;
}

GalleryEntry nonneg_nonsym() {
  GalleryEntry e;
  e.id = "nonneg-nonsym";
  const Matrix B = mat2(1, 4, 0, 4);
  e.model = make_dense_model(e.id, Matrix::Zero(2, 2), B, std::nullopt, SemigroupClass::kIsometry);
  e.horizon_T = 1.0;
  e.notes = "Zero drift with a nonnegative, non-symmetric control whose form (x + 2y)^2 "
            "vanishes on a line; the temporal implication fails yet constant controls "
            "stabilize.";
  const SystemModel model = e.model;
  e.expected.push_back(
      {"temporal-condition", "fails with counterexample along (2, -1)/sqrt(5)", Evidence::kClaimed,
       [B] {
         const TemporalResult r = temporal_condition_sampled(Matrix::Zero(2, 2), B, 1.0, 64);
         if (r.holds || !r.counterexample) return outcome(false, "no counterexample found");
         Vector dir(2);
         dir << 2, -1;
         const double align = std::abs(r.counterexample->normalized().dot(dir.normalized()));
         return outcome(align >= 1 - 1e-6, "|cos angle| = " + fmt(align));
       }});
  e.expected.push_back({"spectrum", "eig(A - lambda B) = {-lambda, -4 lambda}", Evidence::kDerived,
                        [B] {
                          double worst = 0.0;
                          for (double lam : {0.01, 0.1, 1.0, 10.0}) {
                            Eigen::EigenSolver<Matrix> es(-lam * B, false);
                            std::vector<double> re{es.eigenvalues()[0].real(),
                                                   es.eigenvalues()[1].real()};
                            std::sort(re.begin(), re.end());
                            worst = std::max({worst, std::abs(re[0] + 4 * lam),
                                              std::abs(re[1] + lam)});
                          }
                          return outcome(worst <= 1e-12, "max deviation = " + fmt(worst));
                        }});
  e.expected.push_back({"simulate", "constant control lambda = 1 decays exponentially",
                        Evidence::kClaimed, [model] {
                          Vector z0(2);
                          z0 << 0.6, -0.8;
                          const Trajectory tr = simulate(model, ControlLaw::constant(1.0), z0, 10.0);
                          const DecayFit f = fit_decay(tr);
                          return outcome(f.rate > 0 && f.r_squared >= 0.99,
                                         "rate = " + fmt(f.rate) + ", r^2 = " + fmt(f.r_squared));
                        }});
  return e;
}

GalleryEntry identity_b() {
  GalleryEntry e;
  e.id = "identity-B";
  e.model = make_dense_model(e.id, Matrix::Zero(2, 2), Matrix::Identity(2, 2), std::nullopt,
                             SemigroupClass::kIsometry);
  e.horizon_T = 1.0;
  e.notes = "Zero drift, identity control in the plane: the baseline where every inequality "
            "holds with delta = T.";
  const SystemModel model = e.model;
  e.expected.push_back({"certify-quadratic", "delta(T=1) = 1", Evidence::kTrivial, [model] {
                          const Certificate c = quadratic(model, 1.0);
                          return outcome(std::abs(c.delta - 1.0) <= 1e-12, "delta = " + fmt(c.delta));
                        }});
  return e;
}

GalleryEntry transport_case1(const GalleryOptions& o) {
  GalleryEntry e;
  e.id = "transport-case1";
  if (!(o.transport_c > 0)) throw_error(ErrorCode::kPrecondition, "transport_c must be positive");
  const double h = o.transport_h;
  const Index n = grid_size(o.transport_length, h);
  const TransportWeight weight{o.transport_c};
  const InnerProduct ip = grid_inner_product(n, h);
  const Matrix& M = ip.weight();
  const Eigen::LLT<Matrix> mass(M);
  const Matrix Ah = mass.solve(advection_matrix(n, h));
  const Matrix G = weighted_mass(n, h, [&](double x) { return weight.g(x); },
                                 TransportWeight::kinks())
                       .dense();
  const Matrix Bh = mass.solve(G);

  SystemModel& m = e.model;
  m.id = e.id;
  m.A = LinearOperator::exact_shift(Ah, h).with_operator_norm(Ah.cwiseAbs().rowwise().sum().maxCoeff());
  m.inner = ip;
  m.B = ControlOperator(LinearOperator::dense(Bh).with_operator_norm(std::max(1.0, o.transport_c)), ip);
  m.semigroup_class = SemigroupClass::kContraction;
  m.dimension.coords = n;
  m.basis = BasisTag::kGrid;
  m.semigroup = std::make_shared<ShiftSemigroup>(n, h);
  m.kernel = std::make_shared<TransportKernel>(n, h, weight, ip);
  m.exact_flow = std::make_shared<TransportFlow>(n, h, weight);
  e.horizon_T = 3.0;
  e.parameters = {{"c", o.transport_c}, {"h", h}, {"length", o.transport_length}};
  e.notes = "Transport z_t = -z_x + v g z on the half line with g = -1 on (0,1), 1 on [1,3], "
            "c beyond; states are piecewise linear on [0, Y] and are transported exactly.";

  const SystemModel model = m;
  const double c = o.transport_c, Y = o.transport_length;
  e.expected.push_back({"certify-quadratic", "delta(T=3) >= 3 min(1, c) - 0.02", Evidence::kClaimed,
                        [model, c] {
                          const Certificate cert = quadratic(model, 3.0);
                          const double target = 3 * std::min(1.0, c) - 0.02;
                          return outcome(cert.delta >= target,
                                         "delta = " + fmt(cert.delta) + ", target " + fmt(target));
                        }});
  e.expected.push_back(
      {"certify-quadratic",
       "delta(T=3) lies in [inf G_3, inf G_3 + 4(1+c)h] with G_3(x) = integral of g over [x, x+3]",
       Evidence::kDerived, [model, c, h, Y] {
         const Certificate cert = quadratic(model, 3.0);
         const double lo = transport_weight_infimum(3.0, c, Y);
         const double hi = lo + 4 * (1 + c) * h;
         return outcome(cert.delta >= lo - 1e-9 && cert.delta <= hi,
                        "delta = " + fmt(cert.delta) + ", inf G_3 = " + fmt(lo));
       }});
  return e;
}

GalleryEntry transport_case2(const GalleryOptions& o) {
  GalleryEntry e;
  e.id = "transport-case2-compact";
  const double h = o.transport_compact_h;
  const Index n = grid_size(1.0, h);
  const int J = o.transport_modes;
  if (J < 8) throw_error(ErrorCode::kPrecondition, "transport_modes must be at least 8");
  const InnerProduct ip = grid_inner_product(n, h);
  const auto kernel = std::make_shared<CompactTransportKernel>(n, h, J, ip);
  const Eigen::LLT<Matrix> mass(ip.weight());
  const Matrix Ah = mass.solve(advection_matrix(n, h));
  const Matrix Bh = mass.solve(kernel->form_matrix(0.0));

  SystemModel& m = e.model;
  m.id = e.id;
  m.A = LinearOperator::exact_shift(Ah, h);
  m.inner = ip;
  m.B = ControlOperator(LinearOperator::dense(Bh).with_operator_norm(1.0), ip);
  m.semigroup_class = SemigroupClass::kContraction;
  m.dimension.coords = n;
  m.basis = BasisTag::kGrid;
  m.semigroup = std::make_shared<ShiftSemigroup>(n, h);
  m.kernel = kernel;
  for (int j = 1; j <= 8; ++j) {
    Vector y = grid_interpolant(n, h, [j](double x) { return std::sqrt(2.0) * std::sin(j * M_PI * x); });
    e.mode_witnesses.push_back(y / ip.norm(y));
  }
  e.horizon_T = 2.0;
  e.parameters = {{"h", h}, {"modes", J}};
  e.notes = "Transport with the compact diagonal control sum_j (1/j)<y, phi_j> phi_j, "
            "phi_j = sqrt(2) sin(j pi x) on (0,1); observability degenerates along the modes.";

  e.expected.push_back({"estimate-l1-image",
                        "l1-image functional decreases along the first 8 mode witnesses (T=2)",
                        Evidence::kClaimed, [e] {
                          return decreasing_along_witnesses(e, 2.0, Variant::kL1Image, 8);
                        }});
  const SystemModel model = m;
  e.expected.push_back({"certify-quadratic", "delta(T=2) < 1e-3 (no uniform observability)",
                        Evidence::kDerived, [model] {
                          const Certificate c = quadratic(model, 2.0);
                          return outcome(c.delta < 1e-3, "delta = " + fmt(c.delta));
                        }});
  return e;
}

GalleryEntry wave_undamped(const GalleryOptions& o) {
  GalleryEntry e;
  e.id = "wave-undamped";
  const int N = o.modes;
  e.model = wave_model(e.id, N);
  Matrix B = Matrix::Zero(2 * N, 2 * N);
  for (int j = 0; j < N; ++j) B(2 * j + 1, 2 * j) = 1.0 / (M_PI * (j + 1));
  e.model.B = ControlOperator(LinearOperator::dense(B), e.model.inner);
  for (int j = 1; j <= 8 && j <= N; ++j) e.mode_witnesses.push_back(wave_mode_state(N, j, false));
  e.horizon_T = 2.0;
  e.parameters = {{"modes", N}};
  e.notes = "Undamped string with displacement coupling y_tt = y_xx + v y: the control "
            "operator is compact on the energy space.";
  const SystemModel model = e.model;
  const GalleryEntry snapshot = e;
  e.expected.push_back({"estimate-l1-image", "l1-image functional decreases along the first 8 modes",
                        Evidence::kClaimed, [snapshot] {
                          return decreasing_along_witnesses(snapshot, 2.0, Variant::kL1Image, 8);
                        }});
  e.expected.push_back({"estimate-l1-image", "mode-j value equals 4/(j pi^2) at T=2",
                        Evidence::kDerived, [snapshot] {
                          double worst = 0.0;
                          for (std::size_t j = 0; j < snapshot.mode_witnesses.size(); ++j) {
                            // |cos(jπt)| has kinks at t = (k + 1/2)/j.
                            const double jj = static_cast<double>(j + 1);
                            std::vector<double> kinks;
                            for (double t = 0.5 / jj; t < 2.0; t += 1.0 / jj) kinks.push_back(t);
                            const double v =
                                witness_value(snapshot.model, 2.0, Variant::kL1Image,
                                              snapshot.mode_witnesses[j],
                                              composite_rule(2.0, 4 * (j + 1), 16, kinks));
                            worst = std::max(worst, std::abs(v - 4.0 / ((j + 1) * M_PI * M_PI)));
                          }
                          return outcome(worst <= 1e-6, "max deviation = " + fmt(worst));
                        }});
  e.expected.push_back({"certify-quadratic", "Gram matrix vanishes at T=2 (delta = 0)",
                        Evidence::kDerived, [model] {
                          const Certificate c = quadratic(model, 2.0);
                          return outcome(std::abs(c.delta) <= 1e-10, "delta = " + fmt(c.delta));
                        }});
  return e;
}

GalleryEntry wave_case2(const GalleryOptions& o) {
  GalleryEntry e;
  e.id = "wave-modal-case2";
  const int N = o.modes;
  e.model = wave_model(e.id, N);
  e.model.B = ControlOperator(LinearOperator::dense(wave_case2_control(N)), e.model.inner);
  e.horizon_T = 2.0;
  e.parameters = {{"modes", N}};
  e.notes = "String with linear velocity feedback G(y) = <y, phi_2> phi_1 + 2y in modal "
            "energy coordinates.";
  const SystemModel model = e.model;
  e.expected.push_back({"certify-quadratic", "delta(T=2) >= 1", Evidence::kClaimed, [model] {
                          const Certificate c = quadratic(model, 2.0);
                          return outcome(c.delta >= 1 - 1e-6, "delta = " + fmt(c.delta));
                        }});
  e.expected.push_back({"certify-quadratic",
                        "delta(T=2) = 2: velocity energy averages to half over full periods and "
                        "the mode-1/mode-2 coupling integrates to zero",
                        Evidence::kDerived, [model] {
                          const Certificate c = quadratic(model, 2.0);
                          return outcome(std::abs(c.delta - 2.0) <= 1e-8, "delta = " + fmt(c.delta));
                        }});
  return e;
}

GalleryEntry wave_case1(const GalleryOptions& o) {
  GalleryEntry e;
  e.id = "wave-modal-case1";
  const int N = o.modes;
  if (!(0 <= o.omega_a && o.omega_a < o.omega_b && o.omega_b <= 1)) {
    throw_error(ErrorCode::kPrecondition, "damping region must satisfy 0 <= a < b <= 1");
  }
  e.model = wave_model(e.id, N);
  const Matrix Mw = localization_matrix(N, o.omega_a, o.omega_b);
  const Vector m1 = Mw.col(0);
  auto velocity = [N](const Vector& z) {
    Vector b(N);
    for (int j = 0; j < N; ++j) b[j] = z[2 * j + 1];
    return b;
  };
  NonlinearOperator B;
  B.dimension = 2 * N;
  B.map = [=](const Vector& z) {
    const Vector b = velocity(z);
    const Vector g = std::abs(m1.dot(b)) * m1 + 2.0 * Mw * b;
    Vector out = Vector::Zero(2 * N);
    for (int j = 0; j < N; ++j) out[2 * j + 1] = g[j];
    return out;
  };
  B.jacobian = [=](const Vector& z) {
    const double s = m1.dot(velocity(z));
    const double sgn = s > 0 ? 1.0 : (s < 0 ? -1.0 : 0.0);
    const Matrix Jg = sgn * m1 * m1.transpose() + 2.0 * Mw;
    Matrix J = Matrix::Zero(2 * N, 2 * N);
    for (int j = 0; j < N; ++j) {
      for (int k = 0; k < N; ++k) J(2 * j + 1, 2 * k + 1) = Jg(j, k);
    }
    return J;
  };
  const double Lp = Eigen::SelfAdjointEigenSolver<Matrix>(m1 * m1.transpose() + 2.0 * Mw)
                        .eigenvalues().cwiseAbs().maxCoeff();
  const double Lm = Eigen::SelfAdjointEigenSolver<Matrix>(-m1 * m1.transpose() + 2.0 * Mw)
                        .eigenvalues().cwiseAbs().maxCoeff();
  B.lipschitz_global = std::max(Lp, Lm);
  B.positive = true;
  e.model.B = ControlOperator(B);
  e.horizon_T = 4.0;
  e.parameters = {{"modes", N}, {"omega", {o.omega_a, o.omega_b}}};
  e.notes = "String with nonlinear damping localized on omega: "
            "G(y) = (|<y, phi_1>_omega| phi_1 + 2y) restricted to omega.";

  const SystemModel model = e.model;
  e.expected.push_back(
      {"pointwise-form", "<B S(t)y, S(t)y> >= |velocity restricted to omega|^2 at sampled (t, y)",
       Evidence::kClaimed, [model, Mw, velocity] {
         Rng rng(11);
         std::uniform_real_distribution<double> ut(0.0, 4.0);
         double worst = std::numeric_limits<double>::infinity();
         for (int s = 0; s < 50; ++s) {
           const Vector y = random_normal(model.size(), rng).normalized();
           for (int k = 0; k < 20; ++k) {
             const Vector x = model.semigroup->apply(ut(rng), y);
             const Vector b = velocity(x);
             const double form = model.inner.dot(model.B.apply(x), x);
             worst = std::min(worst, form - b.dot(Mw * b));
           }
         }
         return outcome(worst >= -1e-12, "min(form - localized energy) = " + fmt(worst));
       }});
  e.expected.push_back(
      {"estimate-quadratic",
       "sampled delta(T=4) > 0 and at least the certified delta of the localized energy",
       Evidence::kDerived, [model, Mw, N] {
         Matrix Bl = Matrix::Zero(2 * N, 2 * N);
         for (int j = 0; j < N; ++j) {
           for (int k = 0; k < N; ++k) Bl(2 * j + 1, 2 * k + 1) = Mw(j, k);
         }
         SystemModel lower = wave_model("wave-localized-energy", N);
         lower.B = ControlOperator(LinearOperator::dense(Bl), lower.inner);
         const double floor = quadratic(lower, 4.0).delta;
         MultistartOptions opts;
         opts.starts = 16;
         const double est = estimate_nonquadratic(model, 4.0, Variant::kQuadratic, opts).delta;
         return outcome(floor > 0 && est >= floor - 1e-9,
                        "estimate = " + fmt(est) + ", localized floor = " + fmt(floor));
       }});
  return e;
}

GalleryEntry wave_perturbed(const GalleryOptions& o) {
  GalleryEntry e = wave_case2(o);
  e.id = "wave-perturbed";
  e.model.id = e.id;
  e.expected.clear();
  const int N = o.modes;
  const double lambda = o.perturbation_lambda;
  const WaveClosedForms bounds = wave_closed_form_bounds(lambda);
  const double p = o.perturbation_fraction * bounds.p_bound;
  const double q = -o.perturbation_fraction * bounds.q_bound;

  // p|z| in the velocity equation, projected on the modes by composite
  // Gauss–Legendre quadrature in x.
  const GaussRule& g = gauss_rule(4);
  const int panels = 16 * N;
  Matrix Phi(panels * g.x.size(), N);
  Vector wq(Phi.rows());
  for (int k = 0; k < panels; ++k) {
    for (Index r = 0; r < g.x.size(); ++r) {
      const Index row = k * g.x.size() + r;
      const double x = (k + g.x[r]) / panels;
      wq[row] = g.w[r] / panels;
      for (int j = 0; j < N; ++j) Phi(row, j) = std::sqrt(2.0) * std::sin((j + 1) * M_PI * x);
    }
  }
  NonlinearOperator n_op;
  n_op.dimension = 2 * N;
  n_op.map = [=](const Vector& z) {
    Vector alpha(N);
    for (int j = 0; j < N; ++j) alpha[j] = z[2 * j] / (M_PI * (j + 1));
    const Vector zx = Phi * alpha;
    const Vector c = p * Phi.transpose() * wq.cwiseProduct(zx.cwiseAbs());
    Vector out = Vector::Zero(2 * N);
    for (int j = 0; j < N; ++j) out[2 * j + 1] = c[j];
    return out;
  };
  n_op.lipschitz_global = std::abs(p) / M_PI;
  n_op.vanishes_at_zero = true;

  Matrix b = Matrix::Zero(2 * N, 2 * N);
  for (int j = 0; j < N; ++j) b(2 * j + 1, 2 * j + 1) = q;

  Perturbation pert;
  pert.additive = n_op;
  pert.control = LinearOperator::dense(b);
  pert.additive_lipschitz = std::abs(p);
  pert.control_lipschitz = std::abs(q);
  pert.lambda = lambda;
  e.perturbation = pert;
  e.parameters = {{"modes", N},
                  {"lambda", lambda},
                  {"fraction", o.perturbation_fraction},
                  {"p", p},
                  {"q", q}};
  e.notes = "The velocity-feedback string with a drift term p|z| and a control perturbation "
            "q z_t: z_tt = z_xx + p|z| + v (q z_t + G(z_t)), p and q a fixed fraction of their "
            "admissible bounds.";

  e.expected.push_back({"robustness", "at lambda = 0.1: gamma = 0.88, p-bound ~ 0.0300, q-bound ~ 0.1199",
                        Evidence::kDerived, [lambda] {
                          const WaveClosedForms w = wave_closed_form_bounds(lambda);
                          const bool pass = std::abs(lambda - 0.1) > 1e-15 ||
                                            (std::abs(w.gamma - 0.88) <= 1e-12 &&
                                             std::abs(w.p_bound - 0.0300) <= 5e-5 &&
                                             std::abs(w.q_bound - 0.1199) <= 5e-5);
                          return outcome(pass, "gamma = " + fmt(w.gamma) + ", p = " + fmt(w.p_bound) +
                                                   ", q = " + fmt(w.q_bound));
                        }});
  const GalleryEntry snapshot = e;
  e.expected.push_back({"simulate-perturbed", "perturbed closed loop decays exponentially (r^2 >= 0.99)",
                        Evidence::kClaimed, [snapshot] {
                          const DecayFit f = simulate_perturbed_decay(snapshot, 0);
                          return outcome(f.rate > 0 && f.r_squared >= 0.99,
                                         "rate = " + fmt(f.rate) + ", r^2 = " + fmt(f.r_squared));
                        }});
  return e;
}

const std::vector<std::string>& id_list() {
  static const std::vector<std::string> list{
      "scalar-abs",      "jordan-indefinite",       "rotation-B",    "nonneg-nonsym",
      "identity-B",      "transport-case1",         "transport-case2-compact",
      "wave-undamped",   "wave-modal-case2",        "wave-modal-case1", "wave-perturbed"};
  return list;
}

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::vector<std::string> ids() { return id_list(); }

GalleryEntry load(const std::string& id, const GalleryOptions& options) {
  if (id == "scalar-abs") return scalar_abs();
  if (id == "jordan-indefinite") return jordan_indefinite();
  if (id == "rotation-B") return rotation_b();
  if (id == "nonneg-nonsym") return nonneg_nonsym();
  if (id == "identity-B") return identity_b();
  if (id == "transport-case1") return transport_case1(options);
  if (id == "transport-case2-compact") return transport_case2(options);
  if (id == "wave-undamped") return wave_undamped(options);
  if (id == "wave-modal-case2") return wave_case2(options);
  if (id == "wave-modal-case1") return wave_case1(options);
  if (id == "wave-perturbed") return wave_perturbed(options);
  std::ostringstream os;
  os << "unknown gallery id '" << id << "'; valid ids:";
  for (const auto& s : id_list()) os << " " << s;
  throw_error(ErrorCode::kUnknownId, os.str());
}

nlohmann::json options_to_json(const GalleryOptions& o) {
  return {{"modes", o.modes},
          {"transport_c", o.transport_c},
          {"transport_h", o.transport_h},
          {"transport_length", o.transport_length},
          {"transport_modes", o.transport_modes},
          {"transport_compact_h", o.transport_compact_h},
          {"omega", {o.omega_a, o.omega_b}},
          {"perturbation_lambda", o.perturbation_lambda},
          {"perturbation_fraction", o.perturbation_fraction}};
}

GalleryOptions options_from_json(const nlohmann::json& j) {
  GalleryOptions o;
  if (!j.is_object()) return o;
  o.modes = j.value("modes", o.modes);
  o.transport_c = j.value("transport_c", o.transport_c);
  o.transport_h = j.value("transport_h", o.transport_h);
  o.transport_length = j.value("transport_length", o.transport_length);
  o.transport_modes = j.value("transport_modes", o.transport_modes);
  o.transport_compact_h = j.value("transport_compact_h", o.transport_compact_h);
  if (j.contains("omega")) {
    o.omega_a = j["omega"].at(0).get<double>();
    o.omega_b = j["omega"].at(1).get<double>();
  }
  o.perturbation_lambda = j.value("perturbation_lambda", o.perturbation_lambda);
  o.perturbation_fraction = j.value("perturbation_fraction", o.perturbation_fraction);
  return o;
}

nlohmann::json export_model(const GalleryEntry& entry, const GalleryOptions& options) {
  const SystemModel& m = entry.model;
  const bool plain = m.B.is_linear() && !m.kernel && !m.exact_flow && !entry.perturbation &&
                     m.A.kind() == OperatorKind::kDenseMatrix;
  nlohmann::json j{{"format", "cstab-model"}, {"id", entry.id}, {"horizon_T", entry.horizon_T}};
  if (plain) {
    j["A"] = matrix_json(m.A.matrix());
    j["B"] = matrix_json(m.B.linear().matrix());
    if (!m.inner.is_identity()) j["P"] = matrix_json(m.inner.weight());
    j["semigroup_class"] = to_string(m.semigroup_class);
  } else {
    j["gallery"] = entry.id;
    j["options"] = options_to_json(options);
  }
  return j;
}

std::vector<ExpectationResult> verify(const GalleryEntry& entry) {
  std::vector<ExpectationResult> out;
  for (const ExpectedOutcome& x : entry.expected) {
    ExpectationResult r{entry.id, x.analysis, x.expectation, x.evidence, {}};
    try {
      r.outcome = x.check();
    } catch (const Error& err) {
      r.outcome = {false, std::string("error: ") + err.what()};
    }
    out.push_back(std::move(r));
  }
  return out;
}

nlohmann::json to_json(const ExpectationResult& r) {
  return {{"entry", r.entry},
          {"analysis", r.analysis},
          {"expectation", r.expectation},
          {"evidence", to_string(r.evidence)},
          {"pass", r.outcome.pass},
          {"detail", r.outcome.detail}};
}

Vector wave_mode_state(int modes, int j, bool velocity) {
  if (j < 1 || j > modes) throw_error(ErrorCode::kPrecondition, "mode index out of range");
  return Vector::Unit(2 * modes, 2 * (j - 1) + (velocity ? 1 : 0));
}

double transport_weight_infimum(double T, double c, double length) {
  // G_T is piecewise linear; its infimum over (0, Y) is attained at an end
  // point or a kink.
  const TransportWeight w{c};
  std::vector<double> xs{0.0, length};
  for (double b : TransportWeight::kinks()) {
    for (double x : {b, b - T}) {
      if (x > 0 && x < length) xs.push_back(x);
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (double x : xs) best = std::min(best, w.window(x, T));
  return best;
}

}  // namespace gallery
}  // namespace cstab
