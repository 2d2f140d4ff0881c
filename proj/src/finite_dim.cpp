#include "cstab/finite_dim.hpp"

#include <cmath>
#include <complex>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "cstab/certifier.hpp"
#include "cstab/observation.hpp"
#include "cstab/semigroup.hpp"

namespace cstab {

const char* to_string(LmiStatus s) {
  switch (s) {
    case LmiStatus::kFeasible: return "feasible";
    case LmiStatus::kInfeasible: return "infeasible";
    case LmiStatus::kUndecided: return "undecided";
  }
  return "unknown";
}

const char* to_string(SignClass s) {
  switch (s) {
    case SignClass::kNonneg: return "nonneg";
    case SignClass::kNonpos: return "nonpos";
    case SignClass::kIndefinite: return "indefinite";
  }
  return "unknown";
}

namespace {

void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    std::ostringstream os;
    os << what << " must be square and nonempty, got " << m.rows() << "x" << m.cols();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
}

void require_pair(const Matrix& A, const Matrix& B) {
  require_square(A, "A");
  require_square(B, "B");
  if (A.rows() != B.rows()) {
    std::ostringstream os;
    os << "A is " << A.rows() << "x" << A.rows() << " but B is " << B.rows() << "x" << B.rows();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
}

Matrix sym(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Frobenius-orthonormal coordinates on symmetric n×n matrices.
class Svec {
 public:
  explicit Svec(Index n) : n_(n) {}

  Index size() const { return n_ * (n_ + 1) / 2; }

  Vector to(const Matrix& m) const {
    Vector out(size());
    Index k = 0;
    for (Index j = 0; j < n_; ++j) {
      for (Index i = 0; i <= j; ++i, ++k) {
        out[k] = i == j ? m(i, i) : std::sqrt(2.0) * 0.5 * (m(i, j) + m(j, i));
      }
    }
    return out;
  }

  Matrix from(const Vector& v) const {
    Matrix out(n_, n_);
    Index k = 0;
    for (Index j = 0; j < n_; ++j) {
      for (Index i = 0; i <= j; ++i, ++k) {
        if (i == j) {
          out(i, i) = v[k];
        } else {
          out(i, j) = out(j, i) = v[k] / std::sqrt(2.0);
        }
      }
    }
    return out;
  }

  /// Matrix of the map P ↦ AᵀP + PA in these coordinates.
  Matrix lyapunov_map(const Matrix& A) const {
    Matrix L(size(), size());
    for (Index k = 0; k < size(); ++k) {
      const Matrix E = from(Vector::Unit(size(), k));
      L.col(k) = to(A.transpose() * E + E * A);
    }
    return L;
  }

 private:
  Index n_;
};

Matrix clip_eigenvalues(const Matrix& m, double lo, double hi) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym(m));
  const Vector d = es.eigenvalues().cwiseMax(lo).cwiseMin(hi);
  return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

double max_eigenvalue(const Matrix& s) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym(s), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .maxCoeff();
}

double min_eigenvalue(const Matrix& s) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(sym(s), Eigen::EigenvaluesOnly)
      .eigenvalues()
      .minCoeff();
}

constexpr double kLmiTolerance = 1e-10;

bool lmi_holds(const Matrix& A, const Matrix& P, double* residual) {
  const double r = max_eigenvalue(A.transpose() * P + P * A);
  if (residual) *residual = r;
  return r <= kLmiTolerance && min_eigenvalue(P) > 0;
}

using ComplexMatrix = Eigen::MatrixXcd;

Index numeric_rank(const ComplexMatrix& m, double threshold) {
  Eigen::JacobiSVD<ComplexMatrix> svd(m);
  Index r = 0;
  for (Index i = 0; i < svd.singularValues().size(); ++i) {
    if (svd.singularValues()[i] > threshold) ++r;
  }
  return r;
}

// Spectral reasons no P can exist: an eigenvalue in the open right half
// plane, or a defective eigenvalue on the imaginary axis.
std::optional<std::string> spectral_obstruction(const Matrix& A) {
  const Index n = A.rows();
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  Eigen::EigenSolver<Matrix> es(A, false);
  const Eigen::VectorXcd ev = es.eigenvalues();
  const double axis_tol = 1e-8 * scale;
  for (Index i = 0; i < n; ++i) {
    if (ev[i].real() > axis_tol) return "unstable-eigenvalue";
  }
  const double cluster_tol = 1e-6 * scale;
  std::vector<bool> used(n, false);
  for (Index i = 0; i < n; ++i) {
    if (used[i] || std::abs(ev[i].real()) > axis_tol) continue;
    std::complex<double> mean = 0.0;
    Index count = 0;
    for (Index j = i; j < n; ++j) {
      if (!used[j] && std::abs(ev[j] - ev[i]) <= cluster_tol) {
        used[j] = true;
        mean += ev[j];
        ++count;
      }
    }
    if (count < 2) continue;
    mean /= static_cast<double>(count);
    const ComplexMatrix M =
        A.cast<std::complex<double>>() - mean * ComplexMatrix::Identity(n, n);
    const Index r1 = numeric_rank(M, 1e-7 * scale);
    const Index r2 = numeric_rank(M * M, 1e-7 * scale * scale);
    if (r2 < r1) return "defective-imaginary-eigenvalue";
  }
  return std::nullopt;
}

bool is_hurwitz(const Matrix& A) {
  const double scale = std::max(1.0, A.cwiseAbs().maxCoeff());
  Eigen::EigenSolver<Matrix> es(A, false);
  return (es.eigenvalues().real().array() < -1e-8 * scale).all();
}

}  // namespace

LmiResult lyapunov_lmi_feasible(const Matrix& A, int iterations, double eps) {
  require_square(A, "A");
  if (iterations < 1 || !(eps > 0 && eps < 1)) {
    throw_error(ErrorCode::kPrecondition, "need iterations >= 1 and eps in (0, 1)");
  }
  LmiResult result;
  if (auto reason = spectral_obstruction(A)) {
    result.status = LmiStatus::kInfeasible;
    result.reason = *reason;
    return result;
  }

  const Index n = A.rows();
  const Svec sv(n);
  const Matrix L = sv.lyapunov_map(A);
  const Eigen::LDLT<Matrix> normal(Matrix::Identity(sv.size(), sv.size()) + L.transpose() * L);

  Matrix P = Matrix::Identity(n, n);
  Matrix Q = clip_eigenvalues(-(A.transpose() + A), 0.0, std::numeric_limits<double>::infinity());
  for (int it = 0; it <= iterations; ++it) {
    result.iterations = it;
    if (lmi_holds(A, P, &result.residual)) {
      result.status = LmiStatus::kFeasible;
      result.P = P;
      result.reason = "alternating-projection";
      return result;
    }
    if (it == iterations) break;
    // Graph projection: min ‖p − p₀‖² + ‖q − q₀‖² subject to q = −Lp.
    const Vector p = normal.solve(sv.to(P) - L.transpose() * sv.to(Q));
    const Vector q = -L * p;
    P = clip_eigenvalues(sv.from(p), eps, 1.0);
    Q = clip_eigenvalues(sv.from(q), 0.0, std::numeric_limits<double>::infinity());
  }

  // Marginal spectra leave only thin feasible sets (Q = 0 on the neutral
  // part); an SPD solution of the equality is a valid point when it exists.
  if (const auto eq = lyapunov_equality_solutions(A); eq.spd) {
    Matrix Ps = *eq.spd / max_eigenvalue(*eq.spd);
    if (lmi_holds(A, Ps, &result.residual)) {
      result.status = LmiStatus::kFeasible;
      result.P = Ps;
      result.reason = "lyapunov-equality";
      return result;
    }
  }
  if (is_hurwitz(A)) {
    // AᵀP + PA = −I has an SPD solution; solve it directly.
    const Vector p = L.fullPivLu().solve(-sv.to(Matrix::Identity(n, n)));
    Matrix Ps = sv.from(p);
    Ps /= max_eigenvalue(Ps);
    if (lmi_holds(A, Ps, &result.residual)) {
      result.status = LmiStatus::kFeasible;
      result.P = Ps;
      result.reason = "lyapunov-solve";
      return result;
    }
  }
  result.status = LmiStatus::kUndecided;
  result.reason = "no verified iterate";
  return result;
}

LyapunovEqualityResult lyapunov_equality_solutions(const Matrix& A, std::uint64_t seed,
                                                   int starts) {
  require_square(A, "A");
  const Index n = A.rows();
  const Svec sv(n);
  const Matrix L = sv.lyapunov_map(A);
  Eigen::JacobiSVD<Matrix> svd(L, Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double thr = 1e-10 * std::max(1.0, s.size() ? s[0] : 0.0);

  LyapunovEqualityResult result;
  std::vector<Vector> coords;
  for (Index k = 0; k < s.size(); ++k) {
    if (s[k] <= thr) coords.push_back(svd.matrixV().col(k));
  }
  for (const Vector& c : coords) result.basis.push_back(sv.from(c));
  const Index d = static_cast<Index>(result.basis.size());
  if (d == 0) return result;

  auto combine = [&](const Vector& c) {
    Matrix P = Matrix::Zero(n, n);
    for (Index i = 0; i < d; ++i) P += c[i] * result.basis[i];
    return P;
  };

  // λ_min(Σ cᵢPᵢ) is concave in c; ascend with its supergradient vᵀPᵢv.
  std::vector<Vector> inits;
  Vector toward_identity(d);
  for (Index i = 0; i < d; ++i) toward_identity[i] = result.basis[i].trace();
  if (toward_identity.norm() > 0) inits.push_back(toward_identity.normalized());
  Rng rng(seed);
  for (int k = 0; k < starts; ++k) inits.push_back(random_normal(d, rng).normalized());

  double best = -std::numeric_limits<double>::infinity();
  Vector best_c;
  for (Vector c : inits) {
    for (int it = 0; it < 300; ++it) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(combine(c));
      const double value = es.eigenvalues()[0];
      if (value > best) {
        best = value;
        best_c = c;
      }
      const Vector v = es.eigenvectors().col(0);
      Vector g(d);
      for (Index i = 0; i < d; ++i) g[i] = v.dot(result.basis[i] * v);
      const Vector tangent = g - g.dot(c) * c;
      if (tangent.norm() < 1e-14) break;
      c = (c + 0.5 / std::sqrt(it + 1.0) * tangent).normalized();
    }
  }
  result.best_min_eigenvalue = best;
  if (best > 1e-10) result.spd = combine(best_c);
  return result;
}

BracketChain bracket_chain(const Matrix& A, const Matrix& B, int depth) {
  require_pair(A, B);
  if (depth < 0) throw_error(ErrorCode::kPrecondition, "bracket depth must be >= 0");
  BracketChain chain;
  chain.depth = depth;
  chain.matrices.push_back(B);
  for (int k = 0; k < depth; ++k) {
    const Matrix& M = chain.matrices.back();
    chain.matrices.push_back(A * M - M * A);
  }
  return chain;
}

BracketRankResult bracket_rank_condition(const Matrix& A, const Matrix& B, const Vector& y,
                                         std::optional<int> k_max) {
  require_pair(A, B);
  const Index n = A.rows();
  if (y.size() != n) {
    std::ostringstream os;
    os << "y has size " << y.size() << ", expected " << n;
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  const int kmax = k_max.value_or(static_cast<int>(n * n));
  if (kmax < 0) throw_error(ErrorCode::kPrecondition, "k_max must be >= 0");

  BracketRankResult result;
  Matrix cols(n, kmax + 2);
  cols.col(0) = A * y;
  Matrix ad = B;
  for (int k = 0; k <= kmax; ++k) {
    if (k > 0) ad = A * ad - ad * A;
    cols.col(k + 1) = ad * y;
    Eigen::ColPivHouseholderQR<Matrix> qr(cols.leftCols(k + 2));
    qr.setThreshold(tolerances().algebraic);
    result.rank = cols.leftCols(k + 2).cwiseAbs().maxCoeff() > 0 ? qr.rank() : 0;
    if (result.rank == n) {
      result.holds = true;
      result.k_used = k;
      return result;
    }
  }
  return result;
}

namespace {

// Q(t) = sym(e^{tAᵀ} B e^{tA}) at the nodes of a rule resolving [0, T].
struct TemporalFunctional {
  std::vector<Matrix> Q;
  std::vector<double> w;

  double value(const Vector& y) const {
    double sum = 0.0;
    for (std::size_t i = 0; i < Q.size(); ++i) {
      const double q = y.dot(Q[i] * y);
      sum += w[i] * q * q;
    }
    return sum;
  }

  Vector gradient(const Vector& y) const {
    Vector g = Vector::Zero(y.size());
    for (std::size_t i = 0; i < Q.size(); ++i) {
      const Vector Qy = Q[i] * y;
      g += 4.0 * w[i] * y.dot(Qy) * Qy;
    }
    return g;
  }

  // Tangent Gauss–Newton steps on the residuals √wᵢ·yᵀQᵢy.
  Vector polish(Vector y, int steps) const {
    const Index n = y.size();
    double f = value(y);
    for (int s = 0; s < steps && f > 0; ++s) {
      Vector r(Q.size());
      Matrix J(Q.size(), n);
      for (std::size_t i = 0; i < Q.size(); ++i) {
        const Vector Qy = Q[i] * y;
        const double sw = std::sqrt(w[i]);
        r[i] = sw * y.dot(Qy);
        J.row(i) = 2.0 * sw * Qy.transpose();
      }
      const Matrix proj = Matrix::Identity(n, n) - y * y.transpose();
      const Vector d = -(J * proj).completeOrthogonalDecomposition().solve(r);
      const Vector candidate = (y + proj * d).normalized();
      const double fc = value(candidate);
      if (!(fc < f)) break;
      y = candidate;
      f = fc;
    }
    return y;
  }
};

TemporalFunctional temporal_functional(const Matrix& A, const Matrix& B, double T) {
  const double rate = A.norm() + 1.0;
  const int panels = std::clamp(static_cast<int>(std::ceil(2.0 * T * rate)), 4, 512);
  const TimeQuadrature rule = composite_rule(T, panels);
  TemporalFunctional f;
  const ExponentialSemigroup S(A);
  for (std::size_t i = 0; i < rule.t.size(); ++i) {
    const Matrix E = S.matrix(rule.t[i]);
    f.Q.push_back(sym(E.transpose() * B * E));
    f.w.push_back(rule.w[i]);
  }
  return f;
}

Vector descend_on_sphere(const TemporalFunctional& f, Vector y, int iterations) {
  double fy = f.value(y);
  double step = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const Vector g = f.gradient(y);
    const Vector tg = g - g.dot(y) * y;
    const double gn = tg.squaredNorm();
    if (gn < 1e-30) break;
    bool moved = false;
    for (int b = 0; b < 40; ++b) {
      const Vector cand = (y - step * tg).normalized();
      const double fc = f.value(cand);
      if (fc <= fy - 1e-4 * step * gn) {
        y = cand;
        fy = fc;
        moved = true;
        step *= 2.0;
        break;
      }
      step *= 0.5;
    }
    if (!moved) break;
  }
  return y;
}

}  // namespace

TemporalResult temporal_condition_sampled(const Matrix& A, const Matrix& B, double T,
                                          int samples, std::uint64_t seed) {
  require_pair(A, B);
  if (!(T > 0) || samples < 1) {
    throw_error(ErrorCode::kPrecondition, "need T > 0 and at least one sample");
  }
  const Index n = A.rows();
  const TemporalFunctional f = temporal_functional(A, B, T);

  TemporalResult result;
  result.samples = samples;
  Rng rng(seed);
  std::vector<std::pair<double, Vector>> sampled;
  for (int s = 0; s < samples; ++s) {
    const Vector y = random_normal(n, rng).normalized();
    sampled.emplace_back(f.value(y), y);
  }
  std::sort(sampled.begin(), sampled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  result.min_sampled = sampled.front().first;

  // Minimize from the lowest samples and the coordinate axes.
  std::vector<Vector> inits;
  for (std::size_t k = 0; k < std::min<std::size_t>(8, sampled.size()); ++k) {
    inits.push_back(sampled[k].second);
  }
  for (Index i = 0; i < n; ++i) inits.push_back(Vector::Unit(n, i));
  double best = std::numeric_limits<double>::infinity();
  Vector best_y;
  for (const Vector& y0 : inits) {
    const Vector y = f.polish(descend_on_sphere(f, y0, 500), 30);
    const double v = f.value(y);
    if (v < best) {
      best = v;
      best_y = y;
    }
  }
  result.min_found = best;
  if (best < 1e-12) result.counterexample = best_y;
  result.holds = result.min_sampled > 1e-14 && !result.counterexample;
  return result;
}

SignClass pb_sign_check(const Matrix& P, const Matrix& B, int samples, std::uint64_t seed) {
  require_pair(P, B);
  const Matrix S = sym(P * B);
  Eigen::SelfAdjointEigenSolver<Matrix> es(S, Eigen::EigenvaluesOnly);
  const double thr = tolerances().algebraic * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  const double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
  SignClass verdict = SignClass::kIndefinite;
  if (lo >= -thr) {
    verdict = SignClass::kNonneg;
  } else if (hi <= thr) {
    verdict = SignClass::kNonpos;
  }
  Rng rng(seed);
  for (int s = 0; s < samples; ++s) {
    const Vector z = random_normal(P.rows(), rng).normalized();
    const double v = z.dot(S * z);
    if ((verdict == SignClass::kNonneg && v < -10 * thr) ||
        (verdict == SignClass::kNonpos && v > 10 * thr)) {
      std::ostringstream os;
      os << "sampled form " << v << " contradicts the spectral sign " << to_string(verdict);
      throw_error(ErrorCode::kInternal, os.str());
    }
  }
  return verdict;
}

EquivalenceReport bal_coer_equivalence_test(const Matrix& A, const Matrix& B,
                                            const std::vector<double>& T_grid,
                                            std::uint64_t seed, int starts) {
  require_pair(A, B);
  if (T_grid.empty()) throw_error(ErrorCode::kPrecondition, "empty horizon grid");
  for (double T : T_grid) {
    if (!(T > 0)) throw_error(ErrorCode::kPrecondition, "horizons must be positive");
  }
  EquivalenceReport report;
  report.T_grid = T_grid;
  const double T_max = *std::max_element(T_grid.begin(), T_grid.end());
  report.temporal = temporal_condition_sampled(A, B, T_max, 64, seed);

  const SystemModel model = make_dense_model("finite-dim", A, B);
  const KernelPtr kernel = observation_kernel(model);
  MultistartOptions opts;
  opts.starts = starts;
  opts.seed = seed;
  if (report.temporal.counterexample) opts.extra_starts.push_back(*report.temporal.counterexample);

  bool witness_vanishes = true;
  for (double T : T_grid) {
    const Certificate c = minimize_on_sphere(*kernel, T, Variant::kAbsolute, opts, model.id);
    report.deltas.push_back(c.delta);
    if (c.delta > 1e-8) report.any_delta_positive = true;
    if (report.temporal.counterexample) {
      const TimeQuadrature rule = resolved_rule(*kernel, T);
      const double v =
          functional_value(*kernel, rule, Variant::kAbsolute, *report.temporal.counterexample);
      report.witness_values.push_back(v);
      if (v >= 1e-10) witness_vanishes = false;
    }
  }
  report.agree = report.temporal.holds == report.any_delta_positive;
  report.consistent = report.temporal.holds ? report.any_delta_positive
                                            : (report.temporal.counterexample && witness_vanishes);
  return report;
}

namespace {

nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

nlohmann::json vector_json(const Vector& v) {
  return nlohmann::json(std::vector<double>(v.data(), v.data() + v.size()));
}

}  // namespace

nlohmann::json to_json(const LmiResult& r) {
  nlohmann::json j{{"status", to_string(r.status)},
                   {"iterations", r.iterations},
                   {"residual", r.residual},
                   {"reason", r.reason}};
  if (r.P) j["P"] = matrix_json(*r.P);
  return j;
}

nlohmann::json to_json(const LyapunovEqualityResult& r) {
  nlohmann::json j{{"nullspace_dimension", r.basis.size()},
                   {"best_min_eigenvalue", r.best_min_eigenvalue},
                   {"spd_solution", r.spd.has_value()}};
  if (r.spd) j["P"] = matrix_json(*r.spd);
  return j;
}

nlohmann::json to_json(const TemporalResult& r) {
  nlohmann::json j{{"holds", r.holds},
                   {"min_sampled", r.min_sampled},
                   {"min_found", r.min_found},
                   {"samples", r.samples}};
  if (r.counterexample) j["counterexample"] = vector_json(*r.counterexample);
  return j;
}

nlohmann::json to_json(const EquivalenceReport& r) {
  return {{"temporal", to_json(r.temporal)},
          {"T_grid", r.T_grid},
          {"deltas", r.deltas},
          {"witness_values", r.witness_values},
          {"any_delta_positive", r.any_delta_positive},
          {"agree", r.agree},
          {"consistent", r.consistent}};
}

nlohmann::json analyze_finite_dim(const SystemModel& model, const FiniteDimOptions& options) {
  if (!model.B.is_linear()) {
    throw_error(ErrorCode::kUnsupportedVariant,
                "finite-dimensional analysis needs a linear control operator");
  }
  // Work in coordinates where the model inner product is Euclidean.
  const Matrix& C = model.inner.factor();
  const Matrix& Ci = model.inner.factor_inverse();
  const Matrix A = C * model.A.matrix() * Ci;
  const Matrix B = C * model.B.linear().matrix() * Ci;
  const Index n = A.rows();

  nlohmann::json out;
  out["model"] = model.id;
  out["dimension"] = n;
  const LmiResult lmi = lyapunov_lmi_feasible(A);
  out["lmi"] = to_json(lmi);
  out["lyapunov_equality"] = to_json(lyapunov_equality_solutions(A, options.seed));

  Rng rng(options.seed);
  int bracket_failures = 0, worst_k = 0;
  nlohmann::json failing = nullptr;
  for (int s = 0; s < options.samples; ++s) {
    const Vector y = random_normal(n, rng).normalized();
    const BracketRankResult r = bracket_rank_condition(A, B, y);
    if (!r.holds) {
      if (bracket_failures++ == 0) failing = vector_json(y);
    } else {
      worst_k = std::max(worst_k, r.k_used);
    }
  }
  out["bracket_rank"] = {{"samples", options.samples},
                         {"failures", bracket_failures},
                         {"max_k_used", worst_k},
                         {"first_failure", failing}};
  const Matrix P = lmi.P.value_or(Matrix::Identity(n, n));
  out["pb_sign"] = {{"P", lmi.P ? "lmi" : "identity"},
                    {"sign", to_string(pb_sign_check(P, B, 100, options.seed))}};
  out["equivalence"] = to_json(bal_coer_equivalence_test(A, B, options.T_grid, options.seed));
  return out;
}

}  // namespace cstab
