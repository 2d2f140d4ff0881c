#include "cstab/operator_core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cstab/semigroup.hpp"

namespace cstab {

const char* to_string(BasisTag tag) {
  switch (tag) {
    case BasisTag::kEuclidean: return "euclidean";
    case BasisTag::kModal: return "modal";
    case BasisTag::kGrid: return "grid";
  }
  return "unknown";
}

StateVector::StateVector(Vector coords, BasisTag basis)
    : coords_(std::move(coords)), basis_(basis) {
  if (coords_.size() == 0) throw_error(ErrorCode::kPrecondition, "empty state vector");
  if (!coords_.allFinite()) throw_error(ErrorCode::kPrecondition, "state vector has non-finite entries");
}

// ---------------------------------------------------------------------------

InnerProduct InnerProduct::identity(Index n) {
  InnerProduct ip;
  ip.n_ = n;
  ip.identity_ = true;
  ip.weight_ = Matrix::Identity(n, n);
  ip.factor_ = Matrix::Identity(n, n);
  ip.factor_inv_ = Matrix::Identity(n, n);
  return ip;
}

InnerProduct::InnerProduct(Matrix weight) : n_(weight.rows()), identity_(false) {
  if (weight.rows() != weight.cols()) {
    std::ostringstream os;
    os << "inner-product weight is " << weight.rows() << "x" << weight.cols();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  const double scale = std::max(weight.cwiseAbs().maxCoeff(), 1e-300);
  if ((weight - weight.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw_error(ErrorCode::kPrecondition, "inner-product weight is not symmetric");
  }
  weight_ = 0.5 * (weight + weight.transpose());
  Eigen::LLT<Matrix> llt(weight_);
  if (llt.info() != Eigen::Success) {
    throw_error(ErrorCode::kPrecondition, "inner-product weight is not positive definite");
  }
  factor_ = llt.matrixU();
  factor_inv_ = factor_.triangularView<Eigen::Upper>().solve(Matrix::Identity(n_, n_));
  if (weight_.isIdentity(0.0)) identity_ = true;
}

double InnerProduct::dot(const Vector& x, const Vector& y) const {
  if (identity_) return x.dot(y);
  return (weight_ * x).dot(y);
}

double InnerProduct::norm_sq(const Vector& x) const {
  if (identity_) return x.squaredNorm();
  return (factor_.triangularView<Eigen::Upper>() * x).squaredNorm();
}

double InnerProduct::norm(const Vector& x) const { return std::sqrt(norm_sq(x)); }

Vector InnerProduct::apply_weight(const Vector& x) const {
  if (identity_) return x;
  return weight_ * x;
}

Vector InnerProduct::solve_weight(const Vector& x) const {
  if (identity_) return x;
  Vector tmp = factor_.transpose().triangularView<Eigen::Lower>().solve(x);
  return factor_.triangularView<Eigen::Upper>().solve(tmp);
}

double inner_product(const StateVector& x, const StateVector& y,
                     const InnerProduct& ip) {
  if (x.size() != y.size() || x.size() != ip.dimension()) {
    std::ostringstream os;
    os << "inner product of vectors with dimensions " << x.size() << " and "
       << y.size() << " under a weight of dimension " << ip.dimension();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  if (x.basis() != y.basis()) {
    std::ostringstream os;
    os << "inner product across bases " << to_string(x.basis()) << " and "
       << to_string(y.basis());
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  return ip.dot(x.coords(), y.coords());
}

// ---------------------------------------------------------------------------

const char* to_string(OperatorKind kind) {
  switch (kind) {
    case OperatorKind::kDenseMatrix: return "dense-matrix";
    case OperatorKind::kModalBlock: return "modal-diagonal-block";
    case OperatorKind::kExactShift: return "exact-shift";
    case OperatorKind::kCompositeSum: return "composite-sum";
  }
  return "unknown";
}

struct LinearOperator::Impl {
  OperatorKind kind = OperatorKind::kDenseMatrix;
  Matrix dense;
  std::vector<Eigen::Matrix2d> blocks;
  std::vector<LinearOperator> terms;
  double lattice = 0.0;
  std::optional<double> norm;
};

LinearOperator::LinearOperator(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}

LinearOperator LinearOperator::dense(Matrix m) {
  if (!m.allFinite()) throw_error(ErrorCode::kPrecondition, "matrix has non-finite entries");
  auto impl = std::make_shared<Impl>();
  impl->kind = OperatorKind::kDenseMatrix;
  impl->dense = std::move(m);
  return LinearOperator(std::move(impl));
}

LinearOperator LinearOperator::modal_block(std::vector<Eigen::Matrix2d> blocks) {
  auto impl = std::make_shared<Impl>();
  impl->kind = OperatorKind::kModalBlock;
  const Index n = 2 * static_cast<Index>(blocks.size());
  impl->dense = Matrix::Zero(n, n);
  for (std::size_t j = 0; j < blocks.size(); ++j) {
    impl->dense.block<2, 2>(2 * j, 2 * j) = blocks[j];
  }
  impl->blocks = std::move(blocks);
  return LinearOperator(std::move(impl));
}

LinearOperator LinearOperator::exact_shift(Matrix galerkin_generator, double lattice) {
  if (lattice <= 0) throw_error(ErrorCode::kPrecondition, "shift lattice must be positive");
  auto impl = std::make_shared<Impl>();
  impl->kind = OperatorKind::kExactShift;
  impl->dense = std::move(galerkin_generator);
  impl->lattice = lattice;
  return LinearOperator(std::move(impl));
}

LinearOperator LinearOperator::sum(std::vector<LinearOperator> terms) {
  if (terms.empty()) throw_error(ErrorCode::kPrecondition, "empty operator sum");
  auto impl = std::make_shared<Impl>();
  impl->kind = OperatorKind::kCompositeSum;
  impl->dense = Matrix::Zero(terms.front().rows(), terms.front().cols());
  for (const auto& term : terms) {
    if (term.rows() != impl->dense.rows() || term.cols() != impl->dense.cols()) {
      std::ostringstream os;
      os << "operator sum of " << impl->dense.rows() << "x" << impl->dense.cols()
         << " and " << term.rows() << "x" << term.cols();
      throw_error(ErrorCode::kDimensionMismatch, os.str());
    }
    impl->dense += term.matrix();
  }
  impl->terms = std::move(terms);
  return LinearOperator(std::move(impl));
}

OperatorKind LinearOperator::kind() const { return impl_->kind; }
Index LinearOperator::rows() const { return impl_->dense.rows(); }
Index LinearOperator::cols() const { return impl_->dense.cols(); }
const Matrix& LinearOperator::matrix() const { return impl_->dense; }
double LinearOperator::lattice() const { return impl_->lattice; }
const std::vector<LinearOperator>& LinearOperator::terms() const { return impl_->terms; }
const std::vector<Eigen::Matrix2d>& LinearOperator::blocks() const { return impl_->blocks; }
std::optional<double> LinearOperator::operator_norm() const { return impl_->norm; }

Vector LinearOperator::apply(const Vector& x) const {
  if (x.size() != cols()) {
    std::ostringstream os;
    os << "operator with " << cols() << " columns applied to vector of size " << x.size();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  switch (impl_->kind) {
    case OperatorKind::kModalBlock: {
      Vector out(x.size());
      for (std::size_t j = 0; j < impl_->blocks.size(); ++j) {
        out.segment<2>(2 * j) = impl_->blocks[j] * x.segment<2>(2 * j);
      }
      return out;
    }
    case OperatorKind::kCompositeSum: {
      Vector out = Vector::Zero(rows());
      for (const auto& term : impl_->terms) out += term.apply(x);
      return out;
    }
    default:
      return impl_->dense * x;
  }
}

LinearOperator LinearOperator::with_operator_norm(double norm) const {
  if (!(norm >= 0)) throw_error(ErrorCode::kPrecondition, "operator norm must be nonnegative");
  auto impl = std::make_shared<Impl>(*impl_);
  impl->norm = norm;
  return LinearOperator(std::move(impl));
}

LinearOperator LinearOperator::adjoint(const InnerProduct& ip) const {
  if (ip.dimension() != rows() || rows() != cols()) {
    throw_error(ErrorCode::kDimensionMismatch, "adjoint requires a square operator matching the weight");
  }
  const Matrix& m = impl_->dense;
  if (ip.is_identity()) return dense(m.transpose());
  Matrix pm = m.transpose() * ip.weight();
  Matrix adj(rows(), cols());
  for (Index j = 0; j < cols(); ++j) adj.col(j) = ip.solve_weight(pm.col(j));
  return dense(adj);
}

double operator_norm(const Matrix& m, const InnerProduct& ip) {
  if (m.rows() != ip.dimension() || m.cols() != ip.dimension()) {
    throw_error(ErrorCode::kDimensionMismatch, "operator norm dimension mismatch");
  }
  Matrix conj = ip.is_identity() ? m : Matrix(ip.factor() * m * ip.factor_inverse());
  Eigen::JacobiSVD<Matrix> svd(conj);
  return svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
}

// ---------------------------------------------------------------------------

Vector NonlinearOperator::operator()(const Vector& x) const {
  if (x.size() != dimension) {
    std::ostringstream os;
    os << "operator of dimension " << dimension << " applied to vector of size " << x.size();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  Vector y = map(x);
  if (y.size() != dimension || !y.allFinite()) {
    std::ostringstream os;
    os << "map evaluation failed at point [";
    for (Index i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
    os << "]";
    throw_error(ErrorCode::kEvaluation, os.str());
  }
  return y;
}

std::optional<double> NonlinearOperator::lipschitz(double radius) const {
  if (lipschitz_on_ball) return lipschitz_on_ball(radius);
  return lipschitz_global;
}

NonlinearOperator NonlinearOperator::from_linear(const LinearOperator& op,
                                                 const InnerProduct& ip) {
  NonlinearOperator out;
  out.dimension = op.cols();
  out.map = [op](const Vector& x) { return op.apply(x); };
  out.lipschitz_global = op.operator_norm() ? *op.operator_norm() : operator_norm(op.matrix(), ip);
  out.vanishes_at_zero = true;
  Matrix sym = ip.weight() * op.matrix();
  sym = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double scale = std::max(1.0, sym.cwiseAbs().maxCoeff());
  out.positive = es.eigenvalues().minCoeff() >= -1e-12 * scale;
  return out;
}

ControlOperator::ControlOperator(LinearOperator op, const InnerProduct& ip)
    : linear_(op), nonlinear_(NonlinearOperator::from_linear(op, ip)) {}

ControlOperator::ControlOperator(NonlinearOperator op) : nonlinear_(std::move(op)) {}

bool ControlOperator::is_linear() const { return linear_.has_value(); }

const LinearOperator& ControlOperator::linear() const {
  if (!linear_) throw_error(ErrorCode::kUnsupportedVariant, "control operator is nonlinear");
  return *linear_;
}

Vector ControlOperator::apply(const Vector& z) const {
  if (linear_) return linear_->apply(z);
  return nonlinear_(z);
}

std::optional<double> ControlOperator::lipschitz(double radius) const {
  return nonlinear_.lipschitz(radius);
}

// ---------------------------------------------------------------------------

const char* to_string(SemigroupClass c) {
  switch (c) {
    case SemigroupClass::kContraction: return "contraction";
    case SemigroupClass::kIsometry: return "isometry";
    case SemigroupClass::kUnknown: return "unknown";
  }
  return "unknown";
}

SemigroupClass semigroup_class_from_string(const std::string& s) {
  if (s == "contraction") return SemigroupClass::kContraction;
  if (s == "isometry") return SemigroupClass::kIsometry;
  if (s == "unknown") return SemigroupClass::kUnknown;
  throw_error(ErrorCode::kParse, "unknown semigroup_class '" + s + "'");
}

std::string ModelDimension::label() const {
  if (modal_modes) return "modal-truncated(" + std::to_string(*modal_modes) + ")";
  return std::to_string(coords);
}

namespace {

SystemModel dense_skeleton(std::string id, const Matrix& A,
                           const std::optional<Matrix>& P, SemigroupClass cls) {
  if (A.rows() != A.cols()) {
    std::ostringstream os;
    os << "generator A is " << A.rows() << "x" << A.cols();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  SystemModel model;
  model.id = std::move(id);
  model.A = LinearOperator::dense(A);
  model.inner = P ? InnerProduct(*P) : InnerProduct::identity(A.rows());
  if (model.inner.dimension() != A.rows()) {
    throw_error(ErrorCode::kDimensionMismatch, "weight P does not match A");
  }
  model.semigroup_class = cls;
  model.dimension.coords = A.rows();
  model.basis = BasisTag::kEuclidean;
  model.semigroup = std::make_shared<ExponentialSemigroup>(A);
  return model;
}

}  // namespace

SystemModel make_dense_model(std::string id, const Matrix& A, const Matrix& B,
                             std::optional<Matrix> P, SemigroupClass cls) {
  SystemModel model = dense_skeleton(std::move(id), A, P, cls);
  if (B.rows() != A.rows() || B.cols() != A.cols()) {
    std::ostringstream os;
    os << "B is " << B.rows() << "x" << B.cols() << " but A is " << A.rows() << "x" << A.cols();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  model.B = ControlOperator(LinearOperator::dense(B), model.inner);
  return model;
}

SystemModel make_dense_model(std::string id, const Matrix& A, NonlinearOperator B,
                             std::optional<Matrix> P, SemigroupClass cls) {
  SystemModel model = dense_skeleton(std::move(id), A, P, cls);
  if (B.dimension != A.rows()) {
    throw_error(ErrorCode::kDimensionMismatch, "nonlinear B dimension does not match A");
  }
  model.B = ControlOperator(std::move(B));
  return model;
}

double sampled_dissipation(const SystemModel& model, int samples, Rng& rng) {
  double worst = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < samples; ++s) {
    Vector z = random_normal(model.size(), rng);
    const double nz = model.inner.norm_sq(z);
    if (nz == 0) continue;
    worst = std::max(worst, model.inner.dot(model.A.apply(z), z) / nz);
  }
  return worst;
}

bool semigroup_class_consistent(const SystemModel& model, int samples, Rng& rng) {
  const double tol = tolerances().algebraic;
  switch (model.semigroup_class) {
    case SemigroupClass::kContraction:
      return sampled_dissipation(model, samples, rng) <= tol;
    case SemigroupClass::kIsometry: {
      for (int s = 0; s < samples; ++s) {
        Vector z = random_normal(model.size(), rng);
        const double nz = model.inner.norm_sq(z);
        const double v = model.inner.dot(model.A.apply(z), z);
        if (std::abs(v) > tol * nz) return false;
      }
      return true;
    }
    case SemigroupClass::kUnknown:
      return true;
  }
  return true;
}

double estimate_lipschitz(const NonlinearOperator& op, double radius, int samples,
                          Rng& rng) {
  return estimate_lipschitz(op, radius, samples, rng, InnerProduct::identity(op.dimension));
}

double estimate_lipschitz(const NonlinearOperator& op, double radius, int samples,
                          Rng& rng, const InnerProduct& ip) {
  if (!(radius > 0)) throw_error(ErrorCode::kPrecondition, "radius must be positive");
  if (samples < 2) throw_error(ErrorCode::kPrecondition, "need at least two samples");
  const Index n = op.dimension;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto sample_ball = [&]() {
    Vector d = random_normal(n, rng);
    const double nd = ip.norm(d);
    if (nd == 0) return Vector(Vector::Zero(n));
    return Vector(d * (radius * std::pow(unif(rng), 1.0 / static_cast<double>(n)) / nd));
  };
  auto ratio = [&](const Vector& x, const Vector& y) {
    const double dx = ip.norm(x - y);
    if (dx <= 1e-14 * radius) return 0.0;
    return ip.norm(op(x) - op(y)) / dx;
  };

  double best = 0.0;
  Vector best_x = Vector::Zero(n), best_y = Vector::Zero(n);
  const int pairs = std::max(1, samples / 2);
  for (int s = 0; s < pairs; ++s) {
    Vector x = sample_ball();
    // Alternate wide pairs with close pairs so local slopes are probed too.
    Vector y = (s % 2 == 0) ? sample_ball() : Vector(x + 1e-3 * radius * random_normal(n, rng) / std::sqrt(double(n)));
    if (ip.norm(y) > radius) y *= radius / ip.norm(y);
    const double r = ratio(x, y);
    if (r > best) {
      best = r;
      best_x = x;
      best_y = y;
    }
  }
  // Local refinement of the best pair; every accepted value is a genuine
  // difference quotient, so the result stays a lower bound.
  double step = 0.1 * radius;
  for (int it = 0; it < samples - pairs && step > 1e-9 * radius; ++it) {
    Vector x = best_x + step * random_normal(n, rng) / std::sqrt(double(n));
    Vector y = best_y + step * random_normal(n, rng) / std::sqrt(double(n));
    if (ip.norm(x) > radius) x *= radius / ip.norm(x);
    if (ip.norm(y) > radius) y *= radius / ip.norm(y);
    const double r = ratio(x, y);
    if (r > best) {
      best = r;
      best_x = x;
      best_y = y;
    } else if (it % 20 == 19) {
      step *= 0.7;
    }
  }
  if (op.lipschitz_global && best > *op.lipschitz_global + 1e-9) {
    std::ostringstream os;
    os << "sampled Lipschitz quotient " << best << " exceeds declared constant "
       << *op.lipschitz_global;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  return best;
}

}  // namespace cstab
