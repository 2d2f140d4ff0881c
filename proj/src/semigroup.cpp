#include "cstab/semigroup.hpp"

#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "cstab/integrator.hpp"

namespace cstab {

Matrix matrix_exponential(const Matrix& m, double t) {
  if (m.rows() != m.cols()) {
    std::ostringstream os;
    os << "matrix exponential of a " << m.rows() << "x" << m.cols() << " matrix";
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
  if (!std::isfinite(t)) throw_error(ErrorCode::kPrecondition, "non-finite time");
  if (t == 0.0 || m.size() == 0) return Matrix::Identity(m.rows(), m.cols());
  const double scaled = std::abs(t) * m.cwiseAbs().colwise().sum().maxCoeff();
  if (scaled > 700.0) {
    std::ostringstream os;
    os << "t*|M|_1 = " << scaled << " overflows the exponential; rescale time or the generator";
    throw_error(ErrorCode::kOverflow, os.str());
  }
  Matrix out = (t * m).exp();
  if (!out.allFinite()) {
    throw_error(ErrorCode::kOverflow, "matrix exponential is not finite; rescale time or the generator");
  }
  return out;
}

const char* to_string(SemigroupMode mode) {
  switch (mode) {
    case SemigroupMode::kMatrixExponential: return "matrix-exponential";
    case SemigroupMode::kModalRotation: return "modal-rotation";
    case SemigroupMode::kShiftHalfLine: return "shift-half-line";
    case SemigroupMode::kNumericIntegration: return "numeric-integration";
  }
  return "unknown";
}

Matrix SemigroupEvaluator::matrix(double t) const {
  const Index n = dimension();
  Matrix out(n, n);
  for (Index j = 0; j < n; ++j) out.col(j) = apply(t, Vector::Unit(n, j));
  return out;
}

namespace {

void check_size(Index expected, const Vector& y) {
  if (y.size() != expected) {
    std::ostringstream os;
    os << "semigroup of dimension " << expected << " applied to vector of size " << y.size();
    throw_error(ErrorCode::kDimensionMismatch, os.str());
  }
}

constexpr std::size_t kMaxCachedExponentials = 8192;

}  // namespace

// ---------------------------------------------------------------------------

ExponentialSemigroup::ExponentialSemigroup(Matrix generator)
    : generator_(std::move(generator)) {
  if (generator_.rows() != generator_.cols()) {
    throw_error(ErrorCode::kDimensionMismatch, "generator must be square");
  }
}

Matrix ExponentialSemigroup::matrix(double t) const {
  if (t == 0.0) return Matrix::Identity(generator_.rows(), generator_.cols());
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(t);
    if (it != cache_.end()) return it->second;
  }
  Matrix e = matrix_exponential(generator_, t);
  std::lock_guard<std::mutex> lock(mutex_);
  if (cache_.size() >= kMaxCachedExponentials) cache_.clear();
  cache_.emplace(t, e);
  return e;
}

Vector ExponentialSemigroup::apply(double t, const Vector& y) const {
  check_size(dimension(), y);
  if (t == 0.0) return y;
  return matrix(t) * y;
}

Vector ExponentialSemigroup::apply_transpose(double t, const Vector& y) const {
  check_size(dimension(), y);
  if (t == 0.0) return y;
  return matrix(t).transpose() * y;
}

// ---------------------------------------------------------------------------

ModalRotationSemigroup::ModalRotationSemigroup(std::vector<double> frequencies)
    : freq_(std::move(frequencies)) {
  if (freq_.empty()) throw_error(ErrorCode::kPrecondition, "need at least one mode");
}

Vector ModalRotationSemigroup::apply(double t, const Vector& y) const {
  check_size(dimension(), y);
  if (t == 0.0) return y;
  Vector out(y.size());
  for (std::size_t j = 0; j < freq_.size(); ++j) {
    const double c = std::cos(freq_[j] * t), s = std::sin(freq_[j] * t);
    const double a = y[2 * j], b = y[2 * j + 1];
    out[2 * j] = c * a + s * b;
    out[2 * j + 1] = -s * a + c * b;
  }
  return out;
}

Vector ModalRotationSemigroup::apply_transpose(double t, const Vector& y) const {
  return apply(-t, y);
}

// ---------------------------------------------------------------------------

ShiftSemigroup::ShiftSemigroup(Index n, double h) : n_(n), h_(h) {
  if (n < 1 || !(h > 0)) throw_error(ErrorCode::kPrecondition, "invalid shift grid");
}

Index ShiftSemigroup::steps(double t) const {
  if (t < 0) throw_error(ErrorCode::kPrecondition, "shift semigroup needs t >= 0");
  const double k = t / h_;
  const double r = std::round(k);
  if (std::abs(k - r) > 1e-9 * std::max(1.0, k)) {
    std::ostringstream os;
    os << "t=" << t << " is not on the grid lattice h=" << h_;
    throw_error(ErrorCode::kPrecondition, os.str());
  }
  return static_cast<Index>(r);
}

Vector ShiftSemigroup::apply(double t, const Vector& y) const {
  check_size(n_, y);
  const Index k = steps(t);
  Vector out = Vector::Zero(n_);
  if (k < n_) out.tail(n_ - k) = y.head(n_ - k);
  return out;
}

Vector ShiftSemigroup::apply_transpose(double t, const Vector& y) const {
  check_size(n_, y);
  const Index k = steps(t);
  Vector out = Vector::Zero(n_);
  if (k < n_) out.head(n_ - k) = y.tail(n_ - k);
  return out;
}

// ---------------------------------------------------------------------------

NumericSemigroup::NumericSemigroup(LinearOperator generator, double rtol)
    : generator_(generator),
      transpose_(LinearOperator::dense(generator.matrix().transpose())),
      rtol_(rtol) {}

namespace {

Vector integrate_linear(const LinearOperator& op, double t, const Vector& y, double rtol) {
  if (t == 0.0) return y;
  const double sign = t < 0 ? -1.0 : 1.0;
  OdeOptions opt;
  opt.rtol = rtol;
  opt.atol = rtol * 1e-3;
  opt.blowup_factor = std::numeric_limits<double>::infinity();
  Dopri5 solver([&](double, const Vector& z, Vector& dz) { dz = sign * op.apply(z); }, opt);
  return solver.integrate(0.0, y, std::abs(t)).z;
}

}  // namespace

Vector NumericSemigroup::apply(double t, const Vector& y) const {
  check_size(dimension(), y);
  return integrate_linear(generator_, t, y, rtol_);
}

Vector NumericSemigroup::apply_transpose(double t, const Vector& y) const {
  check_size(dimension(), y);
  return integrate_linear(transpose_, t, y, rtol_);
}

// ---------------------------------------------------------------------------

double GridFunction::operator()(double x) const {
  const Index m = values.size();
  if (m == 0 || x < 0 || x > x_max) return 0.0;
  const double s = (x - origin) / h;
  if (s < 0 || s > static_cast<double>(m - 1)) return 0.0;
  const Index i = std::min<Index>(static_cast<Index>(std::floor(s)), m - 2 < 0 ? 0 : m - 2);
  if (m == 1) return values[0];
  const double w = s - static_cast<double>(i);
  return (1 - w) * values[i] + w * values[i + 1];
}

double GridFunction::support_end() const {
  return origin + h * static_cast<double>(std::max<Index>(values.size() - 1, 0));
}

double GridFunction::l2_norm() const {
  const Index m = values.size();
  double sum = 0.0;
  for (Index i = 0; i + 1 < m; ++i) {
    const double xa = origin + h * static_cast<double>(i);
    const double xb = xa + h;
    const double a = std::max(xa, 0.0), b = std::min(xb, x_max);
    if (b <= a) continue;
    // Exact ∫_a^b f² for linear f.
    auto f = [&](double x) { return values[i] + (values[i + 1] - values[i]) * (x - xa) / h; };
    const double fa = f(a), fb = f(b);
    sum += (b - a) * (fa * fa + fa * fb + fb * fb) / 3.0;
  }
  return std::sqrt(sum);
}

GridFunction shift_semigroup(const GridFunction& z0, double t) {
  if (!(t >= 0) || !std::isfinite(t)) {
    throw_error(ErrorCode::kPrecondition, "shift semigroup needs finite t >= 0");
  }
  if (z0.origin < 0) {
    throw_error(ErrorCode::kPrecondition, "grid function must live on [0, x_max]");
  }
  GridFunction out = z0;
  out.origin = z0.origin + t;
  if (out.support_end() > out.x_max) {
    // Only flag truncation when nonzero mass actually crosses x_max.
    const Index m = out.values.size();
    for (Index i = 0; i < m; ++i) {
      const double xi = out.origin + out.h * static_cast<double>(i);
      const bool beyond = xi > out.x_max || (i + 1 < m && xi + out.h > out.x_max);
      if (beyond && (out.values[i] != 0.0 || (i + 1 < m && out.values[i + 1] != 0.0))) {
        out.truncated = true;
        break;
      }
    }
  }
  if (out.origin >= out.x_max) {
    out.values.setZero();
    out.truncated = out.truncated || z0.values.cwiseAbs().maxCoeff() > 0;
  }
  return out;
}

Vector wave_modal_semigroup(const Vector& pairs, double t) {
  if (pairs.size() < 2 || pairs.size() % 2 != 0) {
    throw_error(ErrorCode::kDimensionMismatch, "modal pairs must have even positive length");
  }
  Vector out(pairs.size());
  for (Index j = 0; 2 * j < pairs.size(); ++j) {
    const double w = M_PI * static_cast<double>(j + 1);
    const double c = std::cos(w * t), s = std::sin(w * t);
    const double a = pairs[2 * j], b = pairs[2 * j + 1];
    out[2 * j] = c * a + s * b;
    out[2 * j + 1] = -s * a + c * b;
  }
  return out;
}

double wave_modal_energy(const Vector& pairs) {
  if (pairs.size() % 2 != 0) {
    throw_error(ErrorCode::kDimensionMismatch, "modal pairs must have even length");
  }
  double e = 0.0;
  for (Index j = 0; 2 * j < pairs.size(); ++j) {
    const double lam = std::pow(M_PI * static_cast<double>(j + 1), 2);
    e += lam * (pairs[2 * j] * pairs[2 * j] + pairs[2 * j + 1] * pairs[2 * j + 1]);
  }
  return e;
}

}  // namespace cstab
