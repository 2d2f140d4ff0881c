#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "cstab/common.hpp"
#include "cstab/operator_core.hpp"

namespace cstab {

/// e^{tM} by scaling and squaring with a Padé core. Throws kOverflow when
/// t·‖M‖ is too large to represent; rescale the model in that case.
Matrix matrix_exponential(const Matrix& m, double t);

enum class SemigroupMode {
  kMatrixExponential,
  kModalRotation,
  kShiftHalfLine,
  kNumericIntegration,
};

const char* to_string(SemigroupMode mode);

/// Evaluates the uncontrolled semigroup S₀(t) on coordinate vectors.
class SemigroupEvaluator {
 public:
  virtual ~SemigroupEvaluator() = default;

  virtual SemigroupMode mode() const = 0;
  virtual Index dimension() const = 0;
  virtual Vector apply(double t, const Vector& y) const = 0;
  /// Euclidean transpose S₀(t)ᵀ y (used for gradients of quadratic forms).
  virtual Vector apply_transpose(double t, const Vector& y) const = 0;
  /// Dense S₀(t); the default assembles it column by column.
  virtual Matrix matrix(double t) const;
};

using SemigroupPtr = std::shared_ptr<const SemigroupEvaluator>;

/// S₀(t) = e^{tA}; exponentials are memoized per t behind a mutex so one
/// evaluator can serve concurrent sweeps.
class ExponentialSemigroup final : public SemigroupEvaluator {
 public:
  explicit ExponentialSemigroup(Matrix generator);

  SemigroupMode mode() const override { return SemigroupMode::kMatrixExponential; }
  Index dimension() const override { return generator_.rows(); }
  Vector apply(double t, const Vector& y) const override;
  Vector apply_transpose(double t, const Vector& y) const override;
  Matrix matrix(double t) const override;

 private:
  Matrix generator_;
  mutable std::mutex mutex_;
  mutable std::map<double, Matrix> cache_;
};

/// Per-pair rotation (a, b) ↦ (a cos ωt + b sin ωt, −a sin ωt + b cos ωt).
class ModalRotationSemigroup final : public SemigroupEvaluator {
 public:
  explicit ModalRotationSemigroup(std::vector<double> frequencies);

  SemigroupMode mode() const override { return SemigroupMode::kModalRotation; }
  Index dimension() const override { return 2 * static_cast<Index>(freq_.size()); }
  Vector apply(double t, const Vector& y) const override;
  Vector apply_transpose(double t, const Vector& y) const override;

  const std::vector<double>& frequencies() const { return freq_; }

 private:
  std::vector<double> freq_;
};

/// Right shift of nodal values on the uniform grid x_i = i·h, i = 1..n, with
/// zero inflow at x = 0. Exact for t on the lattice hℤ; other times throw.
class ShiftSemigroup final : public SemigroupEvaluator {
 public:
  ShiftSemigroup(Index n, double h);

  SemigroupMode mode() const override { return SemigroupMode::kShiftHalfLine; }
  Index dimension() const override { return n_; }
  Vector apply(double t, const Vector& y) const override;
  Vector apply_transpose(double t, const Vector& y) const override;

  double spacing() const { return h_; }

 private:
  Index steps(double t) const;

  Index n_;
  double h_;
};

/// S₀(t) by adaptive integration of ż = Az; for generators known only
/// through apply().
class NumericSemigroup final : public SemigroupEvaluator {
 public:
  NumericSemigroup(LinearOperator generator, double rtol = 1e-11);

  SemigroupMode mode() const override { return SemigroupMode::kNumericIntegration; }
  Index dimension() const override { return generator_.rows(); }
  Vector apply(double t, const Vector& y) const override;
  Vector apply_transpose(double t, const Vector& y) const override;

 private:
  LinearOperator generator_;
  LinearOperator transpose_;
  double rtol_;
};

/// Piecewise-linear function with nodes origin + i·h, zero outside
/// [origin, origin + (m−1)h] (jumps at both ends are allowed), observed on
/// the truncated domain [0, x_max].
struct GridFunction {
  double origin = 0.0;
  double h = 1.0;
  Vector values;
  double x_max = 1.0;
  bool truncated = false;

  double operator()(double x) const;
  double support_end() const;
  /// L² norm over [0, x_max], computed exactly.
  double l2_norm() const;
};

/// (S₀(t)z₀)(x) = z₀(x − t) for x > t, 0 otherwise. Mass that moves past
/// x_max is dropped and flagged.
GridFunction shift_semigroup(const GridFunction& z0, double t);

/// Mode j rotation with eigenvalue λ_j = (jπ)²; `pairs` interleaves (α_j, β_j).
Vector wave_modal_semigroup(const Vector& pairs, double t);

/// Σ λ_j (α_j² + β_j²).
double wave_modal_energy(const Vector& pairs);

}  // namespace cstab
