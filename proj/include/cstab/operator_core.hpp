#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cstab/common.hpp"

namespace cstab {

enum class BasisTag { kEuclidean, kModal, kGrid };

const char* to_string(BasisTag tag);

/// Finite coordinate representation of a state together with the basis it
/// is expressed in.
class StateVector {
 public:
  StateVector(Vector coords, BasisTag basis);

  const Vector& coords() const { return coords_; }
  BasisTag basis() const { return basis_; }
  Index size() const { return coords_.size(); }

 private:
  Vector coords_;
  BasisTag basis_;
};

/// ⟨x, y⟩_P = ⟨P x, y⟩ for a symmetric positive-definite weight P, or the
/// plain Euclidean product when constructed through identity().
class InnerProduct {
 public:
  static InnerProduct identity(Index n);

  /// Validates symmetry (relative 1e-12) and positive definiteness.
  explicit InnerProduct(Matrix weight);

  Index dimension() const { return n_; }
  bool is_identity() const { return identity_; }

  /// Materialized weight; the identity matrix for the identity marker.
  const Matrix& weight() const { return weight_; }

  double dot(const Vector& x, const Vector& y) const;
  double norm(const Vector& x) const;
  double norm_sq(const Vector& x) const;
  Vector apply_weight(const Vector& x) const;
  Vector solve_weight(const Vector& x) const;

  /// Upper-triangular C with P = CᵀC, so ‖x‖_P = ‖Cx‖.
  const Matrix& factor() const { return factor_; }
  const Matrix& factor_inverse() const { return factor_inv_; }

 private:
  InnerProduct() = default;

  Index n_ = 0;
  bool identity_ = true;
  Matrix weight_;
  Matrix factor_;
  Matrix factor_inv_;
};

/// Returns ⟨P x, y⟩. Throws kDimensionMismatch naming both dimensions.
double inner_product(const StateVector& x, const StateVector& y,
                     const InnerProduct& ip);

enum class OperatorKind { kDenseMatrix, kModalBlock, kExactShift, kCompositeSum };

const char* to_string(OperatorKind kind);

/// Bounded linear map on the coordinate space. Every kind keeps a dense
/// representation; kinds differ in how apply() is evaluated and in the
/// metadata they carry.
class LinearOperator {
 public:
  static LinearOperator dense(Matrix m);
  /// Block-diagonal operator made of 2×2 blocks acting on consecutive pairs.
  static LinearOperator modal_block(std::vector<Eigen::Matrix2d> blocks);
  /// Galerkin representation of the transport generator on a uniform grid.
  /// `lattice` is the grid spacing on which the exact shift semigroup acts.
  static LinearOperator exact_shift(Matrix galerkin_generator, double lattice);
  /// apply(x) = Σ terms[i].apply(x).
  static LinearOperator sum(std::vector<LinearOperator> terms);

  OperatorKind kind() const;
  Index rows() const;
  Index cols() const;

  Vector apply(const Vector& x) const;
  const Matrix& matrix() const;

  /// Lattice spacing of an exact-shift operator, 0 otherwise.
  double lattice() const;
  const std::vector<LinearOperator>& terms() const;
  const std::vector<Eigen::Matrix2d>& blocks() const;

  std::optional<double> operator_norm() const;
  LinearOperator with_operator_norm(double norm) const;

  /// Adjoint with respect to ⟨·,·⟩_P: M† = P⁻¹MᵀP.
  LinearOperator adjoint(const InnerProduct& ip) const;

 private:
  struct Impl;
  explicit LinearOperator(std::shared_ptr<const Impl> impl);
  std::shared_ptr<const Impl> impl_;
};

/// ‖M‖ induced by ⟨·,·⟩_P.
double operator_norm(const Matrix& m, const InnerProduct& ip);

/// Lipschitz map H → H, possibly nonlinear.
struct NonlinearOperator {
  using Map = std::function<Vector(const Vector&)>;

  Index dimension = 0;
  Map map;
  /// Optional Jacobian x ↦ DN(x) (a generalized one at kinks); derivative
  /// consumers fall back to central differences when unset.
  std::function<Matrix(const Vector&)> jacobian;
  std::optional<double> lipschitz_global;
  /// R ↦ L_R on the ball b(0, R); empty means "use lipschitz_global".
  std::function<double(double)> lipschitz_on_ball;
  bool vanishes_at_zero = true;
  bool positive = false;

  /// Evaluates the map; kEvaluation on non-finite output, carrying the point.
  Vector operator()(const Vector& x) const;

  /// L_R when known (ball function, else global constant).
  std::optional<double> lipschitz(double radius) const;

  static NonlinearOperator from_linear(const LinearOperator& op,
                                       const InnerProduct& ip);
};

/// Control operator B of ż = Az + vBz: either bounded linear or Lipschitz.
class ControlOperator {
 public:
  ControlOperator(LinearOperator op, const InnerProduct& ip);
  ControlOperator(NonlinearOperator op);  // NOLINT(runtime/explicit)

  bool is_linear() const;
  const LinearOperator& linear() const;
  const NonlinearOperator& as_nonlinear() const { return nonlinear_; }

  Vector apply(const Vector& z) const;
  Index dimension() const { return nonlinear_.dimension; }
  bool positive() const { return nonlinear_.positive; }
  std::optional<double> lipschitz(double radius = 1.0) const;

 private:
  std::optional<LinearOperator> linear_;
  NonlinearOperator nonlinear_;
};

enum class SemigroupClass { kContraction, kIsometry, kUnknown };

const char* to_string(SemigroupClass c);
SemigroupClass semigroup_class_from_string(const std::string& s);

struct ModelDimension {
  Index coords = 0;
  std::optional<int> modal_modes;  // set for "modal-truncated(N)"

  std::string label() const;
};

class SemigroupEvaluator;
class ObservationKernel;
class ExactFlow;

/// The pair (A, B) with the inner product and the representation hooks the
/// analyses consume.
struct SystemModel {
  std::string id;
  LinearOperator A = LinearOperator::dense(Matrix::Zero(1, 1));
  ControlOperator B = ControlOperator(NonlinearOperator{});
  InnerProduct inner = InnerProduct::identity(1);
  SemigroupClass semigroup_class = SemigroupClass::kUnknown;
  ModelDimension dimension;
  BasisTag basis = BasisTag::kEuclidean;

  /// Exact or numerical S₀(t); required.
  std::shared_ptr<const SemigroupEvaluator> semigroup;
  /// Overrides the default observation kernel built from A, B (transport).
  std::shared_ptr<const ObservationKernel> kernel;
  /// Exact closed-loop flow under constant control (transport).
  std::shared_ptr<const ExactFlow> exact_flow;

  Index size() const { return dimension.coords; }
  double norm(const Vector& z) const { return inner.norm(z); }
};

/// Dense finite-dimensional model with matrix-exponential semigroup.
SystemModel make_dense_model(std::string id, const Matrix& A, const Matrix& B,
                             std::optional<Matrix> P = std::nullopt,
                             SemigroupClass cls = SemigroupClass::kUnknown);

/// Dense finite-dimensional model with nonlinear B.
SystemModel make_dense_model(std::string id, const Matrix& A,
                             NonlinearOperator B,
                             std::optional<Matrix> P = std::nullopt,
                             SemigroupClass cls = SemigroupClass::kUnknown);

/// Worst sampled value of ⟨Az, z⟩_P / ‖z‖²_P over `samples` random z.
double sampled_dissipation(const SystemModel& model, int samples, Rng& rng);

/// Checks the declared semigroup_class against sampled ⟨Az,z⟩_P.
bool semigroup_class_consistent(const SystemModel& model, int samples, Rng& rng);

/// Sampled lower bound on the Lipschitz constant over the ball b(0, radius).
/// Throws kPrecondition when the sample exceeds lipschitz_global.
double estimate_lipschitz(const NonlinearOperator& op, double radius,
                          int samples, Rng& rng);
double estimate_lipschitz(const NonlinearOperator& op, double radius,
                          int samples, Rng& rng, const InnerProduct& ip);

}  // namespace cstab
