#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cstab/common.hpp"
#include "cstab/operator_core.hpp"

namespace cstab {

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1]
/// (Golub–Welsch).
void gauss_legendre(int n, Vector* nodes, Vector* weights);

struct TimeQuadrature {
  std::vector<double> t;
  std::vector<double> w;

  std::size_t size() const { return t.size(); }
};

/// Composite Gauss–Legendre rule on [0, T] with `panels` equal panels of
/// `order` points inside every interval between consecutive breakpoints.
TimeQuadrature composite_rule(double T, int panels, int order = 16,
                              const std::vector<double>& breakpoints = {});

/// Time-resolved observation data t ↦ S₀(t)y seen through B:
///   form(t, y)          = ⟨B S₀(t)y, S₀(t)y⟩_P
///   image_norm_sq(t, y) = ‖B S₀(t)y‖²_P
/// Gradients are with respect to the coordinates of y (Euclidean).
class ObservationKernel {
 public:
  virtual ~ObservationKernel() = default;

  virtual Index dimension() const = 0;
  virtual const InnerProduct& inner() const = 0;
  virtual bool is_linear() const = 0;

  virtual double form(double t, const Vector& y, Vector* grad) const = 0;
  virtual double image_norm_sq(double t, const Vector& y, Vector* grad) const = 0;

  /// Symmetric Q_t with form(t, y) = yᵀ Q_t y. Linear B only.
  virtual Matrix form_matrix(double t) const;
  /// Symmetric R_t with image_norm_sq(t, y) = yᵀ R_t y. Linear B only.
  virtual Matrix image_matrix(double t) const;

  /// Exact ∫₀ᵀ Q_t dt when a closed form exists.
  virtual std::optional<Matrix> exact_gram(double /*T*/) const { return std::nullopt; }
  /// Times in (0, T) where the integrand is not smooth.
  virtual std::vector<double> breakpoints(double /*T*/) const { return {}; }
};

using KernelPtr = std::shared_ptr<const ObservationKernel>;

/// Kernel built from a model's semigroup evaluator and control operator.
/// Linear B uses analytic gradients 2S₀ᵀQS₀y; nonlinear B uses central
/// differences of the pointwise form, pulled back through S₀(t)ᵀ.
class DenseKernel final : public ObservationKernel {
 public:
  explicit DenseKernel(const SystemModel& model);

  Index dimension() const override { return n_; }
  const InnerProduct& inner() const override { return inner_; }
  bool is_linear() const override { return B_.is_linear(); }

  double form(double t, const Vector& y, Vector* grad) const override;
  double image_norm_sq(double t, const Vector& y, Vector* grad) const override;
  Matrix form_matrix(double t) const override;
  Matrix image_matrix(double t) const override;

 private:
  Index n_;
  InnerProduct inner_;
  ControlOperator B_;
  std::shared_ptr<const SemigroupEvaluator> semigroup_;
  Matrix sym_pb_;   // sym(P B), linear B only
  Matrix image_;    // Bᵀ P B, linear B only
};

/// The model's own kernel when it provides one, otherwise a DenseKernel.
KernelPtr observation_kernel(const SystemModel& model);

}  // namespace cstab
