#include "cstab/observation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "cstab/semigroup.hpp"

namespace cstab {

void gauss_legendre(int n, Vector* nodes, Vector* weights) {
  if (n < 1) throw_error(ErrorCode::kPrecondition, "Gauss-Legendre order must be positive");
  Matrix J = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  *nodes = es.eigenvalues();
  weights->resize(n);
  for (int i = 0; i < n; ++i) {
    const double v = es.eigenvectors()(0, i);
    (*weights)[i] = 2.0 * v * v;
  }
}

TimeQuadrature composite_rule(double T, int panels, int order,
                              const std::vector<double>& breakpoints) {
  if (!(T > 0) || panels < 1) throw_error(ErrorCode::kPrecondition, "invalid quadrature request");
  Vector x, w;
  gauss_legendre(order, &x, &w);
  std::vector<double> cuts{0.0};
  for (double b : breakpoints) {
    if (b > 1e-14 * T && b < T * (1 - 1e-14)) cuts.push_back(b);
  }
  cuts.push_back(T);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  TimeQuadrature q;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s];
    const double h = (cuts[s + 1] - a) / panels;
    for (int p = 0; p < panels; ++p) {
      const double c = a + (p + 0.5) * h;
      for (int i = 0; i < order; ++i) {
        q.t.push_back(c + 0.5 * h * x[i]);
        q.w.push_back(0.5 * h * w[i]);
      }
    }
  }
  return q;
}

namespace {

template <typename F>
Vector central_gradient(F&& f, const Vector& x) {
  const double eps = 1e-6 * std::max(1.0, x.norm());
  Vector g(x.size());
  Vector u = x;
  for (Index i = 0; i < x.size(); ++i) {
    u[i] = x[i] + eps;
    const double fp = f(u);
    u[i] = x[i] - eps;
    const double fm = f(u);
    u[i] = x[i];
    g[i] = (fp - fm) / (2 * eps);
  }
  return g;
}

}  // namespace

Matrix ObservationKernel::form_matrix(double) const {
  throw_error(ErrorCode::kUnsupportedVariant,
              "form matrix needs a linear B; use the multistart estimator");
}

Matrix ObservationKernel::image_matrix(double) const {
  throw_error(ErrorCode::kUnsupportedVariant,
              "image matrix needs a linear B; use the multistart estimator");
}

DenseKernel::DenseKernel(const SystemModel& model)
    : n_(model.size()), inner_(model.inner), B_(model.B), semigroup_(model.semigroup) {
  if (!semigroup_) throw_error(ErrorCode::kPrecondition, "model '" + model.id + "' has no semigroup");
  if (B_.dimension() != n_ || semigroup_->dimension() != n_) {
    throw_error(ErrorCode::kDimensionMismatch, "model '" + model.id + "' has inconsistent dimensions");
  }
  if (B_.is_linear()) {
    const Matrix& B = B_.linear().matrix();
    const Matrix pb = inner_.weight() * B;
    sym_pb_ = 0.5 * (pb + pb.transpose());
    image_ = B.transpose() * inner_.weight() * B;
    image_ = 0.5 * (image_ + image_.transpose());
  }
}

double DenseKernel::form(double t, const Vector& y, Vector* grad) const {
  const Vector x = semigroup_->apply(t, y);
  if (B_.is_linear()) {
    const Vector qx = sym_pb_ * x;
    if (grad) *grad = 2.0 * semigroup_->apply_transpose(t, qx);
    return qx.dot(x);
  }
  const Vector bx = B_.apply(x);
  const double value = inner_.dot(bx, x);
  if (grad) {
    Vector gx;
    const auto& jac = B_.as_nonlinear().jacobian;
    if (jac) {
      // d/dx ⟨PB(x), x⟩ = DB(x)ᵀ P x + P B(x).
      gx = jac(x).transpose() * inner_.apply_weight(x) + inner_.apply_weight(bx);
    } else {
      gx = central_gradient([&](const Vector& u) { return inner_.dot(B_.apply(u), u); }, x);
    }
    *grad = semigroup_->apply_transpose(t, gx);
  }
  return value;
}

double DenseKernel::image_norm_sq(double t, const Vector& y, Vector* grad) const {
  const Vector x = semigroup_->apply(t, y);
  if (B_.is_linear()) {
    const Vector rx = image_ * x;
    if (grad) *grad = 2.0 * semigroup_->apply_transpose(t, rx);
    return rx.dot(x);
  }
  const Vector bx = B_.apply(x);
  const double value = inner_.norm_sq(bx);
  if (grad) {
    Vector gx;
    const auto& jac = B_.as_nonlinear().jacobian;
    if (jac) {
      gx = 2.0 * jac(x).transpose() * inner_.apply_weight(bx);
    } else {
      gx = central_gradient([&](const Vector& u) { return inner_.norm_sq(B_.apply(u)); }, x);
    }
    *grad = semigroup_->apply_transpose(t, gx);
  }
  return value;
}

Matrix DenseKernel::form_matrix(double t) const {
  if (!B_.is_linear()) ObservationKernel::form_matrix(t);
  const Matrix S = semigroup_->matrix(t);
  Matrix Q = S.transpose() * sym_pb_ * S;
  return 0.5 * (Q + Q.transpose());
}

Matrix DenseKernel::image_matrix(double t) const {
  if (!B_.is_linear()) ObservationKernel::image_matrix(t);
  const Matrix S = semigroup_->matrix(t);
  Matrix R = S.transpose() * image_ * S;
  return 0.5 * (R + R.transpose());
}

KernelPtr observation_kernel(const SystemModel& model) {
  if (model.kernel) return model.kernel;
  return std::make_shared<DenseKernel>(model);
}

}  // namespace cstab
