#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstab/common.hpp"
#include "cstab/observation.hpp"
#include "cstab/operator_core.hpp"

namespace cstab {

/// The observability-type functionals over [0, T]:
///   quadratic  ∫ ⟨BS₀(t)y, S₀(t)y⟩ dt       ≥ δ‖y‖²
///   absolute   ∫ |⟨BS₀(t)y, S₀(t)y⟩| dt     ≥ δ‖y‖²
///   l1-image   ∫ ‖BS₀(t)y‖ dt               ≥ δ‖y‖
///   sqrt-form  ∫ ‖B^{1/2}S₀(t)y‖² dt        ≥ δ‖y‖²
enum class Variant { kQuadratic, kAbsolute, kL1Image, kSqrtForm };
enum class CertificateMethod { kGramEigenvalue, kMultistartSphere, kSampledLowerBound };

const char* to_string(Variant v);
const char* to_string(CertificateMethod m);
Variant variant_from_string(const std::string& s);

struct QuadratureInfo {
  int nodes = 0;
  double last_change = 0.0;  // max-norm change at the final doubling
  bool converged = false;
  bool exact = false;        // closed-form Gram, no time quadrature
};

struct Certificate {
  std::string model_id;
  Variant variant = Variant::kQuadratic;
  double horizon_T = 0.0;
  double delta = 0.0;
  CertificateMethod method = CertificateMethod::kGramEigenvalue;
  /// True only for the exact quadratic-form reduction.
  bool certified = false;
  std::optional<Vector> witness;
  QuadratureInfo quadrature;
  int starts = 0;
};

nlohmann::json to_json(const Certificate& c);

struct GramResult {
  Matrix W;  // matrix of the form y ↦ ∫ ⟨BS₀(t)y, S₀(t)y⟩_P dt
  QuadratureInfo quadrature;
};

/// Gram matrix with a fixed number of Gauss–Legendre nodes (16-point panels
/// when quad_points is a multiple of 16, else a single rule).
Matrix gram_operator(const SystemModel& model, double T, int quad_points);

/// Gram matrix by node doubling from `initial_nodes` until successive
/// matrices agree to `tol` in max norm; closed forms take precedence.
GramResult adaptive_gram(const ObservationKernel& kernel, double T,
                         double tol = 1e-10, int initial_nodes = 64,
                         int max_nodes = 65536);

/// Quadrature rule that resolves the kernel's integrand on [0, T]: node
/// doubling on the assembled form matrices (linear B) or on functional values
/// at fixed probe vectors (nonlinear B).
TimeQuadrature resolved_rule(const ObservationKernel& kernel, double T,
                             QuadratureInfo* info = nullptr, double tol = 1e-10);

/// Smallest eigenvalue of the pencil (W, P); witness normalized in ‖·‖_P.
Certificate certify_quadratic(const SystemModel& model, double T);

struct MultistartOptions {
  int starts = 32;
  std::uint64_t seed = 0;
  int max_iterations = 2000;
  double gradient_tolerance = 1e-9;
  /// Seed the search with the quadratic witness when B is linear.
  bool use_quadratic_witness = true;
  std::vector<Vector> extra_starts;
};

/// Value of a variant functional at y (not normalized).
double functional_value(const ObservationKernel& kernel, const TimeQuadrature& rule,
                        Variant variant, const Vector& y);

/// Multistart projected-gradient minimization of the variant functional on
/// the unit P-sphere. Result is a sampled upper bound, certified = false.
Certificate estimate_nonquadratic(const SystemModel& model, double T, Variant variant,
                                  const MultistartOptions& options = {});

/// Same search for any kernel; `model_id` is copied into the certificate.
Certificate minimize_on_sphere(const ObservationKernel& kernel, double T, Variant variant,
                               const MultistartOptions& options,
                               const std::string& model_id = "");

/// P-self-adjoint square root of a positive semidefinite B.
Matrix operator_sqrt(const Matrix& B, const InnerProduct& ip);

/// ∫‖B^{1/2}S₀(t)y‖² through its own Gram route, checked against
/// certify_quadratic to 1e-9.
Certificate sqrt_form_certificate(const SystemModel& model, double T);

/// (1 − Me^{−σT}) / (2M|λ|) · (1 + |λ|T‖B‖e^{|λ|T‖B‖})^{−1}.
double necessity_delta(double M, double sigma, double lambda, double T, double normB);

/// Quadratic certificates on a geometric grid of horizons.
std::vector<Certificate> sweep_horizon(const SystemModel& model, double T_min,
                                       double T_max, int count);

}  // namespace cstab
