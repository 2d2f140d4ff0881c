#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cstab/common.hpp"
#include "cstab/operator_core.hpp"

namespace cstab {

enum class LmiStatus { kFeasible, kInfeasible, kUndecided };

const char* to_string(LmiStatus s);

struct LmiResult {
  LmiStatus status = LmiStatus::kUndecided;
  std::optional<Matrix> P;  // SPD with AᵀP + PA ⪯ 1e-10·I when feasible
  int iterations = 0;
  double residual = 0.0;    // λ_max(AᵀP + PA) of the returned P
  /// Why the verdict holds: "alternating-projection", "lyapunov-solve",
  /// "unstable-eigenvalue", "defective-imaginary-eigenvalue", …
  std::string reason;
};

/// Searches P = Pᵀ with εI ⪯ P ⪯ I and AᵀP + PA ⪯ 0 by alternating
/// projections between the graph {(P, −(AᵀP + PA))} and the cone product
/// {εI ⪯ P ⪯ I} × {Q ⪰ 0}. Infeasibility is only reported with a spectral
/// certificate; anything else that fails to verify is undecided.
LmiResult lyapunov_lmi_feasible(const Matrix& A, int iterations = 500, double eps = 1e-6);

struct LyapunovEqualityResult {
  std::vector<Matrix> basis;  // Frobenius-orthonormal symmetric solutions of AᵀP + PA = 0
  std::optional<Matrix> spd;  // positive-definite element, unit Frobenius norm
  double best_min_eigenvalue = 0.0;
};

/// Nullspace of the symmetric Kronecker map P ↦ AᵀP + PA and a multistart
/// supergradient ascent of λ_min over unit coefficient vectors.
LyapunovEqualityResult lyapunov_equality_solutions(const Matrix& A, std::uint64_t seed = 0,
                                                   int starts = 16);

/// [ad⁰_A(B), …, ad^k_A(B)] with ad^{i+1} = A·ad^i − ad^i·A.
struct BracketChain {
  int depth = 0;
  std::vector<Matrix> matrices;
};

BracketChain bracket_chain(const Matrix& A, const Matrix& B, int depth);

struct BracketRankResult {
  bool holds = false;
  int k_used = -1;  // first k reaching full rank, −1 if never
  Index rank = 0;
};

/// span{Ay, ad⁰_A(B)y, …, ad^k_A(B)y} = Rⁿ, grown one bracket at a time;
/// rank by column-pivoted QR with threshold 1e-10 relative to the largest
/// pivot. k_max defaults to n².
BracketRankResult bracket_rank_condition(const Matrix& A, const Matrix& B, const Vector& y,
                                         std::optional<int> k_max = std::nullopt);

struct TemporalResult {
  bool holds = true;
  std::optional<Vector> counterexample;
  double min_sampled = 0.0;  // smallest ∫₀ᵀ⟨Be^{tA}y, e^{tA}y⟩² dt over the samples
  double min_found = 0.0;    // value at the minimizer of the sphere search
  int samples = 0;
};

/// ⟨Be^{tA}y, e^{tA}y⟩ = 0 on [0, T] ⟹ y = 0, tested on sampled unit y and
/// by minimizing the integral of the squared form over the sphere. Holds iff
/// every sample exceeds 1e-14 and the minimizer does not fall below 1e-12
/// (it is reported as a counterexample then).
TemporalResult temporal_condition_sampled(const Matrix& A, const Matrix& B, double T,
                                          int samples, std::uint64_t seed = 0);

enum class SignClass { kNonneg, kNonpos, kIndefinite };

const char* to_string(SignClass s);

/// Classifies sym(PB) by eigenvalue signs (threshold 1e-10); the sampled
/// quadratic form is cross-checked against the verdict.
SignClass pb_sign_check(const Matrix& P, const Matrix& B, int samples = 100,
                        std::uint64_t seed = 0);

struct EquivalenceReport {
  TemporalResult temporal;
  std::vector<double> T_grid;
  std::vector<double> deltas;          // estimated absolute-variant δ per T
  std::vector<double> witness_values;  // absolute functional at the counterexample per T
  bool any_delta_positive = false;     // some δ > 1e-8
  bool agree = false;                  // temporal verdict == any_delta_positive
  bool consistent = false;             // implication checks in both directions
};

/// Temporal condition versus the absolute observability inequality over a
/// grid of horizons.
EquivalenceReport bal_coer_equivalence_test(const Matrix& A, const Matrix& B,
                                            const std::vector<double>& T_grid,
                                            std::uint64_t seed = 0, int starts = 32);

nlohmann::json to_json(const LmiResult& r);
nlohmann::json to_json(const LyapunovEqualityResult& r);
nlohmann::json to_json(const TemporalResult& r);
nlohmann::json to_json(const EquivalenceReport& r);

struct FiniteDimOptions {
  std::vector<double> T_grid{1, 2, 4, 8};
  int samples = 64;
  std::uint64_t seed = 0;
};

/// All algebraic tests for a dense model with linear B, as one report.
nlohmann::json analyze_finite_dim(const SystemModel& model, const FiniteDimOptions& options = {});

}  // namespace cstab
