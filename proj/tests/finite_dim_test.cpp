#include "cstab/finite_dim.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

namespace cstab {
namespace {

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b,
       c, d;
  return m;
}

Matrix rotation() { return mat2(0, 1, -1, 0); }
Matrix jordan() { return mat2(0, 1, 0, 0); }

double lmi_residual(const Matrix& A, const Matrix& P) {
  const Matrix S = A.transpose() * P + P * A;
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (S + S.transpose())).eigenvalues().maxCoeff();
}

GTEST_TEST(LmiTest, SkewGeneratorIsFeasibleWithIdentity) {
  const LmiResult r = lyapunov_lmi_feasible(rotation());
  ASSERT_EQ(r.status, LmiStatus::kFeasible);
  ASSERT_TRUE(r.P.has_value());
  EXPECT_LE(lmi_residual(rotation(), *r.P), 1e-10);
  EXPECT_EQ(r.iterations, 0);
}

GTEST_TEST(LmiTest, JordanBlockIsInfeasible) {
  // AᵀP + PA = [[0, p11], [p11, 2 p12]] forces p11 = 0.
  const LmiResult r = lyapunov_lmi_feasible(jordan());
  EXPECT_EQ(r.status, LmiStatus::kInfeasible);
  EXPECT_EQ(r.reason, "defective-imaginary-eigenvalue");
  EXPECT_FALSE(r.P.has_value());
}

GTEST_TEST(LmiTest, UnstableEigenvalueIsInfeasible) {
  const LmiResult r = lyapunov_lmi_feasible(mat2(1, 0, 0, -1));
  EXPECT_EQ(r.status, LmiStatus::kInfeasible);
  EXPECT_EQ(r.reason, "unstable-eigenvalue");
}

GTEST_TEST(LmiTest, NonNormalStableGeneratorIsFeasible) {
  const Matrix A = mat2(-1, 10, 0, -1);
  // A + Aᵀ is indefinite, so P = I does not work.
  EXPECT_GT(lmi_residual(A, Matrix::Identity(2, 2)), 0);
  const LmiResult r = lyapunov_lmi_feasible(A);
  ASSERT_EQ(r.status, LmiStatus::kFeasible);
  EXPECT_LE(lmi_residual(A, *r.P), 1e-10);
  EXPECT_GT(Eigen::SelfAdjointEigenSolver<Matrix>(*r.P).eigenvalues().minCoeff(), 0);
}

GTEST_TEST(LmiTest, BlockRotationWithChangeOfBasis) {
  // A = T J T⁻¹ with J skew: feasible with P = T⁻ᵀT⁻¹.
  Matrix J = Matrix::Zero(4, 4);
  J.block(0, 0, 2, 2) = rotation();
  J.block(2, 2, 2, 2) = 3 * rotation();
  Matrix T(4, 4);
  T << 1, 2, 0, 0,
       0, 1, 0, 1,
       1, 0, 1, 0,
       0, 0, 1, 1;
  const Matrix A = T * J * T.inverse();
  const LmiResult r = lyapunov_lmi_feasible(A);
  ASSERT_EQ(r.status, LmiStatus::kFeasible);
  EXPECT_LE(lmi_residual(A, *r.P), 1e-10);
}

GTEST_TEST(LmiTest, RejectsBadArguments) {
  EXPECT_THROW(lyapunov_lmi_feasible(Matrix::Zero(2, 3)), Error);
  EXPECT_THROW(lyapunov_lmi_feasible(rotation(), 0), Error);
  EXPECT_THROW(lyapunov_lmi_feasible(rotation(), 10, 2.0), Error);
}

GTEST_TEST(LyapunovEqualityTest, RotationHasOnlyMultiplesOfIdentity) {
  const LyapunovEqualityResult r = lyapunov_equality_solutions(rotation());
  ASSERT_EQ(r.basis.size(), 1u);
  ASSERT_TRUE(r.spd.has_value());
  const Matrix expected = Matrix::Identity(2, 2) / std::sqrt(2.0);
  EXPECT_LT((*r.spd - expected).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_NEAR(r.best_min_eigenvalue, 1 / std::sqrt(2.0), 1e-9);
}

GTEST_TEST(LyapunovEqualityTest, JordanHasSingularSolutionsOnly) {
  // Solutions are [[0, 0], [0, c]].
  const LyapunovEqualityResult r = lyapunov_equality_solutions(jordan());
  ASSERT_EQ(r.basis.size(), 1u);
  EXPECT_NEAR(std::abs(r.basis[0](1, 1)), 1.0, 1e-12);
  EXPECT_FALSE(r.spd.has_value());
}

GTEST_TEST(LyapunovEqualityTest, ZeroGeneratorAdmitsEverySymmetricMatrix) {
  const LyapunovEqualityResult r = lyapunov_equality_solutions(Matrix::Zero(3, 3));
  EXPECT_EQ(r.basis.size(), 6u);
  ASSERT_TRUE(r.spd.has_value());
  // The best unit-Frobenius matrix is I/√3.
  EXPECT_NEAR(r.best_min_eigenvalue, 1 / std::sqrt(3.0), 1e-3);
  for (const Matrix& P : r.basis) EXPECT_NEAR(P.norm(), 1.0, 1e-12);
}

GTEST_TEST(LyapunovEqualityTest, HurwitzGeneratorHasTrivialNullspace) {
  const LyapunovEqualityResult r = lyapunov_equality_solutions(mat2(-1, 0, 0, -2));
  EXPECT_TRUE(r.basis.empty());
  EXPECT_FALSE(r.spd.has_value());
}

GTEST_TEST(BracketTest, ChainMatchesExplicitCommutators) {
  const Matrix A = mat2(1, 2, 3, 4), B = mat2(0, 1, 1, 0);
  const BracketChain c = bracket_chain(A, B, 2);
  ASSERT_EQ(c.matrices.size(), 3u);
  const Matrix ad1 = A * B - B * A;
  EXPECT_LT((c.matrices[1] - ad1).norm(), 1e-14);
  EXPECT_LT((c.matrices[2] - (A * ad1 - ad1 * A)).norm(), 1e-13);
}

GTEST_TEST(BracketTest, IdentityControlInOneDimension) {
  const BracketRankResult r = bracket_rank_condition(Matrix::Zero(1, 1), Matrix::Identity(1, 1),
                                                     Vector::Ones(1));
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.k_used, 0);
}

GTEST_TEST(BracketTest, RotationControlWithZeroDriftFails) {
  const BracketRankResult r = bracket_rank_condition(Matrix::Zero(2, 2), rotation(),
                                                     Vector::Ones(2));
  EXPECT_FALSE(r.holds);
  EXPECT_EQ(r.k_used, -1);
  EXPECT_EQ(r.rank, 1);
}

GTEST_TEST(BracketTest, DriftSuppliesMissingDirection) {
  const Vector y = Vector::Unit(2, 0);
  const BracketRankResult r = bracket_rank_condition(rotation(), mat2(1, 0, 0, 0), y);
  EXPECT_TRUE(r.holds);
  EXPECT_EQ(r.k_used, 0);
}

GTEST_TEST(BracketTest, NeedsHigherBracket) {
  // Ay = 0 and By = 0 at y = e₁, but [A, B]y = e₂ − … spans with B-chain.
  const Matrix A = mat2(0, 0, 1, 0);
  const Matrix B = mat2(0, 0, 0, 1);
  const Vector y = Vector::Unit(2, 0);
  const BracketRankResult r = bracket_rank_condition(A, B, y);
  // Ay = e₂; ad¹ = AB − BA = [[0,0],[−1,0]] gives ad¹y = −e₂: never e₁.
  EXPECT_FALSE(r.holds);
  const BracketRankResult r2 = bracket_rank_condition(A, B + mat2(1, 0, 0, 0), y);
  EXPECT_TRUE(r2.holds);
  EXPECT_EQ(r2.k_used, 0);
}

GTEST_TEST(BracketTest, RejectsMismatchedDimensions) {
  EXPECT_THROW(bracket_rank_condition(Matrix::Zero(2, 2), Matrix::Zero(3, 3), Vector::Ones(2)),
               Error);
  EXPECT_THROW(bracket_rank_condition(Matrix::Zero(2, 2), Matrix::Zero(2, 2), Vector::Ones(3)),
               Error);
}

GTEST_TEST(TemporalTest, RotationMinimumMatchesClosedForm) {
  // y = (cos θ, sin θ): ∫₀ᵀ cos²(2t + φ) dt, minimized over φ, is
  // T/2 − |sin 2T|/4.
  for (double T : {0.5, 1.0, 3.0}) {
    const TemporalResult r = temporal_condition_sampled(rotation(), mat2(1, 0, 0, -1), T, 32);
    EXPECT_TRUE(r.holds);
    EXPECT_NEAR(r.min_found, T / 2 - std::abs(std::sin(2 * T)) / 4, 1e-9) << T;
    EXPECT_GE(r.min_sampled, r.min_found - 1e-12);
  }
}

GTEST_TEST(TemporalTest, IndefiniteControlWithoutDriftFails) {
  const TemporalResult r = temporal_condition_sampled(Matrix::Zero(2, 2), mat2(1, 0, 0, -1), 1.0, 32);
  EXPECT_FALSE(r.holds);
  ASSERT_TRUE(r.counterexample.has_value());
  const Vector& y = *r.counterexample;
  EXPECT_NEAR(std::abs(y[0]), std::abs(y[1]), 1e-6);
  EXPECT_LT(r.min_found, 1e-12);
}

GTEST_TEST(TemporalTest, DefiniteControlHolds) {
  const TemporalResult r = temporal_condition_sampled(Matrix::Zero(3, 3), Matrix::Identity(3, 3), 2.0, 16);
  EXPECT_TRUE(r.holds);
  EXPECT_NEAR(r.min_found, 2.0, 1e-12);
}

GTEST_TEST(PbSignTest, Classifies) {
  const Matrix I = Matrix::Identity(2, 2);
  EXPECT_EQ(pb_sign_check(I, I), SignClass::kNonneg);
  EXPECT_EQ(pb_sign_check(I, -I), SignClass::kNonpos);
  EXPECT_EQ(pb_sign_check(I, mat2(1, 0, 0, -1)), SignClass::kIndefinite);
  EXPECT_EQ(pb_sign_check(I, rotation()), SignClass::kNonneg);  // sym(B) = 0
  // A weight can turn an indefinite-looking B into a nonnegative one.
  const Matrix P = mat2(2, 0, 0, 1);
  const Matrix B = mat2(1, 3, -6, 1);
  EXPECT_EQ(pb_sign_check(I, B), SignClass::kIndefinite);
  EXPECT_EQ(pb_sign_check(P, B), SignClass::kNonneg);
}

GTEST_TEST(EquivalenceTest, ObservableRotationAgrees) {
  const EquivalenceReport r = bal_coer_equivalence_test(rotation(), mat2(1, 0, 0, 0), {1, 2, 4});
  EXPECT_TRUE(r.temporal.holds);
  EXPECT_TRUE(r.any_delta_positive);
  EXPECT_TRUE(r.agree);
  EXPECT_TRUE(r.consistent);
  ASSERT_EQ(r.deltas.size(), 3u);
  // ∫|cos² t| over a full period is π; δ grows with the horizon.
  EXPECT_LE(r.deltas[0], r.deltas[2] + 1e-9);
}

GTEST_TEST(EquivalenceTest, UnobservableDirectionAgrees) {
  const EquivalenceReport r =
      bal_coer_equivalence_test(Matrix::Zero(2, 2), mat2(1, 0, 0, -1), {1, 2});
  EXPECT_FALSE(r.temporal.holds);
  EXPECT_FALSE(r.any_delta_positive);
  EXPECT_TRUE(r.agree);
  EXPECT_TRUE(r.consistent);
  for (double v : r.witness_values) EXPECT_LT(v, 1e-10);
}

GTEST_TEST(AnalyzeTest, ReportsEverySection) {
  const SystemModel model = make_dense_model("rot", rotation(), mat2(1, 0, 0, 0));
  FiniteDimOptions opts;
  opts.T_grid = {1, 2};
  opts.samples = 8;
  const nlohmann::json j = analyze_finite_dim(model, opts);
  EXPECT_EQ(j["lmi"]["status"], "feasible");
  EXPECT_EQ(j["lyapunov_equality"]["spd_solution"], true);
  EXPECT_EQ(j["bracket_rank"]["failures"], 0);
  EXPECT_EQ(j["pb_sign"]["sign"], "nonneg");
  EXPECT_EQ(j["equivalence"]["agree"], true);
}

}  // namespace
}  // namespace cstab
