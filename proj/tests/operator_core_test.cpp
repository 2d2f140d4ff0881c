#include "cstab/operator_core.hpp"

#include <gtest/gtest.h>

#include "cstab/semigroup.hpp"

namespace cstab {
namespace {

GTEST_TEST(InnerProductTest, IdentityWeight) {
  const InnerProduct ip = InnerProduct::identity(2);
  const StateVector x(Vector::Unit(2, 0), BasisTag::kEuclidean);
  const StateVector y(Vector::Unit(2, 1), BasisTag::kEuclidean);
  EXPECT_EQ(inner_product(x, y, ip), 0.0);
  EXPECT_EQ(inner_product(x, x, ip), 1.0);
}

GTEST_TEST(InnerProductTest, WeightedProduct) {
  Matrix P(2, 2);
  P << 2, 0,
       0, 1;
  const InnerProduct ip(P);
  const StateVector x(Eigen::Vector2d(1, 1), BasisTag::kEuclidean);
  EXPECT_DOUBLE_EQ(inner_product(x, x, ip), 3.0);
  EXPECT_DOUBLE_EQ(ip.norm_sq(x.coords()), 3.0);
}

GTEST_TEST(InnerProductTest, DimensionMismatchNamesBoth) {
  const InnerProduct ip = InnerProduct::identity(3);
  const StateVector x(Vector::Ones(3), BasisTag::kEuclidean);
  const StateVector y(Vector::Ones(2), BasisTag::kEuclidean);
  try {
    inner_product(x, y, ip);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

GTEST_TEST(InnerProductTest, RejectsIndefiniteAndAsymmetricWeights) {
  Matrix indefinite(2, 2);
  indefinite << 1, 0,
                0, -1;
  EXPECT_THROW(InnerProduct{indefinite}, Error);
  Matrix asym(2, 2);
  asym << 1, 0.5,
          0, 1;
  EXPECT_THROW(InnerProduct{asym}, Error);
}

GTEST_TEST(InnerProductTest, SymmetryPositivityCauchySchwarz) {
  Rng rng(7);
  Matrix R = Matrix::Random(4, 4);
  const InnerProduct ip(Matrix(R * R.transpose() + Matrix::Identity(4, 4)));
  for (int s = 0; s < 100; ++s) {
    const Vector x = random_normal(4, rng), y = random_normal(4, rng);
    EXPECT_NEAR(ip.dot(x, y), ip.dot(y, x), 1e-12 * (1 + std::abs(ip.dot(x, y))));
    EXPECT_GT(ip.dot(x, x), 0.0);
    EXPECT_LE(std::abs(ip.dot(x, y)), ip.norm(x) * ip.norm(y) * (1 + 1e-12));
    EXPECT_NEAR(ip.norm_sq(x), (ip.factor() * x).squaredNorm(), 1e-10 * ip.norm_sq(x));
    EXPECT_LT((ip.solve_weight(ip.apply_weight(x)) - x).norm(), 1e-10 * x.norm());
  }
}

GTEST_TEST(LinearOperatorTest, AdjointIdentity) {
  Rng rng(3);
  Matrix R = Matrix::Random(3, 3);
  const InnerProduct ip(Matrix(R * R.transpose() + 0.5 * Matrix::Identity(3, 3)));
  const LinearOperator M = LinearOperator::dense(Matrix::Random(3, 3));
  const LinearOperator Madj = M.adjoint(ip);
  for (int s = 0; s < 20; ++s) {
    const Vector x = random_normal(3, rng), y = random_normal(3, rng);
    EXPECT_NEAR(ip.dot(M.apply(x), y), ip.dot(x, Madj.apply(y)), 1e-10);
  }
}

GTEST_TEST(LinearOperatorTest, ModalBlockAndSum) {
  Eigen::Matrix2d b1, b2;
  b1 << 0, 1, -1, 0;
  b2 << 2, 0, 0, 3;
  const LinearOperator blocks = LinearOperator::modal_block({b1, b2});
  EXPECT_EQ(blocks.kind(), OperatorKind::kModalBlock);
  const Vector x = Eigen::Vector4d(1, 2, 3, 4);
  EXPECT_LT((blocks.apply(x) - blocks.matrix() * x).norm(), 1e-15);
  const LinearOperator sum = LinearOperator::sum({blocks, LinearOperator::dense(Matrix::Identity(4, 4))});
  EXPECT_LT((sum.apply(x) - (blocks.matrix() * x + x)).norm(), 1e-15);
  EXPECT_THROW(LinearOperator::sum({blocks, LinearOperator::dense(Matrix::Identity(3, 3))}), Error);
}

GTEST_TEST(LinearOperatorTest, OperatorNormInWeightedGeometry) {
  Matrix P(2, 2);
  P << 4, 0,
       0, 1;
  const InnerProduct ip(P);
  // M e₁ = e₂: ‖e₂‖_P / ‖e₁‖_P = 1/2.
  Matrix M(2, 2);
  M << 0, 0,
       1, 0;
  EXPECT_NEAR(operator_norm(M, ip), 0.5, 1e-14);
  EXPECT_NEAR(operator_norm(M, InnerProduct::identity(2)), 1.0, 1e-14);
}

GTEST_TEST(NonlinearOperatorTest, LipschitzOfAbsoluteValue) {
  NonlinearOperator op;
  op.dimension = 1;
  op.map = [](const Vector& z) { return Vector(z.cwiseAbs()); };
  op.lipschitz_global = 1.0;
  Rng rng(1);
  const double L = estimate_lipschitz(op, 1.0, 2000, rng);
  EXPECT_LE(L, 1.0 + 1e-12);
  EXPECT_GE(L, 0.999);
}

GTEST_TEST(NonlinearOperatorTest, LipschitzOfLinearMatchesSvd) {
  Matrix M(3, 3);
  M << 1, 2, 0,
       0, 1, 0,
       0, 0, 0.5;
  const InnerProduct ip = InnerProduct::identity(3);
  const NonlinearOperator op = NonlinearOperator::from_linear(LinearOperator::dense(M), ip);
  const double svd_norm = Eigen::JacobiSVD<Matrix>(M).singularValues()[0];
  EXPECT_NEAR(*op.lipschitz_global, svd_norm, 1e-12);
  Rng rng(2);
  const double L = estimate_lipschitz(op, 1.0, 4000, rng);
  EXPECT_LE(L, svd_norm + 1e-9);
  EXPECT_GE(L, 0.99 * svd_norm);
}

GTEST_TEST(NonlinearOperatorTest, DeclaredConstantTooSmallIsRejected) {
  NonlinearOperator op;
  op.dimension = 2;
  op.map = [](const Vector& z) { return Vector(3.0 * z); };
  op.lipschitz_global = 1.0;
  Rng rng(5);
  try {
    estimate_lipschitz(op, 1.0, 200, rng);
    FAIL() << "expected a precondition error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
  }
}

GTEST_TEST(NonlinearOperatorTest, NonFiniteOutputCarriesPoint) {
  NonlinearOperator op;
  op.dimension = 1;
  op.map = [](const Vector& z) { return Vector(z.array().log()); };
  try {
    op(Vector::Constant(1, -1.0));
    FAIL() << "expected an evaluation error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEvaluation);
    EXPECT_NE(std::string(e.what()).find("-1"), std::string::npos);
  }
}

GTEST_TEST(ControlOperatorTest, PositivityFlagFromSymmetricPart) {
  Matrix B(2, 2);
  B << 1, 4,
       0, 4;
  const ControlOperator op(LinearOperator::dense(B), InnerProduct::identity(2));
  EXPECT_TRUE(op.positive());
  Matrix indefinite(2, 2);
  indefinite << 1, 0,
                0, -1;
  EXPECT_FALSE(ControlOperator(LinearOperator::dense(indefinite), InnerProduct::identity(2)).positive());
}

GTEST_TEST(SystemModelTest, SemigroupClassChecks) {
  Rng rng(11);
  Matrix skew(2, 2);
  skew << 0, 1,
         -1, 0;
  SystemModel rot = make_dense_model("rot", skew, Matrix::Identity(2, 2), std::nullopt,
                                     SemigroupClass::kIsometry);
  EXPECT_TRUE(semigroup_class_consistent(rot, 200, rng));
  Matrix jordan(2, 2);
  jordan << 0, 1,
            0, 0;
  SystemModel j = make_dense_model("jordan", jordan, Matrix::Identity(2, 2), std::nullopt,
                                   SemigroupClass::kContraction);
  EXPECT_FALSE(semigroup_class_consistent(j, 200, rng));
  EXPECT_GT(sampled_dissipation(j, 200, rng), 0.0);
}

GTEST_TEST(SystemModelTest, MismatchedShapesAreRejected) {
  EXPECT_THROW(make_dense_model("bad", Matrix::Zero(2, 2), Matrix::Zero(3, 3)), Error);
  EXPECT_THROW(make_dense_model("bad", Matrix::Zero(2, 3), Matrix::Zero(2, 3)), Error);
}

}  // namespace
}  // namespace cstab
