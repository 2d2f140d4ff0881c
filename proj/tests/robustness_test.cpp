#include "cstab/robustness.hpp"

#include <gtest/gtest.h>

#include "cstab/certifier.hpp"
#include "cstab/simulator.hpp"

namespace cstab {
namespace {

GainEnvelope uniform_envelope(const SystemModel& model, double T, double L) {
  return synthesize_uniform(certify_quadratic(model, T), L);
}

GTEST_TEST(PerturbedDeltaTest, Values) {
  EXPECT_EQ(perturbed_delta(1.3, 2.0, 0.7, 0.0), 1.3);
  EXPECT_NEAR(perturbed_delta(1.0, 1.0, 1.0, 0.2), 0.56, 1e-15);
  double prev = perturbed_delta(1.0, 2.0, 1.5, 0.0);
  for (int k = 1; k <= 50; ++k) {
    const double next = perturbed_delta(1.0, 2.0, 1.5, 0.02 * k);
    EXPECT_LT(next, prev);
    prev = next;
  }
  EXPECT_LT(prev, 0.0);
  EXPECT_THROW(perturbed_delta(0.0, 1.0, 1.0, 0.1), Error);
  EXPECT_THROW(perturbed_delta(1.0, 1.0, 1.0, -0.1), Error);
}

GTEST_TEST(DynamicRadiusTest, Values) {
  // λK̃ = 0.5 with δ = T = L_B = 1.
  const RadiusResult r = dynamic_radius(1.0, 1.0, 1.0, 0.25, 2.0);
  ASSERT_TRUE(r.r.has_value());
  EXPECT_NEAR(*r.r, -1 + std::sqrt(1.5), 1e-15);
  EXPECT_NEAR(*r.r, 0.2247, 5e-5);
  EXPECT_DOUBLE_EQ(r.radicand, 1.5);
}

GTEST_TEST(DynamicRadiusTest, SmallGainLimit) {
  const double delta = 0.8, T = 2.0, L = 3.0;
  const double limit = (-1 + std::sqrt(1 + delta / (T * L))) / T;
  EXPECT_NEAR(*dynamic_radius(delta, T, L, 1e-12, 1.0).r, limit, 1e-11);
}

GTEST_TEST(DynamicRadiusTest, NoMarginCases) {
  // λTK̃ ≥ δ: radicand ≤ 1.
  const RadiusResult none = dynamic_radius(1.0, 1.0, 1.0, 1.0, 1.0);
  EXPECT_FALSE(none.r.has_value());
  EXPECT_FALSE(none.reason.empty());
  const RadiusResult negative = dynamic_radius(1.0, 1.0, 1.0, 1.0, 5.0);
  EXPECT_FALSE(negative.r.has_value());
  EXPECT_LT(negative.radicand, 0.0);
  EXPECT_NE(negative.reason.find("negative"), std::string::npos);
}

GTEST_TEST(DynamicRadiusTest, RootOfPPolyAndPositivityMargin) {
  // The positive root of P(X) = (T³L)X² + 2(T²L)X + λTK̃ − δ, by the
  // numerically stable quadratic formula.
  for (auto [delta, T, L, lambda, K] :
       std::vector<std::tuple<double, double, double, double, double>>{
           {1.0, 1.0, 1.0, 0.25, 2.0}, {2.0, 2.0, 0.5, 0.1, 3.0}, {0.3, 5.0, 4.0, 1e-3, 7.0}}) {
    const RadiusResult r = dynamic_radius(delta, T, L, lambda, K);
    ASSERT_TRUE(r.r.has_value());
    const PPoly P = p_poly(delta, T, L, lambda, K);
    EXPECT_DOUBLE_EQ(P.c2, T * T * T * L);
    EXPECT_DOUBLE_EQ(P.c1, 2 * T * T * L);
    EXPECT_DOUBLE_EQ(P.c0, lambda * T * K - delta);
    const double disc = P.c1 * P.c1 - 4 * P.c2 * P.c0;
    const double root = -2 * P.c0 / (P.c1 + std::sqrt(disc));
    EXPECT_NEAR(*r.r, root, 1e-12 * std::max(1.0, root));
    EXPECT_LE(std::abs(P(*r.r)), 1e-9);
    for (int k = 1; k < 100; ++k) {
      const double x = *r.r * k / 100.0;
      EXPECT_GT(perturbed_delta(delta, T, L, x) - lambda * T * K, 0.0) << x;
      EXPECT_LT(P(x), 0.0);
    }
  }
}

GTEST_TEST(JointBoundsTest, Fields) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const GainEnvelope env = uniform_envelope(model, 1.0, 1.0);
  const RadiusResult r = dynamic_radius(env.delta, env.T, 1.0, env.lambda, env.K_tilde);
  ASSERT_TRUE(r.r.has_value());
  const JointBounds b = joint_bounds(env, 1.0, 0.5 * *r.r);
  const PPoly P = p_poly(env.delta, env.T, 1.0, env.lambda, env.K_tilde);
  EXPECT_DOUBLE_EQ(b.Lb_bound, -P(0.5 * *r.r) / env.T);
  EXPECT_GT(b.Lb_bound, 0.0);
  EXPECT_DOUBLE_EQ(b.Ln_bound, env.sigma / env.M_env);
  EXPECT_DOUBLE_EQ(b.combined_bound, env.sigma / env.M_env);
  EXPECT_DOUBLE_EQ(b.separate_additive, env.sigma / (2 * env.M_env));
  EXPECT_DOUBLE_EQ(b.separate_control, env.sigma * env.T * env.K_tilde / (2 * env.M_env * env.delta));
  EXPECT_EQ(b.source, "envelope");
  // r̃ → 0: −P(0)/T = (δ − λTK̃)/T.
  EXPECT_NEAR(joint_bounds(env, 1.0, 0.0).Lb_bound,
              (env.delta - env.lambda * env.T * env.K_tilde) / env.T, 1e-15);
  EXPECT_THROW(joint_bounds(env, 1.0, *r.r), Error);
  EXPECT_THROW(joint_bounds(env, 1.0, 2 * *r.r), Error);
}

GTEST_TEST(JointBoundsTest, EmpiricalDecayIsLabelled) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const GainEnvelope env = uniform_envelope(model, 1.0, 1.0);
  const JointBounds b = joint_bounds(env, 1.0, 0.0, EmpiricalDecay{env.lambda, 1.0});
  EXPECT_EQ(b.source, "empirical");
  EXPECT_DOUBLE_EQ(b.Ln_bound, env.lambda);
}

GTEST_TEST(JointBoundsTest, SeparateBoundsImplyCombined) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const Certificate cert = certify_quadratic(model, 1.0);
  const GainEnvelope base = synthesize_uniform(cert, 1.0);
  const double lambda_cap = base.delta / (base.T * base.K_tilde);
  for (int k = 1; k < 40; ++k) {
    UniformOptions opts;
    opts.lambda = lambda_cap * k / 40.0;
    const GainEnvelope env = synthesize_uniform(cert, 1.0, opts);
    const JointBounds b = joint_bounds(env, 1.0, 0.0);
    EXPECT_LE(b.separate_additive + env.lambda * b.separate_control, b.combined_bound * (1 + 1e-12));
  }
}

GTEST_TEST(JointBoundsTest, LocalEnvelopeRejected) {
  GainEnvelope env;
  env.mode = EnvelopeMode::kLocal;
  EXPECT_THROW(joint_bounds(env, 1.0, 0.0), Error);
}

GTEST_TEST(WaveClosedFormTest, Values) {
  const WaveClosedForms w = wave_closed_form_bounds(0.1);
  EXPECT_NEAR(w.gamma, 0.88, 1e-15);
  EXPECT_NEAR(w.p_bound, 0.0300, 5e-5);
  EXPECT_NEAR(w.q_bound, 0.1199, 5e-5);
  EXPECT_NEAR(w.q_bound, 4 * w.p_bound, 1e-15);
  EXPECT_THROW(wave_closed_form_bounds(0.25), Error);
  EXPECT_THROW(wave_closed_form_bounds(0.0), Error);
  for (int k = 1; k < 25; ++k) {
    const WaveClosedForms v = wave_closed_form_bounds(0.01 * k);
    EXPECT_GT(v.gamma, 0.0);
    EXPECT_LT(v.gamma, 1.0);
    EXPECT_GT(v.p_bound, 0.0);
  }
}

GTEST_TEST(PerturbationKindTest, RoundTrip) {
  for (auto k : {PerturbationKind::kDynamic, PerturbationKind::kControl, PerturbationKind::kAdditive}) {
    EXPECT_EQ(perturbation_kind_from_string(to_string(k)), k);
  }
  EXPECT_THROW(perturbation_kind_from_string("other"), Error);
}

class ValidateMarginTest : public ::testing::Test {
 protected:
  SystemModel model_ = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2),
                                        std::nullopt, SemigroupClass::kIsometry);
  GainEnvelope env_ = uniform_envelope(model_, 1.0, 1.0);
};

TEST_F(ValidateMarginTest, ZeroPerturbationMatchesNominal) {
  ValidationOptions opts;
  Vector z0(2);
  z0 << 0.6, 0.8;
  opts.z0 = z0;
  opts.t_end = 10.0;
  const ValidationRun run = validate_margin(
      model_, env_, LinearOperator::dense(Matrix::Zero(2, 2)).with_operator_norm(0.0),
      PerturbationKind::kAdditive, true, opts);
  const DecayFit nominal = fit_decay(simulate(model_, ControlLaw::constant(env_.lambda), z0, 10.0));
  EXPECT_NEAR(run.fit.rate, nominal.rate, 1e-9);
  EXPECT_NEAR(run.fit.rate, env_.lambda, 1e-6);
  ASSERT_TRUE(run.verdict.has_value());
  EXPECT_TRUE(*run.verdict);
}

TEST_F(ValidateMarginTest, AdditiveRateBeatsPredictedRate) {
  // n(z) = L_n R z with R a rotation: rate stays ≥ σ − M L_n.
  Matrix R(2, 2);
  R << 0, -1,
       1, 0;
  const double Ln = 0.5 * env_.sigma / env_.M_env;
  ValidationOptions opts;
  opts.t_end = 20.0;
  const ValidationRun run = validate_margin(
      model_, env_, LinearOperator::dense(Ln * R).with_operator_norm(Ln), PerturbationKind::kAdditive,
      true, opts);
  ASSERT_TRUE(run.predicted_rate.has_value());
  EXPECT_NEAR(*run.predicted_rate, env_.sigma - env_.M_env * Ln, 1e-15);
  EXPECT_GE(run.fit.rate, 0.9 * *run.predicted_rate);
  EXPECT_TRUE(*run.verdict);
}

TEST_F(ValidateMarginTest, OutsideProbeIsInformational) {
  const double big = 10.0;
  const ValidationRun run = validate_margin(
      model_, env_, LinearOperator::dense(big * Matrix::Identity(2, 2)).with_operator_norm(big),
      PerturbationKind::kAdditive, false);
  EXPECT_FALSE(run.verdict.has_value());
  EXPECT_EQ(to_json(run)["verdict"], "informational");
}

TEST_F(ValidateMarginTest, DynamicPerturbationMustBeDissipative) {
  try {
    validate_margin(model_, env_,
                    LinearOperator::dense(0.01 * Matrix::Identity(2, 2)).with_operator_norm(0.01),
                    PerturbationKind::kDynamic, true);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
    EXPECT_NE(std::string(e.what()).find("P_L"), std::string::npos);
  }
  Matrix S(2, 2);
  S << 0, 0.01,
       -0.01, 0;
  const ValidationRun run = validate_margin(model_, env_, LinearOperator::dense(S).with_operator_norm(0.01),
                                            PerturbationKind::kDynamic, true);
  EXPECT_TRUE(*run.verdict);
}

TEST_F(ValidateMarginTest, MissingMetadataRejected) {
  EXPECT_THROW(validate_margin(model_, env_, LinearOperator::dense(Matrix::Zero(2, 2)),
                               PerturbationKind::kAdditive, true),
               Error);
  NonlinearOperator n;
  n.dimension = 2;
  n.map = [](const Vector& z) { return Vector(0.0 * z); };
  EXPECT_THROW(validate_margin(model_, env_, n, PerturbationKind::kAdditive, true), Error);
}

TEST_F(ValidateMarginTest, ControlPerturbationAddsToB) {
  const SystemModel p = with_control_perturbation(
      model_, LinearOperator::dense(-0.25 * Matrix::Identity(2, 2)).with_operator_norm(0.25));
  Vector z(2);
  z << 1, 2;
  EXPECT_LE((p.B.apply(z) - 0.75 * z).cwiseAbs().maxCoeff(), 1e-15);
  ValidationOptions opts;
  opts.t_end = 10.0;
  const ValidationRun run = validate_margin(
      model_, env_, LinearOperator::dense(-0.25 * Matrix::Identity(2, 2)).with_operator_norm(0.25),
      PerturbationKind::kControl, true, opts);
  EXPECT_NEAR(run.fit.rate, 0.75 * env_.lambda, 1e-6);
}

GTEST_TEST(AnalyzeRobustnessTest, ReportIsSortedAndDeterministic) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(3, 3), Matrix::Identity(3, 3),
                                             std::nullopt, SemigroupClass::kIsometry);
  const GainEnvelope env = uniform_envelope(model, 1.0, 1.0);
  RobustnessOptions opts;
  opts.seed = 4;
  const RobustnessReport a = analyze_robustness(model, env, 1.0, opts);
  const RobustnessReport b = analyze_robustness(model, env, 1.0, opts);
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  ASSERT_EQ(a.runs.size(), 6u);
  for (std::size_t i = 1; i < a.runs.size(); ++i) EXPECT_LT(a.runs[i - 1].key, a.runs[i].key);
  for (const ValidationRun& r : a.runs) {
    if (r.inside) {
      ASSERT_TRUE(r.verdict.has_value());
      EXPECT_TRUE(*r.verdict) << r.key;
    } else {
      EXPECT_FALSE(r.verdict.has_value());
    }
  }
  const nlohmann::json j = to_json(a);
  EXPECT_EQ(j["P_poly"].size(), 3u);
  EXPECT_EQ(j["separate_bounds"].size(), 2u);
}

GTEST_TEST(AnalyzeRobustnessTest, NoMarginIsReported) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  GainEnvelope env = uniform_envelope(model, 1.0, 1.0);
  env.lambda = 10.0;  // λTK̃ ≫ δ
  const RobustnessReport r = analyze_robustness(model, env, 1.0);
  ASSERT_TRUE(r.bounds_error.has_value());
  EXPECT_FALSE(r.bounds.radius.r.has_value());
  EXPECT_TRUE(r.runs.empty());
  const nlohmann::json j = to_json(r);
  EXPECT_TRUE(j["r"].is_null());
  EXPECT_TRUE(j.contains("r_reason"));
}

GTEST_TEST(AnalyzeRobustnessTest, ScalarModelUsesDissipativeDirection) {
  // A 1x1 skew matrix is zero, so the dynamic probe must still be nonzero and admissible.
  const SystemModel model = make_dense_model("scalar", Matrix::Zero(1, 1), Matrix::Identity(1, 1));
  const RobustnessReport r = analyze_robustness(model, uniform_envelope(model, 1.0, 1.0), 1.0);
  ASSERT_FALSE(r.bounds_error.has_value());
  ASSERT_EQ(r.runs.size(), 6u);
  for (const ValidationRun& run : r.runs) {
    EXPECT_TRUE(std::isfinite(run.magnitude)) << run.key;
    EXPECT_GT(run.magnitude, 0.0) << run.key;
    if (run.inside) EXPECT_TRUE(*run.verdict) << run.key;
  }
}

GTEST_TEST(WavePerturbedTest, DecaysAtHalfTheBounds) {
  gallery::GalleryOptions o;
  o.modes = 8;
  const DecayFit f = simulate_perturbed_decay(gallery::load("wave-perturbed", o), 1);
  EXPECT_GT(f.rate, 0.0);
  EXPECT_GE(f.r_squared, 0.99);
  EXPECT_THROW(simulate_perturbed_decay(gallery::load("identity-B"), 1), Error);
}

}  // namespace
}  // namespace cstab
