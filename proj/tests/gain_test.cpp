#include "cstab/gain.hpp"

#include <gtest/gtest.h>

#include "cstab/simulator.hpp"

namespace cstab {
namespace {

Certificate make_cert(double delta, double T) {
  Certificate c;
  c.variant = Variant::kQuadratic;
  c.delta = delta;
  c.horizon_T = T;
  c.certified = true;
  return c;
}

GTEST_TEST(KTildeTest, Values) {
  EXPECT_EQ(k_tilde(0.0, 1.0, 1.0), 0.0);
  EXPECT_NEAR(k_constant(1.0, 1.0, std::log(2.0)), 2.0, 1e-14);
  EXPECT_NEAR(k_tilde(1.0, 1.0, std::log(2.0)), 12.0, 1e-13);
}

GTEST_TEST(KTildeTest, MonotoneInEachArgument) {
  const std::vector<double> grid{0.1, 0.5, 1.0, 2.0, 3.0};
  for (double a : grid) {
    for (double b : grid) {
      for (std::size_t i = 1; i < grid.size(); ++i) {
        EXPECT_LE(k_tilde(grid[i - 1], a, b), k_tilde(grid[i], a, b));
        EXPECT_LE(k_tilde(a, grid[i - 1], b), k_tilde(a, grid[i], b));
        EXPECT_LE(k_tilde(a, b, grid[i - 1]), k_tilde(a, b, grid[i]));
      }
    }
  }
}

GTEST_TEST(SynthesizeUniformTest, IdentityControlDecaysFasterThanEnvelope) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const Certificate cert = certify_quadratic(model, 1.0);
  const GainEnvelope env = synthesize_uniform(cert, 1.0);
  EXPECT_GT(env.lambda_max, 0.0);
  EXPECT_GT(env.lambda, 0.0);
  EXPECT_LT(env.lambda, env.lambda_max);
  EXPECT_GT(env.gamma, 0.0);
  EXPECT_LT(env.gamma, 1.0);
  EXPECT_NEAR(env.sigma, -std::log(env.gamma) / 2.0, 1e-15);
  EXPECT_LT(env.lambda, env.delta / (env.T * env.K_tilde));
  EXPECT_GE(env.M_env, 1.0);
  // ż = −λz decays at exactly λ, which must beat the conservative σ.
  const Trajectory traj = simulate(model, ControlLaw::constant(env.lambda), Eigen::Vector2d(1, -2), 200.0);
  const EnvelopeReport rep = envelope_check(traj, env);
  EXPECT_TRUE(rep.pass);
  ASSERT_TRUE(rep.fit.has_value());
  EXPECT_NEAR(rep.fit->rate, env.lambda, 1e-7);
  EXPECT_GE(rep.fit->rate, env.sigma);
}

GTEST_TEST(SynthesizeUniformTest, ZeroDeltaHasNoGain) {
  try {
    synthesize_uniform(make_cert(0.0, 1.0), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoAdmissibleGain);
  }
}

GTEST_TEST(SynthesizeUniformTest, ControlBound) {
  UniformOptions opt;
  opt.v_max = 1e-4;
  const GainEnvelope env = synthesize_uniform(make_cert(1.0, 1.0), 1.0, opt);
  EXPECT_DOUBLE_EQ(env.lambda_max, 1e-4);
  EXPECT_DOUBLE_EQ(env.lambda, 0.99e-4);
  opt.v_max = 0.0;
  try {
    synthesize_uniform(make_cert(1.0, 1.0), 1.0, opt);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInfeasibleConstraint);
  }
}

GTEST_TEST(SynthesizeUniformTest, GammaMinimumMatchesGridSearch) {
  int interior = 0;
  for (double delta : {0.5, 1.0, 3.0}) {
    for (double T : {0.5, 1.0, 2.0}) {
      const GainEnvelope env = synthesize_uniform(make_cert(delta, T), 0.7);
      const double star = delta / (2 * T * env.K_tilde);
      // Grid search of the quadratic γ over (0, δ/(TK̃)), where γ < 1.
      const int cells = 10000;
      const double upper = delta / (T * env.K_tilde);
      const double h = upper / cells;
      double best_l = 0, best_g = 2;
      for (int k = 1; k < cells; ++k) {
        const double l = k * h;
        const double g = env.gamma_at(l);
        EXPECT_LT(g, 1.0);
        if (g < best_g) {
          best_g = g;
          best_l = l;
        }
      }
      EXPECT_NEAR(best_l, star, h);
      // Over the admissible interval γ ∈ (0, 1), and σ at the chosen gain
      // dominates every sampled admissible gain.
      const double ha = env.lambda_max / cells;
      for (int k = 1; k < cells; ++k) {
        const double l = k * ha;
        EXPECT_GT(env.gamma_at(l), 0.0);
        EXPECT_LT(env.gamma_at(l), 1.0);
        if (star < env.lambda_max) EXPECT_GE(env.sigma + 1e-15, env.sigma_at(l));
      }
      if (star < env.lambda_max) {
        ++interior;
        EXPECT_NEAR(env.lambda, star, 1e-15);
      } else {
        EXPECT_NEAR(env.lambda, 0.99 * env.lambda_max, 1e-15);
      }
    }
  }
  EXPECT_GT(interior, 0);
}

GTEST_TEST(SynthesizeLocalTest, ScalarIdentity) {
  const double T = 2.0;
  const GainEnvelope env = synthesize_local(make_cert(T, T), 1.0, 1.0, true);
  // δ = T < 2TL_R, so η = ∞ and λ_R = 1/(2T).
  EXPECT_TRUE(std::isinf(env.eta2));
  EXPECT_NEAR(env.lambda_max, 1 / (2 * T), 1e-15);
  EXPECT_NEAR(env.lambda, 1 / (4 * T), 1e-15);
  EXPECT_NEAR(env.M_env, 1 / std::sqrt(env.gamma), 1e-15);
  ASSERT_TRUE(env.radius.has_value());
}

GTEST_TEST(SynthesizeLocalTest, RadiusIrrelevantForGlobalLipschitz) {
  const GainEnvelope a = synthesize_local(make_cert(1.5, 1.0), 2.0, 1.0, true);
  const GainEnvelope b = synthesize_local(make_cert(1.5, 1.0), 2.0, 100.0, true);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.sigma, b.sigma);
  EXPECT_EQ(a.M_env, b.M_env);
}

GTEST_TEST(SynthesizeLocalTest, RequiresPositiveB) {
  try {
    synthesize_local(make_cert(1.0, 1.0), 1.0, 1.0, false);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kPrecondition);
    EXPECT_NE(std::string(e.what()).find("positive"), std::string::npos);
  }
}

GTEST_TEST(SynthesizeLocalTest, FormulasDifferOnlyInTheConstant) {
  for (double L : {0.5, 1.0, 2.0}) {
    for (double T : {0.5, 1.0, 3.0}) {
      const Certificate cert = make_cert(1.0, T);
      const GainEnvelope u = synthesize_uniform(cert, L);
      const GainEnvelope l = synthesize_local(cert, L, 1.0, true);
      EXPECT_GT(u.lambda_max, 0.0);
      EXPECT_GT(l.lambda_max, 0.0);
      for (double x : {0.1, 0.5, 0.9}) {
        const double lam = x * std::min(u.lambda_max, l.lambda_max);
        EXPECT_NEAR(u.gamma_at(lam), 1 - 2 * lam * (1.0 - lam * T * u.K_tilde), 1e-14);
        EXPECT_NEAR(l.gamma_at(lam), 1 - 2 * lam * (1.0 - 2 * lam * T * T * L * L), 1e-14);
      }
    }
  }
}

GTEST_TEST(EnvelopeCheckTest, ZeroStatePasses) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const GainEnvelope env = synthesize_uniform(make_cert(1.0, 1.0), 1.0);
  const Trajectory traj = simulate(model, ControlLaw::constant(env.lambda), Vector::Zero(2), 10.0);
  EXPECT_TRUE(envelope_check(traj, env).pass);
}

GTEST_TEST(EnvelopeCheckTest, MismatchedControlRejected) {
  const SystemModel model = make_dense_model("id", Matrix::Zero(2, 2), Matrix::Identity(2, 2));
  const GainEnvelope env = synthesize_uniform(make_cert(1.0, 1.0), 1.0);
  const Trajectory traj = simulate(model, ControlLaw::constant(2 * env.lambda), Vector::Ones(2), 1.0);
  EXPECT_THROW(envelope_check(traj, env), Error);
}

GTEST_TEST(EnvelopeCheckTest, JordanCounterexampleFails) {
  Matrix A(2, 2);
  A << 0, 1,
       0, 0;
  const SystemModel model = make_dense_model("jordan", A, Matrix(Eigen::Vector2d(1, -1).asDiagonal()));
  const Certificate cert = certify_quadratic(model, 20.0);
  ASSERT_GT(cert.delta, 0.0);
  const GainEnvelope env = synthesize_uniform(cert, 1.0);
  SimulationOptions opt;
  opt.dt_out = 10.0;
  const Trajectory traj = simulate(model, ControlLaw::constant(env.lambda), Eigen::Vector2d(1, 1),
                                   5.0 / env.lambda, opt);
  EXPECT_FALSE(envelope_check(traj, env).pass);
}

}  // namespace
}  // namespace cstab
