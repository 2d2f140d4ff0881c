#include "cstab/simulator.hpp"

#include <sstream>

#include <gtest/gtest.h>

#include "oracles.hpp"

namespace cstab {
namespace {

SystemModel identity_model(Index n) {
  return make_dense_model("id", Matrix::Zero(n, n), Matrix::Identity(n, n));
}

GTEST_TEST(SimulateTest, ConstantControlScalarDecay) {
  const SystemModel model = identity_model(2);
  const Vector z0 = Eigen::Vector2d(1, -3);
  const double lambda = 0.7;
  SimulationOptions opt;
  opt.snapshot_times = {0.5, 1.0, 4.0};
  const Trajectory traj = simulate(model, ControlLaw::constant(lambda), z0, 5.0, opt);
  ASSERT_EQ(traj.snapshots.size(), 3u);
  for (const auto& [t, z] : traj.snapshots) {
    EXPECT_LT((z - std::exp(-lambda * t) * z0).norm(), 1e-8);
  }
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    EXPECT_NEAR(traj.norms[k], std::exp(-lambda * traj.times[k]) * z0.norm(), 1e-8);
    EXPECT_EQ(traj.controls[k], -lambda);
  }
  EXPECT_NEAR(traj.initial_norm(), z0.norm(), 1e-12);
  for (std::size_t k = 1; k < traj.times.size(); ++k) EXPECT_GT(traj.times[k], traj.times[k - 1]);
}

GTEST_TEST(SimulateTest, IsometryWithZeroControl) {
  Matrix J(2, 2);
  J << 0, 2,
      -2, 0;
  const SystemModel model = make_dense_model("rot", J, Matrix::Identity(2, 2));
  const Trajectory traj = simulate(model, ControlLaw::constant(0.0), Eigen::Vector2d(3, 4), 20.0);
  for (double n : traj.norms) EXPECT_NEAR(n, 5.0, 1e-8 * 5);
}

GTEST_TEST(SimulateTest, AgreesWithExponentialAtCheckpoints) {
  std::srand(12);
  Matrix R = Matrix::Random(3, 3);
  const Matrix A = R - R.transpose();
  Matrix S = Matrix::Random(3, 3);
  const Matrix B = S * S.transpose();
  const SystemModel model = make_dense_model("m", A, B);
  const double lambda = 0.3;
  const Vector z0 = Eigen::Vector3d(1, 0.5, -0.25);
  SimulationOptions opt;
  for (int k = 1; k <= 10; ++k) opt.snapshot_times.push_back(0.4 * k);
  const Trajectory traj = simulate(model, ControlLaw::constant(lambda), z0, 4.0, opt);
  ASSERT_EQ(traj.snapshots.size(), 10u);
  for (const auto& [t, z] : traj.snapshots) {
    const Vector ref = oracle::taylor_exp(A - lambda * B, t) * z0;
    EXPECT_LT((z - ref).norm(), 1e-7);
  }
  // Contraction A with positive B: the norm never increases beyond drift.
  EXPECT_LE(max_norm_drift(traj), 1e-7);
  EXPECT_TRUE(dissipation_audit(traj).pass);
  EXPECT_TRUE(growth_bound_audit(traj).pass);
}

GTEST_TEST(SimulateTest, JordanDoesNotDecay) {
  Matrix A(2, 2);
  A << 0, 1,
       0, 0;
  const SystemModel model = make_dense_model("jordan", A, Matrix(Eigen::Vector2d(1, -1).asDiagonal()));
  for (double lambda : {0.5, -0.5}) {
    const Trajectory traj = simulate(model, ControlLaw::constant(lambda), Eigen::Vector2d(1, 1), 20.0);
    EXPECT_GT(traj.norms.back(), traj.norms.front());
  }
}

GTEST_TEST(SimulateTest, QuadraticLawIsPowerLaw) {
  const Trajectory traj = simulate(identity_model(1), ControlLaw::quadratic(), Vector::Ones(1), 100.0);
  // Exact solution: ‖z‖² = 1/(1/‖z₀‖² + 2t).
  for (std::size_t k = 0; k < traj.times.size(); k += 97) {
    EXPECT_NEAR(traj.norms[k], 1 / std::sqrt(1 + 2 * traj.times[k]), 1e-8);
  }
  const double slope = fit_power_law(traj, 10.0, 100.0);
  EXPECT_NEAR(slope, -0.5, 0.05);
}

GTEST_TEST(SimulateTest, NormalizedLawIsExponential) {
  const double rho = 0.4;
  const Trajectory traj = simulate(identity_model(2), ControlLaw::normalized(rho), Eigen::Vector2d(2, 1), 10.0);
  const DecayFit fit = fit_decay(traj);
  EXPECT_NEAR(fit.rate, rho, 1e-7);
  EXPECT_EQ(ControlLaw::normalized(rho).value(0.0, 0.0), 0.0);
}

GTEST_TEST(SimulateTest, SwitchingLawLocatesSignChange) {
  const SystemModel model = make_dense_model("split", Matrix::Zero(2, 2),
                                             Matrix(Eigen::Vector2d(1, -1).asDiagonal()));
  const double rho = 0.5;
  const Vector z0 = Eigen::Vector2d(2, 1);
  const Trajectory traj = simulate(model, ControlLaw::switching(rho), z0, 5.0);
  EXPECT_GE(traj.stats.events, 1);
  // ⟨Bz,z⟩ = z₁² − z₂² reaches 0 at t* = ln 2 / (2ρ); the control is off afterwards.
  const double t_star = std::log(2.0) / (2 * rho);
  const Vector expected = Eigen::Vector2d(2 * std::exp(-rho * t_star), std::exp(rho * t_star));
  EXPECT_LT((traj.final_state - expected).norm(), 1e-8);
  EXPECT_EQ(traj.controls.back(), 0.0);
}

GTEST_TEST(SimulateTest, BlowUpIsReportedAsDivergence) {
  const Trajectory traj = simulate(identity_model(1), ControlLaw::constant(-10.0), Vector::Ones(1), 5.0);
  EXPECT_TRUE(traj.diverged);
  EXPECT_LT(traj.times.back(), 5.0);
}

GTEST_TEST(SimulateTest, InvalidInputs) {
  EXPECT_THROW(simulate(identity_model(2), ControlLaw::constant(1.0), Vector::Ones(3), 1.0), Error);
  EXPECT_THROW(simulate(identity_model(2), ControlLaw::constant(1.0), Vector::Ones(2), 0.0), Error);
  EXPECT_THROW(simulate(identity_model(2), ControlLaw::switching(-1.0), Vector::Ones(2), 1.0), Error);
}

GTEST_TEST(FitDecayTest, ExactExponential) {
  std::vector<double> t, n;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.05 * k);
    n.push_back(3 * std::exp(-2 * t.back()));
  }
  const DecayFit fit = fit_decay(t, n, 0.0, 5.0);
  EXPECT_NEAR(fit.rate, 2.0, 1e-9);
  EXPECT_GE(fit.r_squared, 0.999999);
  EXPECT_FALSE(fit.non_exponential);
}

GTEST_TEST(FitDecayTest, ConstantNorm) {
  std::vector<double> t, n;
  for (int k = 0; k <= 50; ++k) {
    t.push_back(k);
    n.push_back(1.5);
  }
  EXPECT_NEAR(fit_decay(t, n, 0.0, 50.0).rate, 0.0, 1e-12);
}

GTEST_TEST(FitDecayTest, PowerLawFlaggedNonExponential) {
  Trajectory traj;
  for (int k = 0; k <= 1000; ++k) {
    traj.times.push_back(0.1 * k);
    traj.norms.push_back(1 / std::sqrt(1 + 0.1 * k));
  }
  const DecayFit fit = fit_decay(traj, 1.0);
  EXPECT_LT(fit.r_squared, 0.99);
  EXPECT_TRUE(fit.non_exponential);
}

GTEST_TEST(FitDecayTest, ExtinctionTruncatesWindow) {
  std::vector<double> t, n;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(k);
    n.push_back(k < 30 ? std::exp(-0.1 * k) : 0.0);
  }
  const DecayFit fit = fit_decay(t, n, 0.0, 40.0);
  EXPECT_TRUE(fit.extinct);
  EXPECT_NEAR(fit.rate, 0.1, 1e-12);
  EXPECT_THROW(fit_decay(t, n, 30.0, 40.0), Error);
}

GTEST_TEST(ExportTest, CsvColumns) {
  SimulationOptions opt;
  opt.dt_out = 0.5;
  opt.snapshot_times = {1.0};
  const Trajectory traj = simulate(identity_model(2), ControlLaw::constant(1.0), Vector::Ones(2), 2.0, opt);
  std::ostringstream csv;
  write_csv(traj, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t,norm,control");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_EQ(rows, 5);
  std::ostringstream snaps;
  write_snapshots_csv(traj, snaps);
  EXPECT_EQ(snaps.str().substr(0, 12), "t,z_0,z_1\n1,");
}

GTEST_TEST(DissipationTest, IntegralMatchesClosedForm) {
  // Rotation drift with B = I and v = −λ: ∫₀ᵗ‖z‖² = (1 − e^{−2λt})/(2λ) for ‖z₀‖ = 1.
  Matrix J(2, 2);
  J << 0, -40, 40, 0;
  const SystemModel model = make_dense_model("fast-rot", J, Matrix::Identity(2, 2));
  const double lambda = 0.3;
  SimulationOptions opts;
  opts.dt_out = 0.1;
  const Trajectory traj = simulate(model, ControlLaw::constant(lambda), Vector::Unit(2, 0), 5.0, opts);
  ASSERT_EQ(traj.dissipation.size(), traj.times.size());
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    const double expected = (1 - std::exp(-2 * lambda * traj.times[k])) / (2 * lambda);
    EXPECT_NEAR(traj.dissipation[k], expected, 1e-7) << traj.times[k];
  }
  EXPECT_TRUE(dissipation_audit(traj).pass);
}

GTEST_TEST(DissipationTest, SampledRunsFallBackToTrapezoid) {
  Trajectory traj;
  traj.law = ControlLaw::constant(1.0);
  traj.times = {0.0, 1.0};
  traj.norms = {1.0, 1.0};
  traj.forms = {1.0, 1.0};
  // ‖z‖² stays at 1 while 2λ∫⟨Bz,z⟩ = 2: F jumps to 3.
  const DissipationAudit a = dissipation_audit(traj);
  EXPECT_FALSE(a.pass);
  EXPECT_NEAR(a.max_violation, 2.0, 1e-12);
}

}  // namespace
}  // namespace cstab
