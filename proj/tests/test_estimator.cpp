#include "palp/estimator.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <limits>
#include <cmath>

#include "palp/config.hpp"
#include "palp/least_squares.hpp"
#include "test_support.hpp"

namespace palp {
namespace {

TEST(ProcessM1, RestIsAFixedPoint) {
  const StateVector x(0.0, 0.0, 2.0, 0.1);
  const StateVector out = process_m1(x, 0.0, 1.0, 0.01);
  EXPECT_EQ(out, x);
}

TEST(ProcessM1, EquilibriumForceHoldsVelocity) {
  const StateVector out = process_m1({1.0, 0.0, 2.0, 0.1}, 2.0, 1.0, 0.01);
  EXPECT_DOUBLE_EQ(out(0), 1.0);
  EXPECT_DOUBLE_EQ(out(1), 0.0);
}

TEST(ProcessM1, CoastingIntegratesPosition) {
  const StateVector out = process_m1({1.0, 1.0, 0.0, 0.0}, 0.0, 0.5, 0.002);
  EXPECT_DOUBLE_EQ(out(0), 1.002);
  EXPECT_DOUBLE_EQ(out(1), 1.0);
}

TEST(ProcessM3, RestStaysPutUpToThePenetrationFloor) {
  const StateVector x(0.0, 0.0, 0.742, 0.038);
  const StateVector out = process_m3(x, 0.0, 1.0, 0.01, 1e-6);
  EXPECT_EQ(out(0), 0.0);
  EXPECT_NEAR(out(1), 0.0, 1e-9);  // eps_pen^{3/2} dust only
  EXPECT_EQ(out(2), x(2));
  EXPECT_EQ(out(3), x(3));
}

TEST(ProcessM3, EquilibriumAtTableReference) {
  const StateVector out =
      process_m3({4.0, 0.0, 0.742, 0.038}, 5.936, 1.0, 0.01, 1e-6);
  EXPECT_NEAR(out(1), 0.0, 1e-15);
}

TEST(ProcessM3, HandArithmetic) {
  const StateVector out = process_m3({1.0, 2.0, 1.0, 1.0}, 0.0, 1.0, 0.1, 1e-6);
  EXPECT_NEAR(out(1), 1.7, 1e-15);
  EXPECT_DOUBLE_EQ(out(0), 1.2);
}

TEST(ProcessM2, BalancedStaticsIsAFixedPoint) {
  const ImpedanceGains gains{2e-3, 0.02, 1.0};
  // K33 z_tilde = -k d  with d = 2, k = 1
  const Eigen::Vector4d u(-2.0, 0.0, 0.0, 2e-3);
  const StateVector out = process_m2({2.0, 0.0, 1.0, 0.3}, u, gains, 1.0, 0.01,
                                     ControllerMode::Full);
  EXPECT_EQ(out(1), 0.0);
}

TEST(ProcessM2, HandArithmetic) {
  const ImpedanceGains gains{0.0, 0.0, 1.0};
  const Eigen::Vector4d u(1.0, 0.0, 0.0, 0.0);
  const StateVector out = process_m2({0.0, 0.0, 0.0, 0.0}, u, gains, 1.0, 0.1,
                                     ControllerMode::Full);
  EXPECT_DOUBLE_EQ(out(1), -0.1);
}

TEST(ProcessM2, ModesCoincideWithoutApparentInertia) {
  const ImpedanceGains gains{0.5, 0.02, 0.5};
  const Eigen::Vector4d u(-3.0, 2.0, 470.0, 0.0);  // u4 = 0 collapses them
  const StateVector x(2.5, -1.0, 1.7, 0.08);
  EXPECT_EQ(process_m2(x, u, gains, 2e-4, 2e-3, ControllerMode::Full),
            process_m2(x, u, gains, 2e-4, 2e-3, ControllerMode::Simplified));
}

TEST(ProcessM4, RestStaysPutUpToThePenetrationFloor) {
  const Eigen::Vector4d u(0.0, 0.0, 0.0, 2e-3);
  const StateVector x(0.0, 0.0, 0.742, 0.038);
  const StateVector out =
      process_m4(x, u, ImpedanceGains{}, 2e-4, 2e-3, ControllerMode::Full, 1e-6);
  EXPECT_EQ(out(0), 0.0);
  EXPECT_NEAR(out(1), 0.0, 1e-9);
  EXPECT_EQ(out(2), x(2));
  EXPECT_EQ(out(3), x(3));
}

TEST(ProcessM4, BalancedStaticsIsAFixedPoint) {
  const ImpedanceGains gains{2e-3, 0.02, 1.0};
  // K33 z_tilde = -kappa d^{3/2} with d = 4, kappa = 1
  const Eigen::Vector4d u(-8.0, 0.0, 0.0, 2e-3);
  const StateVector out = process_m4({4.0, 0.0, 1.0, 0.5}, u, gains, 1.0, 0.01,
                                     ControllerMode::Full, 1e-6);
  EXPECT_EQ(out(1), 0.0);
}

TEST(ProcessM4, HandArithmetic) {
  const ImpedanceGains gains{0.0, 1.0, 1.0};
  const Eigen::Vector4d u = Eigen::Vector4d::Zero();
  const StateVector out = process_m4({1.0, 1.0, 1.0, 1.0}, u, gains, 1.0, 0.1,
                                     ControllerMode::Full, 1e-6);
  EXPECT_NEAR(out(1), 0.7, 1e-15);
}

TEST(ProcessModels, ContinuousAcrossThePenetrationFloor) {
  const double eps = 1e-6;
  const StateVector below(eps * (1.0 - 1e-9), 2.0, 1.5, 0.3);
  const StateVector above(eps * (1.0 + 1e-9), 2.0, 1.5, 0.3);
  const StateVector f_below = process_m3(below, 1.0, 2e-4, 2e-3, eps);
  const StateVector f_above = process_m3(above, 1.0, 2e-4, 2e-3, eps);
  EXPECT_NEAR((f_above - f_below).cwiseAbs().maxCoeff(), 0.0, 1e-10);
}

TEST(Measurement, ProjectsTheRate) {
  EXPECT_EQ(measurement(StateVector(3.0, 0.5, 1.0, 1.0)), 0.5);
  EXPECT_EQ(measurement(StateVector(0.0, 0.0, 1.0, 1.0)), 0.0);
  EXPECT_EQ(measurement(StateVector(1.0, -2.2, 1.0, 1.0)), -2.2);
}

TEST(Jacobians, M1PartialWithRespectToStiffness) {
  const double dt = 2e-3;
  const double m_I = 2e-4;
  const ModelVariant v = ModelVariant::m1(m_I);
  const StateVector x(1.3, -0.4, 2.0, 0.09);
  const Eigen::Matrix4d A =
      jacobian_A(v, x, Eigen::Vector4d::Zero(), dt, 1e-6);
  EXPECT_DOUBLE_EQ(A(1, 2), -dt * x(0) / m_I);
}

TEST(Jacobians, FiniteAtThePenetrationFloor) {
  const ModelVariant v = ModelVariant::m3(2e-4);
  const StateVector x(1e-6, 2.0, 1.5, 0.3);
  const Eigen::Matrix4d A =
      jacobian_A(v, x, Eigen::Vector4d::Zero(), 2e-3, 1e-6);
  EXPECT_TRUE(A.allFinite());
}

TEST(Jacobians, MatchCentralFiniteDifferences) {
  const double dt = 2e-3;
  const double eps = 1e-6;
  const ImpedanceGains gains{2e-3, 0.02, 0.5};
  const ModelVariant variants[] = {
      ModelVariant::m1(2e-4), ModelVariant::m3(2e-4),
      ModelVariant::m2(gains, 2e-4), ModelVariant::m4(gains, 2e-4),
      ModelVariant::m2(gains, 2e-4, ControllerMode::Simplified),
      ModelVariant::m4(gains, 2e-4, ControllerMode::Simplified)};
  palp_test::StateSampler sampler(2024);
  for (const ModelVariant& v : variants) {
    for (int i = 0; i < 100; ++i) {
      const StateVector x = sampler.state();
      const Eigen::Vector4d u = v.uses_force_input()
                                    ? sampler.force_input()
                                    : sampler.impedance_input();
      const Eigen::Matrix4d analytic = jacobian_A(v, x, u, dt, eps);
      const Eigen::Matrix4d numeric =
          palp_test::numeric_jacobian_A(v, x, u, dt, eps);
      EXPECT_LT(palp_test::max_relative_error(analytic, numeric), 1e-6)
          << to_string(v.tag) << " case " << i;
      const NoiseJacobian g_analytic = jacobian_G(v);
      const NoiseJacobian g_numeric =
          palp_test::numeric_jacobian_G(v, x, u, dt, eps);
      EXPECT_LT(palp_test::max_relative_error(g_analytic, g_numeric), 1e-6);
    }
  }
}

TEST(EkfPredict, IdentityDynamicsLeaveTheBeliefAlone) {
  FilterConfig cfg;
  cfg.dt = 0.0;  // A collapses to the identity
  cfg.Q = Eigen::Matrix4d::Zero();
  Belief b;
  b.x_hat = StateVector(1.0, 2.0, 3.0, 4.0);
  b.P = Eigen::Vector4d(0.5, 1.0, 2.0, 4.0).asDiagonal();
  const Belief out = ekf_predict(b, ModelVariant::m1(2e-4),
                                 Eigen::Vector4d::Zero(), cfg);
  EXPECT_EQ(out.x_hat, b.x_hat);
  EXPECT_EQ(out.P, b.P);
}

TEST(EkfPredict, RestIsAFixedPointOfTheMean) {
  FilterConfig cfg;
  Belief b;
  b.x_hat = StateVector(0.0, 0.0, 2.0, 0.1);
  const Belief out = ekf_predict(b, ModelVariant::m1(2e-4),
                                 Eigen::Vector4d::Zero(), cfg);
  EXPECT_EQ(out.x_hat, b.x_hat);
}

TEST(EkfPredict, ProcessNoiseNeverShrinksTheTrace) {
  FilterConfig cfg;
  const ModelVariant v = ModelVariant::m3(2e-4);
  palp_test::StateSampler sampler(5);
  for (int i = 0; i < 20; ++i) {
    Belief b;
    b.x_hat = sampler.state();
    const Eigen::Vector4d u = sampler.force_input();
    const Eigen::Matrix4d A = jacobian_A(v, b.x_hat, u, cfg.dt, cfg.eps_pen);
    const double trace_apat = (A * b.P * A.transpose()).trace();
    const Belief out = ekf_predict(b, v, u, cfg);
    EXPECT_GE(out.P.trace(), trace_apat - 1e-12);
  }
}

TEST(EkfPredict, FrozenParametersNeverMove) {
  FilterConfig cfg;  // default Q has zero rows for the parameters
  palp_test::StateSampler sampler(17);
  for (int i = 0; i < 50; ++i) {
    Belief b;
    b.x_hat = sampler.state();
    const Belief out = ekf_predict(b, ModelVariant::m3(2e-4),
                                   sampler.force_input(), cfg);
    EXPECT_EQ(out.x_hat(2), b.x_hat(2));
    EXPECT_EQ(out.x_hat(3), b.x_hat(3));
  }
}

TEST(EkfCorrect, ZeroInnovationKeepsTheMean) {
  FilterConfig cfg;
  Belief b;
  b.x_hat = StateVector(1.0, 2.0, 0.5, 0.1);
  const Belief out = ekf_correct(b, 2.0, cfg);
  EXPECT_EQ(out.x_hat, b.x_hat);
}

TEST(EkfCorrect, ScalarGainSanity) {
  FilterConfig cfg;
  cfg.R_meas = 1.0;
  Belief b;
  b.x_hat = StateVector(1.0, 2.0, 0.5, 0.1);
  b.P = Eigen::Matrix4d::Identity();
  const Belief out = ekf_correct(b, 3.0, cfg);  // innovation = 1
  const StateVector delta = out.x_hat - b.x_hat;
  EXPECT_EQ(delta, StateVector(0.0, 0.5, 0.0, 0.0));
  EXPECT_DOUBLE_EQ(out.P(1, 1), 0.5);
}

TEST(EkfCorrect, UninformativeMeasurementChangesNothing) {
  FilterConfig cfg;
  cfg.R_meas = 1e30;
  Belief b;
  b.x_hat = StateVector(1.0, 2.0, 0.5, 0.1);
  const Belief out = ekf_correct(b, 100.0, cfg);
  EXPECT_NEAR((out.x_hat - b.x_hat).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR((out.P - b.P).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(EkfCorrect, FloorsUnphysicalEstimates) {
  FilterConfig cfg;
  cfg.R_meas = 0.01;
  Belief b;
  b.x_hat = StateVector(0.001, 5.0, 0.001, 0.001);
  b.P = 0.5 * Eigen::Matrix4d::Identity() + 0.5 * Eigen::Matrix4d::Ones();
  const Belief out = ekf_correct(b, -5.0, cfg);  // large negative innovation
  EXPECT_EQ(out.x_hat(0), 0.0);
  EXPECT_EQ(out.x_hat(2), 0.0);
  EXPECT_EQ(out.x_hat(3), 0.0);
}

TEST(RunFilter, EmptyTraceGivesEmptyOutput) {
  EXPECT_TRUE(run_filter({}, ModelVariant::m3(2e-4), FilterConfig{}).empty());
}

TEST(RunFilter, RejectsMismatchedSpacing) {
  PlantConfig plant;
  plant.truth_model = DrmParams{0.742, 0.038};
  const auto trace = simulate(plant, 0.1);
  FilterConfig cfg;
  cfg.dt = 1e-3;  // trace is sampled at 2 ms
  try {
    run_filter(trace, ModelVariant::m3(plant.m_I), cfg);
    FAIL() << "expected FilterError";
  } catch (const FilterError& e) {
    EXPECT_EQ(e.sample, 1u);
  }
}

TEST(RunFilter, WrapsNumericalFailuresWithTheSampleIndex) {
  PlantConfig plant;
  plant.truth_model = DrmParams{0.742, 0.038};
  auto trace = simulate(plant, 0.1);
  trace[20].F_ft_meas = std::numeric_limits<double>::quiet_NaN();
  try {
    run_filter(trace, ModelVariant::m3(plant.m_I), FilterConfig{});
    FAIL() << "expected FilterError";
  } catch (const FilterError& e) {
    EXPECT_EQ(e.sample, 21u);  // the NaN force drives the step into 21
  }
}

TEST(RunFilter, CovarianceStaysSymmetricPsd) {
  ExperimentConfig cfg = make_preset("S1-DRM");
  const auto trace = simulate(cfg.plant, 2.0);
  const auto beliefs =
      run_filter(trace, matched_variant(VariantTag::M3, cfg.plant), cfg.filter);
  for (const TimedBelief& tb : beliefs) {
    const Eigen::Matrix4d& P = tb.belief.P;
    EXPECT_LE((P - P.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(P);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-9);
  }
}

TEST(RunFilter, MatchedNoiseFreeRunConverges) {
  ExperimentConfig cfg = make_preset("S1-DRM");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  cfg.filter.R_meas = derived_r_meas(0.0);
  const auto trace = simulate(cfg.plant, 10.0);
  const auto beliefs =
      run_filter(trace, matched_variant(VariantTag::M3, cfg.plant), cfg.filter);
  const StateVector final = beliefs.back().belief.x_hat;
  EXPECT_LT(std::abs(final(2) - 0.742) / 0.742, 1e-3);
}

TEST(RunFilter, MatchesPlainKalmanFilterWithFrozenParameters) {
  PlantConfig plant;
  plant.truth_model = KvParams{2.03, 0.093};
  const auto trace = simulate(plant, 2.0);

  FilterConfig cfg;
  cfg.x0 = StateVector(1.0, 1.0, 2.03, 0.093);
  cfg.P0 = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0).asDiagonal();
  // P0 must be PD for general runs; bypass the check and drive the steps
  // directly with the frozen-parameter prior.
  Belief belief{cfg.x0, cfg.P0};
  palp_test::LinearKvKalman oracle(
      2.03, 0.093, plant.m_I, cfg.dt, cfg.Q(0, 0), cfg.Q(1, 1), cfg.R_meas,
      Eigen::Vector2d(1.0, 1.0), Eigen::Matrix2d::Identity());

  const ModelVariant v = ModelVariant::m1(plant.m_I);
  double worst = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (i > 0) {
      Eigen::Vector4d u = Eigen::Vector4d::Zero();
      u(0) = trace[i - 1].F_ft_meas;
      belief = ekf_predict(belief, v, u, cfg);
      oracle.predict(trace[i - 1].F_ft_meas);
    }
    const double z = -trace[i].z_ee_dot_meas;
    belief = ekf_correct(belief, z, cfg);
    oracle.correct(z);
    worst = std::max(worst,
                     (belief.x_hat.head<2>() - oracle.state()).cwiseAbs().maxCoeff());
    worst = std::max(worst, (belief.P.topLeftCorner<2, 2>() - oracle.cov())
                                .cwiseAbs()
                                .maxCoeff());
    EXPECT_EQ(belief.x_hat(2), 2.03);
    EXPECT_EQ(belief.x_hat(3), 0.093);
  }
  EXPECT_LT(worst, 1e-10);
}

TEST(RunFilter, KvModelOnFoundationTruthIsBiased) {
  // model mismatch: the linear filter explains the curved force law by
  // sinking the penetration estimate and raising the stiffness
  for (std::uint64_t seed : {1u, 2u}) {
    ExperimentConfig cfg = make_preset("S1-DRM");
    cfg.plant.noise.seed = seed;
    const auto trace = simulate(cfg.plant, 10.0);
    // propagate the force-measurement noise into the process noise, as the
    // experiment harness does for force-driven variants
    const double w = cfg.filter.dt * cfg.plant.noise.sigma_force / cfg.plant.m_I;
    cfg.filter.Q(1, 1) += w * w;
    const auto beliefs =
        run_filter(trace, matched_variant(VariantTag::M1, cfg.plant), cfg.filter);
    const FitResult ref = fit_kv_ls(trace);

    std::vector<double> t, x1, x3, d_true;
    for (std::size_t i = 0; i < beliefs.size(); ++i) {
      t.push_back(beliefs[i].t);
      x1.push_back(beliefs[i].belief.x_hat(0));
      x3.push_back(beliefs[i].belief.x_hat(2));
      d_true.push_back(trace[i].d_true);
    }
    EXPECT_LT(palp_test::mean_over_window(t, x1, 5.0, 10.0),
              palp_test::mean_over_window(t, d_true, 5.0, 10.0));
    EXPECT_GT(palp_test::mean_over_window(t, x3, 5.0, 10.0),
              std::get<KvParams>(ref.params).k);
  }
}

TEST(ReconstructForce, UsesTheVariantForceLaw) {
  std::vector<TimedBelief> beliefs(2);
  beliefs[0].t = 0.0;
  beliefs[0].belief.x_hat = StateVector(0.0, 0.0, 1.0, 1.0);
  beliefs[1].t = 1.0;
  beliefs[1].belief.x_hat = StateVector(4.0, 0.0, 0.742, 0.038);

  const auto drm = reconstruct_force(beliefs, ModelVariant::m4({}, 2e-4));
  EXPECT_EQ(drm[0].force, 0.0);
  EXPECT_NEAR(drm[1].force, 5.936, 1e-12);

  beliefs[1].belief.x_hat = StateVector(2.0, 1.0, 2.0, 0.5);
  const auto kv = reconstruct_force(beliefs, ModelVariant::m1(2e-4));
  EXPECT_DOUBLE_EQ(kv[1].force, 4.5);
}

}  // namespace
}  // namespace palp
