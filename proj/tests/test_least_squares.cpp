#include "palp/least_squares.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "palp/config.hpp"
#include "palp/plant.hpp"

namespace palp {
namespace {

TraceSample row(double d, double d_dot, double f) {
  TraceSample s{};
  s.d_true = d;
  s.d_dot_true = d_dot;
  s.F_contact_true = f;
  return s;
}

TEST(FitKvLs, HandSolvedSystem) {
  const std::vector<TraceSample> trace{row(1.0, 0.0, 2.0), row(0.0, 1.0, 3.0)};
  const FitResult fit = fit_kv_ls(trace);
  const KvParams p = std::get<KvParams>(fit.params);
  EXPECT_DOUBLE_EQ(p.k, 2.0);
  EXPECT_DOUBLE_EQ(p.c, 3.0);
  EXPECT_EQ(fit.n_samples, 2u);
  EXPECT_NEAR(fit.residual_mse, 0.0, 1e-12);
}

TEST(FitKvLs, RecoversGeneratingParametersExactly) {
  ExperimentConfig cfg = make_preset("S1-KV");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  const auto trace = simulate(cfg.plant, 4.0);
  const KvParams p = std::get<KvParams>(fit_kv_ls(trace).params);
  EXPECT_LT(std::abs(p.k - 2.03) / 2.03, 1e-6);
  EXPECT_LT(std::abs(p.c - 0.093) / 0.093, 1e-6);
}

TEST(FitKvLs, ReportsTheDegenerateRegressor) {
  const std::vector<TraceSample> trace{row(1.0, 0.0, 2.03), row(2.0, 0.0, 4.06),
                                       row(3.0, 0.0, 6.09)};
  try {
    fit_kv_ls(trace);
    FAIL() << "expected DegenerateFitError";
  } catch (const DegenerateFitError& e) {
    EXPECT_EQ(e.regressor, "rate");
  }
}

TEST(FitKvLs, NeedsTwoSamples) {
  EXPECT_THROW(fit_kv_ls({row(1.0, 0.5, 2.0)}), Error);
}

TEST(FitDrmLs, RecoversGeneratingParametersExactly) {
  ExperimentConfig cfg = make_preset("S1-DRM");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  const auto trace = simulate(cfg.plant, 4.0);
  const DrmParams p = std::get<DrmParams>(fit_drm_ls(trace).params);
  EXPECT_LT(std::abs(p.kappa - 0.742) / 0.742, 1e-6);
  EXPECT_LT(std::abs(p.lambda - 0.038) / 0.038, 1e-6);
}

TEST(FitDrmLs, ZeroRateLeavesDampingDegenerate) {
  // both rows consistent with kappa = 1, but nothing identifies lambda
  const std::vector<TraceSample> trace{row(1.0, 0.0, 1.0), row(4.0, 0.0, 8.0)};
  try {
    fit_drm_ls(trace);
    FAIL() << "expected DegenerateFitError";
  } catch (const DegenerateFitError& e) {
    EXPECT_EQ(e.regressor, "rate");
  }
}

TEST(FitDrmLs, ZeroForceFitsZeroParameters) {
  const std::vector<TraceSample> trace{row(1.0, 1.0, 0.0), row(4.0, -2.0, 0.0),
                                       row(2.0, 0.5, 0.0)};
  const FitResult fit = fit_drm_ls(trace);
  const DrmParams p = std::get<DrmParams>(fit.params);
  EXPECT_EQ(p.kappa, 0.0);
  EXPECT_EQ(p.lambda, 0.0);
  EXPECT_EQ(fit.residual_mse, 0.0);
}

TEST(ResidualMse, SelfFitIsZero) {
  ExperimentConfig cfg = make_preset("S2-DRM");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  const auto trace = simulate(cfg.plant, 4.0);
  const FitResult fit = fit_drm_ls(trace);
  EXPECT_NEAR(residual_mse(trace, fit.params, 0.0, 4.0), 0.0, 1e-12);
}

TEST(ResidualMse, ConstantOffsetSquares) {
  std::vector<TraceSample> trace;
  const KvParams p{2.0, 0.5};
  const double offset = 0.37;
  for (int i = 0; i < 100; ++i) {
    const double d = 1.0 + 0.01 * i;
    const double v = std::sin(0.1 * i);
    TraceSample s = row(d, v, kv_force(p, d, v) + offset);
    s.t = 0.01 * i;
    trace.push_back(s);
  }
  EXPECT_NEAR(residual_mse(trace, ContactParams{p}, 0.0, 1.0), offset * offset,
              1e-12);
}

TEST(ResidualMse, EmptyWindowIsAnError) {
  const std::vector<TraceSample> trace{row(1.0, 0.0, 2.0)};
  EXPECT_THROW(residual_mse(trace, ContactParams{KvParams{1.0, 1.0}}, 5.0, 6.0),
               Error);
  EXPECT_THROW(residual_mse(trace, ContactParams{KvParams{1.0, 1.0}}, 2.0, 1.0),
               Error);
}

TEST(LeastSquares, PerturbingTheFitNeverImprovesIt) {
  // fit a KV law to foundation-model data: the residual is nonzero and the
  // fit must sit at its minimum
  ExperimentConfig cfg = make_preset("S1-DRM");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  const auto trace = simulate(cfg.plant, 4.0);
  const FitResult fit = fit_kv_ls(trace);
  const KvParams p = std::get<KvParams>(fit.params);
  const double base = residual_mse(trace, fit.params, 0.0, 4.0);
  for (double sk : {0.99, 1.0, 1.01}) {
    for (double sc : {0.99, 1.0, 1.01}) {
      const ContactParams perturbed = KvParams{p.k * sk, p.c * sc};
      EXPECT_GE(residual_mse(trace, perturbed, 0.0, 4.0), base - 1e-15);
    }
  }
}

TEST(LeastSquares, ScaleEquivariant) {
  ExperimentConfig cfg = make_preset("S3-DRM");
  cfg.plant.noise.sigma_vel = 0.0;
  cfg.plant.noise.sigma_force = 0.0;
  auto trace = simulate(cfg.plant, 2.0);
  const FitResult base = fit_drm_ls(trace);
  const double scale = 3.7;
  for (TraceSample& s : trace) s.F_contact_true *= scale;
  const FitResult scaled = fit_drm_ls(trace);
  const DrmParams pb = std::get<DrmParams>(base.params);
  const DrmParams ps = std::get<DrmParams>(scaled.params);
  EXPECT_NEAR(ps.kappa, scale * pb.kappa, 1e-9 * ps.kappa);
  EXPECT_NEAR(ps.lambda, scale * pb.lambda, 1e-9 * std::max(ps.lambda, 1.0));
  EXPECT_NEAR(scaled.residual_mse, scale * scale * base.residual_mse,
              1e-9 * std::max(scaled.residual_mse, 1e-12));
}

}  // namespace
}  // namespace palp
