#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "palp/contact.hpp"
#include "palp/errors.hpp"
#include "palp/plant.hpp"

// Offline least-squares reference fits: both contact laws are linear in
// their parameters once the penetration is known, so the trace's truth
// columns give a 2-regressor linear problem solved by normal equations.

namespace palp {

struct FitResult {
  ContactParams params;      // fitted KvParams or DrmParams
  double residual_mse = 0;   // mean squared force residual [N^2]
  std::size_t n_samples = 0; // in-contact samples used
  double condition = 1;      // condition number of the normal equations
};

namespace detail {

struct Regressors {
  const char* name1;
  const char* name2;
  double (*phi1)(double d, double d_dot);
  double (*phi2)(double d, double d_dot);
};

inline FitResult fit_two_regressor(const std::vector<TraceSample>& trace,
                                   const Regressors& reg, bool drm) {
  double s11 = 0, s12 = 0, s22 = 0, b1 = 0, b2 = 0;
  std::size_t n = 0;
  for (const TraceSample& s : trace) {
    if (s.d_true < 0.0) continue;
    const double p1 = reg.phi1(s.d_true, s.d_dot_true);
    const double p2 = reg.phi2(s.d_true, s.d_dot_true);
    s11 += p1 * p1;
    s12 += p1 * p2;
    s22 += p2 * p2;
    b1 += p1 * s.F_contact_true;
    b2 += p2 * s.F_contact_true;
    ++n;
  }
  if (n < 2)
    throw Error("least-squares fit needs at least 2 in-contact samples");
  if (s11 == 0.0) throw DegenerateFitError(reg.name1);
  if (s22 == 0.0) throw DegenerateFitError(reg.name2);
  const double det = s11 * s22 - s12 * s12;
  if (!(det > 1e-12 * s11 * s22))
    throw DegenerateFitError("collinear penetration/rate");

  const double theta1 = (s22 * b1 - s12 * b2) / det;
  const double theta2 = (s11 * b2 - s12 * b1) / det;

  // eigenvalue ratio of the symmetric 2x2 normal matrix
  const double mid = 0.5 * (s11 + s22);
  const double rad = std::sqrt(0.25 * (s11 - s22) * (s11 - s22) + s12 * s12);
  const double cond = (mid + rad) / (mid - rad);

  // physical parameters are nonnegative; a noisy fit may dip slightly below
  const double c1 = std::max(theta1, 0.0);
  const double c2 = std::max(theta2, 0.0);

  FitResult result;
  if (drm)
    result.params = DrmParams{c1, c2};
  else
    result.params = KvParams{c1, c2};
  result.n_samples = n;
  result.condition = cond;

  double sse = 0;
  for (const TraceSample& s : trace) {
    if (s.d_true < 0.0) continue;
    const double model = c1 * reg.phi1(s.d_true, s.d_dot_true) +
                         c2 * reg.phi2(s.d_true, s.d_dot_true);
    const double r = model - s.F_contact_true;
    sse += r * r;
  }
  result.residual_mse = sse / static_cast<double>(n);
  return result;
}

}  // namespace detail

/// Fit the Kelvin-Voigt law F = k d + c d_dot to the trace's truth columns.
inline FitResult fit_kv_ls(const std::vector<TraceSample>& trace) {
  static const detail::Regressors reg{
      "penetration", "rate", [](double d, double) { return d; },
      [](double, double d_dot) { return d_dot; }};
  return detail::fit_two_regressor(trace, reg, /*drm=*/false);
}

/// Fit the foundation law F = kappa d^{3/2} + lambda d^{1/2} d_dot.
inline FitResult fit_drm_ls(const std::vector<TraceSample>& trace) {
  static const detail::Regressors reg{
      "penetration", "rate",
      [](double d, double) { return d * std::sqrt(d); },
      [](double d, double d_dot) { return std::sqrt(d) * d_dot; }};
  return detail::fit_two_regressor(trace, reg, /*drm=*/true);
}

/// Mean squared error between the parameterized force law evaluated on the
/// truth columns and the trace's true contact force, over [t_a, t_b].
inline double residual_mse(const std::vector<TraceSample>& trace,
                           const ContactParams& params, double t_a,
                           double t_b) {
  if (!(t_a <= t_b)) throw Error("residual_mse: window start exceeds end");
  double sse = 0;
  std::size_t n = 0;
  for (const TraceSample& s : trace) {
    if (s.t < t_a || s.t > t_b) continue;
    const double r =
        contact_force(params, s.d_true, s.d_dot_true) - s.F_contact_true;
    sse += r * r;
    ++n;
  }
  if (n == 0) throw Error("residual_mse: no samples in window");
  return sse / static_cast<double>(n);
}

}  // namespace palp
