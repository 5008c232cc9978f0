#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "palp/errors.hpp"
#include "palp/plant.hpp"

// Extended Kalman filter over the contact state
//   x = [penetration d, rate d_dot, stiffness parameter, damping parameter]
// with four interchangeable process models:
//   M1  Kelvin-Voigt law driven by the measured F/T force
//   M2  Kelvin-Voigt law driven by the impedance controller (sensorless)
//   M3  spherical-foundation law driven by the measured F/T force
//   M4  spherical-foundation law driven by the controller (sensorless)
// The only measurement is the end-effector velocity, z = x2.

namespace palp {

using StateVector = Eigen::Vector4d;
using NoiseJacobian = Eigen::Matrix<double, 4, 2>;

enum class VariantTag { M1, M2, M3, M4 };

inline const char* to_string(VariantTag tag) {
  switch (tag) {
    case VariantTag::M1: return "M1";
    case VariantTag::M2: return "M2";
    case VariantTag::M3: return "M3";
    case VariantTag::M4: return "M4";
  }
  return "?";
}

/// Which process model the filter runs and the plant knowledge it assumes.
/// Controller mode and gains only matter for the sensorless variants.
struct ModelVariant {
  VariantTag tag = VariantTag::M3;
  ControllerMode controller_mode = ControllerMode::Full;
  ImpedanceGains gains{};
  double m_I = 2e-4;  // [N*s^2/mm]

  bool uses_force_input() const {
    return tag == VariantTag::M1 || tag == VariantTag::M3;
  }
  bool is_drm() const {
    return tag == VariantTag::M3 || tag == VariantTag::M4;
  }

  static ModelVariant m1(double m_I) {
    return {VariantTag::M1, ControllerMode::Full, {}, m_I};
  }
  static ModelVariant m3(double m_I) {
    return {VariantTag::M3, ControllerMode::Full, {}, m_I};
  }
  static ModelVariant m2(const ImpedanceGains& g, double m_I,
                         ControllerMode mode = ControllerMode::Full) {
    return {VariantTag::M2, mode, g, m_I};
  }
  static ModelVariant m4(const ImpedanceGains& g, double m_I,
                         ControllerMode mode = ControllerMode::Full) {
    return {VariantTag::M4, mode, g, m_I};
  }
};

struct FilterConfig {
  double dt = 2e-3;  // filter step [s]
  Eigen::Matrix4d Q =
      Eigen::Vector4d(1e-8, 3e-3, 0.0, 0.0).asDiagonal();  // process noise
  double R_meas = 3e-2;  // velocity measurement variance [mm^2/s^2]
  StateVector x0 = StateVector(1.0, 1.0, 0.0, 0.0);
  Eigen::Matrix4d P0 = Eigen::Matrix4d::Identity();
  double eps_pen = 1e-6;  // penetration floor inside fractional powers [mm]

  void check() const {
    if (!(dt > 0.0)) throw std::invalid_argument("FilterConfig: dt must be > 0");
    if (!(R_meas > 0.0))
      throw std::invalid_argument("FilterConfig: R_meas must be > 0");
    if (!(eps_pen > 0.0))
      throw std::invalid_argument("FilterConfig: eps_pen must be > 0");
    if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
        (P0 - P0.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("FilterConfig: Q and P0 must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es_q(Q);
    if (es_q.eigenvalues().minCoeff() < -1e-12)
      throw std::invalid_argument("FilterConfig: Q must be PSD");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es_p(P0);
    if (!(es_p.eigenvalues().minCoeff() > 0.0))
      throw std::invalid_argument("FilterConfig: P0 must be PD");
  }
};

/// Filter state: estimate plus covariance, kept symmetric by construction.
struct Belief {
  StateVector x_hat = StateVector::Zero();
  Eigen::Matrix4d P = Eigen::Matrix4d::Identity();
};

namespace detail {

struct PenPowers {
  double root;        // s^{1/2}
  double three_half;  // s^{3/2}
  double droot_dx1;   // d(s)/d(x1): 0 while the floor is active
};

inline PenPowers pen_powers(double x1, double eps_pen) {
  const double s = std::max(x1, eps_pen);
  const double r = std::sqrt(s);
  return {r, s * r, x1 < eps_pen ? 0.0 : 1.0};
}

}  // namespace detail

// --- discrete process models -------------------------------------------
// Noise enters additively on x1 and x2 and is handled by the EKF, not here.

/// Kelvin-Voigt model with measured force input (Euler step).
inline StateVector process_m1(const StateVector& x, double u_force, double m_I,
                              double dt) {
  StateVector out = x;
  out(0) = x(0) + dt * x(1);
  out(1) = x(1) + dt / m_I * (u_force - x(0) * x(2) - x(1) * x(3));
  return out;
}

/// Foundation model with measured force input; the penetration is floored
/// at eps_pen inside the fractional powers.
inline StateVector process_m3(const StateVector& x, double u_force, double m_I,
                              double dt, double eps_pen) {
  const auto p = detail::pen_powers(x(0), eps_pen);
  StateVector out = x;
  out(0) = x(0) + dt * x(1);
  out(1) = x(1) + dt / m_I *
                      (u_force - p.three_half * x(2) - p.root * x(1) * x(3));
  return out;
}

/// Kelvin-Voigt model driven by the impedance controller.
/// u = [z_tilde, z_d_dot, z_d_ddot, Lambda33]; simplified mode drops the
/// apparent-inertia feedforward and divides by the indenter mass alone.
inline StateVector process_m2(const StateVector& x, const Eigen::Vector4d& u,
                              const ImpedanceGains& gains, double m_I,
                              double dt, ControllerMode mode) {
  const double d33 = gains.D33;
  const double k33 = gains.K33;
  const bool full = mode == ControllerMode::Full;
  const double scale = full ? dt / (m_I + u(3)) : dt / m_I;
  const double inertia_ff = full ? u(3) * u(2) : 0.0;
  StateVector out = x;
  out(0) = x(0) + dt * x(1);
  out(1) = x(1) - scale * (inertia_ff + d33 * u(1) + k33 * u(0) +
                           x(2) * x(0) + (d33 + x(3)) * x(1));
  return out;
}

/// Foundation model driven by the impedance controller.
inline StateVector process_m4(const StateVector& x, const Eigen::Vector4d& u,
                              const ImpedanceGains& gains, double m_I,
                              double dt, ControllerMode mode, double eps_pen) {
  const auto p = detail::pen_powers(x(0), eps_pen);
  const double d33 = gains.D33;
  const double k33 = gains.K33;
  const bool full = mode == ControllerMode::Full;
  const double scale = full ? dt / (m_I + u(3)) : dt / m_I;
  const double inertia_ff = full ? u(3) * u(2) : 0.0;
  StateVector out = x;
  out(0) = x(0) + dt * x(1);
  out(1) = x(1) - scale * (inertia_ff + d33 * u(1) + k33 * u(0) +
                           p.three_half * x(2) + p.root * x(1) * x(3) +
                           d33 * x(1));
  return out;
}

/// Measurement model: the filter observes the penetration rate. The
/// measured quantity fed in is -z_ee_dot_meas (the sign relation of the
/// contact axis), so h(x) = x2.
inline double measurement(const StateVector& x) { return x(1); }

/// Dispatch on the variant. For M1/M3, u(0) carries the measured force and
/// the remaining entries are ignored.
inline StateVector process_model(const ModelVariant& v, const StateVector& x,
                                 const Eigen::Vector4d& u, double dt,
                                 double eps_pen) {
  switch (v.tag) {
    case VariantTag::M1: return process_m1(x, u(0), v.m_I, dt);
    case VariantTag::M3: return process_m3(x, u(0), v.m_I, dt, eps_pen);
    case VariantTag::M2:
      return process_m2(x, u, v.gains, v.m_I, dt, v.controller_mode);
    case VariantTag::M4:
      return process_m4(x, u, v.gains, v.m_I, dt, v.controller_mode, eps_pen);
  }
  throw std::logic_error("process_model: bad variant");
}

/// Analytic gradient of the process model with respect to the state.
inline Eigen::Matrix4d jacobian_A(const ModelVariant& v, const StateVector& x,
                                  const Eigen::Vector4d& u, double dt,
                                  double eps_pen) {
  Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
  A(0, 1) = dt;
  switch (v.tag) {
    case VariantTag::M1: {
      const double s = dt / v.m_I;
      A(1, 0) = -s * x(2);
      A(1, 1) = 1.0 - s * x(3);
      A(1, 2) = -s * x(0);
      A(1, 3) = -s * x(1);
      break;
    }
    case VariantTag::M3: {
      const auto p = detail::pen_powers(x(0), eps_pen);
      const double s = dt / v.m_I;
      A(1, 0) = -s * p.droot_dx1 *
                (1.5 * p.root * x(2) + 0.5 / p.root * x(1) * x(3));
      A(1, 1) = 1.0 - s * p.root * x(3);
      A(1, 2) = -s * p.three_half;
      A(1, 3) = -s * p.root * x(1);
      break;
    }
    case VariantTag::M2: {
      const bool full = v.controller_mode == ControllerMode::Full;
      const double s = full ? dt / (v.m_I + u(3)) : dt / v.m_I;
      A(1, 0) = -s * x(2);
      A(1, 1) = 1.0 - s * (v.gains.D33 + x(3));
      A(1, 2) = -s * x(0);
      A(1, 3) = -s * x(1);
      break;
    }
    case VariantTag::M4: {
      const auto p = detail::pen_powers(x(0), eps_pen);
      const bool full = v.controller_mode == ControllerMode::Full;
      const double s = full ? dt / (v.m_I + u(3)) : dt / v.m_I;
      A(1, 0) = -s * p.droot_dx1 *
                (1.5 * p.root * x(2) + 0.5 / p.root * x(1) * x(3));
      A(1, 1) = 1.0 - s * (p.root * x(3) + v.gains.D33);
      A(1, 2) = -s * p.three_half;
      A(1, 3) = -s * p.root * x(1);
      break;
    }
  }
  return A;
}

/// Gradient of the process model with respect to the noise [w1, w2]: both
/// enter additively, w1 on the penetration and w2 on the rate.
inline NoiseJacobian jacobian_G(const ModelVariant&) {
  NoiseJacobian G = NoiseJacobian::Zero();
  G(0, 0) = 1.0;
  G(1, 1) = 1.0;
  return G;
}

/// EKF prediction: propagate the mean through the process model and the
/// covariance through its linearization. With the default Q the parameter
/// rows carry no process noise, so x3 and x4 are only moved by corrections.
inline Belief ekf_predict(const Belief& b, const ModelVariant& v,
                          const Eigen::Vector4d& u, const FilterConfig& cfg) {
  Belief out;
  out.x_hat = process_model(v, b.x_hat, u, cfg.dt, cfg.eps_pen);
  if (!out.x_hat.allFinite())
    throw NumericalError("ekf_predict: state no longer finite");
  const Eigen::Matrix4d A = jacobian_A(v, b.x_hat, u, cfg.dt, cfg.eps_pen);
  out.P = A * b.P * A.transpose() + cfg.Q;
  out.P = 0.5 * (out.P + out.P.transpose());
  return out;
}

/// EKF correction with the scalar velocity measurement. After the update
/// the penetration and both material parameters are floored at zero.
inline Belief ekf_correct(const Belief& b_minus, double z,
                          const FilterConfig& cfg) {
  const double innovation_var = b_minus.P(1, 1) + cfg.R_meas;
  if (!(innovation_var > 0.0) || !std::isfinite(innovation_var))
    throw NumericalError("ekf_correct: singular innovation covariance");
  const Eigen::Vector4d gain = b_minus.P.col(1) / innovation_var;
  Belief out;
  out.x_hat = b_minus.x_hat + gain * (z - measurement(b_minus.x_hat));
  out.P = b_minus.P - gain * b_minus.P.row(1);
  out.P = 0.5 * (out.P + out.P.transpose());
  out.x_hat(0) = std::max(out.x_hat(0), 0.0);
  out.x_hat(2) = std::max(out.x_hat(2), 0.0);
  out.x_hat(3) = std::max(out.x_hat(3), 0.0);
  if (!out.x_hat.allFinite())
    throw NumericalError("ekf_correct: state no longer finite");
  return out;
}

struct TimedBelief {
  double t;
  Belief belief;
};

/// Where the sensorless variants take z_ee from when forming the position
/// error z_tilde = z_d - z_ee: the trace's true column (the robot knows its
/// own end-effector position) or the filter's own penetration estimate.
enum class ZTildeSource { TraceZee, EstimatedZee };

struct RunOptions {
  ZTildeSource z_tilde_source = ZTildeSource::TraceZee;
  double surface_z = 0.0;  // only used with EstimatedZee
};

namespace detail {

inline Eigen::Vector4d assemble_input(const ModelVariant& v,
                                      const TraceSample& s,
                                      const Belief& belief,
                                      const RunOptions& opts) {
  Eigen::Vector4d u = Eigen::Vector4d::Zero();
  if (v.uses_force_input()) {
    u(0) = s.F_ft_meas;
    return u;
  }
  const double z_ee = opts.z_tilde_source == ZTildeSource::TraceZee
                          ? s.z_ee
                          : opts.surface_z - belief.x_hat(0);
  u(0) = s.z_d - z_ee;
  u(1) = s.z_d_dot;
  u(2) = s.z_d_ddot;
  u(3) = v.gains.Lambda33;
  return u;
}

}  // namespace detail

/// Run the filter over a trace: correct with the first sample's velocity,
/// then predict/correct through the rest. The trace must be uniformly
/// sampled at the filter step (within 1%).
inline std::vector<TimedBelief> run_filter(const std::vector<TraceSample>& trace,
                                           const ModelVariant& variant,
                                           const FilterConfig& cfg,
                                           const RunOptions& opts = {}) {
  cfg.check();
  std::vector<TimedBelief> out;
  if (trace.empty()) return out;
  out.reserve(trace.size());

  Belief belief{cfg.x0, cfg.P0};
  for (std::size_t i = 0; i < trace.size(); ++i) {
    try {
      if (i > 0) {
        const double spacing = trace[i].t - trace[i - 1].t;
        if (std::abs(spacing - cfg.dt) > 0.01 * cfg.dt)
          throw Error("trace spacing " + std::to_string(spacing) +
                      " s does not match filter dt");
        const Eigen::Vector4d u =
            detail::assemble_input(variant, trace[i - 1], belief, opts);
        belief = ekf_predict(belief, variant, u, cfg);
      }
      const double z = -trace[i].z_ee_dot_meas;
      belief = ekf_correct(belief, z, cfg);
    } catch (const std::exception& e) {
      throw FilterError(i, e.what());
    }
    out.push_back({trace[i].t, belief});
  }
  return out;
}

struct ForceEstimate {
  double t;
  double force;  // [N]
};

/// Rebuild the contact force from the estimated state, using the force law
/// of the variant's model family.
inline std::vector<ForceEstimate> reconstruct_force(
    const std::vector<TimedBelief>& beliefs, const ModelVariant& variant) {
  std::vector<ForceEstimate> out;
  out.reserve(beliefs.size());
  for (const TimedBelief& tb : beliefs) {
    const StateVector& x = tb.belief.x_hat;
    double f = 0.0;
    if (variant.is_drm()) {
      const double s = std::max(x(0), 0.0);
      const double root = std::sqrt(s);
      f = x(2) * s * root + x(3) * root * x(1);
    } else {
      f = x(2) * x(0) + x(3) * x(1);
    }
    out.push_back({tb.t, f});
  }
  return out;
}

}  // namespace palp
