#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "palp/contact.hpp"
#include "palp/errors.hpp"

// Ground-truth simulator of the indenter + Cartesian-impedance-controller +
// soft-body system. The contact axis is z, pointing from the soft body
// toward the robot: the undeformed surface sits at surface_z, penetration is
// d = surface_z - z_ee, and hence z_ee_dot = -d_dot while in contact.
// Pressing deeper means commanding z_d below the surface.

namespace palp {

enum class ControllerMode { Full, Simplified };

/// Scalar impedance gains in the contact direction.
struct ImpedanceGains {
  double Lambda33 = 2e-4;  // apparent inertia [N*s^2/mm]
  double D33 = 0.02;       // damping [N*s/mm]
  double K33 = 5.0;        // stiffness [N/mm]
};

/// Two-tone sinusoidal desired trajectory
/// z_d(t) = z0 + z1 sin(2 pi f1 t) + z2 sin(2 pi f2 t).
struct Trajectory {
  double z0 = -4.5;  // offset [mm]
  double z1 = 2.5;   // first amplitude [mm]
  double z2 = 1.5;   // second amplitude [mm]
  double f1 = 2.0;   // first frequency [Hz]
  double f2 = 4.0;   // second frequency [Hz]
};

struct TrajectoryPoint {
  double z_d;       // [mm]
  double z_d_dot;   // [mm/s]
  double z_d_ddot;  // [mm/s^2]
};

inline TrajectoryPoint desired_trajectory(const Trajectory& traj, double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double w1 = two_pi * traj.f1;
  const double w2 = two_pi * traj.f2;
  const double s1 = std::sin(w1 * t);
  const double s2 = std::sin(w2 * t);
  const double c1 = std::cos(w1 * t);
  const double c2 = std::cos(w2 * t);
  return {traj.z0 + traj.z1 * s1 + traj.z2 * s2,
          traj.z1 * w1 * c1 + traj.z2 * w2 * c2,
          -traj.z1 * w1 * w1 * s1 - traj.z2 * w2 * w2 * s2};
}

/// Additive white Gaussian noise on the measured channels.
struct NoiseSpec {
  double sigma_vel = 0.05;    // velocity measurement std [mm/s]
  double sigma_force = 0.05;  // F/T measurement std [N]
  std::uint64_t seed = 1;
};

struct PlantConfig {
  double m_I = 2e-4;  // indenter mass [N*s^2/mm]
  ImpedanceGains gains{};
  Trajectory trajectory{};
  ContactParams truth_model = DrmParams{0.742, 0.038};
  ControllerMode controller_mode = ControllerMode::Full;
  double surface_z = 0.0;    // undeformed surface height [mm]
  double dt_sim = 1e-4;      // integrator step [s]
  double sample_rate = 500;  // trace output rate [Hz]
  NoiseSpec noise{};
  double d0 = 3.5;      // initial penetration [mm]
  double d_dot0 = 0.0;  // initial penetration rate [mm/s]
};

/// One timestamped record of the desired trajectory, end-effector
/// kinematics, truth contact state, and (noisy) measurements.
struct TraceSample {
  double t;               // [s]
  double z_d;             // desired position [mm]
  double z_d_dot;         // [mm/s]
  double z_d_ddot;        // [mm/s^2]
  double z_ee;            // true end-effector position [mm]
  double z_ee_dot_meas;   // measured end-effector velocity [mm/s]
  double d_true;          // true penetration [mm]
  double d_dot_true;      // [mm/s]
  double F_contact_true;  // true material force [N]
  double F_ft_meas;       // simulated F/T reading [N]
};

inline void validate(const PlantConfig& cfg) {
  if (!(cfg.m_I > 0.0))
    throw std::invalid_argument("PlantConfig: m_I must be > 0");
  if (!(cfg.gains.Lambda33 >= 0.0) || !(cfg.gains.D33 >= 0.0) ||
      !(cfg.gains.K33 > 0.0))
    throw std::invalid_argument(
        "PlantConfig: gains require Lambda33 >= 0, D33 >= 0, K33 > 0");
  if (!(cfg.trajectory.f1 > 0.0) || !(cfg.trajectory.f2 > 0.0))
    throw std::invalid_argument("PlantConfig: frequencies must be > 0");
  if (!(cfg.dt_sim > 0.0))
    throw std::invalid_argument("PlantConfig: dt_sim must be > 0");
  if (!(cfg.sample_rate > 0.0) || cfg.sample_rate * cfg.dt_sim > 1.0)
    throw std::invalid_argument(
        "PlantConfig: need 0 < sample_rate and sample_rate * dt_sim <= 1");
  if (!(cfg.noise.sigma_vel >= 0.0) || !(cfg.noise.sigma_force >= 0.0))
    throw std::invalid_argument("PlantConfig: noise sigmas must be >= 0");
  if (cfg.d0 < 0.0)
    throw std::invalid_argument("PlantConfig: d0 must be >= 0 (in contact)");
}

/// Penetration acceleration of the coupled indenter/controller/material
/// system while in contact. Full mode keeps the controller's apparent
/// inertia; simplified mode drops the acceleration feedback term.
inline double contact_accel(const PlantConfig& cfg, double d, double d_dot,
                            double t) {
  if (d < 0.0) throw LossOfContactError(t);
  const TrajectoryPoint tp = desired_trajectory(cfg.trajectory, t);
  const double z_ee = cfg.surface_z - d;
  const double z_tilde = tp.z_d - z_ee;
  const double f_material = contact_force(cfg.truth_model, d, d_dot);
  const ImpedanceGains& g = cfg.gains;
  if (cfg.controller_mode == ControllerMode::Full) {
    return -(g.Lambda33 * tp.z_d_ddot + g.D33 * tp.z_d_dot + g.K33 * z_tilde +
             g.D33 * d_dot + f_material) /
           (cfg.m_I + g.Lambda33);
  }
  return -(g.D33 * tp.z_d_dot + g.K33 * z_tilde + g.D33 * d_dot + f_material) /
         cfg.m_I;
}

/// Deterministic Gaussian sampler (Box-Muller over mt19937_64), so traces
/// are reproducible independently of the standard library's distribution
/// implementation.
class GaussianSampler {
 public:
  explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0, 1], u2 in [0, 1)
    const double u1 =
        (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Overwrite the measured channels with fresh Gaussian noise: the velocity
/// channel is rebuilt from -d_dot_true, the force channel adds noise onto
/// the incoming F_ft_meas, which must hold the noise-free F/T value
/// (material force + indenter inertia), as emitted by simulate. Truth
/// columns are untouched; two draws per sample (velocity first), so the
/// result is a pure function of the trace and the seed.
inline std::vector<TraceSample> add_noise(std::vector<TraceSample> trace,
                                          const NoiseSpec& noise) {
  GaussianSampler gauss(noise.seed);
  for (TraceSample& s : trace) {
    const double g_vel = gauss();
    const double g_force = gauss();
    s.z_ee_dot_meas = -s.d_dot_true + noise.sigma_vel * g_vel;
    s.F_ft_meas += noise.sigma_force * g_force;
  }
  return trace;
}

namespace detail {

inline TraceSample make_sample(const PlantConfig& cfg, double t, double d,
                               double d_dot) {
  const TrajectoryPoint tp = desired_trajectory(cfg.trajectory, t);
  const double d_ddot = contact_accel(cfg, d, d_dot, t);
  const double f_material = contact_force(cfg.truth_model, d, d_dot);
  TraceSample s{};
  s.t = t;
  s.z_d = tp.z_d;
  s.z_d_dot = tp.z_d_dot;
  s.z_d_ddot = tp.z_d_ddot;
  s.z_ee = cfg.surface_z - d;
  s.z_ee_dot_meas = -d_dot;  // noise-free; add_noise overwrites
  s.d_true = d;
  s.d_dot_true = d_dot;
  s.F_contact_true = f_material;
  s.F_ft_meas = f_material + cfg.m_I * d_ddot;  // F/T sees inertia too
  return s;
}

}  // namespace detail

/// Integrate the contact ODE with fixed-step RK4 and emit a noisy trace at
/// sample_rate. Deterministic given cfg (noise seed included). Throws
/// LossOfContactError if the indenter separates and NumericalError if the
/// state stops being finite (dt_sim too large).
inline std::vector<TraceSample> simulate(const PlantConfig& cfg,
                                         double duration) {
  validate(cfg);
  if (!(duration > 0.0))
    throw std::invalid_argument("simulate: duration must be > 0");

  const double dt = cfg.dt_sim;
  const long steps_per_sample =
      std::max(1L, std::lround(1.0 / (cfg.sample_rate * dt)));
  const long total_steps = std::lround(duration / dt);

  auto accel = [&cfg](double d, double v, double t) {
    return contact_accel(cfg, d, v, t);
  };

  double d = cfg.d0;
  double v = cfg.d_dot0;

  std::vector<TraceSample> trace;
  trace.reserve(static_cast<std::size_t>(total_steps / steps_per_sample) + 2);
  trace.push_back(detail::make_sample(cfg, 0.0, d, v));

  for (long i = 0; i < total_steps; ++i) {
    const double t = static_cast<double>(i) * dt;

    const double k1d = v;
    const double k1v = accel(d, v, t);
    const double k2d = v + 0.5 * dt * k1v;
    const double k2v = accel(d + 0.5 * dt * k1d, v + 0.5 * dt * k1v, t + 0.5 * dt);
    const double k3d = v + 0.5 * dt * k2v;
    const double k3v = accel(d + 0.5 * dt * k2d, v + 0.5 * dt * k2v, t + 0.5 * dt);
    const double k4d = v + dt * k3v;
    const double k4v = accel(d + dt * k3d, v + dt * k3v, t + dt);

    d += dt / 6.0 * (k1d + 2.0 * k2d + 2.0 * k3d + k4d);
    v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);

    const double t_next = static_cast<double>(i + 1) * dt;
    if (!std::isfinite(d) || !std::isfinite(v))
      throw NumericalError("simulate: state no longer finite (dt_sim too large?)",
                           t_next);
    if (d < 0.0) throw LossOfContactError(t_next);

    if ((i + 1) % steps_per_sample == 0)
      trace.push_back(detail::make_sample(cfg, t_next, d, v));
  }

  return add_noise(std::move(trace), cfg.noise);
}

}  // namespace palp
