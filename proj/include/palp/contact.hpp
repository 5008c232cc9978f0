#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <variant>

// Contact-force laws for a rigid spherical indenter on a viscoelastic
// half-space: the point-contact Kelvin-Voigt law and the closed-form
// foundation model obtained by projecting the 3D spherical contact onto a
// 1D bed of independent spring-damper elements.
//
// Units are millimetres, newtons, and seconds throughout the library, so
// stiffness is N/mm (or N/mm^1.5) and damping N*s/mm (or N*s/mm^0.5).

namespace palp {

/// Physical description of an incompressible soft specimen plus the
/// indenter geometry acting on it.
struct MaterialSpec {
  double G;    // shear elastic modulus [N/mm^2]
  double eta;  // viscosity [N*s/mm^2]
  double nu;   // Poisson ratio; only 0.5 (incompressible) is supported
  double R;    // indenter sphere radius [mm]

  MaterialSpec(double shear_modulus, double viscosity, double poisson_ratio,
               double radius)
      : G(shear_modulus), eta(viscosity), nu(poisson_ratio), R(radius) {
    if (!(G > 0.0)) throw std::invalid_argument("MaterialSpec: G must be > 0");
    if (!(eta >= 0.0))
      throw std::invalid_argument("MaterialSpec: eta must be >= 0");
    if (nu != 0.5)
      throw std::invalid_argument(
          "MaterialSpec: only incompressible materials (nu == 0.5) are "
          "supported");
    if (!(R > 0.0)) throw std::invalid_argument("MaterialSpec: R must be > 0");
  }
};

/// Lumped coefficients of the linear spring-damper (Kelvin-Voigt) law.
struct KvParams {
  double k;  // stiffness [N/mm]
  double c;  // damping [N*s/mm]

  KvParams() : k(0.0), c(0.0) {}
  KvParams(double stiffness, double damping) : k(stiffness), c(damping) {
    if (!(k >= 0.0)) throw std::invalid_argument("KvParams: k must be >= 0");
    if (!(c >= 0.0)) throw std::invalid_argument("KvParams: c must be >= 0");
  }
};

/// Lumped coefficients of the spherical-foundation law
/// F = kappa * d^{3/2} + lambda * d^{1/2} * d_dot.
struct DrmParams {
  double kappa;   // nonlinear stiffness [N/mm^{3/2}]
  double lambda;  // nonlinear damping [N*s/mm^{1/2}]

  DrmParams() : kappa(0.0), lambda(0.0) {}
  DrmParams(double kappa_, double lambda_) : kappa(kappa_), lambda(lambda_) {
    if (!(kappa >= 0.0))
      throw std::invalid_argument("DrmParams: kappa must be >= 0");
    if (!(lambda >= 0.0))
      throw std::invalid_argument("DrmParams: lambda must be >= 0");
  }
};

/// Either contact law; which alternative is held decides the model family.
using ContactParams = std::variant<KvParams, DrmParams>;

/// Kelvin-Voigt contact force. Out of contact (d < 0) the material exerts
/// no force; at d == 0 the contact branch applies, so the damping term
/// alone survives.
inline double kv_force(const KvParams& p, double d, double d_dot) {
  if (d < 0.0) return 0.0;
  return p.k * d + p.c * d_dot;
}

/// Spherical-foundation contact force, same branch convention as kv_force.
/// No tensile clamp is applied: a fast retraction may yield negative force.
inline double drm_force(const DrmParams& p, double d, double d_dot) {
  if (d < 0.0) return 0.0;
  const double root_d = std::sqrt(d);
  return p.kappa * d * root_d + p.lambda * root_d * d_dot;
}

inline double contact_force(const ContactParams& params, double d,
                            double d_dot) {
  return std::visit(
      [&](const auto& p) {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, KvParams>)
          return kv_force(p, d, d_dot);
        else
          return drm_force(p, d, d_dot);
      },
      params);
}

/// Map the physical material description onto the foundation coefficients:
/// kappa = (16 G / 3) sqrt(R), lambda = 8 eta sqrt(R).
inline DrmParams drm_params_from_material(const MaterialSpec& m) {
  const double root_r = std::sqrt(m.R);
  return DrmParams{16.0 * m.G / 3.0 * root_r, 8.0 * m.eta * root_r};
}

/// Brute-force elastic-foundation sum: the sphere is projected onto an arc
/// of radius R/2, approximated by a parabola, and the contact patch
/// [-a, a] with a = sqrt(R d) is covered by spring-damper elements of
/// width ~dx (midpoint rule, each contributing [4 G d_i + 4 eta d_dot] dx
/// while compressed). Serves as the convergence oracle for drm_force.
inline double drm_discrete_force(const MaterialSpec& m, double d, double d_dot,
                                 double dx) {
  if (d < 0.0)
    throw std::invalid_argument("drm_discrete_force: d must be >= 0");
  if (!(dx > 0.0))
    throw std::invalid_argument("drm_discrete_force: dx must be > 0");
  if (d == 0.0) return 0.0;

  const double r1 = m.R / 2.0;               // radius of the projected arc
  const double a = std::sqrt(2.0 * r1 * d);  // contact half-width
  const long n = std::max(1L, std::lround(2.0 * a / dx));
  const double h = 2.0 * a / static_cast<double>(n);

  double force = 0.0;
  for (long i = 0; i < n; ++i) {
    const double x = -a + (static_cast<double>(i) + 0.5) * h;
    const double d_i = d - x * x / (2.0 * r1);
    if (d_i <= 0.0) continue;
    force += (4.0 * m.G * d_i + 4.0 * m.eta * d_dot) * h;
  }
  return force;
}

}  // namespace palp
