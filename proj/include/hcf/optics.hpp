#pragma once

// Far-off-resonant dipole trap guided by a hollow-core fiber.
//
// Coordinates: z points up (against gravity). The fiber occupies z <= tip_z,
// its core is the cylinder r < core_radius. Inside the core the trap mode is a
// non-diverging Gaussian with 1/e^2 intensity radius w0; above the tip it
// expands as w(z) = w0 sqrt(1 + ((z - tip_z) / z_eff)^2).

#include <cmath>

#include "constants.hpp"
#include "errors.hpp"
#include "vec3.hpp"

namespace hcf {

enum class DivergenceModel {
  na_pinned,    // z_eff = w0 / NA
  diffraction,  // z_eff = pi w0^2 / lambda
};

struct BeamGeometry {
  double waist_in_fiber = 2.75e-6;    // m, 1/e^2 intensity radius
  double numerical_aperture = 0.1;
  double fiber_tip_z = 0.0;           // m
  double fiber_length = 0.14;         // m
  double core_radius = 3.5e-6;        // m
  double outer_radius = 65e-6;        // m, extent of the front facet
  double trap_wavelength = 855e-9;    // m, only used by the diffraction model
  DivergenceModel divergence = DivergenceModel::na_pinned;
};

struct TrapConfig {
  BeamGeometry geometry;
  double trap_depth = constants::boltzmann * 5e-3;  // J, U0 > 0
  double gravity = constants::standard_gravity;     // m/s^2 along -z
  // Linear power-to-depth calibration (270 mW coupled -> 5 mK).
  double depth_K_per_W = 5e-3 / 0.27;
  bool fort_on = true;
};

inline void validate(const BeamGeometry& g) {
  if (!(g.waist_in_fiber > 0)) throw ValidationError("waist_m must be > 0");
  if (!(g.numerical_aperture > 0 && g.numerical_aperture < 1))
    throw ValidationError("numerical_aperture must lie in (0, 1)");
  if (!(g.core_radius >= g.waist_in_fiber / 2))
    throw ValidationError("core_radius_m must be >= waist_m / 2");
  if (!(g.fiber_length > 0)) throw ValidationError("fiber_length_m must be > 0");
  if (!(g.outer_radius >= g.core_radius))
    throw ValidationError("outer_radius_m must be >= core_radius_m");
  if (!(g.trap_wavelength > 0)) throw ValidationError("trap_wavelength_m must be > 0");
}

inline void validate(const TrapConfig& t) {
  validate(t.geometry);
  if (!(t.trap_depth >= 0)) throw ValidationError("trap_depth_K must be >= 0");
  if (!(t.gravity >= 0)) throw ValidationError("gravity_m_s2 must be >= 0");
}

inline double trap_depth_from_power(const TrapConfig& t, double coupled_power_W) {
  return constants::boltzmann * t.depth_K_per_W * coupled_power_W;
}

inline double effective_rayleigh_range(const BeamGeometry& g) {
  switch (g.divergence) {
    case DivergenceModel::diffraction:
      return constants::pi * g.waist_in_fiber * g.waist_in_fiber / g.trap_wavelength;
    case DivergenceModel::na_pinned:
      break;
  }
  return g.waist_in_fiber / g.numerical_aperture;
}

inline double beam_waist_at(const BeamGeometry& g, double z) {
  if (z <= g.fiber_tip_z) return g.waist_in_fiber;
  const double u = (z - g.fiber_tip_z) / effective_rayleigh_range(g);
  return g.waist_in_fiber * std::sqrt(1.0 + u * u);
}

/// Dipole term only: -U0 (w0/w)^2 exp(-2 r^2 / w^2). Zero when the FORT is off.
inline double dipole_potential(const TrapConfig& t, double r, double z) {
  if (!t.fort_on || t.trap_depth == 0.0) return 0.0;
  const double w = beam_waist_at(t.geometry, z);
  const double s = t.geometry.waist_in_fiber / w;
  return -t.trap_depth * s * s * std::exp(-2.0 * r * r / (w * w));
}

/// Dipole potential plus gravitational energy m g z.
inline double total_potential(const TrapConfig& t, double mass, const Vec3& p) {
  return dipole_potential(t, std::sqrt(p.radial2()), p.z) + mass * t.gravity * p.z;
}

struct FieldSample {
  double potential = 0.0;  // J, dipole + gravity
  Vec3 force;              // N
};

/// Potential and force together; shares the exponential between the two.
inline FieldSample field_at(const TrapConfig& t, double mass, const Vec3& p) {
  FieldSample out{mass * t.gravity * p.z, {0.0, 0.0, -mass * t.gravity}};
  if (!t.fort_on || t.trap_depth == 0.0) return out;
  const auto& g = t.geometry;
  const double rho2 = p.radial2();
  const double w = beam_waist_at(g, p.z);
  const double w2 = w * w;
  const double s = g.waist_in_fiber / w;
  const double u = -t.trap_depth * s * s * std::exp(-2.0 * rho2 / w2);
  out.potential += u;
  out.force.x += 4.0 * p.x * u / w2;
  out.force.y += 4.0 * p.y * u / w2;
  if (p.z > g.fiber_tip_z) {
    const double z_eff = effective_rayleigh_range(g);
    const double dwdz = g.waist_in_fiber * g.waist_in_fiber * (p.z - g.fiber_tip_z) /
                        (z_eff * z_eff * w);
    out.force.z -= u * dwdz / w * (4.0 * rho2 / w2 - 2.0);
  }
  return out;
}

/// -grad(total_potential), evaluated analytically.
inline Vec3 force(const TrapConfig& t, double mass, const Vec3& p) {
  return field_at(t, mass, p).force;
}

/// Harmonic radial frequency at the bottom of the in-fiber potential, in Hz.
inline double transverse_trap_frequency(const TrapConfig& t, double mass) {
  if (t.trap_depth <= 0.0) return 0.0;
  const double w0 = t.geometry.waist_in_fiber;
  return std::sqrt(4.0 * t.trap_depth / (mass * w0 * w0)) / (2.0 * constants::pi);
}

/// Radial harmonic frequency of the local beam cross-section at height z.
inline double local_transverse_frequency(const TrapConfig& t, double mass, double z) {
  if (t.trap_depth <= 0.0) return 0.0;
  const double w0 = t.geometry.waist_in_fiber;
  const double w = beam_waist_at(t.geometry, z);
  return transverse_trap_frequency(t, mass) * (w0 * w0) / (w * w);
}

/// Height above the tip where the on-axis depth U0 (w0/w)^2 equals threshold.
inline double capture_range(const TrapConfig& t, double threshold_energy) {
  if (!(threshold_energy > 0.0))
    throw DomainError("capture_range threshold must be > 0");
  if (threshold_energy > t.trap_depth)
    throw DomainError("capture_range threshold exceeds the trap depth");
  return effective_rayleigh_range(t.geometry) *
         std::sqrt(t.trap_depth / threshold_energy - 1.0);
}

}  // namespace hcf
