#pragma once

// CODATA 2018 exact / recommended values, SI units.
namespace hcf::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double boltzmann = 1.380649e-23;        // J/K
inline constexpr double planck = 6.62607015e-34;         // J s
inline constexpr double speed_of_light = 299792458.0;    // m/s
inline constexpr double standard_gravity = 9.80665;      // m/s^2

inline constexpr double photon_energy(double wavelength) {
  return planck * speed_of_light / wavelength;
}

}  // namespace hcf::constants
