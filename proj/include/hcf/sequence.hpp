#pragma once

#include "errors.hpp"

namespace hcf {

/// Stroboscopic probing: the FORT is modulated at modulation_frequency and
/// switched off for off_window per period; photons are counted during gate_time.
struct ProbeSequenceConfig {
  double modulation_frequency = 250e3;  // Hz
  double off_window = 800e-9;           // s
  double gate_time = 680e-9;            // s
  int n_gates = 50;
  double probe_power = 20e-12;          // W

  double period() const { return 1.0 / modulation_frequency; }
  double on_window() const { return period() - off_window; }
};

inline void validate(const ProbeSequenceConfig& s) {
  if (!(s.modulation_frequency > 0)) throw ValidationError("modulation_frequency_hz must be > 0");
  if (!(s.off_window >= 0)) throw ValidationError("off_window_s must be >= 0");
  if (!(s.gate_time >= 0)) throw ValidationError("gate_time_s must be >= 0");
  if (s.gate_time > s.off_window) throw ValidationError("gate_time_s must not exceed off_window_s");
  if (s.off_window > 1.0 / s.modulation_frequency)
    throw ValidationError("off_window_s must not exceed the modulation period");
  if (s.n_gates < 1) throw ValidationError("n_gates must be >= 1");
  if (!(s.probe_power >= 0)) throw ValidationError("probe_power_W must be >= 0");
}

}  // namespace hcf
