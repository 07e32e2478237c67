#pragma once

// Absorption forward models: optical depth arithmetic, multi-line Lorentzian
// transmission spectra, atom counting from absorbed pulse energy, column
// density OD estimates and stroboscopic photon-count simulation.

#include <cfloat>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "atomic_data.hpp"
#include "constants.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "sequence.hpp"

namespace hcf {

// ---------------------------------------------------------------------------
// OD arithmetic

/// -ln(I_out / I_in). Returns nullopt for I_out = 0: the measurement is
/// saturated and only bounds the OD from below.
inline std::optional<double> optical_depth(double intensity_in, double intensity_out) {
  if (!(intensity_in > 0)) throw DomainError("intensity_in must be > 0");
  if (!(intensity_out >= 0)) throw DomainError("intensity_out must be >= 0");
  if (intensity_out == 0.0) return std::nullopt;
  return -std::log(intensity_out / intensity_in);
}

struct Transmission {
  double value = 1.0;
  bool saturated = false;  // exp(-od) below the smallest normal double
};

inline Transmission transmission_checked(double od) {
  const double t = std::exp(-od);
  if (t < DBL_MIN) return {0.0, true};
  return {t, false};
}

inline double transmission(double od) { return transmission_checked(od).value; }

/// OD of an inhomogeneously broadened line: od_raw * gamma_hom / gamma_inh.
inline double effective_od(double od_raw, double gamma_hom, double gamma_inh) {
  if (!(gamma_hom > 0)) throw DomainError("gamma_hom must be > 0");
  if (gamma_inh < gamma_hom) throw DomainError("gamma_inh must be >= gamma_hom");
  return od_raw * gamma_hom / gamma_inh;
}

// ---------------------------------------------------------------------------
// Multi-line spectra

struct SpectrumLine {
  int excited_F = 0;
  double od = 0.0;                // peak OD of the homogeneous line
  double center_detuning = 0.0;   // Hz
};

struct SpectrumModel {
  std::vector<SpectrumLine> lines;
  double linewidth_fwhm = 6.0666e6;  // Hz, Lorentzian FWHM
  double frequency_offset = 0.0;     // Hz, global shift
  double doppler_fwhm = 0.0;         // Hz; > 0 convolves with a Gaussian
};

inline void validate(const SpectrumModel& m) {
  if (!(m.linewidth_fwhm > 0)) throw ValidationError("linewidth_fwhm must be > 0");
  if (!(m.doppler_fwhm >= 0)) throw ValidationError("doppler_fwhm must be >= 0");
  for (const auto& l : m.lines)
    if (!(l.od >= 0)) throw ValidationError("line od must be >= 0");
}

/// Unit-peak Lorentzian 1 / (1 + (2x / fwhm)^2).
inline double lorentzian(double x, double fwhm) {
  const double u = 2.0 * x / fwhm;
  return 1.0 / (1.0 + u * u);
}

/// Lorentzian convolved with a normalised Gaussian: area is preserved, so the
/// peak drops below 1 once the Doppler width is comparable to the linewidth.
inline double line_profile(double x, double fwhm, double doppler_fwhm) {
  if (doppler_fwhm <= 0.0) return lorentzian(x, fwhm);
  const double sigma = doppler_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
  const double h = std::min(sigma, fwhm) / 8.0;
  const int half = static_cast<int>(std::ceil(6.0 * sigma / h));
  double acc = 0.0, norm = 0.0;
  for (int k = -half; k <= half; ++k) {
    const double u = k * h;
    const double g = std::exp(-0.5 * u * u / (sigma * sigma));
    acc += g * lorentzian(x - u, fwhm);
    norm += g;
  }
  return acc / norm;
}

inline double model_optical_depth(const SpectrumModel& m, double detuning) {
  double od = 0.0;
  for (const auto& l : m.lines)
    od += l.od * line_profile(detuning - l.center_detuning - m.frequency_offset, m.linewidth_fwhm,
                              m.doppler_fwhm);
  return od;
}

/// Modelled transmissions below this are reported as exactly 0 (saturated).
inline constexpr double kTransmissionFloor = 1e-300;

struct SpectrumResult {
  std::vector<double> detuning;
  std::vector<double> transmission;
  std::vector<bool> saturated;
};

inline double model_transmission(const SpectrumModel& m, double detuning) {
  const double t = std::exp(-model_optical_depth(m, detuning));
  return t < kTransmissionFloor ? 0.0 : t;
}

/// T(d) = exp(-sum_i od_i L(d - d_i - offset)).
inline SpectrumResult transmission_spectrum(const SpectrumModel& m,
                                            const std::vector<double>& detunings) {
  validate(m);
  SpectrumResult out;
  out.detuning = detunings;
  out.transmission.reserve(detunings.size());
  out.saturated.reserve(detunings.size());
  for (double d : detunings) {
    if (!std::isfinite(d)) throw DomainError("detuning must be finite");
    const double t = model_transmission(m, d);
    out.transmission.push_back(t);
    out.saturated.push_back(t == 0.0);
  }
  return out;
}

/// Lines F -> F' for every F' reachable from ground_F, centred relative to
/// reference_excited_F, with OD = sigma(F -> F') * column_density.
inline SpectrumModel spectrum_from_column_density(const AtomSpecies& species, int ground_F,
                                                  int reference_excited_F, double column_density) {
  SpectrumModel m;
  m.linewidth_fwhm = species.natural_linewidth;
  for (const auto& e : species.excited_levels) {
    if (relative_strength(species, ground_F, e.F) <= 0.0) continue;
    m.lines.push_back({e.F, resonant_cross_section(species, ground_F, e.F) * column_density,
                       line_detuning(species, ground_F, e.F, reference_excited_F)});
  }
  return m;
}

/// Lines for the given (F', od) pairs, centred relative to reference_excited_F.
inline SpectrumModel spectrum_for_lines(const AtomSpecies& species, int ground_F,
                                        int reference_excited_F, const std::vector<int>& excited,
                                        const std::vector<double>& ods) {
  if (excited.size() != ods.size()) throw ValidationError("one OD per line required");
  SpectrumModel m;
  m.linewidth_fwhm = species.natural_linewidth;
  for (std::size_t i = 0; i < excited.size(); ++i)
    m.lines.push_back({excited[i], ods[i],
                       line_detuning(species, ground_F, excited[i], reference_excited_F)});
  return m;
}

/// Detuning at which a single line of the given OD transmits 1/2:
/// (fwhm / 2) sqrt(od / ln 2 - 1). Zero when the line never reaches 1/2.
inline double half_transmission_detuning(double od, double fwhm) {
  const double arg = od / std::log(2.0) - 1.0;
  return arg > 0 ? 0.5 * fwhm * std::sqrt(arg) : 0.0;
}

// ---------------------------------------------------------------------------
// Atom number from absorbed energy

struct TransmissionTrace {
  std::vector<double> time;          // s
  std::vector<double> power_reference;  // W, no atoms
  std::vector<double> power_atoms;      // W, with atoms
  std::vector<double> stderr_reference;  // optional, W
  std::vector<double> stderr_atoms;      // optional, W
  double probe_wavelength = 780.241209686e-9;  // m
};

inline void validate(const TransmissionTrace& t) {
  const auto n = t.time.size();
  if (n < 2) throw DataError("trace needs at least two samples");
  if (t.power_reference.size() != n || t.power_atoms.size() != n)
    throw DataError("trace columns differ in length");
  if (!t.stderr_reference.empty() && t.stderr_reference.size() != n)
    throw DataError("stderr_reference length mismatch");
  if (!t.stderr_atoms.empty() && t.stderr_atoms.size() != n)
    throw DataError("stderr_atoms length mismatch");
  for (std::size_t i = 1; i < n; ++i)
    if (!(t.time[i] > t.time[i - 1]))
      throw DataError("time grid not strictly increasing at row " + std::to_string(i));
  for (std::size_t i = 0; i < n; ++i)
    if (t.power_reference[i] < 0 || t.power_atoms[i] < 0)
      throw DataError("negative power at row " + std::to_string(i));
  if (!(t.probe_wavelength > 0)) throw DataError("probe wavelength must be > 0");
}

struct AtomNumberResult {
  double atom_number = 0.0;
  double absorbed_energy = 0.0;  // J
  double noise_floor = 0.0;      // J
};

/// E_abs = integral of (P_ref - P_atoms) dt (trapezoidal),
/// N = E_abs / (photons_per_atom * h c / lambda).
///
/// The noise floor is 3 sigma of the integral when per-sample standard errors
/// are present, and never less than relative_floor * integral of P_ref dt. A
/// negative E_abs beyond it means the traces are inconsistent.
inline AtomNumberResult atom_number_from_absorption(const TransmissionTrace& trace,
                                                    double photons_per_atom = 2.0,
                                                    double relative_floor = 1e-3) {
  validate(trace);
  if (!(photons_per_atom > 0)) throw DomainError("photons_per_atom must be > 0");
  const auto n = trace.time.size();
  double absorbed = 0.0, reference = 0.0, variance = 0.0;
  const bool have_err = !trace.stderr_reference.empty() || !trace.stderr_atoms.empty();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double dt = trace.time[i + 1] - trace.time[i];
    const double d0 = trace.power_reference[i] - trace.power_atoms[i];
    const double d1 = trace.power_reference[i + 1] - trace.power_atoms[i + 1];
    absorbed += 0.5 * dt * (d0 + d1);
    reference += 0.5 * dt * (trace.power_reference[i] + trace.power_reference[i + 1]);
  }
  if (have_err) {
    for (std::size_t i = 0; i < n; ++i) {
      // trapezoid weight of sample i
      const double left = i > 0 ? trace.time[i] - trace.time[i - 1] : 0.0;
      const double right = i + 1 < n ? trace.time[i + 1] - trace.time[i] : 0.0;
      const double w = 0.5 * (left + right);
      const double er = trace.stderr_reference.empty() ? 0.0 : trace.stderr_reference[i];
      const double ea = trace.stderr_atoms.empty() ? 0.0 : trace.stderr_atoms[i];
      variance += w * w * (er * er + ea * ea);
    }
  }
  AtomNumberResult res;
  res.absorbed_energy = absorbed;
  res.noise_floor = std::max(3.0 * std::sqrt(variance), relative_floor * std::abs(reference));
  if (absorbed < -res.noise_floor)
    throw DataError("inconsistent traces: absorbed energy is negative beyond the noise floor");
  res.atom_number =
      absorbed / (photons_per_atom * constants::photon_energy(trace.probe_wavelength));
  return res;
}

// ---------------------------------------------------------------------------
// Column OD estimate
//
// Atoms: N spread uniformly over the fiber length, transverse density
// exp(-r^2 / a^2) with a = cloud_width_1e_full / 2. Probe: Gaussian intensity
// exp(-2 r^2 / w^2) with w = probe_waist. The intensity-weighted column density
//   int I(r) n_col(r) dA / int I(r) dA = 2 N / (pi (w^2 + 2 a^2))
// times sigma is the on-resonance OD. The fiber length cancels.

inline double column_overlap_factor(double cloud_width_1e_full, double probe_waist) {
  const double a = 0.5 * cloud_width_1e_full;
  return 2.0 / (constants::pi * (probe_waist * probe_waist + 2.0 * a * a));
}

inline double column_od_estimate(double n_atoms, double cloud_width_1e_full, double probe_waist,
                                 double sigma, double fiber_length) {
  if (!(n_atoms >= 0)) throw DomainError("n_atoms must be >= 0");
  if (!(cloud_width_1e_full > 0) || !(probe_waist > 0) || !(sigma > 0) || !(fiber_length > 0))
    throw DomainError("widths, cross-section and length must be > 0");
  return sigma * n_atoms * column_overlap_factor(cloud_width_1e_full, probe_waist);
}

// ---------------------------------------------------------------------------
// Photon counting

/// Probe photons incident per gate: P tau lambda / (h c).
inline double photons_per_gate(double power, double gate_time, double wavelength) {
  return power * gate_time / constants::photon_energy(wavelength);
}

struct ProbeCounts {
  std::vector<double> detuning;
  std::vector<double> transmission;
  std::vector<double> expected;
  std::vector<long long> sampled;
  int n_gates = 0;
  double incident_per_gate = 0.0;
};

/// Poisson draw with the given mean from stream (seed, index).
inline long long poisson_sample(double mean, std::uint64_t seed, std::uint64_t index) {
  if (!(mean > 0)) return 0;
  CounterRng rng(seed, index, StreamDomain::probe_counts);
  std::poisson_distribution<long long> dist(mean);
  return dist(rng);
}

inline ProbeCounts simulate_probe_counts(const SpectrumModel& model, const ProbeSequenceConfig& seq,
                                         const std::vector<double>& detunings,
                                         double detector_efficiency, std::uint64_t seed,
                                         double probe_wavelength = 780.241209686e-9) {
  validate(seq);
  if (!(detector_efficiency > 0 && detector_efficiency <= 1))
    throw DomainError("detector_efficiency must lie in (0, 1]");
  const auto spectrum = transmission_spectrum(model, detunings);
  ProbeCounts out;
  out.detuning = detunings;
  out.transmission = spectrum.transmission;
  out.n_gates = seq.n_gates;
  out.incident_per_gate = photons_per_gate(seq.probe_power, seq.gate_time, probe_wavelength);
  const double scale = out.incident_per_gate * detector_efficiency * seq.n_gates;
  for (std::size_t i = 0; i < detunings.size(); ++i) {
    const double mean = scale * spectrum.transmission[i];
    out.expected.push_back(mean);
    out.sampled.push_back(poisson_sample(mean, seed, i));
  }
  return out;
}

}  // namespace hcf
