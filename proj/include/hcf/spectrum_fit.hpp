#pragma once

// OD extraction from transmission or photon-count spectra.
//
// Parameter vector layout: [od_0 .. od_{L-1}, linewidth_fwhm, frequency_offset,
// amplitude], where amplitude is the expected signal at unit transmission
// (1 for transmission data, photons x efficiency x gates for counts).

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fitting.hpp"
#include "spectroscopy.hpp"

namespace hcf {

enum class SpectrumDataKind { counts, transmission };

/// f(d) = amplitude * exp(-sum_i od_i L(d - c_i - offset)) with the line
/// centres and Doppler width taken from a template model.
struct SpectrumCurve {
  std::vector<double> centers;
  double doppler_fwhm = 0.0;

  std::size_t n_lines() const { return centers.size(); }

  void operator()(std::span<const double> x, std::span<const double> theta,
                  std::span<double> out) const {
    const auto n = centers.size();
    const double width = theta[n];
    const double offset = theta[n + 1];
    const double amplitude = theta[n + 2];
    for (std::size_t i = 0; i < x.size(); ++i) {
      double od = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        od += theta[l] * line_profile(x[i] - centers[l] - offset, width, doppler_fwhm);
      const double t = std::exp(-od);
      out[i] = amplitude * (t < kTransmissionFloor ? 0.0 : t);
    }
  }
};

struct SpectrumFitProblem {
  std::vector<double> detuning;   // Hz
  std::vector<double> observed;   // counts or transmission
  std::vector<double> weight;     // empty: Poisson 1/max(count, 1) for counts, 1 otherwise
  SpectrumDataKind kind = SpectrumDataKind::counts;
  SpectrumModel template_model;   // line centres, linewidth, offset, Doppler width
  double amplitude = 1.0;
  std::vector<double> line_strengths;  // relative S per line, for the default guess

  std::vector<bool> fit_od;       // empty: every line free
  bool fit_linewidth = false;
  bool fit_offset = false;
  bool fit_amplitude = false;

  double od_upper = 1e5;
  std::optional<std::vector<double>> initial_guess;  // full parameter vector
};

struct SpectrumFitSetup {
  CurveData data;
  ParameterSet params;
  SpectrumCurve model;
};

inline std::vector<double> default_weights(const SpectrumFitProblem& p) {
  std::vector<double> w(p.observed.size(), 1.0);
  if (p.kind == SpectrumDataKind::counts)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / std::max(p.observed[i], 1.0);
  return w;
}

/// OD guess proportional to the line strengths, scaled so the outermost lines
/// reproduce the observed half-transmission edges of the absorption window.
inline std::vector<double> default_od_guess(const SpectrumFitProblem& p) {
  const auto& lines = p.template_model.lines;
  const auto n = lines.size();
  std::vector<double> strength = p.line_strengths;
  if (strength.size() != n) strength.assign(n, 1.0);
  const double gamma = p.template_model.linewidth_fwhm;
  const double offset = p.template_model.frequency_offset;
  const double amp = p.kind == SpectrumDataKind::counts ? p.amplitude : 1.0;

  double lo = 0.0, hi = 0.0;
  bool any = false;
  std::size_t i_min = 0;
  for (std::size_t i = 0; i < p.detuning.size(); ++i) {
    const double t = p.observed[i] / amp;
    if (p.observed[i] < p.observed[i_min]) i_min = i;
    if (t < 0.5) {
      lo = any ? std::min(lo, p.detuning[i]) : p.detuning[i];
      hi = any ? std::max(hi, p.detuning[i]) : p.detuning[i];
      any = true;
    }
  }

  std::size_t left = 0, right = 0;
  for (std::size_t l = 0; l < n; ++l) {
    if (strength[l] <= 0) continue;
    if (strength[left] <= 0 || lines[l].center_detuning < lines[left].center_detuning) left = l;
    if (strength[right] <= 0 || lines[l].center_detuning > lines[right].center_detuning) right = l;
  }

  double scale = 0.0;
  int votes = 0;
  auto invert = [&](double edge, std::size_t l) {
    const double u = 2.0 * (edge - lines[l].center_detuning - offset) / gamma;
    scale += std::log(2.0) * (1.0 + u * u) / strength[l];
    ++votes;
  };
  if (any) {
    if (hi > lines[right].center_detuning + offset) invert(hi, right);
    if (lo < lines[left].center_detuning + offset) invert(lo, left);
  }
  if (votes == 0 && !p.detuning.empty()) {
    // no half-transmission edge: attribute the deepest point to its nearest line
    const double t = std::max(p.observed[i_min] / amp, 1e-300);
    std::size_t nearest = left;
    for (std::size_t l = 0; l < n; ++l)
      if (strength[l] > 0 &&
          std::abs(p.detuning[i_min] - lines[l].center_detuning) <
              std::abs(p.detuning[i_min] - lines[nearest].center_detuning))
        nearest = l;
    const double od = std::max(-std::log(std::min(t, 1.0)), 0.0);
    const double u = 2.0 * (p.detuning[i_min] - lines[nearest].center_detuning - offset) / gamma;
    scale = od * (1.0 + u * u) / strength[nearest];
    votes = 1;
  }
  scale /= std::max(votes, 1);
  std::vector<double> od(n);
  for (std::size_t l = 0; l < n; ++l) od[l] = std::clamp(scale * strength[l], 0.0, p.od_upper);
  return od;
}

inline SpectrumFitSetup prepare_spectrum_fit(const SpectrumFitProblem& p) {
  validate(p.template_model);
  const auto& lines = p.template_model.lines;
  const auto n = lines.size();
  if (n == 0) throw ValidationError("spectrum template has no lines");
  if (p.detuning.size() != p.observed.size())
    throw ValidationError("detuning and observed columns differ in length");
  if (!p.weight.empty() && p.weight.size() != p.observed.size())
    throw ValidationError("weight column length mismatch");
  if (!p.fit_od.empty() && p.fit_od.size() != n)
    throw ValidationError("fit_od mask needs one entry per line");

  const double gamma = p.template_model.linewidth_fwhm;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (std::abs(lines[a].center_detuning - lines[b].center_detuning) < 0.01 * gamma)
        throw DegenerateFitError("od_Fp" + std::to_string(lines[b].excited_F),
                                 "line centre coincides with F'=" +
                                     std::to_string(lines[a].excited_F));

  SpectrumFitSetup s;
  s.data.x = p.detuning;
  s.data.y = p.observed;
  s.data.weight = p.weight.empty() ? default_weights(p) : p.weight;
  for (const auto& l : lines) s.model.centers.push_back(l.center_detuning);
  s.model.doppler_fwhm = p.template_model.doppler_fwhm;

  std::vector<double> init;
  if (p.initial_guess) {
    if (p.initial_guess->size() != n + 3)
      throw ValidationError("initial_guess needs " + std::to_string(n + 3) + " entries");
    init = *p.initial_guess;
  } else {
    init = default_od_guess(p);
    init.push_back(gamma);
    init.push_back(p.template_model.frequency_offset);
    init.push_back(p.kind == SpectrumDataKind::counts ? p.amplitude : 1.0);
  }
  for (std::size_t l = 0; l < n; ++l)
    s.params.add("od_Fp" + std::to_string(lines[l].excited_F), init[l], 0.0, p.od_upper,
                 p.fit_od.empty() ? true : static_cast<bool>(p.fit_od[l]), 1.0);
  s.params.add("linewidth_fwhm_hz", init[n], 0.05 * gamma, 100.0 * gamma, p.fit_linewidth, gamma);
  s.params.add("frequency_offset_hz", init[n + 1], -50.0 * gamma, 50.0 * gamma, p.fit_offset, gamma);
  const double amp0 = std::max(init[n + 2], 1e-300);
  s.params.add("amplitude", init[n + 2], 0.0, 1e3 * amp0, p.fit_amplitude, amp0);
  return s;
}

inline FitResult fit_spectrum(const SpectrumFitProblem& problem, const FitOptions& options = {}) {
  const auto s = prepare_spectrum_fit(problem);
  return fit_curve(s.data, s.model, s.params, options);
}

struct UncertaintyMethod {
  enum class Kind { covariance, bootstrap } kind = Kind::covariance;
  int n = 200;
  std::uint64_t seed = 1;
};

struct UncertaintyEstimate {
  std::vector<double> errors;
  std::vector<std::string> warnings;
};

inline UncertaintyEstimate estimate_uncertainties(const SpectrumFitProblem& problem,
                                                  const FitResult& result,
                                                  const UncertaintyMethod& method,
                                                  const FitOptions& options = {},
                                                  unsigned workers = 0) {
  if (!result.converged) throw NumericError("refusing to estimate errors for a non-converged fit");
  if (method.kind == UncertaintyMethod::Kind::covariance) return {covariance_errors(result), {}};
  const auto s = prepare_spectrum_fit(problem);
  auto b = bootstrap_errors(s.data, s.model, s.params, result, method.n, method.seed, options, workers);
  return {std::move(b.errors), std::move(b.warnings)};
}

inline std::vector<double> profile_spectrum_objective(const SpectrumFitProblem& problem,
                                                      std::size_t index,
                                                      const std::vector<double>& grid,
                                                      const std::vector<double>& start,
                                                      const FitOptions& options = {}) {
  const auto s = prepare_spectrum_fit(problem);
  return profile_objective(s.data, s.model, s.params, index, grid, start, options);
}

}  // namespace hcf
