#pragma once

// Subcommands of the command line tool. Each one reads a RunConfig, delegates
// to the module operations and returns an envelope; CSV plot data goes to the
// configured output directory.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atomic_data.hpp"
#include "config.hpp"
#include "csv.hpp"
#include "envelope.hpp"
#include "mc_loading.hpp"
#include "optics.hpp"
#include "spectroscopy.hpp"
#include "spectrum_fit.hpp"

namespace hcf {

inline const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"simulate-loading", "spectrum",    "fit-od",
                                              "atom-number",      "probe-counts", "capture-range"};
  return names;
}

struct CommandArgs {
  std::string data_path;  // fit-od, atom-number
};

inline std::vector<double> linspace(double lo, double hi, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (n - 1);
  return v;
}

namespace detail {

inline SpectrumModel configured_spectrum(const RunConfig& c, const AtomSpecies& sp) {
  const auto& s = c.spectrum;
  auto m = spectrum_for_lines(sp, s.ground_F, s.reference_excited_F, s.excited_F, s.od);
  if (s.linewidth_fwhm > 0) m.linewidth_fwhm = s.linewidth_fwhm;
  m.frequency_offset = s.frequency_offset;
  m.doppler_fwhm = s.doppler_fwhm;
  validate(m);
  return m;
}

inline std::filesystem::path output_file(const RunConfig& c, const std::string& name) {
  std::filesystem::path dir(c.output.directory);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  return dir / name;
}

inline nlohmann::json lines_json(const SpectrumModel& m) {
  auto lines = nlohmann::json::array();
  for (const auto& l : m.lines)
    lines.push_back({{"excited_F", l.excited_F}, {"od", l.od}, {"center_detuning_hz", l.center_detuning}});
  return lines;
}

inline SimulationOptions simulation_options(const RunConfig& c, bool keep) {
  SimulationOptions o;
  o.step = c.simulation.step;
  o.termination = c.simulation.termination;
  o.workers = c.simulation.workers;
  o.keep_outcomes = keep;
  return o;
}

inline nlohmann::json run_loading(const RunConfig& c, const AtomSpecies& sp, ResultEnvelope& env) {
  const bool dump = c.output.trajectory_csv;
  const auto res = run_loading_simulation(c.cloud, c.trap, sp.mass, c.simulation.n_atoms,
                                          c.simulation.seed, simulation_options(c, dump));
  nlohmann::json p;
  p["n_sampled"] = res.n_sampled;
  p["n_captured"] = res.n_captured;
  p["efficiency"] = res.efficiency;
  p["efficiency_stderr"] = res.efficiency_stderr;
  p["in_fiber_temperature_K"] = res.in_fiber_temperature;
  p["in_fiber_temperature_stderr_K"] = res.in_fiber_temperature_stderr;
  p["transverse_width_1e_full_m"] = res.transverse_width_1e_full;
  p["transverse_center_m"] = {res.transverse_center_x, res.transverse_center_y};
  p["transverse_center_stderr_m"] = res.transverse_center_stderr;
  nlohmann::json hist;
  for (std::size_t f = 0; f < kFateCount; ++f)
    hist[std::string(fate_name(static_cast<Fate>(f)))] = res.fate_histogram[f];
  p["fate_histogram"] = hist;
  p["n_integrator_failures"] = res.n_integrator_failures;

  if (dump && c.output.write_csv) {
    PlotDataset ds;
    std::vector<double> idx, fate, tt, x, y, z, vx, vy, vz;
    for (std::size_t i = 0; i < res.outcomes.size(); ++i) {
      const auto& o = res.outcomes[i];
      idx.push_back(static_cast<double>(i));
      fate.push_back(static_cast<double>(o.fate));
      tt.push_back(o.transit_time);
      x.push_back(o.final_state.position.x);
      y.push_back(o.final_state.position.y);
      z.push_back(o.final_state.position.z);
      vx.push_back(o.final_state.velocity.x);
      vy.push_back(o.final_state.velocity.y);
      vz.push_back(o.final_state.velocity.z);
    }
    ds.add_column("atom_index", idx);
    ds.add_column("fate_code", fate);
    ds.add_column("transit_time_s", tt);
    ds.add_column("final_x_m", x);
    ds.add_column("final_y_m", y);
    ds.add_column("final_z_m", z);
    ds.add_column("final_vx_m_s", vx);
    ds.add_column("final_vy_m_s", vy);
    ds.add_column("final_vz_m_s", vz);
    const auto path = output_file(c, "trajectories.csv");
    emit_plot_data(ds, path);
    env.files["trajectories"] = path.string();
  }

  auto sweep = nlohmann::json::array();
  if (!c.output.sweep_trap_depths.empty()) {
    PlotDataset ds;
    std::vector<double> depth, eff, err;
    for (double d : c.output.sweep_trap_depths) {
      TrapConfig t = c.trap;
      t.trap_depth = d * constants::boltzmann;
      const auto r = run_loading_simulation(c.cloud, t, sp.mass, c.simulation.n_atoms,
                                            c.simulation.seed, simulation_options(c, false));
      depth.push_back(d);
      eff.push_back(r.efficiency);
      err.push_back(r.efficiency_stderr);
      sweep.push_back({{"trap_depth_K", d}, {"efficiency", r.efficiency},
                       {"efficiency_stderr", r.efficiency_stderr}});
    }
    if (c.output.write_csv) {
      ds.add_column("trap_depth_K", depth);
      ds.add_column("efficiency", eff);
      ds.add_column("efficiency_stderr", err);
      const auto path = output_file(c, "loading_sweep.csv");
      emit_plot_data(ds, path);
      env.files["loading_sweep"] = path.string();
    }
  }
  p["sweep"] = sweep;
  return p;
}

inline nlohmann::json run_spectrum(const RunConfig& c, const AtomSpecies& sp, ResultEnvelope& env) {
  const auto model = configured_spectrum(c, sp);
  const auto grid = linspace(c.spectrum.detuning_min, c.spectrum.detuning_max, c.spectrum.n_points);
  const auto s = transmission_spectrum(model, grid);
  nlohmann::json p;
  p["lines"] = lines_json(model);
  p["linewidth_fwhm_hz"] = model.linewidth_fwhm;
  p["detuning_hz"] = s.detuning;
  p["transmission"] = s.transmission;
  std::vector<int> sat(s.saturated.begin(), s.saturated.end());
  p["saturated"] = sat;
  if (c.output.write_csv) {
    PlotDataset ds;
    ds.add_column("detuning_hz", s.detuning);
    ds.add_column("transmission", s.transmission);
    const auto path = output_file(c, "spectrum.csv");
    emit_plot_data(ds, path);
    env.files["spectrum"] = path.string();
  }
  return p;
}

inline nlohmann::json run_probe_counts(const RunConfig& c, const AtomSpecies& sp, ResultEnvelope& env) {
  const auto model = configured_spectrum(c, sp);
  const auto grid = linspace(c.spectrum.detuning_min, c.spectrum.detuning_max, c.spectrum.n_points);
  const auto pc = simulate_probe_counts(model, c.sequence, grid, c.spectrum.detector_efficiency,
                                        c.spectrum.seed, sp.d2_wavelength);
  nlohmann::json p;
  p["incident_per_gate"] = pc.incident_per_gate;
  p["n_gates"] = pc.n_gates;
  p["detector_efficiency"] = c.spectrum.detector_efficiency;
  p["detuning_hz"] = pc.detuning;
  p["expected_counts"] = pc.expected;
  p["sampled_counts"] = pc.sampled;
  if (c.output.write_csv) {
    PlotDataset ds;
    ds.add_column("detuning_hz", pc.detuning);
    ds.add_column("transmission", pc.transmission);
    ds.add_column("expected_counts", pc.expected);
    ds.add_column("counts", std::vector<double>(pc.sampled.begin(), pc.sampled.end()));
    ds.add_column("n_gates", std::vector<double>(pc.detuning.size(), pc.n_gates));
    const auto path = output_file(c, "probe_counts.csv");
    emit_plot_data(ds, path);
    env.files["probe_counts"] = path.string();
  }
  return p;
}

inline nlohmann::json run_fit_od(const RunConfig& c, const AtomSpecies& sp, const CommandArgs& a,
                                 ResultEnvelope& env) {
  if (a.data_path.empty()) throw SchemaError("data", "fit-od needs a data file");
  const auto data = ingest_count_spectrum(a.data_path);

  SpectrumFitProblem prob;
  prob.detuning = data.detuning;
  prob.observed = data.value;
  prob.kind = data.is_counts ? SpectrumDataKind::counts : SpectrumDataKind::transmission;
  prob.template_model = configured_spectrum(c, sp);
  for (int F : c.spectrum.excited_F)
    prob.line_strengths.push_back(relative_strength(sp, c.spectrum.ground_F, F));
  prob.fit_linewidth = c.fit.fit_linewidth;
  prob.fit_offset = c.fit.fit_offset;
  prob.fit_amplitude = c.fit.fit_amplitude;
  if (data.is_counts) {
    double gates = c.sequence.n_gates;
    if (!data.n_gates.empty()) {
      gates = data.n_gates.front();
      for (double g : data.n_gates)
        if (g != gates) throw DataError(a.data_path + ": n_gates must be the same on every row");
    }
    prob.amplitude = photons_per_gate(c.sequence.probe_power, c.sequence.gate_time, sp.d2_wavelength) *
                     c.spectrum.detector_efficiency * gates;
    // k repeated cycles were averaged: Poisson variance of the mean is c / k
    if (data.n_cycles > 1) {
      const double k = data.n_cycles;
      prob.weight.resize(data.value.size());
      for (std::size_t i = 0; i < data.value.size(); ++i)
        prob.weight[i] = k / std::max(data.value[i], 1.0 / k);
    }
  }

  FitOptions opt;
  opt.max_iterations = c.fit.max_iterations;
  opt.method = c.fit.minimizer == "simplex" ? Minimizer::simplex : Minimizer::levenberg_marquardt;
  const auto res = fit_spectrum(prob, opt);
  UncertaintyMethod um;
  um.kind = c.fit.uncertainty == "bootstrap" ? UncertaintyMethod::Kind::bootstrap
                                             : UncertaintyMethod::Kind::covariance;
  um.n = c.fit.bootstrap_n;
  um.seed = c.fit.bootstrap_seed;
  const auto unc = estimate_uncertainties(prob, res, um, opt, c.simulation.workers);

  nlohmann::json p;
  p["parameters"] = res.names;
  p["best_fit"] = res.best_fit;
  p["errors"] = unc.errors;
  p["uncertainty_method"] = c.fit.uncertainty;
  auto cov = nlohmann::json::array();
  for (Eigen::Index i = 0; i < res.covariance.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(res.covariance.cols()));
    for (Eigen::Index k = 0; k < res.covariance.cols(); ++k) row[static_cast<std::size_t>(k)] = res.covariance(i, k);
    cov.push_back(row);
  }
  p["covariance"] = cov;
  p["chi2"] = res.chi2;
  p["reduced_chi2"] = res.reduced_chi2;
  p["dof"] = res.dof;
  p["n_iterations"] = res.n_iterations;
  p["converged"] = res.converged;
  p["warnings"] = unc.warnings;

  if (c.output.write_csv) {
    PlotDataset ds;
    std::vector<double> model(prob.observed.size());
    for (std::size_t i = 0; i < model.size(); ++i) model[i] = prob.observed[i] - res.residuals[i];
    ds.add_column("detuning_hz", prob.detuning);
    ds.add_column("observed", prob.observed);
    ds.add_column("model", model);
    ds.add_column("residual", res.residuals);
    const auto path = output_file(c, "fit_residuals.csv");
    emit_plot_data(ds, path);
    env.files["fit_residuals"] = path.string();
  }
  return p;
}

inline nlohmann::json run_atom_number(const RunConfig& c, const AtomSpecies& sp, const CommandArgs& a) {
  if (a.data_path.empty()) throw SchemaError("data", "atom-number needs a data file");
  const auto trace = ingest_power_trace(a.data_path, sp.d2_wavelength);
  const auto r = atom_number_from_absorption(trace, c.atom_number.photons_per_atom,
                                             c.atom_number.relative_noise_floor);
  return {{"atom_number", r.atom_number},
          {"absorbed_energy_J", r.absorbed_energy},
          {"noise_floor_J", r.noise_floor},
          {"photons_per_atom", c.atom_number.photons_per_atom},
          {"probe_wavelength_m", sp.d2_wavelength}};
}

inline nlohmann::json run_capture_range(const RunConfig& c, const AtomSpecies& sp) {
  const double e = c.capture.threshold * constants::boltzmann;
  const double z = capture_range(c.trap, e);
  return {{"threshold_K", c.capture.threshold},
          {"capture_range_m", z},
          {"trap_depth_K", c.trap_depth_K},
          {"transverse_trap_frequency_hz", transverse_trap_frequency(c.trap, sp.mass)},
          {"beam_waist_at_capture_m", beam_waist_at(c.trap.geometry, c.trap.geometry.fiber_tip_z + z)}};
}

}  // namespace detail

inline ResultEnvelope run_subcommand(const std::string& name, const RunConfig& config,
                                     const CommandArgs& args = {}) {
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end())
    throw SchemaError("subcommand", "unknown subcommand '" + name + "'");
  const auto species = load_species_file(config.species_file);

  ResultEnvelope env;
  env.subcommand = name;
  env.timestamp = utc_timestamp();
  env.config = to_json(config);
  env.seed = name == "spectrum" || name == "probe-counts" ? config.spectrum.seed
             : name == "fit-od"                            ? config.fit.bootstrap_seed
                                                           : config.simulation.seed;
  if (name == "simulate-loading") env.payload = detail::run_loading(config, species, env);
  else if (name == "spectrum") env.payload = detail::run_spectrum(config, species, env);
  else if (name == "probe-counts") env.payload = detail::run_probe_counts(config, species, env);
  else if (name == "fit-od") env.payload = detail::run_fit_od(config, species, args, env);
  else if (name == "atom-number") env.payload = detail::run_atom_number(config, species, args);
  else env.payload = detail::run_capture_range(config, species);
  return env;
}

}  // namespace hcf
