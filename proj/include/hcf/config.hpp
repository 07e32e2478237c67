#pragma once

// Run configuration. Every key carries its SI unit as a suffix (_m, _s, _K,
// _hz, _W, ...); unknown keys are rejected, and a key that differs from a
// known one only in its unit suffix is reported with the expected unit.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "atomic_data.hpp"
#include "errors.hpp"
#include "fitting.hpp"
#include "mc_loading.hpp"
#include "optics.hpp"
#include "sequence.hpp"

namespace hcf {

inline constexpr int kConfigSchemaVersion = 1;

struct TimelineConfig {
  double mot_load = 0.99;  // s, not simulated
  double compress = 0.03;  // s, not simulated
  double hold = 0.02;      // s, sets the simulated loading window
};

struct SimulationConfig {
  std::size_t n_atoms = 10'000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  StepPolicy step;
  TerminationRules termination;  // max_time is taken from the hold duration
};

struct SpectrumConfig {
  int ground_F = 1;
  int reference_excited_F = 1;
  std::vector<int> excited_F{0, 1, 2};
  std::vector<double> od{300.0, 1000.0, 1000.0};
  double linewidth_fwhm = 0.0;  // Hz; 0 takes the species natural linewidth
  double frequency_offset = 0.0;
  double doppler_fwhm = 0.0;
  double detuning_min = -600e6;
  double detuning_max = 600e6;
  int n_points = 241;
  double detector_efficiency = 1.0;
  std::uint64_t seed = 1;
};

struct FitConfig {
  bool fit_linewidth = false;
  bool fit_offset = false;
  bool fit_amplitude = false;
  std::string uncertainty = "covariance";  // or "bootstrap"
  int bootstrap_n = 200;
  std::uint64_t bootstrap_seed = 1;
  int max_iterations = 500;
  std::string minimizer = "levenberg_marquardt";  // or "simplex"
};

struct AtomNumberConfig {
  double photons_per_atom = 2.0;
  double relative_noise_floor = 1e-3;
};

struct CaptureConfig {
  double threshold = 0.0;  // K; 0 takes the cloud temperature
};

struct OutputConfig {
  std::string directory = ".";
  bool write_csv = true;
  bool trajectory_csv = false;
  std::vector<double> sweep_trap_depths;  // K; nonempty adds a loading sweep
};

struct RunConfig {
  std::string species_file;  // resolved absolute path
  double trap_depth_K = 5e-3;  // kept so the echo is exact
  TrapConfig trap;
  MotCloud cloud;
  ProbeSequenceConfig sequence;
  TimelineConfig timeline;
  SimulationConfig simulation;
  SpectrumConfig spectrum;
  FitConfig fit;
  AtomNumberConfig atom_number;
  CaptureConfig capture;
  OutputConfig output;
};

namespace detail {

inline const std::vector<std::string>& unit_suffixes() {
  static const std::vector<std::string> s{"_m_s2", "_K_per_W", "_m", "_s", "_K", "_hz", "_W", "_kg", "_J"};
  return s;
}

inline std::string unit_stem(const std::string& key, std::string* unit = nullptr) {
  for (const auto& suf : unit_suffixes())
    if (key.size() > suf.size() && key.compare(key.size() - suf.size(), suf.size(), suf) == 0) {
      if (unit) *unit = suf.substr(1);
      return key.substr(0, key.size() - suf.size());
    }
  return key;
}

/// Reads one JSON object, remembering which keys were consumed so leftovers
/// can be reported.
class SectionReader {
 public:
  SectionReader(nlohmann::json doc, std::string section)
      : doc_(std::move(doc)), section_(std::move(section)) {
    if (!doc_.is_object()) throw SchemaError(section_, "must be an object");
  }

  template <class T>
  void read(const std::string& key, T& value) {
    known_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw SchemaError(path(key), "expected a boolean");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw SchemaError(path(key), "expected a number");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer()) throw SchemaError(path(key), "expected an integer");
          if constexpr (std::is_unsigned_v<T>)
            if (it->is_number_integer() && it->template get<long long>() < 0 && !it->is_number_unsigned())
              throw SchemaError(path(key), "must be >= 0");
        }
      }
      value = it->template get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(path(key), e.what());
    }
  }

  void read_vec3(const std::string& key, Vec3& v) {
    std::vector<double> a{v.x, v.y, v.z};
    read(key, a);
    if (a.size() != 3) throw SchemaError(path(key), "expected three components");
    v = {a[0], a[1], a[2]};
  }

  void allow(const std::string& key) { known_.insert(key); }

  void finish() const {
    for (const auto& [key, _] : doc_.items()) {
      if (known_.count(key)) continue;
      // "hold_ms" or "trap_depth_mK": same stem as a known key, other unit
      const auto stem = unit_stem(key);
      const auto cut = key.rfind('_');
      const auto bare = cut == std::string::npos ? key : key.substr(0, cut);
      for (const auto& k : known_) {
        std::string expected;
        const auto kstem = unit_stem(k, &expected);
        if (!expected.empty() && (kstem == stem || kstem == bare || kstem == key))
          throw SchemaError(path(key), "unit mismatch: expected unit '" + expected + "' (key '" + k + "')");
      }
      throw SchemaError(path(key), "unknown key '" + key + "'");
    }
  }

 private:
  std::string path(const std::string& key) const { return section_ + "." + key; }

  nlohmann::json doc_;
  std::string section_;
  std::set<std::string> known_;
};

inline nlohmann::json section(const nlohmann::json& doc, const char* name) {
  auto it = doc.find(name);
  return it == doc.end() ? nlohmann::json::object() : *it;
}

inline DivergenceModel parse_divergence(const std::string& s) {
  if (s == "na_pinned") return DivergenceModel::na_pinned;
  if (s == "diffraction") return DivergenceModel::diffraction;
  throw SchemaError("trap.divergence_model", "expected 'na_pinned' or 'diffraction', got '" + s + "'");
}

inline std::string divergence_name(DivergenceModel m) {
  return m == DivergenceModel::na_pinned ? "na_pinned" : "diffraction";
}

}  // namespace detail

/// Builds a validated RunConfig. Relative species paths resolve against
/// `base_dir` (the config file's directory) first, then the working directory.
inline RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  namespace fs = std::filesystem;
  if (!doc.is_object()) throw SchemaError("<root>", "config must be a JSON object");
  using detail::SectionReader;
  RunConfig c;

  SectionReader root(doc, "config");
  int schema = kConfigSchemaVersion;
  root.read("schema_version", schema);
  if (schema != kConfigSchemaVersion)
    throw SchemaError("config.schema_version", "unsupported version " + std::to_string(schema));
  std::string species;
  root.read("species_file", species);
  for (const char* s : {"trap", "cloud", "sequence", "simulation", "spectrum", "fit", "atom_number",
                        "capture", "output"})
    root.allow(s);
  root.finish();

  {
    SectionReader r(detail::section(doc, "trap"), "trap");
    auto& g = c.trap.geometry;
    std::string div = detail::divergence_name(g.divergence);
    r.read("waist_m", g.waist_in_fiber);
    r.read("numerical_aperture", g.numerical_aperture);
    r.read("tip_z_m", g.fiber_tip_z);
    r.read("fiber_length_m", g.fiber_length);
    r.read("core_radius_m", g.core_radius);
    r.read("outer_radius_m", g.outer_radius);
    r.read("trap_wavelength_m", g.trap_wavelength);
    r.read("divergence_model", div);
    r.read("trap_depth_K", c.trap_depth_K);
    r.read("gravity_m_s2", c.trap.gravity);
    r.read("depth_K_per_W", c.trap.depth_K_per_W);
    r.read("fort_on", c.trap.fort_on);
    r.finish();
    g.divergence = detail::parse_divergence(div);
    c.trap.trap_depth = c.trap_depth_K * constants::boltzmann;
    validate(c.trap);
  }
  {
    SectionReader r(detail::section(doc, "cloud"), "cloud");
    r.read_vec3("center_m", c.cloud.center);
    r.read_vec3("half_widths_1e_m", c.cloud.half_widths_1e);
    r.read("temperature_K", c.cloud.temperature);
    r.read("atom_count", c.cloud.atom_count);
    r.finish();
    validate(c.cloud);
  }
  {
    SectionReader r(detail::section(doc, "sequence"), "sequence");
    auto& s = c.sequence;
    r.read("modulation_frequency_hz", s.modulation_frequency);
    r.read("off_window_s", s.off_window);
    r.read("gate_time_s", s.gate_time);
    r.read("n_gates", s.n_gates);
    r.read("probe_power_W", s.probe_power);
    r.read("mot_load_s", c.timeline.mot_load);
    r.read("compress_s", c.timeline.compress);
    r.read("hold_s", c.timeline.hold);
    r.finish();
    for (auto [name, v] : {std::pair{"mot_load_s", c.timeline.mot_load},
                           std::pair{"compress_s", c.timeline.compress},
                           std::pair{"hold_s", c.timeline.hold}})
      if (!(v >= 0)) throw ValidationError(std::string("sequence.") + name + " must be >= 0");
    validate(s);
  }
  {
    SectionReader r(detail::section(doc, "simulation"), "simulation");
    auto& s = c.simulation;
    r.read("n_atoms", s.n_atoms);
    r.read("seed", s.seed);
    r.read("workers", s.workers);
    r.read("steps_per_period", s.step.steps_per_period);
    r.read("max_step_s", s.step.max_step);
    r.read("fixed_step_s", s.step.fixed_step);
    r.read("capture_depth_m", s.termination.capture_depth);
    r.read("full_fiber_transit", s.termination.full_fiber_transit);
    r.read("escape_radius_m", s.termination.escape_radius);
    r.read("escape_height_m", s.termination.escape_height);
    r.read("energy_drift_tolerance", s.termination.energy_drift_tolerance);
    r.finish();
    s.termination.max_time = c.timeline.hold;
    if (!(s.step.steps_per_period > 0)) throw ValidationError("simulation.steps_per_period must be > 0");
    if (!(s.step.max_step > 0)) throw ValidationError("simulation.max_step_s must be > 0");
    if (!(s.step.fixed_step >= 0)) throw ValidationError("simulation.fixed_step_s must be >= 0");
    if (!(s.termination.capture_depth >= 0)) throw ValidationError("simulation.capture_depth_m must be >= 0");
  }
  {
    SectionReader r(detail::section(doc, "spectrum"), "spectrum");
    auto& s = c.spectrum;
    r.read("ground_F", s.ground_F);
    r.read("reference_excited_F", s.reference_excited_F);
    r.read("excited_F", s.excited_F);
    r.read("od", s.od);
    r.read("linewidth_fwhm_hz", s.linewidth_fwhm);
    r.read("frequency_offset_hz", s.frequency_offset);
    r.read("doppler_fwhm_hz", s.doppler_fwhm);
    r.read("detuning_min_hz", s.detuning_min);
    r.read("detuning_max_hz", s.detuning_max);
    r.read("n_points", s.n_points);
    r.read("detector_efficiency", s.detector_efficiency);
    r.read("seed", s.seed);
    r.finish();
    if (s.excited_F.size() != s.od.size())
      throw ValidationError("spectrum.od needs one entry per spectrum.excited_F");
    if (!(s.detuning_max > s.detuning_min)) throw ValidationError("spectrum.detuning_max_hz must exceed detuning_min_hz");
    if (s.n_points < 2) throw ValidationError("spectrum.n_points must be >= 2");
    if (!(s.detector_efficiency > 0 && s.detector_efficiency <= 1))
      throw ValidationError("spectrum.detector_efficiency must lie in (0, 1]");
    if (!(s.linewidth_fwhm >= 0)) throw ValidationError("spectrum.linewidth_fwhm_hz must be >= 0");
  }
  {
    SectionReader r(detail::section(doc, "fit"), "fit");
    auto& f = c.fit;
    r.read("fit_linewidth", f.fit_linewidth);
    r.read("fit_offset", f.fit_offset);
    r.read("fit_amplitude", f.fit_amplitude);
    r.read("uncertainty", f.uncertainty);
    r.read("bootstrap_n", f.bootstrap_n);
    r.read("bootstrap_seed", f.bootstrap_seed);
    r.read("max_iterations", f.max_iterations);
    r.read("minimizer", f.minimizer);
    r.finish();
    if (f.uncertainty != "covariance" && f.uncertainty != "bootstrap")
      throw SchemaError("fit.uncertainty", "expected 'covariance' or 'bootstrap'");
    if (f.minimizer != "levenberg_marquardt" && f.minimizer != "simplex")
      throw SchemaError("fit.minimizer", "expected 'levenberg_marquardt' or 'simplex'");
    if (f.max_iterations < 1) throw ValidationError("fit.max_iterations must be >= 1");
  }
  {
    SectionReader r(detail::section(doc, "atom_number"), "atom_number");
    r.read("photons_per_atom", c.atom_number.photons_per_atom);
    r.read("relative_noise_floor", c.atom_number.relative_noise_floor);
    r.finish();
    if (!(c.atom_number.photons_per_atom > 0)) throw ValidationError("atom_number.photons_per_atom must be > 0");
  }
  {
    SectionReader r(detail::section(doc, "capture"), "capture");
    r.read("threshold_K", c.capture.threshold);
    r.finish();
    if (c.capture.threshold == 0.0) c.capture.threshold = c.cloud.temperature;
    if (!(c.capture.threshold > 0)) throw ValidationError("capture.threshold_K must be > 0");
  }
  {
    SectionReader r(detail::section(doc, "output"), "output");
    r.read("directory", c.output.directory);
    r.read("write_csv", c.output.write_csv);
    r.read("trajectory_csv", c.output.trajectory_csv);
    r.read("sweep_trap_depths_K", c.output.sweep_trap_depths);
    r.finish();
    for (double d : c.output.sweep_trap_depths)
      if (!(d > 0)) throw ValidationError("output.sweep_trap_depths_K entries must be > 0");
  }

  fs::path sp = species.empty() ? default_species_path() : fs::path(species);
  if (sp.is_relative() && !base_dir.empty() && fs::exists(base_dir / sp)) sp = base_dir / sp;
  if (!fs::exists(sp)) throw SchemaError("config.species_file", "file not found: " + sp.string());
  c.species_file = fs::absolute(sp).lexically_normal().string();
  return c;
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("config", "cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("config", path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

/// Echo with every default resolved; parse_config(echo) reproduces the config.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& g = c.trap.geometry;
  const auto& s = c.simulation;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["species_file"] = c.species_file;
  j["trap"] = {{"waist_m", g.waist_in_fiber},
               {"numerical_aperture", g.numerical_aperture},
               {"tip_z_m", g.fiber_tip_z},
               {"fiber_length_m", g.fiber_length},
               {"core_radius_m", g.core_radius},
               {"outer_radius_m", g.outer_radius},
               {"trap_wavelength_m", g.trap_wavelength},
               {"divergence_model", detail::divergence_name(g.divergence)},
               {"trap_depth_K", c.trap_depth_K},
               {"gravity_m_s2", c.trap.gravity},
               {"depth_K_per_W", c.trap.depth_K_per_W},
               {"fort_on", c.trap.fort_on}};
  j["cloud"] = {{"center_m", {c.cloud.center.x, c.cloud.center.y, c.cloud.center.z}},
                {"half_widths_1e_m",
                 {c.cloud.half_widths_1e.x, c.cloud.half_widths_1e.y, c.cloud.half_widths_1e.z}},
                {"temperature_K", c.cloud.temperature},
                {"atom_count", c.cloud.atom_count}};
  j["sequence"] = {{"modulation_frequency_hz", c.sequence.modulation_frequency},
                   {"off_window_s", c.sequence.off_window},
                   {"gate_time_s", c.sequence.gate_time},
                   {"n_gates", c.sequence.n_gates},
                   {"probe_power_W", c.sequence.probe_power},
                   {"mot_load_s", c.timeline.mot_load},
                   {"compress_s", c.timeline.compress},
                   {"hold_s", c.timeline.hold}};
  j["simulation"] = {{"n_atoms", s.n_atoms},
                     {"seed", s.seed},
                     {"workers", s.workers},
                     {"steps_per_period", s.step.steps_per_period},
                     {"max_step_s", s.step.max_step},
                     {"fixed_step_s", s.step.fixed_step},
                     {"capture_depth_m", s.termination.capture_depth},
                     {"full_fiber_transit", s.termination.full_fiber_transit},
                     {"escape_radius_m", s.termination.escape_radius},
                     {"escape_height_m", s.termination.escape_height},
                     {"energy_drift_tolerance", s.termination.energy_drift_tolerance}};
  j["spectrum"] = {{"ground_F", c.spectrum.ground_F},
                   {"reference_excited_F", c.spectrum.reference_excited_F},
                   {"excited_F", c.spectrum.excited_F},
                   {"od", c.spectrum.od},
                   {"linewidth_fwhm_hz", c.spectrum.linewidth_fwhm},
                   {"frequency_offset_hz", c.spectrum.frequency_offset},
                   {"doppler_fwhm_hz", c.spectrum.doppler_fwhm},
                   {"detuning_min_hz", c.spectrum.detuning_min},
                   {"detuning_max_hz", c.spectrum.detuning_max},
                   {"n_points", c.spectrum.n_points},
                   {"detector_efficiency", c.spectrum.detector_efficiency},
                   {"seed", c.spectrum.seed}};
  j["fit"] = {{"fit_linewidth", c.fit.fit_linewidth},
              {"fit_offset", c.fit.fit_offset},
              {"fit_amplitude", c.fit.fit_amplitude},
              {"uncertainty", c.fit.uncertainty},
              {"bootstrap_n", c.fit.bootstrap_n},
              {"bootstrap_seed", c.fit.bootstrap_seed},
              {"max_iterations", c.fit.max_iterations},
              {"minimizer", c.fit.minimizer}};
  j["atom_number"] = {{"photons_per_atom", c.atom_number.photons_per_atom},
                      {"relative_noise_floor", c.atom_number.relative_noise_floor}};
  j["capture"] = {{"threshold_K", c.capture.threshold}};
  j["output"] = {{"directory", c.output.directory},
                 {"write_csv", c.output.write_csv},
                 {"trajectory_csv", c.output.trajectory_csv},
                 {"sweep_trap_depths_K", c.output.sweep_trap_depths}};
  return j;
}

}  // namespace hcf
