#pragma once

// Alkali D2-line reference data: hyperfine level structure, relative line
// strengths and resonant absorption cross-sections.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "constants.hpp"
#include "errors.hpp"

namespace hcf {

inline constexpr int kSpeciesSchemaVersion = 1;

struct HyperfineLevel {
  int F = 0;
  double frequency_offset = 0.0;  // Hz, relative to manifold centroid

  int degeneracy() const { return 2 * F + 1; }
};

struct TransitionStrength {
  int ground_F = 0;
  int excited_F = 0;
  double relative_strength = 0.0;
};

enum class PolarizationModel { unpolarized };

struct AtomSpecies {
  int schema_version = kSpeciesSchemaVersion;
  std::string name;
  std::string source;
  std::string conventions;
  double mass = 0.0;               // kg
  double d2_wavelength = 0.0;      // m
  double natural_linewidth = 0.0;  // Hz, FWHM
  double j_ground = 0.5;
  double j_excited = 1.5;
  std::vector<HyperfineLevel> ground_levels;   // sorted by F
  std::vector<HyperfineLevel> excited_levels;  // sorted by F
  std::vector<TransitionStrength> strengths;

  const HyperfineLevel* find_ground(int F) const {
    auto it = std::find_if(ground_levels.begin(), ground_levels.end(),
                           [F](const HyperfineLevel& l) { return l.F == F; });
    return it == ground_levels.end() ? nullptr : &*it;
  }
  const HyperfineLevel* find_excited(int F) const {
    auto it = std::find_if(excited_levels.begin(), excited_levels.end(),
                           [F](const HyperfineLevel& l) { return l.F == F; });
    return it == excited_levels.end() ? nullptr : &*it;
  }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& doc, const char* key) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) throw SchemaError(key, "missing field");
  return *it;
}

inline double require_number(const nlohmann::json& doc, const char* key) {
  const auto& v = require(doc, key);
  if (!v.is_number()) throw SchemaError(key, "expected a number");
  return v.get<double>();
}

inline int require_int(const nlohmann::json& doc, const char* key) {
  const auto& v = require(doc, key);
  if (!v.is_number_integer()) throw SchemaError(key, "expected an integer");
  return v.get<int>();
}

inline std::string require_string(const nlohmann::json& doc, const char* key) {
  const auto& v = require(doc, key);
  if (!v.is_string()) throw SchemaError(key, "expected a string");
  return v.get<std::string>();
}

inline void check_manifold(const std::vector<HyperfineLevel>& levels, const char* which) {
  if (levels.empty()) throw ValidationError(std::string(which) + " manifold has no levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (levels[i].F == levels[i - 1].F)
      throw ValidationError(std::string(which) + " manifold lists F=" +
                            std::to_string(levels[i].F) + " twice");
    if (!(levels[i].frequency_offset > levels[i - 1].frequency_offset))
      throw ValidationError(std::string(which) +
                            " level offsets are not strictly increasing in F");
  }
}

}  // namespace detail

/// Relative strength S_FF' from the table; 0 for |F - F'| > 1 or absent rows.
inline double relative_strength(const AtomSpecies& species, int ground_F, int excited_F) {
  if (std::abs(ground_F - excited_F) > 1) return 0.0;
  for (const auto& s : species.strengths)
    if (s.ground_F == ground_F && s.excited_F == excited_F) return s.relative_strength;
  return 0.0;
}

/// Checks every structural invariant; throws ValidationError on the first violation.
inline void validate(const AtomSpecies& species) {
  if (species.schema_version != kSpeciesSchemaVersion)
    throw ValidationError("unsupported schema_version " + std::to_string(species.schema_version));
  if (!(species.mass > 0)) throw ValidationError("mass_kg must be > 0");
  if (!(species.d2_wavelength > 0)) throw ValidationError("d2_wavelength_m must be > 0");
  if (!(species.natural_linewidth > 0)) throw ValidationError("gamma_fwhm_hz must be > 0");
  if (!(species.j_ground > 0) || !(species.j_excited > 0))
    throw ValidationError("j_ground and j_excited must be > 0");
  for (const auto* manifold : {&species.ground_levels, &species.excited_levels})
    for (const auto& l : *manifold)
      if (l.F < 0) throw ValidationError("negative F in level table");
  detail::check_manifold(species.ground_levels, "ground");
  detail::check_manifold(species.excited_levels, "excited");

  for (const auto& s : species.strengths) {
    if (!species.find_ground(s.ground_F) || !species.find_excited(s.excited_F))
      throw ValidationError("strength row F=" + std::to_string(s.ground_F) + " -> F'=" +
                            std::to_string(s.excited_F) + " references an unknown level");
    if (s.relative_strength < 0 || s.relative_strength > 1)
      throw ValidationError("relative_strength outside [0, 1]");
    if (std::abs(s.ground_F - s.excited_F) > 1 && s.relative_strength != 0)
      throw ValidationError("nonzero strength on a |F - F'| > 1 transition");
  }
  for (const auto& g : species.ground_levels) {
    double sum = 0.0;
    for (const auto& e : species.excited_levels) {
      if (std::abs(g.F - e.F) > 1) continue;
      const bool listed = std::any_of(species.strengths.begin(), species.strengths.end(),
                                      [&](const TransitionStrength& s) {
                                        return s.ground_F == g.F && s.excited_F == e.F;
                                      });
      if (!listed)
        throw ValidationError("missing strength row F=" + std::to_string(g.F) + " -> F'=" +
                              std::to_string(e.F));
      sum += relative_strength(species, g.F, e.F);
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g", sum);
      throw ValidationError("strengths from ground F=" + std::to_string(g.F) + " sum to " + buf +
                            ", expected 1");
    }
  }
}

inline AtomSpecies load_species_data(const nlohmann::json& doc) {
  using namespace detail;
  AtomSpecies s;
  s.schema_version = require_int(doc, "schema_version");
  s.name = require_string(doc, "name");
  s.source = doc.value("source", std::string{});
  s.conventions = doc.value("conventions", std::string{});
  s.mass = require_number(doc, "mass_kg");
  s.d2_wavelength = require_number(doc, "d2_wavelength_m");
  s.natural_linewidth = require_number(doc, "gamma_fwhm_hz");
  s.j_ground = require_number(doc, "j_ground");
  s.j_excited = require_number(doc, "j_excited");

  const auto& levels = require(doc, "levels");
  if (!levels.is_array()) throw SchemaError("levels", "expected an array");
  for (const auto& l : levels) {
    const auto manifold = require_string(l, "manifold");
    HyperfineLevel level{require_int(l, "F"), require_number(l, "frequency_offset_hz")};
    if (manifold == "ground")
      s.ground_levels.push_back(level);
    else if (manifold == "excited")
      s.excited_levels.push_back(level);
    else
      throw SchemaError("manifold", "expected 'ground' or 'excited', got '" + manifold + "'");
  }
  auto by_F = [](const HyperfineLevel& a, const HyperfineLevel& b) { return a.F < b.F; };
  std::stable_sort(s.ground_levels.begin(), s.ground_levels.end(), by_F);
  std::stable_sort(s.excited_levels.begin(), s.excited_levels.end(), by_F);

  const auto& strengths = require(doc, "strengths");
  if (!strengths.is_array()) throw SchemaError("strengths", "expected an array");
  for (const auto& row : strengths)
    s.strengths.push_back({require_int(row, "ground_F"), require_int(row, "excited_F"),
                           require_number(row, "relative_strength")});

  validate(s);
  return s;
}

inline nlohmann::json to_json(const AtomSpecies& s) {
  nlohmann::json doc;
  doc["schema_version"] = s.schema_version;
  doc["name"] = s.name;
  if (!s.source.empty()) doc["source"] = s.source;
  if (!s.conventions.empty()) doc["conventions"] = s.conventions;
  doc["mass_kg"] = s.mass;
  doc["d2_wavelength_m"] = s.d2_wavelength;
  doc["gamma_fwhm_hz"] = s.natural_linewidth;
  doc["j_ground"] = s.j_ground;
  doc["j_excited"] = s.j_excited;
  auto levels = nlohmann::json::array();
  for (const auto& l : s.ground_levels)
    levels.push_back({{"manifold", "ground"}, {"F", l.F}, {"frequency_offset_hz", l.frequency_offset}});
  for (const auto& l : s.excited_levels)
    levels.push_back({{"manifold", "excited"}, {"F", l.F}, {"frequency_offset_hz", l.frequency_offset}});
  doc["levels"] = std::move(levels);
  auto rows = nlohmann::json::array();
  for (const auto& r : s.strengths)
    rows.push_back({{"ground_F", r.ground_F},
                    {"excited_F", r.excited_F},
                    {"relative_strength", r.relative_strength}});
  doc["strengths"] = std::move(rows);
  return doc;
}

inline AtomSpecies load_species_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open species data file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string(), e.what());
  }
  return load_species_data(doc);
}

/// Species data path: $HCF_SPECIES_DATA if set, else the file shipped in data/.
inline std::filesystem::path default_species_path() {
  if (const char* env = std::getenv("HCF_SPECIES_DATA"); env && *env) return env;
#ifdef HCF_DATA_DIR
  return std::filesystem::path(HCF_DATA_DIR) / "rb87_d2.json";
#else
  return "data/rb87_d2.json";
#endif
}

/// Frequency of the F -> F' line relative to the F -> F'_ref line, in Hz.
inline double line_detuning(const AtomSpecies& species, int ground_F, int excited_F,
                            int reference_excited_F) {
  if (!species.find_ground(ground_F))
    throw LookupError("no ground level F=" + std::to_string(ground_F));
  const auto* e = species.find_excited(excited_F);
  const auto* ref = species.find_excited(reference_excited_F);
  if (!e) throw LookupError("no excited level F'=" + std::to_string(excited_F));
  if (!ref) throw LookupError("no excited level F'=" + std::to_string(reference_excited_F));
  return e->frequency_offset - ref->frequency_offset;
}

/// 3 lambda^2 / 2 pi: the two-level cross-section for a cycling transition.
inline double bare_cross_section(double wavelength) {
  return 3.0 * wavelength * wavelength / (2.0 * constants::pi);
}

/// Averaging factor over equally populated ground sublevels and isotropic
/// polarization: (2J'+1) / (3 (2J+1)).
inline double unpolarized_factor(const AtomSpecies& species) {
  return (2.0 * species.j_excited + 1.0) / (3.0 * (2.0 * species.j_ground + 1.0));
}

inline double resonant_cross_section(const AtomSpecies& species, int ground_F, int excited_F,
                                     PolarizationModel model = PolarizationModel::unpolarized) {
  if (!species.find_ground(ground_F))
    throw LookupError("no ground level F=" + std::to_string(ground_F));
  if (!species.find_excited(excited_F))
    throw LookupError("no excited level F'=" + std::to_string(excited_F));
  double f_pol = 1.0;
  switch (model) {
    case PolarizationModel::unpolarized: f_pol = unpolarized_factor(species); break;
  }
  return bare_cross_section(species.d2_wavelength) *
         relative_strength(species, ground_F, excited_F) * f_pol;
}

}  // namespace hcf
