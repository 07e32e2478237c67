#pragma once

// JSON result envelope shared by every subcommand.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"

#ifndef HCF_VERSION
#define HCF_VERSION "1.0.0"
#endif

namespace hcf {

inline constexpr int kEnvelopeSchemaVersion = 1;

struct ResultEnvelope {
  std::string subcommand;
  std::string tool_version = HCF_VERSION;
  std::string timestamp;  // UTC, ISO 8601
  std::uint64_t seed = 0;
  nlohmann::json config;
  nlohmann::json payload;
  std::map<std::string, std::string> files;  // role -> path of written CSV
};

/// Current UTC time; SOURCE_DATE_EPOCH pins it for reproducible envelopes.
inline std::string utc_timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* e = std::getenv("SOURCE_DATE_EPOCH"); e && *e) t = static_cast<std::time_t>(std::atoll(e));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Keys every payload of the given subcommand must carry.
inline const std::vector<std::string>& payload_schema(const std::string& subcommand) {
  static const std::map<std::string, std::vector<std::string>> schema{
      {"simulate-loading",
       {"n_sampled", "n_captured", "efficiency", "efficiency_stderr", "in_fiber_temperature_K",
        "in_fiber_temperature_stderr_K", "transverse_width_1e_full_m", "transverse_center_m",
        "fate_histogram", "n_integrator_failures", "sweep"}},
      {"spectrum", {"lines", "linewidth_fwhm_hz", "detuning_hz", "transmission", "saturated"}},
      {"probe-counts",
       {"incident_per_gate", "n_gates", "detector_efficiency", "detuning_hz", "expected_counts",
        "sampled_counts"}},
      {"fit-od",
       {"parameters", "best_fit", "errors", "uncertainty_method", "covariance", "chi2",
        "reduced_chi2", "dof", "n_iterations", "converged", "warnings"}},
      {"atom-number", {"atom_number", "absorbed_energy_J", "noise_floor_J", "photons_per_atom"}},
      {"capture-range",
       {"threshold_K", "capture_range_m", "trap_depth_K", "transverse_trap_frequency_hz",
        "beam_waist_at_capture_m"}},
  };
  auto it = schema.find(subcommand);
  if (it == schema.end()) throw SchemaError("subcommand", "unknown subcommand '" + subcommand + "'");
  return it->second;
}

inline nlohmann::json to_json(const ResultEnvelope& e) {
  nlohmann::json j;
  j["schema_version"] = kEnvelopeSchemaVersion;
  j["tool"] = "hcf";
  j["tool_version"] = e.tool_version;
  j["subcommand"] = e.subcommand;
  j["timestamp"] = e.timestamp;
  j["seed"] = e.seed;
  j["config"] = e.config;
  j["payload"] = e.payload;
  j["files"] = e.files;
  return j;
}

/// Checks the envelope header and the payload keys for its subcommand.
inline ResultEnvelope envelope_from_json(const nlohmann::json& j) {
  auto need = [&](const char* key) -> const nlohmann::json& {
    auto it = j.find(key);
    if (it == j.end()) throw SchemaError(key, "missing from result envelope");
    return *it;
  };
  if (need("schema_version").get<int>() != kEnvelopeSchemaVersion)
    throw SchemaError("schema_version", "unsupported envelope version");
  ResultEnvelope e;
  e.subcommand = need("subcommand").get<std::string>();
  e.tool_version = need("tool_version").get<std::string>();
  e.timestamp = need("timestamp").get<std::string>();
  e.seed = need("seed").get<std::uint64_t>();
  e.config = need("config");
  e.payload = need("payload");
  e.files = need("files").get<std::map<std::string, std::string>>();
  for (const auto& k : payload_schema(e.subcommand))
    if (!e.payload.contains(k)) throw SchemaError("payload." + k, "missing for " + e.subcommand);
  return e;
}

inline void write_envelope(const ResultEnvelope& e, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(e).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace hcf
