// hcf: command line front end. Exit codes: 0 success, 2 config or usage
// error, 3 data error, 4 numeric or convergence error.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hcf/commands.hpp"

namespace {

int report(const char* category, const std::string& message, int code) {
  nlohmann::json e{{"error", {{"category", category}, {"message", message}, {"exit_code", code}}}};
  std::cerr << e.dump() << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hollow-core fiber cold-atom loading and spectroscopy toolkit"};
  app.set_version_flag("--version", HCF_VERSION);
  app.require_subcommand(1);

  std::string config_path, species_path, data_path, out_path, output_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_atoms;
  std::optional<unsigned> workers;

  for (const auto& name : hcf::subcommand_names()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", config_path, "run configuration (JSON)");
    sub->add_option("--species", species_path, "species data file (overrides config and HCF_SPECIES_DATA)");
    sub->add_option("-o,--out", out_path, "result envelope path (default: stdout)");
    sub->add_option("--output-dir", output_dir, "directory for CSV plot data");
    sub->add_option("--seed", seed, "override the subcommand's seed");
    sub->add_option("--workers", workers, "worker threads (0: all cores)");
    if (name == "fit-od" || name == "atom-number")
      sub->add_option("-d,--data", data_path, "input CSV")->required();
    if (name == "simulate-loading") sub->add_option("-n,--n-atoms", n_atoms, "trajectories to sample");
  }

  if (argc > 1 && argv[1][0] != '-') {
    const auto& names = hcf::subcommand_names();
    if (std::find(names.begin(), names.end(), argv[1]) == names.end())
      return report("usage", std::string("unknown subcommand '") + argv[1] + "'", 2);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report("usage", e.what(), 2);
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    nlohmann::json doc = nlohmann::json::object();
    std::filesystem::path base;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw hcf::SchemaError("config", "cannot open " + config_path);
      try {
        in >> doc;
      } catch (const nlohmann::json::exception& e) {
        throw hcf::SchemaError("config", config_path + ": " + e.what());
      }
      base = std::filesystem::path(config_path).parent_path();
    }
    if (!species_path.empty()) doc["species_file"] = std::filesystem::absolute(species_path).string();
    if (!output_dir.empty()) doc["output"]["directory"] = output_dir;
    if (workers) doc["simulation"]["workers"] = *workers;
    if (n_atoms) doc["simulation"]["n_atoms"] = *n_atoms;
    if (seed) {
      if (name == "spectrum" || name == "probe-counts") doc["spectrum"]["seed"] = *seed;
      else if (name == "fit-od") doc["fit"]["bootstrap_seed"] = *seed;
      else doc["simulation"]["seed"] = *seed;
    }
    const auto config = hcf::parse_config(doc, base);
    const auto env = hcf::run_subcommand(name, config, {data_path});
    if (out_path.empty()) std::cout << hcf::to_json(env).dump(2) << '\n';
    else hcf::write_envelope(env, out_path);
    return 0;
  } catch (const hcf::Error& e) {
    return report(hcf::category_name(e.category()), e.what(), e.exit_code());
  } catch (const nlohmann::json::exception& e) {
    return report("config", e.what(), 2);
  } catch (const std::exception& e) {
    return report("numeric", e.what(), 4);
  }
}
