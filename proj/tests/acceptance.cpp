// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hcf/commands.hpp"
#include "hcf/config.hpp"
#include "hcf/mc_loading.hpp"
#include "hcf/optics.hpp"
#include "hcf/spectroscopy.hpp"
#include "hcf/spectrum_fit.hpp"

using namespace hcf;

namespace {

struct Check {
  bool pass = true;
  std::string detail;

  void require(bool ok, const char* fmt, ...) __attribute__((format(printf, 3, 4))) {
    char buf[256];
    va_list ap;
    va_start(ap, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, ap);
    va_end(ap);
    if (!detail.empty()) detail += "; ";
    detail += buf;
    if (!ok) {
      detail += " [x]";
      pass = false;
    }
  }
};

RunConfig paper_config() {
  auto c = load_config_file(std::filesystem::path(HCF_CONFIG_DIR) / "paper.json");
  c.output.write_csv = false;
  return c;
}

TrapConfig paper_trap() {
  TrapConfig t;
  t.geometry.waist_in_fiber = 2.75e-6;
  t.geometry.numerical_aperture = 0.1;
  t.trap_depth = constants::boltzmann * 5e-3;
  return t;
}

const AtomSpecies& rb87() {
  static const AtomSpecies s = load_species_file(default_species_path());
  return s;
}

Check trap_frequency() {
  Check c;
  const double nu = transverse_trap_frequency(paper_trap(), rb87().mass);
  c.require(std::abs(nu / 80e3 - 1.0) <= 0.02, "nu = %.4f kHz (80 +- 2%%)", nu / 1e3);
  return c;
}

Check capture_range_closure() {
  Check c;
  const double z = capture_range(paper_trap(), constants::boltzmann * 120e-6);
  c.require(std::abs(z - 175e-6) <= 1e-6, "z = %.3f um (175 +- 1)", z * 1e6);
  c.require(z >= 130e-6 && z <= 230e-6, "inside [130, 230] um");
  return c;
}

Check spectrum_round_trip() {
  Check c;
  const auto& sp = rb87();
  const double truth[3] = {300.0, 1000.0, 1000.0};
  const double tol[3] = {45.0, 150.0, 150.0};
  const auto model = spectrum_for_lines(sp, 1, 1, {0, 1, 2}, {truth[0], truth[1], truth[2]});
  const ProbeSequenceConfig seq;  // 20 pW, 680 ns gate, 50 gates
  const auto grid = linspace(-600e6, 600e6, 241);
  int hits = 0, converged = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto counts = simulate_probe_counts(model, seq, grid, 1.0, seed);
    SpectrumFitProblem p;
    p.detuning = grid;
    p.kind = SpectrumDataKind::counts;
    p.amplitude = counts.incident_per_gate * counts.n_gates;
    p.template_model = model;
    for (int F : {0, 1, 2}) p.line_strengths.push_back(relative_strength(sp, 1, F));
    for (auto n : counts.sampled) p.observed.push_back(static_cast<double>(n));
    try {
      const auto r = fit_spectrum(p);
      converged += r.converged;
      bool ok = r.converged;
      for (int l = 0; l < 3; ++l) ok = ok && std::abs(r.best_fit[l] - truth[l]) <= tol[l];
      hits += ok;
    } catch (const Error&) {
    }
  }
  c.require(hits >= 90, "%d/100 seeds within (45, 150, 150), need >= 90", hits);
  c.require(converged == 100, "%d/100 converged", converged);
  return c;
}

Check atom_number_inversion() {
  Check c;
  const double lambda = rb87().d2_wavelength;
  const double photon = constants::photon_energy(lambda);
  for (double n : {1e3, 2.5e5, 1e7}) {
    const double energy = 2.0 * n * photon;
    const double tau = 1e-6, sigma = tau / 12.0;
    const double p0 = 6.0 * energy / tau;
    TransmissionTrace tr;
    tr.probe_wavelength = lambda;
    for (int i = 0; i < 4001; ++i) {
      const double t = tau * i / 4000.0;
      const double dip = energy / (sigma * std::sqrt(2.0 * constants::pi)) *
                         std::exp(-0.5 * std::pow((t - 0.5 * tau) / sigma, 2));
      tr.time.push_back(t);
      tr.power_reference.push_back(p0);
      tr.power_atoms.push_back(p0 - dip);
    }
    const double got = atom_number_from_absorption(tr, 2.0).atom_number;
    c.require(std::abs(got / n - 1.0) <= 1e-3, "N=%.3g -> %.6g", n, got);
  }
  return c;
}

Check column_od() {
  Check c;
  const double sigma = resonant_cross_section(rb87(), 1, 2);
  const double od = column_od_estimate(2.5e5, 1.4e-6, 2.75e-6, sigma, 0.14);
  c.require(od >= 700.0 && od <= 2800.0, "OD = %.1f (1400 within x2)", od);
  return c;
}

Check loading_plausibility() {
  Check c;
  auto cfg = paper_config();
  cfg.simulation.n_atoms = 10000;
  const auto sp = rb87();
  const auto opts = detail::simulation_options(cfg, false);
  const auto r = run_loading_simulation(cfg.cloud, cfg.trap, sp.mass, cfg.simulation.n_atoms,
                                        cfg.simulation.seed, opts);
  c.require(r.efficiency >= 0.005 && r.efficiency <= 0.10, "efficiency %.3f%% in [0.5, 10]",
            100.0 * r.efficiency);
  const double t_uk = r.in_fiber_temperature * 1e6;
  c.require(t_uk >= 225.0 && t_uk <= 900.0, "T = %.0f uK in [225, 900]", t_uk);
  const double w_um = r.transverse_width_1e_full * 1e6;
  c.require(w_um >= 0.7 && w_um <= 2.8, "width = %.2f um in [0.7, 2.8]", w_um);
  double prev = -1.0;
  bool monotone = true;
  std::string sweep;
  for (double mk : {1.0, 2.0, 3.0, 4.0, 5.0}) {
    TrapConfig t = cfg.trap;
    t.trap_depth = constants::boltzmann * mk * 1e-3;
    const double e = mk == 5.0 ? r.efficiency
                               : run_loading_simulation(cfg.cloud, t, sp.mass, cfg.simulation.n_atoms,
                                                        cfg.simulation.seed, opts)
                                     .efficiency;
    monotone = monotone && e >= prev;
    prev = e;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.2f%%", sweep.empty() ? "" : " ", 100.0 * e);
    sweep += buf;
  }
  c.require(monotone, "sweep 1..5 mK: %s non-decreasing", sweep.c_str());
  return c;
}

Check recapture() {
  Check c;
  const auto t = paper_trap();
  const auto atoms = sample_trapped_ensemble(t, rb87().mass, 450e-6, 1000, 450, -1e-3);
  const ProbeSequenceConfig seq;  // 250 kHz, 800 ns dark, 50 cycles
  const auto r = simulate_recapture(atoms, t, rb87().mass, seq);
  c.require(r.min_per_cycle() > 0.99, "min per-cycle survival %.4f > 0.99", r.min_per_cycle());
  c.require(r.final_survival() >= 0.9, "50-cycle survival %.4f >= 0.9", r.final_survival());
  return c;
}

Check numerical_hygiene() {
  Check c;
  const auto t = paper_trap();
  const double m = rb87().mass;

  const auto atoms = sample_trapped_ensemble(t, m, 450e-6, 100, 8, -1e-3);
  const StepPolicy policy;
  double drift = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    VerletStepper s(t, m, atoms[i]);
    const double e0 = s.energy(), scale = energy_scale(t, m, atoms[i]);
    for (double time = 0.0; time < 10e-3;) {
      const double dt = step_size(t, m, s.state().position.z, policy);
      s.step(dt);
      time += dt;
      drift = std::max(drift, std::abs(s.energy() - e0) / scale);
    }
  }
  c.require(drift < 1e-3, "energy drift %.2e < 1e-3", drift);

  std::mt19937_64 rng(88);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_force = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec3 p{-3e-6 + 6e-6 * u(rng), -3e-6 + 6e-6 * u(rng),
                 i % 4 == 0 ? -1e-3 + (1e-3 - 1e-6) * u(rng) : 1e-6 + 499e-6 * u(rng)};
    const auto f = force(t, m, p);
    auto grad = [&](Vec3 e, double h) {
      auto d = [&](double s) {
        return (total_potential(t, m, p + e * s) - total_potential(t, m, p - e * s)) / (2 * s);
      };
      return (4.0 * d(h / 2) - d(h)) / 3.0;
    };
    const Vec3 fd{-grad({1, 0, 0}, 1e-9), -grad({0, 1, 0}, 1e-9), -grad({0, 0, 1}, 1e-8)};
    worst_force = std::max(worst_force, std::sqrt((f - fd).norm2() / f.norm2()));
  }
  c.require(worst_force < 1e-6, "force vs differences %.2e < 1e-6", worst_force);

  double worst_od = 0.0;
  for (int i = 0; i <= 7000; ++i) {
    const double od = 0.1 * i;
    const double in = std::exp(-6.9 + 13.8 * u(rng));
    worst_od = std::max(worst_od, std::abs(*optical_depth(in, in * transmission(od)) - od));
  }
  c.require(worst_od < 1e-12, "OD round trip %.2e < 1e-12", worst_od);

  auto cfg = paper_config();
  auto opts = detail::simulation_options(cfg, false);
  opts.workers = 1;
  const auto serial = run_loading_simulation(cfg.cloud, cfg.trap, m, 1000, 99, opts);
  opts.workers = 4;
  const auto parallel = run_loading_simulation(cfg.cloud, cfg.trap, m, 1000, 99, opts);
  c.require(serial == parallel, "parallel %s serial", serial == parallel ? "==" : "!=");
  return c;
}

Check photon_budget() {
  Check c;
  const double n = photons_per_gate(20e-12, 680e-9, 780.24e-9);
  c.require(std::abs(n - 53.4) <= 0.1, "%.3f photons per gate (53.4 +- 0.1)", n);
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
      {"trap frequency", trap_frequency},
      {"capture range", capture_range_closure},
      {"spectrum fit round trip", spectrum_round_trip},
      {"atom number inversion", atom_number_inversion},
      {"column OD", column_od},
      {"loading plausibility", loading_plausibility},
      {"recapture", recapture},
      {"numerical hygiene", numerical_hygiene},
      {"photon budget", photon_budget},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.pass = false;
      c.detail = std::string("exception: ") + e.what();
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %zu %s: %s (%.1f s)\n", c.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                c.detail.c_str(), s);
    std::fflush(stdout);
    failed += !c.pass;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
