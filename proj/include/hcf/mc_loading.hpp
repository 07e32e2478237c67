#pragma once

// Monte-Carlo loading of a cold cloud into the fiber-guided dipole trap.
//
// Atoms are sampled from a thermal Gaussian cloud, propagated with
// velocity-Verlet through the dipole + gravity field and classified by how
// their trajectory ends. Trajectories are independent, so the engine runs them
// data-parallel and reduces in atom-index order.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "constants.hpp"
#include "errors.hpp"
#include "optics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "sequence.hpp"
#include "vec3.hpp"

namespace hcf {

struct MotCloud {
  Vec3 center{0.0, 0.0, 5.5e-3};            // m
  Vec3 half_widths_1e{0.4e-3, 0.4e-3, 2.5e-3};  // m, density ~ exp(-x^2 / s^2)
  double temperature = 120e-6;               // K
  long atom_count = 10'000'000;
};

inline void validate(const MotCloud& c) {
  if (!(c.half_widths_1e.x > 0 && c.half_widths_1e.y > 0 && c.half_widths_1e.z > 0))
    throw ValidationError("cloud half widths must be > 0");
  if (!(c.temperature > 0)) throw ValidationError("cloud temperature_K must be > 0");
  if (c.atom_count <= 0) throw ValidationError("cloud atom_count must be > 0");
}

struct PhaseSpacePoint {
  Vec3 position;
  Vec3 velocity;
};

/// Phase-space samples. Atom i is drawn from CounterRng(seed, i), so any
/// subset can be regenerated independently of the rest.
struct Ensemble {
  std::vector<Vec3> positions;
  std::vector<Vec3> velocities;
  std::uint64_t seed = 0;

  std::size_t size() const { return positions.size(); }
  PhaseSpacePoint operator[](std::size_t i) const { return {positions[i], velocities[i]}; }
  void push_back(const PhaseSpacePoint& p) {
    positions.push_back(p.position);
    velocities.push_back(p.velocity);
  }
};

inline PhaseSpacePoint sample_cloud_atom(const MotCloud& cloud, double mass, std::uint64_t seed,
                                         std::uint64_t index) {
  CounterRng rng(seed, index, StreamDomain::cloud_sampling);
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double sigma_v = std::sqrt(constants::boltzmann * cloud.temperature / mass);
  PhaseSpacePoint p;
  p.position = {cloud.center.x + cloud.half_widths_1e.x * inv_sqrt2 * rng.normal(),
                cloud.center.y + cloud.half_widths_1e.y * inv_sqrt2 * rng.normal(),
                cloud.center.z + cloud.half_widths_1e.z * inv_sqrt2 * rng.normal()};
  p.velocity = {sigma_v * rng.normal(), sigma_v * rng.normal(), sigma_v * rng.normal()};
  return p;
}

inline Ensemble sample_mot_cloud(const MotCloud& cloud, double mass, std::size_t n,
                                 std::uint64_t seed) {
  if (n < 1) throw ValidationError("sample_mot_cloud needs n >= 1");
  validate(cloud);
  Ensemble e;
  e.seed = seed;
  e.positions.reserve(n);
  e.velocities.reserve(n);
  for (std::size_t i = 0; i < n; ++i) e.push_back(sample_cloud_atom(cloud, mass, seed, i));
  return e;
}

enum class Fate { captured_in_fiber, wall_loss, facet_loss, escaped, timeout };
inline constexpr std::size_t kFateCount = 5;

inline std::string_view fate_name(Fate f) {
  switch (f) {
    case Fate::captured_in_fiber: return "captured_in_fiber";
    case Fate::wall_loss: return "wall_loss";
    case Fate::facet_loss: return "facet_loss";
    case Fate::escaped: return "escaped";
    case Fate::timeout: return "timeout";
  }
  return "unknown";
}

struct StepPolicy {
  double steps_per_period = 200.0;  // resolution of the local radial oscillation
  double max_step = 1e-6;           // s
  double fixed_step = 0.0;          // s; > 0 disables the adaptive rule
};

struct TerminationRules {
  double max_time = 0.1;             // s
  double capture_depth = 1e-3;       // m below the tip
  bool full_fiber_transit = false;   // capture at the far end of the fiber instead
  double escape_radius = 5e-3;       // m from the axis
  double escape_height = 20e-3;      // m above the tip
  double energy_drift_tolerance = 1e-3;
};

struct TrajectoryOutcome {
  Fate fate = Fate::timeout;
  PhaseSpacePoint final_state;
  std::optional<double> capture_depth_z;  // set iff captured
  double transit_time = 0.0;              // s
  double max_energy_drift = 0.0;          // relative, see energy_scale()
  bool integrator_quality_failure = false;
  long steps = 0;
};

/// Time step for an atom at height z.
inline double step_size(const TrapConfig& trap, double mass, double z, const StepPolicy& policy) {
  if (policy.fixed_step > 0) return policy.fixed_step;
  const double nu = local_transverse_frequency(trap, mass, z);
  if (nu <= 0) return policy.max_step;
  return std::min(policy.max_step, 1.0 / (policy.steps_per_period * nu));
}

/// Normalisation for relative energy drift: trap depth plus the initial
/// kinetic energy (the gravitational zero point is arbitrary).
inline double energy_scale(const TrapConfig& trap, double mass, const PhaseSpacePoint& p) {
  const double scale = trap.trap_depth + 0.5 * mass * p.velocity.norm2();
  return scale > 0 ? scale : mass * trap.gravity * 1e-6 + 1e-40;
}

inline double total_energy(const TrapConfig& trap, double mass, const PhaseSpacePoint& p) {
  return 0.5 * mass * p.velocity.norm2() + total_potential(trap, mass, p.position);
}

/// Transverse kinetic energy plus dipole potential; negative means radially bound.
inline double transverse_energy(const TrapConfig& trap, double mass, const PhaseSpacePoint& p) {
  return 0.5 * mass * p.velocity.radial2() +
         dipole_potential(trap, p.position.radial(), p.position.z);
}

/// Velocity-Verlet integrator state. The force is cached between steps.
class VerletStepper {
 public:
  VerletStepper(const TrapConfig& trap, double mass, const PhaseSpacePoint& start)
      : trap_(trap), mass_(mass), state_(start) {
    field_ = field_at(trap_, mass_, state_.position);
  }

  void step(double dt) {
    const double half = 0.5 * dt / mass_;
    state_.velocity += field_.force * half;
    state_.position += state_.velocity * dt;
    field_ = field_at(trap_, mass_, state_.position);
    state_.velocity += field_.force * half;
  }

  const PhaseSpacePoint& state() const { return state_; }
  double energy() const { return 0.5 * mass_ * state_.velocity.norm2() + field_.potential; }

 private:
  const TrapConfig& trap_;
  double mass_;
  PhaseSpacePoint state_;
  FieldSample field_;
};

inline TrajectoryOutcome integrate_trajectory(const PhaseSpacePoint& initial, const TrapConfig& trap,
                                              double mass, const StepPolicy& policy,
                                              const TerminationRules& rules) {
  if (!(rules.max_time > 0)) throw ValidationError("termination rules need max_time > 0");
  const auto& g = trap.geometry;
  const double tip = g.fiber_tip_z;
  const double core2 = g.core_radius * g.core_radius;
  const double outer2 = g.outer_radius * g.outer_radius;
  const double capture_z =
      tip - (rules.full_fiber_transit ? g.fiber_length : rules.capture_depth);

  TrajectoryOutcome out;
  auto finish = [&](Fate fate, const PhaseSpacePoint& s, double t) {
    out.fate = fate;
    out.final_state = s;
    out.transit_time = t;
    if (fate == Fate::captured_in_fiber) out.capture_depth_z = s.position.z;
    out.integrator_quality_failure = out.max_energy_drift > rules.energy_drift_tolerance;
    return out;
  };

  bool inside = false;
  if (initial.position.z <= tip) {
    const double r2 = initial.position.radial2();
    if (r2 < core2)
      inside = true;
    else if (r2 < outer2)
      return finish(Fate::facet_loss, initial, 0.0);
    else
      return finish(Fate::escaped, initial, 0.0);
  }

  VerletStepper stepper(trap, mass, initial);
  const double e0 = stepper.energy();
  const double scale = energy_scale(trap, mass, initial);
  double t = 0.0;

  while (true) {
    if (inside && stepper.state().position.z <= capture_z &&
        transverse_energy(trap, mass, stepper.state()) < 0.0)
      return finish(Fate::captured_in_fiber, stepper.state(), t);
    if (t >= rules.max_time) return finish(Fate::timeout, stepper.state(), t);

    const PhaseSpacePoint prev = stepper.state();
    const double dt = step_size(trap, mass, prev.position.z, policy);
    stepper.step(dt);
    t += dt;
    ++out.steps;
    out.max_energy_drift = std::max(out.max_energy_drift, std::abs(stepper.energy() - e0) / scale);

    const auto& s = stepper.state();
    if (!inside && s.position.z <= tip) {
      // crossing the facet plane from above
      const double f = (prev.position.z - tip) / (prev.position.z - s.position.z);
      const Vec3 hit = prev.position + (s.position - prev.position) * f;
      const double r2 = hit.radial2();
      if (r2 < core2)
        inside = true;
      else if (r2 < outer2)
        return finish(Fate::facet_loss, s, t);
      else
        return finish(Fate::escaped, s, t);
    } else if (inside && s.position.z > tip) {
      inside = false;
    }
    if (inside && s.position.radial2() >= core2) return finish(Fate::wall_loss, s, t);
    if (!inside && (s.position.radial2() > rules.escape_radius * rules.escape_radius ||
                    s.position.z > tip + rules.escape_height))
      return finish(Fate::escaped, s, t);
  }
}

struct SimulationOptions {
  StepPolicy step;
  TerminationRules termination;
  unsigned workers = 0;        // 0: hardware concurrency
  bool keep_outcomes = false;  // retain per-trajectory outcomes (CSV dump)
};

struct LoadingResult {
  std::size_t n_sampled = 0;
  std::size_t n_captured = 0;
  double efficiency = 0.0;
  double efficiency_stderr = 0.0;
  double in_fiber_temperature = 0.0;       // K, from transverse kinetic energy
  double in_fiber_temperature_stderr = 0.0;
  double transverse_width_1e_full = 0.0;   // m
  double transverse_center_x = 0.0;        // m, captured-atom mean
  double transverse_center_y = 0.0;
  double transverse_center_stderr = 0.0;   // per axis
  std::array<std::size_t, kFateCount> fate_histogram{};
  std::size_t n_integrator_failures = 0;
  std::uint64_t seed = 0;
  std::vector<TrajectoryOutcome> outcomes;  // filled when keep_outcomes

  friend bool operator==(const LoadingResult& a, const LoadingResult& b) {
    return a.n_sampled == b.n_sampled && a.n_captured == b.n_captured &&
           a.efficiency == b.efficiency && a.efficiency_stderr == b.efficiency_stderr &&
           a.in_fiber_temperature == b.in_fiber_temperature &&
           a.in_fiber_temperature_stderr == b.in_fiber_temperature_stderr &&
           a.transverse_width_1e_full == b.transverse_width_1e_full &&
           a.transverse_center_x == b.transverse_center_x &&
           a.transverse_center_y == b.transverse_center_y &&
           a.transverse_center_stderr == b.transverse_center_stderr &&
           a.fate_histogram == b.fate_histogram &&
           a.n_integrator_failures == b.n_integrator_failures && a.seed == b.seed;
  }
};

/// Aggregates outcomes in index order. Temperature counts the two transverse
/// degrees of freedom: k_B T = <m (vx^2 + vy^2) / 2>. Width is the 1/e full
/// width 2 sqrt(<x^2 + y^2>) of a density ~ exp(-r^2 / a^2).
inline LoadingResult summarize_outcomes(const std::vector<TrajectoryOutcome>& outcomes,
                                        double mass, std::uint64_t seed) {
  LoadingResult res;
  res.n_sampled = outcomes.size();
  res.seed = seed;
  double sum_ke = 0.0, sum_ke2 = 0.0, sum_r2 = 0.0;
  double sum_x = 0.0, sum_y = 0.0, sum_x2 = 0.0, sum_y2 = 0.0;
  for (const auto& o : outcomes) {
    ++res.fate_histogram[static_cast<std::size_t>(o.fate)];
    if (o.integrator_quality_failure) ++res.n_integrator_failures;
    if (o.fate != Fate::captured_in_fiber) continue;
    ++res.n_captured;
    const auto& p = o.final_state;
    const double ke = 0.5 * mass * p.velocity.radial2();
    sum_ke += ke;
    sum_ke2 += ke * ke;
    sum_r2 += p.position.radial2();
    sum_x += p.position.x;
    sum_y += p.position.y;
    sum_x2 += p.position.x * p.position.x;
    sum_y2 += p.position.y * p.position.y;
  }
  if (res.n_sampled > 0) {
    const double n = static_cast<double>(res.n_sampled);
    res.efficiency = static_cast<double>(res.n_captured) / n;
    res.efficiency_stderr = std::sqrt(res.efficiency * (1.0 - res.efficiency) / n);
  }
  if (res.n_captured > 0) {
    const double n = static_cast<double>(res.n_captured);
    const double mean_ke = sum_ke / n;
    res.in_fiber_temperature = mean_ke / constants::boltzmann;
    res.transverse_width_1e_full = 2.0 * std::sqrt(sum_r2 / n);
    res.transverse_center_x = sum_x / n;
    res.transverse_center_y = sum_y / n;
    if (res.n_captured > 1) {
      const double var_ke = std::max(0.0, (sum_ke2 / n - mean_ke * mean_ke)) * n / (n - 1);
      res.in_fiber_temperature_stderr = std::sqrt(var_ke / n) / constants::boltzmann;
      const double var_x = std::max(0.0, sum_x2 / n - res.transverse_center_x * res.transverse_center_x);
      const double var_y = std::max(0.0, sum_y2 / n - res.transverse_center_y * res.transverse_center_y);
      res.transverse_center_stderr = std::sqrt(0.5 * (var_x + var_y) * n / (n - 1) / n);
    }
  }
  return res;
}

inline LoadingResult run_loading_simulation(const MotCloud& cloud, const TrapConfig& trap,
                                            double mass, std::size_t n, std::uint64_t seed,
                                            const SimulationOptions& options = {}) {
  if (n < 100) throw ValidationError("run_loading_simulation needs n >= 100");
  validate(cloud);
  validate(trap);
  std::vector<TrajectoryOutcome> outcomes(n);
  parallel_for(n, options.workers, [&](std::size_t i) {
    const auto start = sample_cloud_atom(cloud, mass, seed, i);
    outcomes[i] = integrate_trajectory(start, trap, mass, options.step, options.termination);
  });
  auto res = summarize_outcomes(outcomes, mass, seed);
  if (options.keep_outcomes) res.outcomes = std::move(outcomes);
  return res;
}

/// Thermal ensemble inside the fiber core: positions from the Boltzmann
/// weight exp(-U(r) / k_B T) of the full Gaussian potential (rejection against
/// a uniform disk of radius core_radius), Maxwell-Boltzmann velocities, and
/// only radially bound atoms retained.
inline Ensemble sample_trapped_ensemble(const TrapConfig& trap, double mass, double temperature,
                                        std::size_t n, std::uint64_t seed, double z_center) {
  if (!(temperature > 0)) throw ValidationError("temperature must be > 0");
  if (!(trap.trap_depth > 0)) throw ValidationError("a trapped ensemble needs trap depth > 0");
  const double kT = constants::boltzmann * temperature;
  const double sigma_v = std::sqrt(kT / mass);
  const double rc = trap.geometry.core_radius;
  Ensemble e;
  e.seed = seed;
  for (std::uint64_t stream = 0; e.size() < n; ++stream) {
    CounterRng rng(seed, stream, StreamDomain::trapped_sampling);
    for (int attempt = 0; attempt < 100000; ++attempt) {
      const double r = rc * std::sqrt(rng.uniform());
      const double phi = 2.0 * constants::pi * rng.uniform();
      const double u = dipole_potential(trap, r, z_center);
      if (rng.uniform() >= std::exp(-(u + trap.trap_depth) / kT)) continue;
      PhaseSpacePoint p{{r * std::cos(phi), r * std::sin(phi), z_center},
                        {sigma_v * rng.normal(), sigma_v * rng.normal(), sigma_v * rng.normal()}};
      if (transverse_energy(trap, mass, p) >= 0.0) continue;
      e.push_back(p);
      break;
    }
  }
  return e;
}

struct RecaptureResult {
  std::size_t n_initial = 0;
  std::vector<double> per_cycle_survival;  // survivors after / before each cycle
  std::vector<double> cumulative_survival; // survivors after cycle k / n_initial
  std::vector<std::size_t> survivors;

  double min_per_cycle() const {
    double m = 1.0;
    for (double s : per_cycle_survival) m = std::min(m, s);
    return m;
  }
  double final_survival() const {
    return cumulative_survival.empty() ? 1.0 : cumulative_survival.back();
  }
};

/// Number of modulation cycles an atom survives, up to n_cycles. Each cycle is
/// ballistic flight for off_window followed by trapped evolution for the
/// remaining on-window. An atom is lost if it touches the core wall or is not
/// radially bound at the instant the trap returns.
inline int cycles_survived(const PhaseSpacePoint& start, const TrapConfig& trap, double mass,
                           const ProbeSequenceConfig& seq, int n_cycles, const StepPolicy& policy) {
  const double core2 = trap.geometry.core_radius * trap.geometry.core_radius;
  const double t_off = seq.off_window;
  const double t_on = seq.on_window();
  PhaseSpacePoint p = start;
  for (int cycle = 0; cycle < n_cycles; ++cycle) {
    // FORT off: straight line transversely, so r^2 is maximal at an endpoint
    p.position.x += p.velocity.x * t_off;
    p.position.y += p.velocity.y * t_off;
    p.position.z += p.velocity.z * t_off - 0.5 * trap.gravity * t_off * t_off;
    p.velocity.z -= trap.gravity * t_off;
    if (p.position.radial2() >= core2) return cycle;
    if (transverse_energy(trap, mass, p) >= 0.0) return cycle;

    VerletStepper stepper(trap, mass, p);
    double t = 0.0;
    while (t < t_on) {
      const double dt = std::min(step_size(trap, mass, stepper.state().position.z, policy), t_on - t);
      stepper.step(dt);
      t += dt;
      if (stepper.state().position.radial2() >= core2) return cycle;
    }
    p = stepper.state();
  }
  return n_cycles;
}

inline RecaptureResult simulate_recapture(const Ensemble& captured, const TrapConfig& trap,
                                          double mass, const ProbeSequenceConfig& sequence,
                                          const StepPolicy& policy = {}, unsigned workers = 0) {
  validate(sequence);
  const int n_cycles = sequence.n_gates;
  RecaptureResult res;
  res.n_initial = captured.size();
  std::vector<int> survived(captured.size(), n_cycles);
  // With no dark window the trap is static: there is no recapture event to fail.
  if (sequence.off_window > 0.0) {
    parallel_for(captured.size(), workers, [&](std::size_t i) {
      survived[i] = cycles_survived(captured[i], trap, mass, sequence, n_cycles, policy);
    });
  }
  std::size_t before = captured.size();
  for (int c = 0; c < n_cycles; ++c) {
    std::size_t after = 0;
    for (int s : survived) after += (s > c) ? 1 : 0;
    res.survivors.push_back(after);
    res.per_cycle_survival.push_back(before ? static_cast<double>(after) / before : 1.0);
    res.cumulative_survival.push_back(
        res.n_initial ? static_cast<double>(after) / res.n_initial : 1.0);
    before = after;
  }
  return res;
}

}  // namespace hcf
