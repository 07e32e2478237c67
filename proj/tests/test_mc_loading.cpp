#include <gtest/gtest.h>

#include <cmath>

#include "hcf/mc_loading.hpp"
#include "support.hpp"

using namespace hcf;
using hcf::test::rb87;

namespace {

constexpr double kB = 1.380649e-23;

TrapConfig paper_trap() {
  TrapConfig t;
  t.trap_depth = kB * 5e-3;
  return t;
}

MotCloud held_cloud() {
  MotCloud c;
  c.center = {0.0, 0.0, 0.3e-3};
  c.half_widths_1e = {0.1e-3, 0.1e-3, 0.1e-3};
  c.temperature = 120e-6;
  return c;
}

SimulationOptions short_window(unsigned workers = 0) {
  SimulationOptions o;
  o.termination.max_time = 0.02;
  o.workers = workers;
  return o;
}

}  // namespace

TEST(CloudSampling, AxisVariancesMatchHalfWidthConvention) {
  MotCloud cloud;
  cloud.half_widths_1e = {0.4e-3, 0.4e-3, 2.5e-3};
  const std::size_t n = 100'000;
  const auto e = sample_mot_cloud(cloud, rb87().mass, n, 42);
  ASSERT_EQ(e.size(), n);
  const double sig[3] = {0.4e-3, 0.4e-3, 2.5e-3};
  const double c[3] = {cloud.center.x, cloud.center.y, cloud.center.z};
  for (int axis = 0; axis < 3; ++axis) {
    double s2 = 0.0;
    for (const auto& p : e.positions) {
      const double v = (axis == 0 ? p.x : axis == 1 ? p.y : p.z) - c[axis];
      s2 += v * v;
    }
    const double var = s2 / n;
    const double target = sig[axis] * sig[axis] / 2.0;  // density ~ exp(-x^2/s^2)
    const double mc_err = target * std::sqrt(2.0 / n);
    EXPECT_LT(std::abs(var - target), 3.0 * mc_err) << "axis " << axis;
  }
}

TEST(CloudSampling, Equipartition) {
  MotCloud cloud;
  const std::size_t n = 100'000;
  const double m = rb87().mass;
  const auto e = sample_mot_cloud(cloud, m, n, 7);
  double ke = 0.0;
  for (const auto& v : e.velocities) ke += 0.5 * m * v.norm2();
  ke /= n;
  const double kT = kB * cloud.temperature;
  const double mc_err = std::sqrt(1.5) * kT / std::sqrt(double(n));
  EXPECT_LT(std::abs(ke - 1.5 * kT), 3.0 * mc_err);
}

TEST(CloudSampling, DeterministicAndSubsetIndependent) {
  const MotCloud cloud;
  const auto a = sample_mot_cloud(cloud, rb87().mass, 1000, 99);
  const auto b = sample_mot_cloud(cloud, rb87().mass, 1000, 99);
  EXPECT_EQ(a.positions, b.positions);
  EXPECT_EQ(a.velocities, b.velocities);
  const auto p = sample_cloud_atom(cloud, rb87().mass, 99, 512);
  EXPECT_EQ(p.position, a.positions[512]);
  EXPECT_EQ(p.velocity, a.velocities[512]);
  const auto c = sample_mot_cloud(cloud, rb87().mass, 1000, 100);
  EXPECT_NE(a.positions, c.positions);
}

TEST(CloudSampling, Validation) {
  MotCloud bad;
  bad.temperature = 0.0;
  EXPECT_THROW(sample_mot_cloud(bad, rb87().mass, 10, 1), ValidationError);
  EXPECT_THROW(sample_mot_cloud(MotCloud{}, rb87().mass, 0, 1), ValidationError);
}

TEST(Trajectory, AtRestInsideFiberIsCaptured) {
  const auto t = paper_trap();
  const PhaseSpacePoint start{{0.0, 0.0, -0.5e-3}, {0.0, 0.0, 0.0}};
  const auto o = integrate_trajectory(start, t, rb87().mass, {}, {});
  EXPECT_EQ(o.fate, Fate::captured_in_fiber);
  ASSERT_TRUE(o.capture_depth_z.has_value());
  EXPECT_LE(*o.capture_depth_z, -1e-3);
  EXPECT_EQ(o.final_state.position.radial2(), 0.0);
  EXPECT_FALSE(o.integrator_quality_failure);
}

TEST(Trajectory, NoTrapNeverCaptures) {
  auto t = paper_trap();
  t.trap_depth = 0.0;
  for (double r : {2e-6, 10e-6, 40e-6, 200e-6}) {
    const PhaseSpacePoint start{{r, 0.0, 100e-6}, {0.0, 0.0, -0.1}};
    const auto o = integrate_trajectory(start, t, rb87().mass, {}, {});
    EXPECT_NE(o.fate, Fate::captured_in_fiber) << "r=" << r;
    EXPECT_FALSE(o.capture_depth_z.has_value());
    if (r > t.geometry.core_radius) {
      EXPECT_TRUE(o.fate == Fate::escaped || o.fate == Fate::facet_loss) << "r=" << r;
    }
  }
}

TEST(Trajectory, OnAxisFallMatchesFineStepOracle) {
  // 1D oracle on the axis: U(z) = -U0 / (1 + (z NA / w0)^2) + m g z above the
  // tip, -U0 + m g z inside; RK4 at a step ten times finer than the default.
  const auto t = paper_trap();
  const double m = rb87().mass, g = t.gravity, U0 = t.trap_depth, k = 0.1 / 2.75e-6;
  auto accel = [&](double z) {
    if (z <= 0) return -g;
    const double u = z * k;
    return -(U0 * 2.0 * u * k / ((1 + u * u) * (1 + u * u))) / m - g;
  };
  double z = 200e-6, v = -0.33, time = 0.0;
  const double dt = 1.0 / (200.0 * 80.05e3) / 10.0;
  while (z > -1e-3) {
    const double k1v = accel(z), k1z = v;
    const double k2v = accel(z + 0.5 * dt * k1z), k2z = v + 0.5 * dt * k1v;
    const double k3v = accel(z + 0.5 * dt * k2z), k3z = v + 0.5 * dt * k2v;
    const double k4v = accel(z + dt * k3z), k4z = v + dt * k3v;
    z += dt / 6 * (k1z + 2 * k2z + 2 * k3z + k4z);
    v += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    time += dt;
  }
  const PhaseSpacePoint start{{0.0, 0.0, 200e-6}, {0.0, 0.0, -0.33}};
  const auto o = integrate_trajectory(start, t, m, {}, {});
  ASSERT_EQ(o.fate, Fate::captured_in_fiber);
  EXPECT_NEAR(o.transit_time, time, 2e-7);
  EXPECT_NEAR(o.final_state.velocity.z, v, 1e-3 * std::abs(v));
}

TEST(Trajectory, FacetImpact) {
  const auto t = paper_trap();
  const PhaseSpacePoint start{{20e-6, 0.0, 10e-6}, {0.0, 0.0, -0.5}};
  EXPECT_EQ(integrate_trajectory(start, t, rb87().mass, {}, {}).fate, Fate::facet_loss);
}

TEST(Trajectory, WallLoss) {
  // inside the core with a transverse velocity far above the 5 mK well
  const auto t = paper_trap();
  const PhaseSpacePoint start{{0.0, 0.0, -0.1e-3}, {3.0, 0.0, -0.3}};
  EXPECT_EQ(integrate_trajectory(start, t, rb87().mass, {}, {}).fate, Fate::wall_loss);
}

TEST(Trajectory, TimeoutAndEscape) {
  auto t = paper_trap();
  TerminationRules rules;
  rules.max_time = 1e-4;
  const PhaseSpacePoint hover{{0.0, 0.0, 3e-3}, {0.0, 0.0, 0.0}};
  EXPECT_EQ(integrate_trajectory(hover, t, rb87().mass, {}, rules).fate, Fate::timeout);
  const PhaseSpacePoint fly{{0.0, 0.0, 3e-3}, {100.0, 0.0, 0.0}};
  EXPECT_EQ(integrate_trajectory(fly, t, rb87().mass, {}, {}).fate, Fate::escaped);
  rules.max_time = 0.0;
  EXPECT_THROW(integrate_trajectory(hover, t, rb87().mass, {}, rules), ValidationError);
}

TEST(Trajectory, CoarseStepFlagsIntegratorQuality) {
  const auto t = paper_trap();
  StepPolicy coarse;
  coarse.fixed_step = 4e-6;  // a third of a radial period
  TerminationRules rules;
  rules.capture_depth = 5e-3;
  const PhaseSpacePoint start{{1e-6, 0.0, -0.1e-3}, {0.0, 0.1, 0.0}};
  const auto o = integrate_trajectory(start, t, rb87().mass, coarse, rules);
  EXPECT_TRUE(o.integrator_quality_failure);
  EXPECT_GT(o.max_energy_drift, 1e-3);
}

TEST(Trajectory, EnergyDriftOverTenMillisecondsInStaticTrap) {
  const auto t = paper_trap();
  const double m = rb87().mass;
  const auto atoms = sample_trapped_ensemble(t, m, 450e-6, 100, 5, -1e-3);
  ASSERT_EQ(atoms.size(), 100u);
  const StepPolicy policy;
  double worst = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    VerletStepper s(t, m, atoms[i]);
    const double e0 = s.energy();
    const double scale = energy_scale(t, m, atoms[i]);
    double time = 0.0;
    while (time < 10e-3) {
      const double dt = step_size(t, m, s.state().position.z, policy);
      s.step(dt);
      time += dt;
      worst = std::max(worst, std::abs(s.energy() - e0) / scale);
    }
    EXPECT_LT(s.state().position.radial(), t.geometry.core_radius) << "atom " << i;
  }
  EXPECT_LT(worst, 1e-3);
}

TEST(StepPolicy, ResolvesLocalOscillation) {
  const auto t = paper_trap();
  const double m = rb87().mass;
  const StepPolicy p;
  EXPECT_NEAR(step_size(t, m, -1e-3, p), 1.0 / (200.0 * transverse_trap_frequency(t, m)), 1e-18);
  EXPECT_EQ(step_size(t, m, 5e-3, p), 1e-6);
  StepPolicy fixed;
  fixed.fixed_step = 3e-8;
  EXPECT_EQ(step_size(t, m, 0.0, fixed), 3e-8);
}

TEST(Loading, FatesAreExhaustive) {
  const auto r = run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 400, 3, short_window());
  std::size_t total = 0;
  for (auto c : r.fate_histogram) total += c;
  EXPECT_EQ(total, r.n_sampled);
  EXPECT_EQ(r.n_captured, r.fate_histogram[0]);
  EXPECT_DOUBLE_EQ(r.efficiency, double(r.n_captured) / r.n_sampled);
  EXPECT_GE(r.efficiency, 0.0);
  EXPECT_LE(r.efficiency, 1.0);
}

TEST(Loading, OutcomesCarryCaptureDepthIffCaptured) {
  auto opt = short_window();
  opt.keep_outcomes = true;
  const auto r = run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 400, 3, opt);
  ASSERT_EQ(r.outcomes.size(), 400u);
  for (const auto& o : r.outcomes)
    EXPECT_EQ(o.capture_depth_z.has_value(), o.fate == Fate::captured_in_fiber);
}

TEST(Loading, ZeroDepthCapturesNothing) {
  auto t = paper_trap();
  t.trap_depth = 0.0;
  const auto r = run_loading_simulation(held_cloud(), t, rb87().mass, 300, 1, short_window());
  EXPECT_EQ(r.n_captured, 0u);
  EXPECT_EQ(r.efficiency, 0.0);
}

TEST(Loading, ParallelMatchesSerialBitExactly) {
  const auto a = run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 600, 11, short_window(1));
  const auto b = run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 600, 11, short_window(4));
  const auto c = run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 600, 11, short_window(7));
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
}

TEST(Loading, EfficiencyNonDecreasingInDepth) {
  double prev = -1.0;
  for (double mk : {1.0, 3.0, 5.0}) {
    auto t = paper_trap();
    t.trap_depth = kB * mk * 1e-3;
    const auto r = run_loading_simulation(held_cloud(), t, rb87().mass, 2000, 17, short_window());
    EXPECT_GE(r.efficiency, prev) << mk << " mK";
    prev = r.efficiency;
  }
}

TEST(Loading, ZeroGravityCentredCloudHasCentredCapture) {
  auto t = paper_trap();
  t.gravity = 0.0;
  auto cloud = held_cloud();
  cloud.center = {0.0, 0.0, 0.15e-3};
  cloud.temperature = 30e-6;
  const auto r = run_loading_simulation(cloud, t, rb87().mass, 3000, 23, short_window());
  ASSERT_GT(r.n_captured, 20u);
  EXPECT_LT(std::abs(r.transverse_center_x), 3.0 * r.transverse_center_stderr);
  EXPECT_LT(std::abs(r.transverse_center_y), 3.0 * r.transverse_center_stderr);
}

TEST(Loading, NeedsAtLeastHundredAtoms) {
  EXPECT_THROW(run_loading_simulation(held_cloud(), paper_trap(), rb87().mass, 99, 1), ValidationError);
}

TEST(Summary, TemperatureAndWidthFromCapturedOnly) {
  const double m = rb87().mass;
  std::vector<TrajectoryOutcome> v(3);
  v[0].fate = Fate::captured_in_fiber;
  v[0].final_state = {{1e-6, 0.0, -1e-3}, {0.1, 0.0, -0.3}};
  v[1].fate = Fate::captured_in_fiber;
  v[1].final_state = {{0.0, -1e-6, -1e-3}, {0.0, 0.2, -0.3}};
  v[2].fate = Fate::escaped;
  v[2].final_state = {{1.0, 1.0, 1.0}, {9.0, 9.0, 9.0}};
  const auto r = summarize_outcomes(v, m, 0);
  EXPECT_EQ(r.n_captured, 2u);
  EXPECT_NEAR(r.in_fiber_temperature, 0.5 * m * (0.01 + 0.04) / 2.0 / kB, 1e-18);
  EXPECT_NEAR(r.transverse_width_1e_full, 2e-6, 1e-18);
}

TEST(Recapture, NoDarkWindowMeansFullSurvival) {
  const auto t = paper_trap();
  const auto atoms = sample_trapped_ensemble(t, rb87().mass, 450e-6, 50, 1, -1e-3);
  ProbeSequenceConfig seq;
  seq.off_window = 0.0;
  seq.gate_time = 0.0;
  const auto r = simulate_recapture(atoms, t, rb87().mass, seq);
  EXPECT_EQ(r.final_survival(), 1.0);
  EXPECT_EQ(r.min_per_cycle(), 1.0);
  EXPECT_EQ(r.per_cycle_survival.size(), 50u);
}

TEST(Recapture, PaperSequenceKeepsAtoms) {
  const auto t = paper_trap();
  const auto atoms = sample_trapped_ensemble(t, rb87().mass, 450e-6, 300, 2, -1e-3);
  const ProbeSequenceConfig seq;
  const auto r = simulate_recapture(atoms, t, rb87().mass, seq);
  EXPECT_GT(r.per_cycle_survival.front(), 0.99);
  EXPECT_GE(r.final_survival(), 0.9);
  for (std::size_t k = 1; k < r.cumulative_survival.size(); ++k)
    EXPECT_LE(r.cumulative_survival[k], r.cumulative_survival[k - 1]);
}

TEST(Recapture, LongDarkWindowLosesAtoms) {
  const auto t = paper_trap();
  const auto atoms = sample_trapped_ensemble(t, rb87().mass, 450e-6, 200, 3, -1e-3);
  ProbeSequenceConfig seq;
  seq.modulation_frequency = 10e3;
  seq.off_window = 50e-6;
  EXPECT_LT(simulate_recapture(atoms, t, rb87().mass, seq).final_survival(), 0.5);
}

TEST(TrappedEnsemble, BoundAndInsideCore) {
  const auto t = paper_trap();
  const double m = rb87().mass;
  const auto e = sample_trapped_ensemble(t, m, 450e-6, 500, 4, -2e-3);
  ASSERT_EQ(e.size(), 500u);
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_LT(transverse_energy(t, m, e[i]), 0.0);
    EXPECT_LT(e[i].position.radial(), t.geometry.core_radius);
  }
}
