#include "pdmr/scan.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmr {

size_t GridSpec::na() const {
  return static_cast<size_t>(std::floor((a1 - a0) / pitch + 0.5)) + 1;
}
size_t GridSpec::nb() const {
  return static_cast<size_t>(std::floor((b1 - b0) / pitch + 0.5)) + 1;
}

void ScanPlan::validate() const {
  if (!(grid.pitch > 0)) throw std::invalid_argument("ScanPlan: pitch must be > 0");
  if (!(settle_time > 0)) throw std::invalid_argument("ScanPlan: settle_time must be > 0");
  if (!(reset_threshold > 0 && reset_threshold <= 1))
    throw std::invalid_argument("ScanPlan: reset_threshold must be in (0, 1]");
  if (!(grid.a1 >= grid.a0 && grid.b1 >= grid.b0))
    throw std::invalid_argument("ScanPlan: grid ranges are inverted");
  if (noise_sigma < 0) throw std::invalid_argument("ScanPlan: noise_sigma must be >= 0");
}

Map2D make_map(const GridSpec& grid) {
  Map2D m;
  m.na = grid.na();
  m.nb = grid.nb();
  m.a0 = grid.a0;
  m.b0 = grid.b0;
  m.pitch = grid.pitch;
  m.v.assign(m.na * m.nb, 0.0);
  return m;
}

namespace {

struct Recorder {
  std::mt19937_64 rng;
  std::normal_distribution<double> gauss;
  double sigma;

  Recorder(uint64_t seed, double sigma_) : rng(seed), gauss(0.0, 1.0), sigma(sigma_) {}
  double operator()(double value) {
    return sigma > 0 ? value + sigma * gauss(rng) : value;
  }
};

Vec3 nv_home_position(const Scene& scene, const ScanPlan& plan) {
  if (plan.nv_home < 0 || static_cast<size_t>(plan.nv_home) >= scene.nvs.size())
    throw std::invalid_argument("scan: nv_home index out of range");
  return scene.nvs[plan.nv_home].position;
}

Vec3 surface_focus(const GridSpec& g, size_t ia, size_t ib, const OpticsConfig& optics) {
  return focus_position(0.0, g.a0 + g.pitch * static_cast<double>(ia),
                        g.b0 + g.pitch * static_cast<double>(ib), optics);
}

}  // namespace

ScanResult run_standard_scan(const Scene& scene, const ScanPlan& plan) {
  return run_standard_scan(scene, plan, {});
}

ScanResult run_standard_scan(const Scene& scene, const ScanPlan& plan,
                             std::span<const double> initial_pops) {
  plan.validate();
  if (plan.kind != ScanKind::standard)
    throw std::invalid_argument("run_standard_scan: plan.kind must be standard");
  SceneDynamics dyn(scene, plan.bias);
  dyn.integrator.dt_max = plan.dt_max;

  ScanResult res;
  res.plan = plan;
  res.scene_hash = scene_hash(scene);
  res.scene_tag = scene.tag;
  res.reset_map = make_map(plan.grid);

  Recorder record(plan.seed, plan.noise_sigma);
  std::vector<double> pops(dyn.n_bridges(), 0.0);
  if (!initial_pops.empty()) {
    if (initial_pops.size() != dyn.n_bridges())
      throw std::invalid_argument("run_standard_scan: initial population size mismatch");
    pops.assign(initial_pops.begin(), initial_pops.end());
  }

  const size_t na = res.reset_map.na, nb = res.reset_map.nb;
  const size_t total = na * nb;
  for (size_t k = 0; k < total; ++k) {
    // Row-major sweeps the first axis fastest; column-major the second.
    const size_t ia = plan.order == ScanOrder::row_major ? k % na : k / nb;
    const size_t ib = plan.order == ScanOrder::row_major ? k / na : k % nb;
    const Vec3 focus = surface_focus(plan.grid, ia, ib, scene.optics);
    const SceneDrive drive = dyn.drive_at(focus, plan.aux_on, false);
    // Laser blanked during the move; populations hold.
    dyn.evolve(pops, drive, plan.settle_time);
    res.reset_map.at(ia, ib) = record(dyn.total_current(pops, drive));
  }
  res.final_pops = pops;
  return res;
}

namespace {

ScanResult reset_protocol(const Scene& scene, const ScanPlan& plan,
                          std::span<const size_t> order, bool depth) {
  plan.validate();
  SceneDynamics dyn(scene, plan.bias);
  dyn.integrator.dt_max = plan.dt_max;

  ScanResult res;
  res.plan = plan;
  res.scene_hash = scene_hash(scene);
  res.scene_tag = scene.tag;
  res.reset_map = make_map(plan.grid);
  res.reaction_map = make_map(plan.grid);
  res.tau_map = make_map(plan.grid);
  if (depth) {
    res.axis_a = "y_um";
    res.axis_b = "objective_z_um";
    res.focus_scale = scene.optics.refraction_factor;
  }

  Recorder record(plan.seed, plan.noise_sigma);

  const Vec3 home = nv_home_position(scene, plan);
  const SceneDrive home_drive = dyn.drive_at(home, plan.aux_on, false);

  // Reference: the NV-spot current from a fully settled state, measured once
  // at scan start. The scan also starts from exactly this state.
  std::vector<double> pops;
  res.reference = dyn.steady_current(home_drive, &pops);
  const double threshold = plan.reset_threshold * res.reference;

  const size_t na = res.reset_map.na, nb = res.reset_map.nb;
  const size_t total = na * nb;
  for (size_t k = 0; k < total; ++k) {
    const size_t idx = order.empty() ? k : order[k];
    if (idx >= total) throw std::invalid_argument("reset scan: pixel order out of range");
    const size_t ia = idx % na;
    const size_t ib = idx / na;
    const Vec3 focus =
        depth ? focus_position(plan.grid.b0 + plan.grid.pitch * static_cast<double>(ib),
                               plan.fixed_coord,
                               plan.grid.a0 + plan.grid.pitch * static_cast<double>(ia),
                               scene.optics)
              : surface_focus(plan.grid, ia, ib, scene.optics);

    // Blanked move -> pixel, settle, record the Reset PC value.
    const SceneDrive pixel_drive = dyn.drive_at(focus, plan.aux_on, false);
    dyn.evolve(pops, pixel_drive, plan.settle_time);
    res.reset_map.at(ia, ib) = record(dyn.total_current(pops, pixel_drive));

    // Blanked move -> home, settle, record the PC reaction value.
    dyn.evolve(pops, home_drive, plan.settle_time);
    res.reaction_map.at(ia, ib) = record(dyn.total_current(pops, home_drive));

    // Keep illuminating the NV until the current recovers to the threshold.
    bool reached = false;
    const double tau = dyn.evolve_until(
        pops, home_drive, plan.tau_cap,
        [&](double, double j) { return j >= threshold; }, &reached);
    res.tau_map.at(ia, ib) = tau;
    if (!reached) ++res.tau_timeouts;
  }
  res.final_pops = pops;
  return res;
}

}  // namespace

ScanResult run_reset_scan(const Scene& scene, const ScanPlan& plan) {
  if (plan.kind != ScanKind::reset)
    throw std::invalid_argument("run_reset_scan: plan.kind must be reset");
  return reset_protocol(scene, plan, {}, false);
}

ScanResult run_reset_scan(const Scene& scene, const ScanPlan& plan,
                          std::span<const size_t> pixel_order) {
  if (plan.kind != ScanKind::reset)
    throw std::invalid_argument("run_reset_scan: plan.kind must be reset");
  return reset_protocol(scene, plan, pixel_order, false);
}

ScanResult run_depth_scan(const Scene& scene, const ScanPlan& plan) {
  if (plan.kind != ScanKind::depth_reset)
    throw std::invalid_argument("run_depth_scan: plan.kind must be depth_reset");
  return reset_protocol(scene, plan, {}, true);
}

ChargeRecord run_discharge(const Scene& scene, const ScanPlan& plan,
                           double nv_illumination_time) {
  plan.validate();
  if (plan.kind != ScanKind::discharge)
    throw std::invalid_argument("run_discharge: plan.kind must be discharge");
  if (nv_illumination_time < 0)
    throw std::invalid_argument("run_discharge: negative illumination time");
  if (plan.bridge_index < 0 ||
      static_cast<size_t>(plan.bridge_index) >= scene.bridges.size())
    throw std::invalid_argument("run_discharge: bridge_index out of range");

  SceneDynamics dyn(scene, plan.bias);
  dyn.integrator.dt_max = plan.dt_max;

  ChargeRecord rec;
  rec.illumination_time = nv_illumination_time;

  // Charge the traps from empty by illuminating the NV.
  std::vector<double> pops(dyn.n_bridges(), 0.0);
  if (nv_illumination_time > 0) {
    const SceneDrive home = dyn.drive_at(nv_home_position(scene, plan), plan.aux_on, false);
    dyn.evolve(pops, home, nv_illumination_time);
  }
  double b_start = 0;
  for (double b : pops) b_start += b;

  // Blanked move to the bridge, then record the release spike.
  const Vec3 target = scene.bridges[plan.bridge_index].center;
  const SceneDrive bridge_drive = dyn.drive_at(target, plan.aux_on, false);
  rec.released_charge = dyn.evolve_release(
      pops, bridge_drive, plan.q_scale, plan.bridge_index, 1e-3, plan.tau_cap,
      [&](double t, double pa) { rec.spike_trace.emplace_back(t, pa); });

  double b_end = 0;
  for (double b : pops) b_end += b;
  rec.integrated_charge = plan.q_scale * (b_start - b_end);
  return rec;
}

std::vector<SweepRow> run_power_sweep(const Scene& scene, const ScanPlan& plan,
                                      std::span<const double> main_powers,
                                      std::span<const double> aux_powers) {
  plan.validate();
  for (double p : main_powers)
    if (p <= 0) throw std::invalid_argument("run_power_sweep: powers must be positive");

  std::vector<SweepRow> rows;
  rows.reserve(main_powers.size() * std::max<size_t>(1, aux_powers.size()));
  Scene working = scene;
  const Vec3 home = nv_home_position(scene, plan);

  std::vector<double> auxes(aux_powers.begin(), aux_powers.end());
  if (auxes.empty()) auxes.push_back(0.0);

  for (double pa : auxes) {
    for (double pm : main_powers) {
      working.optics.laser_power = pm;
      working.optics.aux_power = pa;
      SceneDynamics dyn(working, plan.bias);
      dyn.integrator.dt_max = plan.dt_max;
      const SceneDrive d = dyn.drive_at(home, pa > 0, false);
      rows.push_back({pm, pa, dyn.steady_current(d)});
    }
  }
  return rows;
}

std::vector<ContrastRow> run_contrast_sweep(const Scene& scene, const ScanPlan& plan,
                                            std::span<const double> settings,
                                            bool sweep_aux) {
  plan.validate();
  std::vector<ContrastRow> rows;
  rows.reserve(settings.size());
  Scene working = scene;
  const Vec3 home = nv_home_position(scene, plan);

  for (double s : settings) {
    if (sweep_aux)
      working.optics.aux_power = s;
    else
      working.optics.laser_power = s;
    SceneDynamics dyn(working, plan.bias);
    dyn.integrator.dt_max = plan.dt_max;
    const bool aux_on = working.optics.aux_power > 0;
    const SceneDrive off = dyn.drive_at(home, aux_on, false);
    const SceneDrive on = dyn.drive_at(home, aux_on, true);
    const double j_off = dyn.steady_current(off);
    const double j_on = dyn.steady_current(on);
    ContrastRow row;
    row.setting = s;
    row.pair = contrast_from_points(off.gen_rate, j_off, on.gen_rate, j_on);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace pdmr
