// pdmr-sim command line: scene simulation, measurement protocols and fits.
//
// Subcommands: scan, depth, discharge, sweep, contrast, fit, demo.
// Results go to files; diagnostics to stderr. Exit codes: 0 success,
// 1 usage error, 2 runtime error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pdmr/io.hpp"

namespace fs = std::filesystem;
using namespace pdmr;

namespace {

// "a,b,c" -> explicit list; "lo:hi:n" -> n log-spaced points.
std::vector<double> parse_powers(const std::string& spec) {
  std::vector<double> out;
  if (spec.find(':') != std::string::npos) {
    double lo, hi;
    int n;
    if (std::sscanf(spec.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3 || n < 2 || lo <= 0 ||
        hi <= lo)
      throw CLI::ValidationError("powers", "expected lo:hi:n with 0 < lo < hi, n >= 2");
    for (int i = 0; i < n; ++i)
      out.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return out;
  }
  std::string item;
  std::istringstream in(spec);
  while (std::getline(in, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stod(item));
  }
  if (out.empty()) throw CLI::ValidationError("powers", "empty power list");
  return out;
}

struct PlanFlags {
  double x0 = -2, x1 = 2, y0 = -2, y1 = 2, pitch = 0.25;
  double settle = 1.0, threshold = 0.95, bias = 0.0, tau_cap = 300.0;
  double noise = 0.0, dt_max = 0.25;
  uint64_t seed = 0;
  int nv_home = 0;
  bool aux = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--x0", x0, "grid start, first axis (um)");
    cmd->add_option("--x1", x1, "grid end, first axis (um)");
    cmd->add_option("--y0", y0, "grid start, second axis (um)");
    cmd->add_option("--y1", y1, "grid end, second axis (um)");
    cmd->add_option("--pitch", pitch, "pixel pitch (um)");
    cmd->add_option("--settle", settle, "settle time before each recording (s)");
    cmd->add_option("--threshold", threshold, "reset threshold, fraction of reference");
    cmd->add_option("--bias", bias, "bias voltage (V)");
    cmd->add_option("--tau-cap", tau_cap, "per-pixel recovery timeout (s)");
    cmd->add_option("--noise", noise, "additive current noise sigma (pA)");
    cmd->add_option("--seed", seed, "random seed (fixes all stochastic behavior)");
    cmd->add_option("--nv", nv_home, "home NV index");
    cmd->add_option("--dt-max", dt_max, "integrator step cap (s)");
    cmd->add_flag("--aux", aux, "enable the auxiliary laser");
  }

  ScanPlan plan(ScanKind kind) const {
    ScanPlan p;
    p.kind = kind;
    p.grid = {x0, x1, y0, y1, pitch};
    p.settle_time = settle;
    p.reset_threshold = threshold;
    p.bias = bias;
    p.tau_cap = tau_cap;
    p.noise_sigma = noise;
    p.seed = seed;
    p.nv_home = nv_home;
    p.aux_on = aux;
    p.dt_max = dt_max;
    return p;
  }
};

void run_demo(const fs::path& scenes, const fs::path& out, uint64_t seed);

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdmr-sim: NV photocurrent scan simulator and model fitting"};
  app.require_subcommand(1);

  std::string scene_path, out_dir = "out", stem, data_path, plan_name = "reset";
  std::string mains = "0.1:10:25", auxes = "0", settings = "0:3.5:15", order = "row";
  bool pgm = false, sweep_aux = false;
  double fixed_x = 0, nv_time = 1.0, q_scale = 1.0;
  int bridge_index = 0, starts = 20, threads = 0;
  double js0 = 1.0;
  uint64_t fit_seed = 12345;
  PlanFlags flags;

  auto* scan = app.add_subcommand("scan", "surface scan (standard or reset protocol)");
  scan->add_option("--scene", scene_path, "scene file")->required();
  scan->add_option("--plan", plan_name, "standard | reset")
      ->check(CLI::IsMember({"standard", "reset"}));
  scan->add_option("--order", order, "pixel order for standard scans: row | col")
      ->check(CLI::IsMember({"row", "col"}));
  scan->add_option("--out", out_dir, "output directory");
  scan->add_option("--stem", stem, "output file stem (default: plan name)");
  scan->add_flag("--pgm", pgm, "also write 16-bit grayscale heatmaps");
  flags.attach(scan);

  auto* depth = app.add_subcommand("depth", "reset depth scan over (y, objective z)");
  depth->add_option("--scene", scene_path, "scene file")->required();
  depth->add_option("--x", fixed_x, "fixed x of the scan plane (um)");
  depth->add_option("--out", out_dir, "output directory");
  depth->add_option("--stem", stem, "output file stem");
  depth->add_flag("--pgm", pgm, "also write 16-bit grayscale heatmaps");
  flags.attach(depth);

  auto* discharge = app.add_subcommand("discharge", "charge-integration protocol");
  discharge->add_option("--scene", scene_path, "scene file")->required();
  discharge->add_option("--nv-time", nv_time, "NV illumination time (s)");
  discharge->add_option("--bridge", bridge_index, "target bridge index");
  discharge->add_option("--q-scale", q_scale, "charge per unit trap population (pC)");
  discharge->add_option("--out", out_dir, "output directory");
  flags.attach(discharge);

  auto* sweep = app.add_subcommand("sweep", "steady-state power sweep table");
  sweep->add_option("--scene", scene_path, "scene file")->required();
  sweep->add_option("--mains", mains, "main powers: list a,b,c or lo:hi:n (log)");
  sweep->add_option("--auxes", auxes, "aux powers: list or lo:hi:n");
  sweep->add_option("--out", out_dir, "output directory");
  flags.attach(sweep);

  auto* contrast = app.add_subcommand("contrast", "MW contrast sweep table");
  contrast->add_option("--scene", scene_path, "scene file")->required();
  contrast->add_option("--settings", settings, "powers: list or lo:hi:n");
  contrast->add_flag("--sweep-aux", sweep_aux, "sweep the aux power instead of the main");
  contrast->add_option("--out", out_dir, "output directory");
  flags.attach(contrast);

  auto* fit = app.add_subcommand("fit", "fit model parameters to a sweep dataset");
  fit->add_option("--data", data_path, "sweep dataset (p_main p_aux current sigma)")
      ->required();
  fit->add_option("--out", out_dir, "output directory");
  fit->add_option("--starts", starts, "multi-start count");
  fit->add_option("--threads", threads, "worker threads (0: all cores)");
  fit->add_option("--js0", js0, "fixed J_S(0) gauge");
  fit->add_option("--seed", fit_seed, "multi-start seed");

  fs::path demo_scenes = "scenes", demo_out = "demo_out";
  uint64_t demo_seed = 0;
  auto* demo = app.add_subcommand("demo", "regenerate the shipped artifact set");
  demo->add_option("--scenes", demo_scenes, "scene directory");
  demo->add_option("--out", demo_out, "output directory");
  demo->add_option("--seed", demo_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    const MapFormat format = pgm ? MapFormat::both : MapFormat::delimited;
    if (*scan) {
      const Scene scene = load_scene(scene_path);
      fs::create_directories(out_dir);
      if (plan_name == "standard") {
        ScanPlan p = flags.plan(ScanKind::standard);
        p.order = order == "col" ? ScanOrder::column_major : ScanOrder::row_major;
        const ScanResult res = run_standard_scan(scene, p);
        write_map(res.reset_map, res, "standard_pc",
                  fs::path(out_dir) / ((stem.empty() ? "standard" : stem) + "_map.tsv"),
                  format);
      } else {
        const ScanResult res = run_reset_scan(scene, flags.plan(ScanKind::reset));
        write_scan_result(res, out_dir, stem.empty() ? "reset" : stem, format);
        if (res.tau_timeouts > 0)
          std::cerr << "warning: " << res.tau_timeouts << " pixels hit the recovery timeout\n";
      }
    } else if (*depth) {
      const Scene scene = load_scene(scene_path);
      ScanPlan p = flags.plan(ScanKind::depth_reset);
      p.fixed_coord = fixed_x;
      const ScanResult res = run_depth_scan(scene, p);
      fs::create_directories(out_dir);
      write_scan_result(res, out_dir, stem.empty() ? "depth" : stem, format);
    } else if (*discharge) {
      const Scene scene = load_scene(scene_path);
      ScanPlan p = flags.plan(ScanKind::discharge);
      p.q_scale = q_scale;
      p.bridge_index = bridge_index;
      const ChargeRecord rec = run_discharge(scene, p, nv_time);
      fs::create_directories(out_dir);
      write_charge_record(rec, fs::path(out_dir) / "discharge.tsv");
    } else if (*sweep) {
      const Scene scene = load_scene(scene_path);
      const auto rows = run_power_sweep(scene, flags.plan(ScanKind::power_sweep),
                                        parse_powers(mains), parse_powers(auxes));
      fs::create_directories(out_dir);
      write_sweep_table(rows, scene_hash(scene), fs::path(out_dir) / "sweep.tsv");
    } else if (*contrast) {
      const Scene scene = load_scene(scene_path);
      const auto rows = run_contrast_sweep(scene, flags.plan(ScanKind::contrast_sweep),
                                           parse_powers(settings), sweep_aux);
      fs::create_directories(out_dir);
      write_contrast_table(rows, scene_hash(scene), fs::path(out_dir) / "contrast.tsv");
    } else if (*fit) {
      const SweepDataset data = read_sweep_dataset(data_path);
      FitOptions opts;
      opts.n_starts = starts;
      opts.threads = threads;
      opts.js0 = js0;
      opts.seed = fit_seed;
      const FitReport report = fit_model(data, opts);
      fs::create_directories(out_dir);
      write_fit_report(report, fs::path(out_dir) / "fit_report.txt");
    } else if (*demo) {
      run_demo(demo_scenes, demo_out, demo_seed);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

namespace {

void run_demo(const fs::path& scenes, const fs::path& out, uint64_t seed) {
  fs::create_directories(out);
  std::cerr << "demo: writing artifacts to " << out << "\n";

  // Contrast enhancement on the calibration scene: PDMR contrast vs aux
  // power, including the calibrated operating point.
  {
    const Scene scene = load_scene(scenes / "calibration.scene");
    ScanPlan plan;
    plan.kind = ScanKind::contrast_sweep;
    plan.bias = 0.7;
    plan.seed = seed;
    std::vector<double> auxes;
    for (int i = 0; i <= 14; ++i) auxes.push_back(0.25 * i);
    const auto rows = run_contrast_sweep(scene, plan, auxes, true);
    write_contrast_table(rows, scene_hash(scene), out / "contrast_vs_aux.tsv");
  }

  // Synthetic power sweep from the reference exponents and its refit.
  {
    ModelParams truth;
    truth.capture_exp = 2;
    truth.depletion_exp = 2;
    truth.gain_exp = 2;
    truth.injection_exp = 1;
    truth.trap_capacity = 3.0;
    truth.gen_coeff = 1.5;
    truth.recomb_coeff = 0.8;
    std::vector<double> mains, auxes = {0.0, 0.5, 1.0, 2.0};
    for (int i = 0; i < 13; ++i) mains.push_back(0.1 * std::pow(1000.0, i / 12.0));
    const SweepDataset data = make_synthetic_sweep(truth, 1.0, mains, auxes, 0.0, seed);
    write_sweep_dataset(data, out / "sweep.tsv");
    FitOptions opts;
    opts.seed = 12345 + seed;
    const FitReport report = fit_model(data, opts);
    write_fit_report(report, out / "fit_report.txt");
  }

  // Reset + reaction maps around the electrodes for both NV placements.
  for (const char* name : {"sample_m", "sample_m_far"}) {
    const Scene scene = load_scene(scenes / (std::string(name) + ".scene"));
    ScanPlan plan;
    plan.kind = ScanKind::reset;
    plan.grid = {-3.0, 3.0, -4.2, 0.2, 0.2};
    plan.bias = 0.7;
    plan.settle_time = 1.0;
    plan.seed = seed;
    const ScanResult res = run_reset_scan(scene, plan);
    write_scan_result(res, out, name, MapFormat::both);
    std::cerr << "demo: " << name << " reference " << res.reference << " pA\n";
  }

  // Depth scan of the deep source.
  {
    const Scene scene = load_scene(scenes / "sample_g.scene");
    ScanPlan plan;
    plan.kind = ScanKind::depth_reset;
    plan.grid = {-4.0, 4.0, -32.0, 2.0, 1.0};
    plan.fixed_coord = 6.0;
    plan.bias = 0.7;
    plan.seed = seed;
    const ScanResult res = run_depth_scan(scene, plan);
    write_scan_result(res, out, "sample_g_depth", MapFormat::both);
  }

  // Decay of the pixel current after NV illumination stops.
  {
    const Scene scene = load_scene(scenes / "sample_g.scene");
    SceneDynamics dyn(scene, 0.7);
    std::vector<double> pops;
    const SceneDrive home = dyn.drive_at(scene.nvs[0].position, false, false);
    dyn.steady_current(home, &pops);
    const SceneDrive pixel = dyn.drive_at({6.0, 2.53, 0.0}, false, false);
    std::vector<std::pair<double, double>> trace;
    trace.emplace_back(0.0, dyn.total_current(pops, pixel));
    dyn.evolve(pops, pixel, 60.0,
               [&](double t, double j) { trace.emplace_back(t, j); });
    write_trace(trace, "t_s", "current_pA", out / "decay_trace.tsv");
  }

  // Discharge: accumulated interface charge vs NV illumination time, plus
  // one spike trace.
  {
    const Scene scene = load_scene(scenes / "discharge_prop.scene");
    ScanPlan plan;
    plan.kind = ScanKind::discharge;
    plan.bias = 0.7;
    plan.seed = seed;
    std::vector<std::pair<double, double>> charge_vs_time;
    for (double t : {0.0, 0.2, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
      const ChargeRecord rec = run_discharge(scene, plan, t);
      charge_vs_time.emplace_back(t, rec.integrated_charge);
      if (t == 4.0) write_charge_record(rec, out / "discharge_spike.tsv");
    }
    write_trace(charge_vs_time, "nv_time_s", "charge_pC", out / "charge_vs_time.tsv");
  }
  std::cerr << "demo: done\n";
}

}  // namespace
