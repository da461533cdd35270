#ifndef PDMR_SCAN_HPP
#define PDMR_SCAN_HPP

// Measurement protocols over the simulated system.
//
// The central protocol is the reset scan: between each scanned pixel the
// focus returns to a home NV centre and illuminates it until the photocurrent
// recovers to a threshold fraction of its settled reference, restoring the
// measurement conditions pixel by pixel. It produces two maps: the Reset PC
// map (current at each pixel) and the PC reaction map (current back at the
// NV spot right after visiting the pixel), where trap patches show up as
// dark spots. Standard scans without the reset step are path dependent.
//
// All waits are simulated time; the laser is blanked while the focus moves,
// which freezes the trap populations.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pdmr/dynamics.hpp"

namespace pdmr {

enum class ScanKind { standard, reset, depth_reset, discharge, power_sweep, contrast_sweep };
enum class ScanOrder { row_major, column_major };

// Scan grid over two axes: (x, y) for surface scans at the diamond surface,
// (y, objective_z) for depth scans at fixed x.
struct GridSpec {
  double a0 = 0, a1 = 0;  // first axis range, um
  double b0 = 0, b1 = 0;  // second axis range, um
  double pitch = 0.25;    // um

  size_t na() const;
  size_t nb() const;
};

struct ScanPlan {
  ScanKind kind = ScanKind::standard;
  GridSpec grid;
  int nv_home = 0;             // NV index used for resets and references
  double settle_time = 1.0;    // s, illumination before each recording
  double reset_threshold = 0.95;  // fraction of the reference NV-spot current
  double bias = 0.0;           // V
  bool aux_on = false;
  double tau_cap = 300.0;      // s, per-pixel recovery timeout (simulated)
  double move_time = 0.05;     // s, blanked focus moves
  double fixed_coord = 0.0;    // x for depth scans
  ScanOrder order = ScanOrder::row_major;  // standard scans only
  double noise_sigma = 0.0;    // pA, additive Gaussian noise on recordings
  uint64_t seed = 0;
  double q_scale = 1.0;        // pC per unit trap population (discharge)
  int bridge_index = 0;        // discharge target
  double dt_max = 0.25;        // s, integrator step cap

  void validate() const;
};

struct Map2D {
  size_t na = 0, nb = 0;
  double a0 = 0, b0 = 0, pitch = 0;
  std::vector<double> v;  // row-major: index = ib * na + ia

  double& at(size_t ia, size_t ib) { return v[ib * na + ia]; }
  double at(size_t ia, size_t ib) const { return v[ib * na + ia]; }
  double a_of(size_t ia) const { return a0 + pitch * static_cast<double>(ia); }
  double b_of(size_t ib) const { return b0 + pitch * static_cast<double>(ib); }
};

Map2D make_map(const GridSpec& grid);

struct ScanResult {
  Map2D reset_map;     // pA
  Map2D reaction_map;  // pA (reset protocols only)
  Map2D tau_map;       // s  (reset protocols only)
  std::vector<double> final_pops;  // trap populations when the scan ended
  ScanPlan plan;
  uint64_t scene_hash = 0;
  std::string scene_tag;
  double reference = 0;    // pA, settled NV-spot current
  int tau_timeouts = 0;
  std::string axis_a = "x_um";
  std::string axis_b = "y_um";
  // Depth scans: focus depth = refraction_factor * objective descent.
  double focus_scale = 1.0;
};

struct ChargeRecord {
  double illumination_time = 0;  // s of NV illumination
  double integrated_charge = 0;  // pC, q_scale * (B_start - B_end)
  double released_charge = 0;    // pC, the integrated spike trace
  std::vector<std::pair<double, double>> spike_trace;  // (s, pA)
};

struct SweepRow {
  double p_main = 0;  // mW
  double p_aux = 0;   // mW
  double current = 0; // pA, steady state
};

struct ContrastRow {
  double setting = 0;  // mW, main or aux power depending on the sweep
  ContrastPair pair;
};

// Raw PC map, pixels visited in plan.order carrying state across pixels
// (path dependent by construction). The overload resumes from given trap
// populations, e.g. to chain back-to-back scans.
ScanResult run_standard_scan(const Scene& scene, const ScanPlan& plan);
ScanResult run_standard_scan(const Scene& scene, const ScanPlan& plan,
                             std::span<const double> initial_pops);

// Reset protocol (see file comment). Pixel order may be permuted externally
// through the `pixel_order` overload; the threshold restore makes the maps
// order independent.
ScanResult run_reset_scan(const Scene& scene, const ScanPlan& plan);
ScanResult run_reset_scan(const Scene& scene, const ScanPlan& plan,
                          std::span<const size_t> pixel_order);

// Reset protocol over a (y, objective_z) plane at x = plan.fixed_coord.
ScanResult run_depth_scan(const Scene& scene, const ScanPlan& plan);

// Charge-integration protocol: illuminate the home NV for a given time,
// blank, move to the target bridge, illuminate and integrate the release
// spike until the trap population falls below 1e-3 of capacity.
ChargeRecord run_discharge(const Scene& scene, const ScanPlan& plan,
                           double nv_illumination_time);

// Steady-state current on the home NV for each (main, aux) power pair.
std::vector<SweepRow> run_power_sweep(const Scene& scene, const ScanPlan& plan,
                                      std::span<const double> main_powers,
                                      std::span<const double> aux_powers);

// MW-off vs MW-on steady states per setting; `sweep_aux` selects whether the
// setting is the auxiliary or the main laser power.
std::vector<ContrastRow> run_contrast_sweep(const Scene& scene, const ScanPlan& plan,
                                            std::span<const double> settings,
                                            bool sweep_aux);

}  // namespace pdmr

#endif
