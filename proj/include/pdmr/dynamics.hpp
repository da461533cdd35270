#ifndef PDMR_DYNAMICS_HPP
#define PDMR_DYNAMICS_HPP

// Time evolution and steady state of a whole scene.
//
// Every bridge patch carries its own trap population B_i evolving under the
// shared generation rate G (all NV centres), its own illumination P_B,i and
// recombination with the injected holes. The populated traps act through
// their summed population: every Source sees the amplification
// (sum_i B_i)^c + 1, so the measured current is
//
//   J = ((sum_i B_i)^c + 1) * sum_s P_S,s^d J_S,s(U)
//
// with the gain/injection exponents taken from the scene's current law.

#include <cstdint>
#include <functional>
#include <vector>

#include "pdmr/scene.hpp"

namespace pdmr {

// Scene illumination reduced to the quantities the rate equations need.
struct SceneDrive {
  double gen_rate = 0;              // G summed over NV centres, MW included
  std::vector<double> bridge_power; // P_B per bridge (patch average), mW
  double unit_current = 0;          // sum_s P_S,s^d J_S,s(U), pA
  bool blanked = false;
};

class SceneDynamics {
 public:
  SceneDynamics(const Scene& scene, double bias);

  const Scene& scene() const { return *scene_; }
  double bias() const { return bias_; }
  size_t n_bridges() const { return scene_->bridges.size(); }

  SceneDrive drive_at(const Vec3& focus, bool aux_on, bool mw_on) const;
  SceneDrive blanked_drive() const;

  double total_current(std::span<const double> pops, const SceneDrive& drive) const;

  // Self-consistent steady state (J and, optionally, the populations) under
  // a constant drive. Fixed point of a nonincreasing map; solved by
  // bracketed bisection to 1e-12 relative.
  double steady_current(const SceneDrive& drive,
                        std::vector<double>* pops = nullptr) const;

  // Advance the populations for `duration` seconds under a constant drive.
  // Adaptive RK4 with step-doubling error control (rel_tol on populations).
  // `sample`, when set, is called at every accepted step with (t, J).
  void evolve(std::vector<double>& pops, const SceneDrive& drive, double duration,
              const std::function<void(double, double)>& sample = {}) const;

  // Advance until `stop(t, J)` first becomes true (the crossing time is
  // refined by bisection inside the step) or until `max_duration` elapses.
  // Returns the elapsed time; `reached` reports which exit was taken.
  double evolve_until(std::vector<double>& pops, const SceneDrive& drive,
                      double max_duration,
                      const std::function<bool(double, double)>& stop,
                      bool* reached = nullptr) const;

  // Discharge helper: evolve under `drive` while accumulating the photo
  // release charge Q(t) = q_scale * int sum_i P_B,i^b B_i dt as an extra
  // integrated state, sampling the release current (pA) at every step.
  // Stops when the targeted bridge population falls below floor_fraction of
  // its capacity or after max_duration. Returns accumulated charge (pC).
  double evolve_release(std::vector<double>& pops, const SceneDrive& drive,
                        double q_scale, int target_bridge, double floor_fraction,
                        double max_duration,
                        const std::function<void(double, double)>& sample) const;

  IntegratorOptions integrator;

 private:
  struct RatePows {
    double gen = 0;                // G^a_i
    std::vector<double> dep;       // P_B,i^b_i
  };
  RatePows rate_pows(const SceneDrive& drive) const;

  const Scene* scene_;
  double bias_;
};

uint64_t scene_hash(const Scene& scene);

}  // namespace pdmr

#endif
