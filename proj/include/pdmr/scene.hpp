#ifndef PDMR_SCENE_HPP
#define PDMR_SCENE_HPP

// Scene geometry and the optical model.
//
// A scene holds NV centres, Sources (hole-injection points on the
// diamond-electrode interface), Bridges (trap-level patches on the surface)
// and electrode rectangles. The optical model maps an objective position to
// a focus point (refraction at the air-diamond interface makes the focus
// travel faster than the objective below the surface) and evaluates the
// illumination every scene element receives from a double-cone beam.

#include <string>
#include <vector>

#include "pdmr/model.hpp"
#include "pdmr/photophysics.hpp"

namespace pdmr {

struct SourcePoint {
  Vec3 position;        // um; z <= 0 on or below the surface
  IVCurve iv;
  int polarity = +1;    // hole injection; fixed
  int electrode = -1;   // owning electrode, geometric metadata
};

struct BridgePatch {
  Vec3 center;          // um, z = 0 (surface effect)
  double radius = 0.3;  // um
  int params_link = 0;  // index into Scene::params
  int electrode = -1;

  void validate() const;
};

struct Electrode {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // um, axis-aligned
  double transparency = 0.3;              // transmitted fraction

  bool contains(double x, double y) const {
    return x >= x0 && x <= x1 && y >= y0 && y <= y1;
  }
};

struct OpticsConfig {
  double spot_radius = 0.3;        // um, focal waist
  double half_angle = 0.40;        // rad, cone half-angle inside diamond
  double refraction_factor = 2.5;  // focus-depth multiplier below the surface
  double laser_power = 1.0;        // mW, main laser
  double aux_power = 0.0;          // mW, auxiliary laser
  Vec3 aux_offset;                 // um, aux focus relative to main focus
  double smear_coeff = 0.0;        // spot inflation per um of focus depth

  void validate() const;
};

struct Scene {
  std::vector<NVCentre> nvs;
  std::vector<SourcePoint> sources;
  std::vector<BridgePatch> bridges;
  std::vector<Electrode> electrodes;
  std::vector<ModelParams> params;
  OpticsConfig optics;
  std::string tag;

  // The current law (gain/injection exponents, recombination coefficient)
  // is scene-wide and read from params[0]; per-bridge links select the
  // rate-equation constants (capture/depletion exponents, capacity).
  const ModelParams& current_law() const { return params.at(0); }
  const ModelParams& bridge_params(size_t i) const {
    return params.at(bridges.at(i).params_link);
  }

  void validate() const;
};

// Objective position -> focus point. Below the surface the focus descends
// refraction_factor times faster than the objective; above it passes through
// unscaled. z > 0 is air, z < 0 is inside the diamond.
Vec3 focus_position(double objective_z, double lateral_x, double lateral_y,
                    const OpticsConfig& optics);

// Effective illumination power a point receives from a beam of the given
// power focused at `focus`. Double-cone model: the beam radius grows as
// max(spot, |dz| tan(half_angle)) away from the focal plane; the on-axis
// density falls with the inverse square of that radius. Rays reaching points
// on or below the surface through an electrode are attenuated by its
// transparency.
double illumination_at(const Vec3& point, const Vec3& focus,
                       const OpticsConfig& optics,
                       std::span<const Electrode> electrodes,
                       double beam_power);
// Main-laser convenience overload (beam_power = optics.laser_power).
double illumination_at(const Vec3& point, const Vec3& focus,
                       const OpticsConfig& optics,
                       std::span<const Electrode> electrodes);

// Illumination of every scene element for a given focus. Bridge patches are
// integrated by a 9-point midpoint rule; the auxiliary beam (when on) adds
// its contribution at focus + aux_offset to every element.
struct SceneDrives {
  std::vector<double> p_nv;      // mW per NV centre
  std::vector<double> p_source;  // mW per Source
  std::vector<double> p_bridge;  // mW per Bridge (patch average)
};

SceneDrives drive_from_focus(const Scene& scene, const Vec3& focus, bool aux_on);

}  // namespace pdmr

#endif
