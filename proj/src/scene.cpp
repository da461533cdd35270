#include "pdmr/scene.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmr {

void BridgePatch::validate() const {
  if (!(radius > 0)) throw std::invalid_argument("BridgePatch: radius must be > 0");
  if (center.z != 0.0)
    throw std::invalid_argument("BridgePatch: center must lie on the surface (z = 0)");
}

void OpticsConfig::validate() const {
  if (!(spot_radius > 0))
    throw std::invalid_argument("OpticsConfig: spot_radius must be > 0");
  if (!(refraction_factor > 1))
    throw std::invalid_argument("OpticsConfig: refraction_factor must be > 1");
  if (!(half_angle > 0 && half_angle < 1.5))
    throw std::invalid_argument("OpticsConfig: half_angle must be in (0, 1.5) rad");
  if (laser_power < 0 || aux_power < 0)
    throw std::invalid_argument("OpticsConfig: laser powers must be >= 0");
  if (smear_coeff < 0)
    throw std::invalid_argument("OpticsConfig: smear_coeff must be >= 0");
}

void Scene::validate() const {
  if (params.empty()) throw std::invalid_argument("Scene: needs at least one params block");
  for (const auto& p : params) p.validate();
  for (const auto& nv : nvs) nv.validate();
  for (const auto& s : sources) {
    s.iv.validate();
    if (s.polarity != +1)
      throw std::invalid_argument("Scene: source polarity is fixed to hole injection (+1)");
  }
  for (const auto& b : bridges) {
    b.validate();
    if (b.params_link < 0 || static_cast<size_t>(b.params_link) >= params.size())
      throw std::invalid_argument("Scene: bridge params_link out of range");
  }
  for (const auto& e : electrodes)
    if (!(e.x1 >= e.x0 && e.y1 >= e.y0))
      throw std::invalid_argument("Scene: electrode rectangle is inverted");
  optics.validate();
  auto finite = [](const Vec3& v) {
    return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
  };
  for (const auto& nv : nvs)
    if (!finite(nv.position)) throw std::invalid_argument("Scene: non-finite NV position");
  for (const auto& s : sources)
    if (!finite(s.position)) throw std::invalid_argument("Scene: non-finite source position");
}

Vec3 focus_position(double objective_z, double lateral_x, double lateral_y,
                    const OpticsConfig& optics) {
  Vec3 f{lateral_x, lateral_y, objective_z};
  if (objective_z < 0.0) f.z = optics.refraction_factor * objective_z;
  return f;
}

namespace {

double electrode_factor(const Vec3& point, std::span<const Electrode> electrodes) {
  if (point.z > 0) return 1.0;
  double f = 1.0;
  for (const auto& e : electrodes)
    if (e.contains(point.x, point.y)) f *= e.transparency;
  return f;
}

}  // namespace

double illumination_at(const Vec3& point, const Vec3& focus,
                       const OpticsConfig& optics,
                       std::span<const Electrode> electrodes,
                       double beam_power) {
  if (beam_power <= 0) return 0.0;
  const double depth = std::max(0.0, -focus.z);
  const double spot = optics.spot_radius * (1.0 + optics.smear_coeff * depth);
  const double dz = point.z - focus.z;
  const double r = std::max(spot, std::abs(dz) * std::tan(optics.half_angle));
  const double dx = point.x - focus.x;
  const double dy = point.y - focus.y;
  const double rho2 = dx * dx + dy * dy;
  const double density = beam_power * std::exp(-rho2 / (r * r)) * (spot / r) * (spot / r);
  return density * electrode_factor(point, electrodes);
}

double illumination_at(const Vec3& point, const Vec3& focus,
                       const OpticsConfig& optics,
                       std::span<const Electrode> electrodes) {
  return illumination_at(point, focus, optics, electrodes, optics.laser_power);
}

namespace {

double combined_illumination(const Vec3& point, const Vec3& focus, const Scene& scene,
                             bool aux_on) {
  double p = illumination_at(point, focus, scene.optics, scene.electrodes,
                             scene.optics.laser_power);
  if (aux_on && scene.optics.aux_power > 0)
    p += illumination_at(point, focus + scene.optics.aux_offset, scene.optics,
                         scene.electrodes, scene.optics.aux_power);
  return p;
}

// Patch average over a 3x3 midpoint grid spanning the bounding square;
// every grid midpoint lies inside the disc (2*sqrt(2)/3 < 1).
double patch_average(const BridgePatch& patch, const Vec3& focus, const Scene& scene,
                     bool aux_on) {
  double acc = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      Vec3 p = patch.center;
      p.x += (2.0 * i / 3.0 - 2.0 / 3.0) * patch.radius;
      p.y += (2.0 * j / 3.0 - 2.0 / 3.0) * patch.radius;
      acc += combined_illumination(p, focus, scene, aux_on);
    }
  }
  return acc / 9.0;
}

}  // namespace

SceneDrives drive_from_focus(const Scene& scene, const Vec3& focus, bool aux_on) {
  SceneDrives d;
  d.p_nv.reserve(scene.nvs.size());
  d.p_source.reserve(scene.sources.size());
  d.p_bridge.reserve(scene.bridges.size());
  for (const auto& nv : scene.nvs)
    d.p_nv.push_back(combined_illumination(nv.position, focus, scene, aux_on));
  for (const auto& s : scene.sources)
    d.p_source.push_back(combined_illumination(s.position, focus, scene, aux_on));
  for (const auto& b : scene.bridges)
    d.p_bridge.push_back(patch_average(b, focus, scene, aux_on));
  return d;
}

}  // namespace pdmr
