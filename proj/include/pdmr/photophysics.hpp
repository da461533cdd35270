#ifndef PDMR_PHOTOPHYSICS_HPP
#define PDMR_PHOTOPHYSICS_HPP

// NV photophysics and the Source current-voltage law.
//
// An NV centre under continuous illumination cycles between charge states
// and emits both photons (PL intensity I) and free charge carriers (rate G).
// Both saturate with the same excited-state population, so G is proportional
// to I times the laser power. Microwaves on the spin resonance reduce the
// excited-state population and therefore G and I by the same factor.
//
// A Source is a spot on the diamond-electrode interface where holes are
// injected under illumination. Its current-voltage characteristic is
// diode-like (rectifying) but carries no current in the dark.

#include <array>
#include <limits>

namespace pdmr {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
};

// Single NV centre: position plus the constants of its generation law.
struct NVCentre {
  Vec3 position;                 // um
  double gen_coeff = 1.0;        // 1/(s*mW^2), coefficient of G(P)
  double saturation_power =      // mW; infinity disables saturation
      std::numeric_limits<double>::infinity();
  double odmr_contrast = 0.0;    // resonance contrast of G and PL, in [0, 0.5]
  double radiative_rel = 1.0;    // relative radiative rate, scales reported PL

  void validate() const;
};

// Generation rate and PL intensity at one laser power / MW setting.
struct NVResponse {
  double gen_rate = 0;  // carriers per second (normalized units)
  double pl = 0;        // PL intensity, arbitrary units
};

// G = gen_coeff * P^2 / (1 + P/P_sat), scaled by (1 - odmr_contrast) with
// microwaves on resonance. PL is reported as radiative_rel * P / (1 + P/P_sat)
// with the same MW factor, so G is proportional to PL * P identically.
NVResponse generation_rate(const NVCentre& nv, double power_mw, bool mw_on);

// Rectifying IV characteristic of a Source at zero trap population.
// Forward: j0*(exp(U/u0) - 1); reverse: a small leak branch. Zero in the
// dark when dark_gate is set.
struct IVCurve {
  double j0 = 1.0;            // pA, forward current scale
  double u0 = 1.0;            // V, voltage scale
  double reverse_leak = 0.0;  // fraction of j0, in [0, 0.05]
  bool dark_gate = true;      // no current without illumination

  void validate() const;
};

double iv_current(const IVCurve& iv, double bias_v, bool illuminated);

}  // namespace pdmr

#endif
