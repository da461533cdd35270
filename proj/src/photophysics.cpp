#include "pdmr/photophysics.hpp"

#include <cmath>
#include <stdexcept>

namespace pdmr {

void NVCentre::validate() const {
  if (!(gen_coeff > 0))
    throw std::invalid_argument("NVCentre: gen_coeff must be > 0");
  if (!(saturation_power > 0))
    throw std::invalid_argument("NVCentre: saturation_power must be > 0");
  if (!(odmr_contrast >= 0.0 && odmr_contrast <= 0.5))
    throw std::invalid_argument("NVCentre: odmr_contrast must be in [0, 0.5]");
}

NVResponse generation_rate(const NVCentre& nv, double power_mw, bool mw_on) {
  if (power_mw < 0)
    throw std::domain_error("generation_rate: negative laser power");
  // Saturating excited-state population; P/p_sat = 0 when saturation is off.
  const double sat = 1.0 + power_mw / nv.saturation_power;
  const double mw = mw_on ? 1.0 - nv.odmr_contrast : 1.0;
  NVResponse r;
  r.pl = mw * nv.radiative_rel * power_mw / sat;
  r.gen_rate = mw * nv.gen_coeff * power_mw * power_mw / sat;
  return r;
}

void IVCurve::validate() const {
  if (!(j0 >= 0)) throw std::invalid_argument("IVCurve: j0 must be >= 0");
  if (!(u0 > 0)) throw std::invalid_argument("IVCurve: u0 must be > 0");
  if (!(reverse_leak >= 0.0 && reverse_leak <= 0.05))
    throw std::invalid_argument("IVCurve: reverse_leak must be in [0, 0.05]");
}

double iv_current(const IVCurve& iv, double bias_v, bool illuminated) {
  if (iv.dark_gate && !illuminated) return 0.0;
  // Cap the exponent argument; 60 is far beyond any physical bias here.
  double x = bias_v / iv.u0;
  if (x > 60.0) x = 60.0;
  if (x < -60.0) x = -60.0;
  if (bias_v >= 0) return iv.j0 * std::expm1(x);
  return iv.reverse_leak * iv.j0 * std::expm1(x);
}

}  // namespace pdmr
