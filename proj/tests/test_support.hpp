#ifndef PDMR_TEST_SUPPORT_HPP
#define PDMR_TEST_SUPPORT_HPP

// Shared test oracles. These deliberately avoid the library's solver and
// integrator code paths: plain bisection for fixed points and fixed-step
// Euler for transients, so the adaptive implementations are checked against
// independent arithmetic.

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "pdmr/model.hpp"

namespace pdmr_test {

// Root of the increasing function h on [0, hi] by pure bisection.
inline double bisect_oracle(const std::function<double(double)>& h, double hi,
                            int iters = 200) {
  double lo = 0.0;
  if (h(lo) >= 0) return 0.0;
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (h(mid) >= 0)
      hi = mid;
    else
      lo = mid;
  }
  return 0.5 * (lo + hi);
}

// Steady-state J by bisection on the implicit equation, independent of
// pdmr::steady_state_current.
inline double steady_oracle(double g, double p_b, double p_s, double j_s,
                            const pdmr::ModelParams& p, bool simplified) {
  auto f = [&](double j) {
    const double gen = std::pow(g, p.capture_exp);
    const double denom = gen + std::pow(p_b, p.depletion_exp) + p.recomb_coeff * j;
    const double b_st = denom > 0 ? gen * p.trap_capacity / denom : 0.0;
    return (std::pow(b_st, p.gain_exp) + (simplified ? 0.0 : 1.0)) *
           std::pow(p_s, p.injection_exp) * j_s;
  };
  const double hi = (std::pow(p.trap_capacity, p.gain_exp) + 1.0) *
                    std::pow(p_s, p.injection_exp) * j_s;
  if (hi <= 0) return 0.0;
  return bisect_oracle([&](double j) { return j - f(j); }, hi);
}

// Fixed-step explicit Euler for the single-bridge transient.
inline double euler_oracle(double b0, std::span<const pdmr::DriveSegment> schedule,
                           const pdmr::ModelParams& p, const pdmr::IVCurve& iv,
                           double dt = 1e-5) {
  double b = b0;
  for (const auto& seg : schedule) {
    const double j_s = pdmr::iv_current(iv, seg.drive.bias, seg.drive.source_power > 0);
    const double span = seg.t_end - seg.t_begin;
    const long n = std::lround(span / dt);
    const double gen = std::pow(seg.drive.gen_rate, p.capture_exp);
    const double dep = std::pow(seg.drive.bridge_power, p.depletion_exp);
    const double ps = std::pow(seg.drive.source_power, p.injection_exp);
    for (long i = 0; i < n; ++i) {
      const double j = (std::pow(b, p.gain_exp) + 1.0) * ps * j_s;
      b += dt * (gen * (p.trap_capacity - b) - dep * b - p.recomb_coeff * j * b);
      if (b < 0) b = 0;
      if (b > p.trap_capacity) b = p.trap_capacity;
    }
  }
  return b;
}

}  // namespace pdmr_test

#endif
