#include "pdmr/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace pdmr {

SceneDynamics::SceneDynamics(const Scene& scene, double bias)
    : scene_(&scene), bias_(bias) {
  scene.validate();
  integrator.dt_max = 0.25;
}

SceneDrive SceneDynamics::drive_at(const Vec3& focus, bool aux_on, bool mw_on) const {
  const SceneDrives illum = drive_from_focus(*scene_, focus, aux_on);
  SceneDrive d;
  for (size_t i = 0; i < scene_->nvs.size(); ++i)
    d.gen_rate += generation_rate(scene_->nvs[i], illum.p_nv[i], mw_on).gen_rate;
  d.bridge_power = illum.p_bridge;
  const ModelParams& law = scene_->current_law();
  for (size_t s = 0; s < scene_->sources.size(); ++s) {
    const double ps = illum.p_source[s];
    const double j_s = iv_current(scene_->sources[s].iv, bias_, ps > 0);
    d.unit_current += std::pow(ps, law.injection_exp) * j_s;
  }
  return d;
}

SceneDrive SceneDynamics::blanked_drive() const {
  SceneDrive d;
  d.bridge_power.assign(scene_->bridges.size(), 0.0);
  d.blanked = true;
  return d;
}

double SceneDynamics::total_current(std::span<const double> pops,
                                    const SceneDrive& drive) const {
  double beff = 0;
  for (double b : pops) beff += b;
  const ModelParams& law = scene_->current_law();
  return (std::pow(beff, law.gain_exp) + 1.0) * drive.unit_current;
}

SceneDynamics::RatePows SceneDynamics::rate_pows(const SceneDrive& drive) const {
  RatePows rp;
  rp.dep.resize(scene_->bridges.size());
  for (size_t i = 0; i < scene_->bridges.size(); ++i)
    rp.dep[i] = std::pow(drive.bridge_power[i], scene_->bridge_params(i).depletion_exp);
  rp.gen = 0;  // per-bridge capture exponents applied below
  return rp;
}

double SceneDynamics::steady_current(const SceneDrive& drive,
                                     std::vector<double>* pops) const {
  const ModelParams& law = scene_->current_law();
  const RatePows rp = rate_pows(drive);
  const size_t n = scene_->bridges.size();

  std::vector<double> gen_pow(n);
  double cap_sum = 0;
  for (size_t i = 0; i < n; ++i) {
    const ModelParams& p = scene_->bridge_params(i);
    gen_pow[i] = std::pow(drive.gen_rate, p.capture_exp);
    cap_sum += p.trap_capacity;
  }

  auto beff_at = [&](double j) {
    double beff = 0;
    for (size_t i = 0; i < n; ++i) {
      const ModelParams& p = scene_->bridge_params(i);
      const double denom = gen_pow[i] + rp.dep[i] + p.recomb_coeff * j;
      beff += denom > 0 ? gen_pow[i] * p.trap_capacity / denom : 0.0;
    }
    return beff;
  };

  auto f = [&](double jj) {
    return (std::pow(beff_at(jj), law.gain_exp) + 1.0) * drive.unit_current;
  };
  // f(0) bounds the root from above; see the scalar solver.
  const double cap_hi = (std::pow(cap_sum, law.gain_exp) + 1.0) * drive.unit_current;
  const double hi = std::min(cap_hi, f(0.0));
  double j = 0.0;
  if (hi > 0) {
    auto h = [&](double jj) { return jj - f(jj); };
    j = detail::solve_increasing(h, hi, 1e-12, 200);
  }
  if (pops) {
    pops->resize(n);
    for (size_t i = 0; i < n; ++i) {
      const ModelParams& p = scene_->bridge_params(i);
      const double denom = gen_pow[i] + rp.dep[i] + p.recomb_coeff * j;
      (*pops)[i] = denom > 0 ? gen_pow[i] * p.trap_capacity / denom : 0.0;
    }
  }
  return j;
}

namespace {

// Generic adaptive RK4 with step doubling over a fixed-size state vector.
// rhs(y, dy); err_scale(i) gives the per-component tolerance scale.
template <typename Rhs, typename Scale, typename OnStep>
void adaptive_rk4(std::vector<double>& y, double duration, const Rhs& rhs,
                  const Scale& err_scale, const IntegratorOptions& opts,
                  const OnStep& on_step) {
  if (duration <= 0) return;
  const size_t n = y.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n), big(n), half(n), mid(n);

  auto rk4 = [&](const std::vector<double>& y0, double h, std::vector<double>& out) {
    rhs(y0, k1);
    for (size_t i = 0; i < n; ++i) tmp[i] = y0[i] + 0.5 * h * k1[i];
    rhs(tmp, k2);
    for (size_t i = 0; i < n; ++i) tmp[i] = y0[i] + 0.5 * h * k2[i];
    rhs(tmp, k3);
    for (size_t i = 0; i < n; ++i) tmp[i] = y0[i] + h * k3[i];
    rhs(tmp, k4);
    out.resize(n);
    for (size_t i = 0; i < n; ++i)
      out[i] = y0[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  };

  double t = 0;
  double h = std::min(opts.dt_max, duration);
  while (t < duration) {
    h = std::min(h, duration - t);
    if (h < opts.dt_min)
      throw std::runtime_error("scene integrator: step size underflow");

    rk4(y, h, big);
    rk4(y, 0.5 * h, mid);
    rk4(mid, 0.5 * h, half);

    double worst = 0;
    for (size_t i = 0; i < n; ++i) {
      const double e = std::abs(half[i] - big[i]) / 15.0;
      const double s = opts.rel_tol * err_scale(i, y[i]);
      worst = std::max(worst, s > 0 ? e / s : 0.0);
    }

    if (worst <= 1.0) {
      t += h;
      y = half;
      if (!on_step(t, y, h)) return;
      const double grow = worst > 0 ? 0.9 * std::pow(1.0 / worst, 0.2) : 5.0;
      h = std::min(opts.dt_max, h * std::clamp(grow, 0.2, 5.0));
    } else {
      h *= std::max(0.2, 0.9 * std::pow(1.0 / worst, 0.2));
    }
  }
}

}  // namespace

void SceneDynamics::evolve(std::vector<double>& pops, const SceneDrive& drive,
                           double duration,
                           const std::function<void(double, double)>& sample) const {
  if (pops.size() != n_bridges())
    throw std::invalid_argument("evolve: population vector size mismatch");
  if (drive.blanked) {
    // Nothing moves without light: G = 0, P_B = 0 and J = 0 imply dB/dt = 0.
    if (sample) sample(duration, 0.0);
    return;
  }
  const ModelParams& law = scene_->current_law();
  const RatePows rp = rate_pows(drive);
  const size_t n = n_bridges();
  std::vector<double> gen_pow(n), cap(n), kap(n);
  for (size_t i = 0; i < n; ++i) {
    const ModelParams& p = scene_->bridge_params(i);
    gen_pow[i] = std::pow(drive.gen_rate, p.capture_exp);
    cap[i] = p.trap_capacity;
    kap[i] = p.recomb_coeff;
  }

  auto rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
    double beff = 0;
    for (size_t i = 0; i < n; ++i) beff += y[i];
    const double j = (std::pow(std::max(beff, 0.0), law.gain_exp) + 1.0) * drive.unit_current;
    for (size_t i = 0; i < n; ++i)
      dy[i] = gen_pow[i] * (cap[i] - y[i]) - rp.dep[i] * y[i] - kap[i] * j * y[i];
  };
  auto scale = [&](size_t i, double yi) { return std::max(std::abs(yi), cap[i]); };

  adaptive_rk4(pops, duration, rhs, scale, integrator,
               [&](double t, std::vector<double>& y, double) {
                 for (size_t i = 0; i < n; ++i) {
                   if (y[i] < 0 || y[i] > cap[i]) {
                     const double over = std::max(-y[i], y[i] - cap[i]);
                     if (over > 10.0 * integrator.rel_tol * cap[i])
                       throw std::runtime_error(
                           "scene integrator: population left [0, B_max] beyond tolerance");
                     y[i] = std::clamp(y[i], 0.0, cap[i]);
                   }
                 }
                 if (sample) sample(t, total_current(y, drive));
                 return true;
               });
}

double SceneDynamics::evolve_until(std::vector<double>& pops, const SceneDrive& drive,
                                   double max_duration,
                                   const std::function<bool(double, double)>& stop,
                                   bool* reached) const {
  if (reached) *reached = false;
  if (stop(0.0, total_current(pops, drive))) {
    if (reached) *reached = true;
    return 0.0;
  }
  if (drive.blanked) return max_duration;  // frozen state never crosses

  const ModelParams& law = scene_->current_law();
  const RatePows rp = rate_pows(drive);
  const size_t n = n_bridges();
  std::vector<double> gen_pow(n), cap(n), kap(n);
  for (size_t i = 0; i < n; ++i) {
    const ModelParams& p = scene_->bridge_params(i);
    gen_pow[i] = std::pow(drive.gen_rate, p.capture_exp);
    cap[i] = p.trap_capacity;
    kap[i] = p.recomb_coeff;
  }
  auto rhs = [&](const std::vector<double>& y, std::vector<double>& dy) {
    double beff = 0;
    for (size_t i = 0; i < n; ++i) beff += y[i];
    const double j = (std::pow(std::max(beff, 0.0), law.gain_exp) + 1.0) * drive.unit_current;
    for (size_t i = 0; i < n; ++i)
      dy[i] = gen_pow[i] * (cap[i] - y[i]) - rp.dep[i] * y[i] - kap[i] * j * y[i];
  };
  auto scale = [&](size_t i, double yi) { return std::max(std::abs(yi), cap[i]); };

  std::vector<double> prev = pops;
  double t_hit = max_duration;
  bool hit = false;

  adaptive_rk4(pops, max_duration, rhs, scale, integrator,
               [&](double t, std::vector<double>& y, double h) {
                 for (size_t i = 0; i < n; ++i) y[i] = std::clamp(y[i], 0.0, cap[i]);
                 if (stop(t, total_current(y, drive))) {
                   // Refine the crossing inside [t-h, t] by bisecting the
                   // substep taken from the pre-step state.
                   double lo = 0, hi = h;
                   std::vector<double> trial(n), k1(n), k2(n), k3(n), k4(n), tmp(n);
                   auto rk4_from_prev = [&](double s, std::vector<double>& out) {
                     rhs(prev, k1);
                     for (size_t i = 0; i < n; ++i) tmp[i] = prev[i] + 0.5 * s * k1[i];
                     rhs(tmp, k2);
                     for (size_t i = 0; i < n; ++i) tmp[i] = prev[i] + 0.5 * s * k2[i];
                     rhs(tmp, k3);
                     for (size_t i = 0; i < n; ++i) tmp[i] = prev[i] + s * k3[i];
                     rhs(tmp, k4);
                     for (size_t i = 0; i < n; ++i)
                       out[i] = prev[i] + s / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
                   };
                   for (int it = 0; it < 60 && (hi - lo) > 1e-12 * std::max(1.0, hi); ++it) {
                     const double s = 0.5 * (lo + hi);
                     rk4_from_prev(s, trial);
                     if (stop(t - h + s, total_current(trial, drive)))
                       hi = s;
                     else
                       lo = s;
                   }
                   rk4_from_prev(hi, y);
                   for (size_t i = 0; i < n; ++i) y[i] = std::clamp(y[i], 0.0, cap[i]);
                   t_hit = t - h + hi;
                   hit = true;
                   return false;
                 }
                 prev = y;
                 return true;
               });
  if (reached) *reached = hit;
  return hit ? t_hit : max_duration;
}

double SceneDynamics::evolve_release(std::vector<double>& pops, const SceneDrive& drive,
                                     double q_scale, int target_bridge,
                                     double floor_fraction, double max_duration,
                                     const std::function<void(double, double)>& sample) const {
  const ModelParams& law = scene_->current_law();
  const RatePows rp = rate_pows(drive);
  const size_t n = n_bridges();
  std::vector<double> gen_pow(n), cap(n), kap(n);
  for (size_t i = 0; i < n; ++i) {
    const ModelParams& p = scene_->bridge_params(i);
    gen_pow[i] = std::pow(drive.gen_rate, p.capture_exp);
    cap[i] = p.trap_capacity;
    kap[i] = p.recomb_coeff;
  }

  // State = populations plus the accumulated release charge. Integrating the
  // charge alongside keeps Q + q * sum(B) conserved to the step error when
  // photo release is the only active channel.
  std::vector<double> y = pops;
  y.push_back(0.0);

  auto release_rate = [&](const std::vector<double>& s) {
    double r = 0;
    for (size_t i = 0; i < n; ++i) r += rp.dep[i] * s[i];
    return q_scale * r;
  };
  auto rhs = [&](const std::vector<double>& s, std::vector<double>& dy) {
    double beff = 0;
    for (size_t i = 0; i < n; ++i) beff += s[i];
    const double j = (std::pow(std::max(beff, 0.0), law.gain_exp) + 1.0) * drive.unit_current;
    for (size_t i = 0; i < n; ++i)
      dy[i] = gen_pow[i] * (cap[i] - s[i]) - rp.dep[i] * s[i] - kap[i] * j * s[i];
    dy[n] = release_rate(s);
  };
  auto scale = [&](size_t i, double yi) {
    if (i < n) return std::max(std::abs(yi), cap[i]);
    double cs = 0;
    for (size_t k = 0; k < n; ++k) cs += cap[k];
    return std::max(std::abs(yi), q_scale * cs);
  };

  const double floor_b = floor_fraction * cap[target_bridge];
  if (sample) sample(0.0, release_rate(y));
  adaptive_rk4(y, max_duration, rhs, scale, integrator,
               [&](double t, std::vector<double>& s, double) {
                 for (size_t i = 0; i < n; ++i) s[i] = std::clamp(s[i], 0.0, cap[i]);
                 if (sample) sample(t, release_rate(s));
                 return s[target_bridge] >= floor_b;
               });
  const double charge = y[n];
  y.pop_back();
  pops = y;
  return charge;
}

uint64_t scene_hash(const Scene& scene) {
  uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto mix = [&h](const void* data, size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  auto mixd = [&](double v) { mix(&v, sizeof v); };
  auto mixv = [&](const Vec3& v) { mixd(v.x); mixd(v.y); mixd(v.z); };

  for (const auto& nv : scene.nvs) {
    mixv(nv.position);
    mixd(nv.gen_coeff);
    mixd(nv.saturation_power);
    mixd(nv.odmr_contrast);
    mixd(nv.radiative_rel);
  }
  for (const auto& s : scene.sources) {
    mixv(s.position);
    mixd(s.iv.j0); mixd(s.iv.u0); mixd(s.iv.reverse_leak);
    mixd(s.iv.dark_gate ? 1.0 : 0.0);
    mixd(static_cast<double>(s.electrode));
  }
  for (const auto& b : scene.bridges) {
    mixv(b.center);
    mixd(b.radius);
    mixd(static_cast<double>(b.params_link));
    mixd(static_cast<double>(b.electrode));
  }
  for (const auto& e : scene.electrodes) {
    mixd(e.x0); mixd(e.y0); mixd(e.x1); mixd(e.y1); mixd(e.transparency);
  }
  for (const auto& p : scene.params) {
    mixd(p.capture_exp); mixd(p.depletion_exp); mixd(p.gain_exp); mixd(p.injection_exp);
    mixd(p.trap_capacity); mixd(p.recomb_coeff); mixd(p.gen_coeff); mixd(p.saturation_power);
  }
  const OpticsConfig& o = scene.optics;
  mixd(o.spot_radius); mixd(o.half_angle); mixd(o.refraction_factor);
  mixd(o.laser_power); mixd(o.aux_power); mixv(o.aux_offset); mixd(o.smear_coeff);
  return h;
}

}  // namespace pdmr
