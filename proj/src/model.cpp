#include "pdmr/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pdmr {

void ModelParams::validate() const {
  if (!(capture_exp > 0 && depletion_exp > 0 && gain_exp > 0 && injection_exp > 0))
    throw std::invalid_argument("ModelParams: exponents must be positive");
  if (!(trap_capacity > 0))
    throw std::invalid_argument("ModelParams: trap_capacity must be > 0");
  if (!(recomb_coeff >= 0))
    throw std::invalid_argument("ModelParams: recomb_coeff must be >= 0");
  if (!(gen_coeff > 0))
    throw std::invalid_argument("ModelParams: gen_coeff must be > 0");
}

namespace {

void check_drive(const DriveInputs& drive) {
  if (drive.gen_rate < 0 || drive.bridge_power < 0 || drive.source_power < 0)
    throw std::domain_error("drive components must be non-negative");
}

// Exponents are usually the integers 1 or 2; skip the libm call for those.
inline double ipow(double x, double e) {
  if (e == 1.0) return x;
  if (e == 2.0) return x * x;
  return std::pow(x, e);
}

}  // namespace

double bridge_rate(const SystemState& state, const DriveInputs& drive,
                   const ModelParams& params, double n_rec) {
  check_drive(drive);
  if (n_rec < 0) throw std::domain_error("n_rec must be non-negative");
  const double capture =
      std::pow(drive.gen_rate, params.capture_exp) * (params.trap_capacity - state.bridge_pop);
  const double photo = std::pow(drive.bridge_power, params.depletion_exp) * state.bridge_pop;
  return capture - photo - n_rec * state.bridge_pop;
}

double source_current(double bridge_pop, const DriveInputs& drive,
                      const ModelParams& params, double j_s) {
  check_drive(drive);
  if (bridge_pop < 0 || bridge_pop > params.trap_capacity)
    throw std::domain_error("bridge population outside [0, trap_capacity]");
  return (std::pow(bridge_pop, params.gain_exp) + 1.0) *
         std::pow(drive.source_power, params.injection_exp) * j_s;
}

double source_current(double bridge_pop, const DriveInputs& drive,
                      const ModelParams& params, const IVCurve& iv) {
  return source_current(bridge_pop, drive, params,
                        iv_current(iv, drive.bias, drive.source_power > 0));
}

namespace detail {

double solve_increasing(const std::function<double(double)>& h, double hi,
                        double rel_tol, int max_iter) {
  double lo = 0.0;
  if (h(lo) >= 0) return lo;
  if (h(hi) < 0)
    throw std::runtime_error("fixed-point solver: bracket does not contain a root");
  for (int i = 0; i < max_iter; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (h(mid) >= 0)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= rel_tol * std::max(hi, 1e-300)) return 0.5 * (lo + hi);
  }
  throw std::runtime_error("fixed-point solver: no convergence in iteration budget");
}

}  // namespace detail

namespace {

// f(J) for the implicit steady state; nonincreasing in J.
double steady_map(double current, const DriveInputs& drive, const ModelParams& params,
                  double j_s, bool use_simplified) {
  const double gen = ipow(drive.gen_rate, params.capture_exp);
  const double denom = gen + ipow(drive.bridge_power, params.depletion_exp) +
                       params.recomb_coeff * current;
  const double b_st = denom > 0 ? gen * params.trap_capacity / denom : 0.0;
  const double amp = ipow(b_st, params.gain_exp) + (use_simplified ? 0.0 : 1.0);
  return amp * ipow(drive.source_power, params.injection_exp) * j_s;
}

}  // namespace

double steady_state_current(const DriveInputs& drive, const ModelParams& params,
                            double j_s, bool use_simplified) {
  check_drive(drive);
  params.validate();
  if (j_s < 0) throw std::domain_error("steady_state_current: j_s must be >= 0");
  const double hi0 = (std::pow(params.trap_capacity, params.gain_exp) + 1.0) *
                     std::pow(drive.source_power, params.injection_exp) * j_s;
  if (hi0 <= 0) return 0.0;
  auto h = [&](double j) { return j - steady_map(j, drive, params, j_s, use_simplified); };
  if (h(0.0) >= 0) return 0.0;

  // Bracketed bisection on h; f is nonincreasing, so h is strictly
  // increasing and the root unique. f(0) is itself an upper bound for the
  // root (J* = f(J*) <= f(0)), usually far tighter than hi0. 200 halvings
  // reach 2^-200 of the bracket, far past the 1e-12 relative target.
  double lo = 0.0, hi = std::min(hi0, steady_map(0.0, drive, params, j_s, use_simplified));
  bool converged = false;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) {
      converged = true;  // bracket collapsed to adjacent doubles
      break;
    }
    if (h(mid) >= 0)
      hi = mid;
    else
      lo = mid;
    if (hi - lo <= 1e-12 * std::max(hi, 1e-300)) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw std::runtime_error("steady_state_current: no convergence in iteration budget");

  // Newton polish to machine precision so the result is smooth under
  // finite differencing. h'(J) = 1 + c kappa B^c P_S^d j_s / (denom + kappa J);
  // only the amplified part of f depends on J.
  const double gen = ipow(drive.gen_rate, params.capture_exp);
  const double denom0 = gen + ipow(drive.bridge_power, params.depletion_exp);
  double j = 0.5 * (lo + hi);
  for (int i = 0; i < 4; ++i) {
    const double denom = denom0 + params.recomb_coeff * j;
    const double amplified = steady_map(j, drive, params, j_s, true);
    const double dh =
        1.0 + (denom > 0 ? params.gain_exp * params.recomb_coeff * amplified / denom : 0.0);
    const double next = j - h(j) / dh;
    if (!std::isfinite(next) || next < 0.0 || next > hi0) break;
    if (next == j) return j;
    j = next;
  }
  return j;
}

double steady_state_current(const DriveInputs& drive, const ModelParams& params,
                            const IVCurve& iv, bool use_simplified) {
  return steady_state_current(drive, params,
                              iv_current(iv, drive.bias, drive.source_power > 0),
                              use_simplified);
}

namespace {

struct Rhs {
  const DriveInputs& drive;
  const ModelParams& params;
  double j_s;

  double operator()(double b) const {
    const double j = (ipow(b, params.gain_exp) + 1.0) *
                     ipow(drive.source_power, params.injection_exp) * j_s;
    const double gen = ipow(drive.gen_rate, params.capture_exp);
    return gen * (params.trap_capacity - b) -
           ipow(drive.bridge_power, params.depletion_exp) * b -
           params.recomb_coeff * j * b;
  }
};

double rk4_step(const Rhs& rhs, double b, double h) {
  const double k1 = rhs(b);
  const double k2 = rhs(b + 0.5 * h * k1);
  const double k3 = rhs(b + 0.5 * h * k2);
  const double k4 = rhs(b + h * k3);
  return b + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

std::vector<SystemState> integrate_transient(const SystemState& initial,
                                             std::span<const DriveSegment> schedule,
                                             const ModelParams& params,
                                             const IVCurve& iv,
                                             const IntegratorOptions& opts) {
  params.validate();
  if (!(opts.dt_max > 0))
    throw std::invalid_argument("integrate_transient: dt_max must be > 0");
  for (size_t i = 0; i + 1 < schedule.size(); ++i)
    if (schedule[i + 1].t_begin < schedule[i].t_end)
      throw std::invalid_argument("integrate_transient: schedule segments overlap");

  // Clamp window: overshoots of [0, B_max] smaller than this are numerical.
  const double clamp_tol = 10.0 * opts.rel_tol * params.trap_capacity;

  std::vector<SystemState> out;
  double b = initial.bridge_pop;
  double t = initial.t;

  auto emit = [&](double time, double pop, const DriveInputs& drive) {
    SystemState s;
    s.t = time;
    s.bridge_pop = pop;
    s.current = source_current(pop, drive, params, iv);
    out.push_back(s);
  };

  for (const DriveSegment& seg : schedule) {
    check_drive(seg.drive);
    if (seg.t_end <= seg.t_begin) continue;
    t = seg.t_begin;
    const double j_s = iv_current(iv, seg.drive.bias, seg.drive.source_power > 0);
    const Rhs rhs{seg.drive, params, j_s};
    emit(t, b, seg.drive);

    double h = std::min(opts.dt_max, seg.t_end - seg.t_begin);
    while (t < seg.t_end) {
      h = std::min(h, seg.t_end - t);
      if (h < opts.dt_min)
        throw std::runtime_error("integrate_transient: step size underflow");

      // Step doubling: one full step vs two halves; RK4 local order 5.
      const double big = rk4_step(rhs, b, h);
      const double half = rk4_step(rhs, rk4_step(rhs, b, 0.5 * h), 0.5 * h);
      const double err = std::abs(half - big) / 15.0;
      const double scale = opts.rel_tol * std::max(std::abs(b), params.trap_capacity);

      if (err <= scale) {
        t += h;
        b = half;
        if (b < 0.0 || b > params.trap_capacity) {
          const double overshoot = std::max(-b, b - params.trap_capacity);
          if (overshoot > clamp_tol)
            throw std::runtime_error(
                "integrate_transient: trap population left [0, B_max] beyond tolerance");
          b = std::clamp(b, 0.0, params.trap_capacity);
        }
        emit(t, b, seg.drive);
        const double grow = err > 0 ? 0.9 * std::pow(scale / err, 0.2) : 5.0;
        h = std::min(opts.dt_max, h * std::clamp(grow, 0.2, 5.0));
      } else {
        h *= std::max(0.2, 0.9 * std::pow(scale / err, 0.2));
      }
    }
  }
  if (out.empty()) emit(t, b, schedule.empty() ? DriveInputs{} : schedule.back().drive);
  return out;
}

ContrastPair contrast_from_points(double g_off, double j_off, double g_on,
                                  double j_on) {
  if (j_off == 0) throw std::domain_error("contrast: J_off is zero");
  if (g_off == g_on) {
    // No MW contrast in G at all (e.g. odmr_contrast = 0): both contrasts
    // vanish and the secant line degenerates; report it through the origin.
    ContrastPair pair;
    pair.c_pl = 0;
    pair.c_pc = (j_off - j_on) / j_off;
    pair.intercept = 0;
    pair.j_off = j_off;
    return pair;
  }
  ContrastPair pair;
  pair.c_pl = (g_off - g_on) / g_off;
  pair.c_pc = (j_off - j_on) / j_off;
  const double slope = (j_off - j_on) / (g_off - g_on);
  pair.intercept = j_off - slope * g_off;  // secant line through both points
  pair.j_off = j_off;
  return pair;
}

ContrastPair contrast_from_curve(std::span<const std::pair<double, double>> j_of_g,
                                 double g_off, double c_pl) {
  if (j_of_g.size() < 2)
    throw std::out_of_range("contrast_from_curve: need at least two samples");
  const double g_on = (1.0 - c_pl) * g_off;

  auto interp = [&](double g) {
    if (g < j_of_g.front().first || g > j_of_g.back().first)
      throw std::out_of_range("contrast_from_curve: G outside sampled range");
    auto it = std::lower_bound(j_of_g.begin(), j_of_g.end(), g,
                               [](const auto& s, double v) { return s.first < v; });
    if (it == j_of_g.begin()) return it->second;
    const auto& [g1, j1] = *std::prev(it);
    const auto& [g2, j2] = *it;
    if (g2 == g1) return j2;
    return j1 + (j2 - j1) * (g - g1) / (g2 - g1);
  };

  return contrast_from_points(g_off, interp(g_off), g_on, interp(g_on));
}

}  // namespace pdmr
