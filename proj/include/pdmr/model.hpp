#ifndef PDMR_MODEL_HPP
#define PDMR_MODEL_HPP

// Rate-equation model of the interface-trap ("Bridge") population and the
// photocurrent it controls.
//
// Electrons generated at an NV centre fill trap levels at the
// diamond-electrode interface; light on the trap area and recombination with
// injected holes empty them:
//
//   dB/dt = G^a (B_max - B) - P_B^b B - n_rec B
//
// The populated traps amplify the hole-injection current of a Source:
//
//   J = (B^c + 1) P_S^d J_S(U)
//
// with n_rec closed as kappa_rec * J. All constants absorb capture cross
// sections; populations and exponents are dimensionless, currents in pA,
// powers in mW, time in seconds.

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pdmr/photophysics.hpp"

namespace pdmr {

struct ModelParams {
  double capture_exp = 1;    // exponent of G in trap capture
  double depletion_exp = 1;  // exponent of P_B in photo-depletion
  double gain_exp = 1;       // exponent linking trap population to gain
  double injection_exp = 1;  // exponent of P_S
  double trap_capacity = 1;  // maximum trap population (normalized)
  double recomb_coeff = 0;   // n_rec per pA of current, >= 0
  double gen_coeff = 1;      // 1/(s*mW^2), G(P) law used by the fit
  double saturation_power =  // mW; infinity disables saturation in G(P)
      std::numeric_limits<double>::infinity();

  void validate() const;  // throws std::invalid_argument
};

struct DriveInputs {
  double gen_rate = 0;      // G, 1/s
  double bridge_power = 0;  // P_B, mW
  double source_power = 0;  // P_S, mW
  double bias = 0;          // U, V
  bool mw_on = false;       // carried for protocol bookkeeping; G is taken
                            // as given and already includes any MW factor
};

struct SystemState {
  double t = 0;           // s
  double bridge_pop = 0;  // B, in [0, trap_capacity]
  double current = 0;     // J, pA
};

// Optical vs photocurrent resonance contrast and the intercept of the secant
// line through (G_on, J_on), (G_off, J_off). The identity
// c_pc / c_pl = 1 - intercept / j_off holds by construction.
struct ContrastPair {
  double c_pl = 0;       // optical contrast, fraction
  double c_pc = 0;       // photocurrent contrast, fraction
  double intercept = 0;  // pA, secant-line intercept at G = 0
  double j_off = 0;      // pA, current with MW off
};

// dB/dt = G^a (B_max - B) - P_B^b B - n_rec B.
// Throws std::domain_error if any drive power or n_rec is negative.
double bridge_rate(const SystemState& state, const DriveInputs& drive,
                   const ModelParams& params, double n_rec);

// J = (B^c + 1) P_S^d j_s, with j_s supplied directly.
double source_current(double bridge_pop, const DriveInputs& drive,
                      const ModelParams& params, double j_s);
// Same, with j_s = iv_current(iv, drive.bias, illuminated = P_S > 0).
double source_current(double bridge_pop, const DriveInputs& drive,
                      const ModelParams& params, const IVCurve& iv);

// Unique J >= 0 solving J = f(J), where f substitutes n_rec = kappa * J into
// the steady state of the rate equation:
//   full:       f(J) = (B_st(J)^c + 1) P_S^d j_s
//   simplified: f(J) =  B_st(J)^c      P_S^d j_s   (amplified term only)
// with B_st(J) = G^a B_max / (G^a + P_B^b + kappa J). Solved by bracketed
// bisection on h(J) = J - f(J) to 1e-12 relative; f is nonincreasing in J so
// the root is unique. Throws std::runtime_error on non-convergence.
double steady_state_current(const DriveInputs& drive, const ModelParams& params,
                            double j_s, bool use_simplified = false);
double steady_state_current(const DriveInputs& drive, const ModelParams& params,
                            const IVCurve& iv, bool use_simplified = false);

// Piecewise-constant drive over [t_begin, t_end).
struct DriveSegment {
  double t_begin = 0;
  double t_end = 0;
  DriveInputs drive;
};

struct IntegratorOptions {
  double rel_tol = 1e-8;
  double dt_max = 0.1;      // s
  double dt_min = 1e-14;    // s; below this the step size has underflowed
};

// Adaptive RK4 with step-doubling error control of dB/dt, with
// n_rec = kappa * J(B) evaluated at every stage. Segments must be ordered and
// non-overlapping. J is recomputed from B at every emitted sample. Tiny
// overshoots of [0, B_max] are clamped; anything beyond the integration
// tolerance throws std::runtime_error.
std::vector<SystemState> integrate_transient(const SystemState& initial,
                                             std::span<const DriveSegment> schedule,
                                             const ModelParams& params,
                                             const IVCurve& iv,
                                             const IntegratorOptions& opts = {});

// Contrast of a sampled J(G) curve at G_off, with G_on = (1 - c_pl) G_off.
// The curve must cover [G_on, G_off]; samples are interpolated linearly.
// Throws std::out_of_range if G_on or G_off is outside the sampled range and
// std::domain_error if J_off = 0.
ContrastPair contrast_from_curve(std::span<const std::pair<double, double>> j_of_g,
                                 double g_off, double c_pl);

// Contrast directly from the two endpoint evaluations (used by contrast
// sweeps, where J comes from the steady-state solver rather than a curve).
ContrastPair contrast_from_points(double g_off, double j_off, double g_on,
                                  double j_on);

namespace detail {
// Bracketed bisection for h(J) = J - f(J) with f nonincreasing; returns the
// root in [0, hi] to rel_tol. Shared by the scalar solver and the scene
// steady-state solver.
double solve_increasing(const std::function<double(double)>& h, double hi,
                        double rel_tol, int max_iter);
}  // namespace detail

}  // namespace pdmr

#endif
