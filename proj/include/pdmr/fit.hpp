#ifndef PDMR_FIT_HPP
#define PDMR_FIT_HPP

// Parameter estimation from power-sweep data.
//
// The steady-state current under main power P (driving both the NV and the
// Source) and auxiliary power P_aux (depleting the traps) is, in the
// simplified form used for fitting,
//
//   J = ( G^a B_max / (G^a + P_aux^b + kappa J) )^c  P^d  J_S0,  G = g P^2
//
// Exponents are photon/carrier counts, so they are selected by a discrete
// search over {1,2}^4 (d prefiltered by the high-power asymptote); the
// continuous amplitudes are found by damped Gauss-Newton least squares. Only
// the product B_max^c * J_S0 is identifiable, so J_S0 is held at a
// configured value and B_max carries the amplitude.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pdmr/model.hpp"

namespace pdmr {

struct SweepPoint {
  double p_main = 0;  // mW
  double p_aux = 0;   // mW
  double current = 0; // pA
  double sigma = 1;   // pA, measurement weight
};

struct SweepDataset {
  std::vector<SweepPoint> rows;
  double bias = 0;
  std::string tag;

  // sigma > 0 everywhere, >= 8 rows, >= 1 decade of main power.
  void validate() const;
};

struct AsymptoteFit {
  std::vector<int> d_candidates;  // {1} or {2}, or both when ambiguous
  double slope = 0;               // raw log-log slope over the top decade
  double amplitude = 0;           // B_max^c * J_S0 estimate from the intercept
};

// Log-log slope of J vs P over the top decade of the P_aux = 0 rows,
// rounded to the nearest of {1, 2}; farther than 0.25 from both integers
// keeps both candidates.
AsymptoteFit fit_asymptote_d(const SweepDataset& data);

struct ExponentSet {
  int capture = 1, depletion = 1, gain = 1, injection = 1;

  bool operator==(const ExponentSet&) const = default;
  // Lexicographic, used for deterministic tie-breaking.
  bool operator<(const ExponentSet& o) const {
    return std::array{capture, depletion, gain, injection} <
           std::array{o.capture, o.depletion, o.gain, o.injection};
  }
};

struct CandidateFit {
  ExponentSet exps;
  double residual = 0;  // weighted RMS
  ModelParams params;
  bool converged = false;
};

struct FitReport {
  ModelParams best;
  double js0 = 1;
  double residual = 0;  // weighted RMS of the best candidate
  bool converged = false;
  std::vector<CandidateFit> exponent_table;        // ranked, best first
  std::array<std::array<double, 3>, 3> covariance{};  // (B_max, g, kappa)
};

struct FitOptions {
  std::vector<ExponentSet> candidates;  // empty: {1,2}^3 x asymptote d
  int n_starts = 20;
  double bounds_decades = 2.0;  // starts span 10^+-decades around unity
  uint64_t seed = 12345;
  double js0 = 1.0;             // held fixed (gauge for B_max^c * J_S0)
  int max_iter = 200;
  int threads = 0;              // 0: hardware concurrency
};

FitReport fit_model(const SweepDataset& data, const FitOptions& options = {});

// Forward model evaluation over a (P_main, P_aux) grid; rows are emitted
// aux-major to match run_power_sweep.
struct PredictPoint {
  double p_main = 0;
  double p_aux = 0;
  double current = 0;
};
std::vector<PredictPoint> predict(const ModelParams& params, double js0,
                                  std::span<const double> main_powers,
                                  std::span<const double> aux_powers);

// Synthetic dataset from the same forward model, with optional relative
// Gaussian noise. Weighting sigmas are proportional to J (at least 1%, or
// noise_rel when larger) with abs_sigma_floor as a lower bound.
SweepDataset make_synthetic_sweep(const ModelParams& params, double js0,
                                  std::span<const double> main_powers,
                                  std::span<const double> aux_powers,
                                  double noise_rel, uint64_t seed,
                                  double abs_sigma_floor = 1e-6);

}  // namespace pdmr

#endif
