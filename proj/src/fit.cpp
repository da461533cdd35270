#include "pdmr/fit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

namespace pdmr {

void SweepDataset::validate() const {
  if (rows.size() < 8)
    throw std::invalid_argument("SweepDataset: need at least 8 rows");
  double pmin = 1e300, pmax = 0;
  for (const auto& r : rows) {
    if (!(r.sigma > 0)) throw std::invalid_argument("SweepDataset: sigma must be > 0");
    if (!(r.p_main > 0)) throw std::invalid_argument("SweepDataset: p_main must be > 0");
    if (r.p_aux < 0) throw std::invalid_argument("SweepDataset: p_aux must be >= 0");
    pmin = std::min(pmin, r.p_main);
    pmax = std::max(pmax, r.p_main);
  }
  if (pmax < 10.0 * pmin)
    throw std::invalid_argument("SweepDataset: main power must span at least a decade");
}

AsymptoteFit fit_asymptote_d(const SweepDataset& data) {
  data.validate();
  double pmax = 0;
  for (const auto& r : data.rows)
    if (r.p_aux == 0) pmax = std::max(pmax, r.p_main);
  if (pmax <= 0)
    throw std::invalid_argument("fit_asymptote_d: no P_aux = 0 rows");

  // Least-squares line through (ln P, ln J) over the top decade.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (const auto& r : data.rows) {
    if (r.p_aux != 0 || r.p_main < pmax / 10.0 || r.current <= 0) continue;
    const double x = std::log(r.p_main), y = std::log(r.current);
    sx += x; sy += y; sxx += x * x; sxy += x * y;
    ++n;
  }
  if (n < 2)
    throw std::invalid_argument("fit_asymptote_d: too few rows in the top decade");

  AsymptoteFit out;
  const double denom = n * sxx - sx * sx;
  out.slope = (n * sxy - sx * sy) / denom;

  const int nearest = out.slope < 1.5 ? 1 : 2;
  if (std::abs(out.slope - nearest) > 0.25) {
    out.d_candidates = {1, 2};
  } else {
    out.d_candidates = {nearest};
  }
  // Intercept with the selected integer slope.
  const int d = out.d_candidates.front();
  out.amplitude = std::exp((sy - d * sx) / n);
  return out;
}

namespace {

ModelParams params_of(const ExponentSet& e, double b_max, double g, double kappa) {
  ModelParams p;
  p.capture_exp = e.capture;
  p.depletion_exp = e.depletion;
  p.gain_exp = e.gain;
  p.injection_exp = e.injection;
  p.trap_capacity = b_max;
  p.gen_coeff = g;
  p.recomb_coeff = kappa;
  return p;
}

// Model current for a row; theta = (B_max, g, kappa) in natural units.
double model_current(const SweepPoint& row, const ExponentSet& e,
                     const std::array<double, 3>& theta, double js0) {
  const ModelParams p = params_of(e, theta[0], theta[1], theta[2]);
  DriveInputs drive;
  drive.gen_rate = theta[1] * row.p_main * row.p_main;  // no saturation in the fit
  drive.bridge_power = row.p_aux;
  drive.source_power = row.p_main;
  return steady_state_current(drive, p, js0, /*use_simplified=*/true);
}

struct LocalFit {
  std::array<double, 3> theta{};  // natural units
  double cost = 1e300;            // sum of squared weighted residuals
  bool converged = false;
  int n_rows = 0;
};

// Damped Gauss-Newton in log-parameter space (keeps every amplitude
// positive; multi-starts are log-spaced anyway).
LocalFit gauss_newton(const SweepDataset& data, const ExponentSet& e,
                      std::array<double, 3> log_start, double js0, int max_iter,
                      double log_bound) {
  const size_t n = data.rows.size();
  LocalFit fit;
  fit.n_rows = static_cast<int>(n);

  std::array<double, 3> lt = log_start;
  auto natural = [](const std::array<double, 3>& l) {
    return std::array<double, 3>{std::exp(l[0]), std::exp(l[1]), std::exp(l[2])};
  };
  auto cost_of = [&](const std::array<double, 3>& l, std::vector<double>& res) {
    const auto th = natural(l);
    double c = 0;
    res.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& row = data.rows[i];
      res[i] = (model_current(row, e, th, js0) - row.current) / row.sigma;
      c += res[i] * res[i];
    }
    return c;
  };

  std::vector<double> r(n), rp(n), rm(n), rtry(n);
  double cost = cost_of(lt, r);
  double lambda = 1e-3;
  const double diff_step = 1e-6;  // relative step; central differences

  for (int iter = 0; iter < max_iter; ++iter) {
    // Numeric Jacobian d r_i / d log theta_j.
    std::array<std::vector<double>, 3> jac;
    for (int j = 0; j < 3; ++j) {
      auto lp = lt, lm = lt;
      lp[j] += diff_step;
      lm[j] -= diff_step;
      cost_of(lp, rp);
      cost_of(lm, rm);
      jac[j].resize(n);
      for (size_t i = 0; i < n; ++i) jac[j][i] = (rp[i] - rm[i]) / (2 * diff_step);
    }

    std::array<std::array<double, 3>, 3> jtj{};
    std::array<double, 3> jtr{};
    for (int a = 0; a < 3; ++a) {
      for (int b = a; b < 3; ++b) {
        double s = 0;
        for (size_t i = 0; i < n; ++i) s += jac[a][i] * jac[b][i];
        jtj[a][b] = jtj[b][a] = s;
      }
      double s = 0;
      for (size_t i = 0; i < n; ++i) s += jac[a][i] * r[i];
      jtr[a] = s;
    }

    bool stepped = false;
    for (int tries = 0; tries < 12 && !stepped; ++tries) {
      auto m = jtj;
      for (int a = 0; a < 3; ++a) m[a][a] += lambda * std::max(jtj[a][a], 1e-12);
      // Solve m * delta = -jtr (Gaussian elimination, 3x3).
      std::array<std::array<double, 4>, 3> aug{};
      for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) aug[a][b] = m[a][b];
        aug[a][3] = -jtr[a];
      }
      bool singular = false;
      for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int row = col + 1; row < 3; ++row)
          if (std::abs(aug[row][col]) > std::abs(aug[piv][col])) piv = row;
        if (std::abs(aug[piv][col]) < 1e-300) { singular = true; break; }
        std::swap(aug[piv], aug[col]);
        for (int row = 0; row < 3; ++row) {
          if (row == col) continue;
          const double f = aug[row][col] / aug[col][col];
          for (int b = col; b < 4; ++b) aug[row][b] -= f * aug[col][b];
        }
      }
      if (singular) { lambda *= 10; continue; }
      std::array<double, 3> delta{};
      for (int a = 0; a < 3; ++a) delta[a] = aug[a][3] / aug[a][a];

      auto ltry = lt;
      for (int a = 0; a < 3; ++a) ltry[a] = std::clamp(lt[a] + delta[a], -log_bound, log_bound);
      const double ctry = cost_of(ltry, rtry);
      if (ctry <= cost) {
        const double rel_step =
            std::max({std::abs(delta[0]), std::abs(delta[1]), std::abs(delta[2])});
        const double improvement = cost - ctry;
        lt = ltry;
        r = rtry;
        cost = ctry;
        lambda = std::max(lambda / 3.0, 1e-12);
        stepped = true;
        if (rel_step < 1e-12 || improvement <= 1e-15 * std::max(cost, 1e-30)) {
          fit.converged = true;
          iter = max_iter;  // done
        }
      } else {
        lambda *= 8;
      }
    }
    if (!stepped) {
      fit.converged = cost < 1e300;  // stuck in a (possibly local) minimum
      break;
    }
  }

  fit.theta = natural(lt);
  fit.cost = cost;
  return fit;
}

std::array<std::array<double, 3>, 3> covariance_at(const SweepDataset& data,
                                                   const ExponentSet& e,
                                                   const std::array<double, 3>& theta,
                                                   double js0) {
  // (J^T J)^-1 with the Jacobian in natural parameter units.
  const size_t n = data.rows.size();
  std::array<std::vector<double>, 3> jac;
  for (int j = 0; j < 3; ++j) {
    auto tp = theta, tm = theta;
    const double step = 1e-6 * theta[j];
    tp[j] += step;
    tm[j] -= step;
    jac[j].resize(n);
    for (size_t i = 0; i < n; ++i) {
      const auto& row = data.rows[i];
      jac[j][i] = (model_current(row, e, tp, js0) - model_current(row, e, tm, js0)) /
                  (2 * step * row.sigma);
    }
  }
  std::array<std::array<double, 3>, 3> jtj{};
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      double s = 0;
      for (size_t i = 0; i < n; ++i) s += jac[a][i] * jac[b][i];
      jtj[a][b] = s;
    }
  // Invert 3x3 by adjugate.
  const auto& m = jtj;
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  std::array<std::array<double, 3>, 3> inv{};
  if (std::abs(det) < 1e-300) return inv;
  inv[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  inv[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  inv[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  inv[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  inv[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  inv[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  inv[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  inv[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  inv[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return inv;
}

}  // namespace

FitReport fit_model(const SweepDataset& data, const FitOptions& options) {
  data.validate();
  if (options.n_starts < 1)
    throw std::invalid_argument("fit_model: n_starts must be >= 1");

  std::vector<ExponentSet> candidates = options.candidates;
  if (candidates.empty()) {
    const AsymptoteFit asym = fit_asymptote_d(data);
    for (int a = 1; a <= 2; ++a)
      for (int b = 1; b <= 2; ++b)
        for (int c = 1; c <= 2; ++c)
          for (int d : asym.d_candidates) candidates.push_back({a, b, c, d});
  }
  std::sort(candidates.begin(), candidates.end());

  // Multi-start initializations, log-spaced over the configured bounds.
  // One deterministic stream per candidate keeps runs bit-reproducible
  // regardless of scheduling.
  struct Task {
    ExponentSet exps;
    std::array<double, 3> log_start;
  };
  std::vector<std::vector<Task>> per_candidate(candidates.size());
  const double span = options.bounds_decades * std::log(10.0);
  for (size_t c = 0; c < candidates.size(); ++c) {
    std::mt19937_64 rng(options.seed + 7919 * c);
    std::uniform_real_distribution<double> u(-span, span);
    for (int s = 0; s < options.n_starts; ++s)
      per_candidate[c].push_back({candidates[c], {u(rng), u(rng), u(rng)}});
  }

  // Keep the line search inside a bounded box: four decades beyond the
  // multi-start span. Unbounded amplitudes make the implicit solve bracket
  // astronomically wider than the root, which no fixed bisection budget
  // can resolve.
  const double log_bound = (options.bounds_decades + 4.0) * std::log(10.0);

  auto fit_candidate = [&](size_t ci) {
    CandidateFit best;
    best.exps = candidates[ci];
    best.residual = 1e300;
    double best_cost = 1e300;
    for (const Task& task : per_candidate[ci]) {
      const LocalFit lf = gauss_newton(data, task.exps, task.log_start, options.js0,
                                       options.max_iter, log_bound);
      if (lf.cost < best_cost) {
        best_cost = lf.cost;
        best.params = params_of(task.exps, lf.theta[0], lf.theta[1], lf.theta[2]);
        best.residual = std::sqrt(lf.cost / static_cast<double>(data.rows.size()));
        best.converged = lf.converged;
      }
      // A numerically perfect fit cannot be improved by more starts.
      if (best_cost < 1e-20) break;
    }
    return best;
  };

  unsigned n_threads = options.threads > 0
                           ? static_cast<unsigned>(options.threads)
                           : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, candidates.size());

  std::vector<CandidateFit> table(candidates.size());
  if (n_threads <= 1) {
    for (size_t c = 0; c < candidates.size(); ++c) table[c] = fit_candidate(c);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> workers;
    for (unsigned t = 0; t < n_threads; ++t)
      workers.emplace_back([&] {
        for (size_t c = next.fetch_add(1); c < candidates.size(); c = next.fetch_add(1))
          table[c] = fit_candidate(c);
      });
    for (auto& w : workers) w.join();
  }

  std::stable_sort(table.begin(), table.end(), [](const CandidateFit& x, const CandidateFit& y) {
    if (x.residual != y.residual) return x.residual < y.residual;
    return x.exps < y.exps;
  });

  bool any = false;
  for (const auto& cf : table) any = any || cf.converged;
  if (!any) throw std::runtime_error("fit_model: no exponent candidate converged");

  FitReport report;
  report.exponent_table = table;
  report.best = table.front().params;
  report.js0 = options.js0;
  report.residual = table.front().residual;
  report.converged = table.front().converged;
  report.covariance = covariance_at(
      data, table.front().exps,
      {report.best.trap_capacity, report.best.gen_coeff, report.best.recomb_coeff},
      options.js0);
  return report;
}

std::vector<PredictPoint> predict(const ModelParams& params, double js0,
                                  std::span<const double> main_powers,
                                  std::span<const double> aux_powers) {
  params.validate();
  std::vector<PredictPoint> out;
  std::vector<double> auxes(aux_powers.begin(), aux_powers.end());
  if (auxes.empty()) auxes.push_back(0.0);
  out.reserve(main_powers.size() * auxes.size());
  for (double pa : auxes) {
    for (double pm : main_powers) {
      DriveInputs drive;
      drive.gen_rate = params.gen_coeff * pm * pm;
      drive.bridge_power = pa;
      drive.source_power = pm;
      out.push_back({pm, pa, steady_state_current(drive, params, js0, true)});
    }
  }
  return out;
}

SweepDataset make_synthetic_sweep(const ModelParams& params, double js0,
                                  std::span<const double> main_powers,
                                  std::span<const double> aux_powers,
                                  double noise_rel, uint64_t seed,
                                  double abs_sigma_floor) {
  SweepDataset data;
  data.tag = "synthetic";
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const PredictPoint& p : predict(params, js0, main_powers, aux_powers)) {
    SweepPoint row;
    row.p_main = p.p_main;
    row.p_aux = p.p_aux;
    // Weights stay proportional to the signal even for noiseless values, so
    // every decade of the sweep contributes to the fit.
    const double weight_rel = std::max(noise_rel, 0.01);
    row.sigma = std::max(weight_rel * std::abs(p.current), abs_sigma_floor);
    const double noise = noise_rel > 0 ? noise_rel * std::abs(p.current) : 0.0;
    row.current = p.current + (noise > 0 ? noise * gauss(rng) : 0.0);
    data.rows.push_back(row);
  }
  return data;
}

}  // namespace pdmr
