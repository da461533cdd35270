#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "pdmr/model.hpp"
#include "test_support.hpp"

using namespace pdmr;
using pdmr_test::bisect_oracle;
using pdmr_test::euler_oracle;
using pdmr_test::steady_oracle;

namespace {

ModelParams square_params() {
  ModelParams p;
  p.capture_exp = 2;
  p.depletion_exp = 2;
  p.gain_exp = 2;
  p.injection_exp = 1;
  p.trap_capacity = 1.0;
  p.recomb_coeff = 1.0;
  return p;
}

IVCurve unit_iv() {
  IVCurve iv;
  iv.j0 = 1.0;
  iv.u0 = 1.0;
  return iv;
}

}  // namespace

TEST_CASE("bridge_rate basic algebra") {
  ModelParams p;
  p.capture_exp = 1;
  p.trap_capacity = 1.0;
  DriveInputs d;
  d.gen_rate = 1.0;

  SystemState s;
  s.bridge_pop = 0.0;
  CHECK(bridge_rate(s, d, p, 0.0) == doctest::Approx(1.0));  // empty trap, pure capture

  s.bridge_pop = p.trap_capacity;
  d.gen_rate = 7.3;
  d.bridge_power = 0.0;
  CHECK(bridge_rate(s, d, p, 0.0) == doctest::Approx(0.0));  // full trap saturates

  ModelParams q = square_params();
  q.recomb_coeff = 0;
  DriveInputs d2;
  d2.gen_rate = 1.0;
  d2.bridge_power = 1.0;
  SystemState s2;
  s2.bridge_pop = 0.5;
  // 1^2*(1-0.5) - 1^2*0.5 - 0.2*0.5 = -0.1
  CHECK(bridge_rate(s2, d2, q, 0.2) == doctest::Approx(-0.1).epsilon(1e-14));
}

TEST_CASE("bridge_rate rejects negative drives") {
  ModelParams p;
  SystemState s;
  DriveInputs d;
  d.gen_rate = -1.0;
  CHECK_THROWS_AS(bridge_rate(s, d, p, 0.0), std::domain_error);
  d.gen_rate = 0;
  d.bridge_power = -0.5;
  CHECK_THROWS_AS(bridge_rate(s, d, p, 0.0), std::domain_error);
  d.bridge_power = 0;
  CHECK_THROWS_AS(bridge_rate(s, d, p, -0.1), std::domain_error);
}

TEST_CASE("source_current examples") {
  ModelParams p;
  p.injection_exp = 1;
  DriveInputs d;
  d.source_power = 2.0;
  CHECK(source_current(0.0, d, p, 3.0) == doctest::Approx(6.0));

  ModelParams q;
  q.gain_exp = 2;
  q.injection_exp = 1;
  DriveInputs d2;
  d2.source_power = 1.0;
  CHECK(source_current(1.0, d2, q, 1.0) == doctest::Approx(2.0));

  DriveInputs d3;
  d3.source_power = 2.0;
  CHECK(source_current(0.5, d3, q, 1.0) == doctest::Approx(2.5));

  CHECK_THROWS_AS(source_current(1.5, d3, q, 1.0), std::domain_error);  // B > B_max
}

TEST_CASE("steady state: no generation, simplified form, gives zero") {
  ModelParams p = square_params();
  DriveInputs d;
  d.gen_rate = 0.0;
  d.source_power = 1.0;
  CHECK(steady_state_current(d, p, 1.0, true) == 0.0);
}

TEST_CASE("steady state solves J (1+J)^2 = 1 against the bisection oracle") {
  ModelParams p = square_params();
  DriveInputs d;
  d.gen_rate = 1.0;
  d.bridge_power = 0.0;
  d.source_power = 1.0;

  const double expected = bisect_oracle(
      [](double j) { return j - 1.0 / ((1.0 + j) * (1.0 + j)); }, 2.0);
  CHECK(expected == doctest::Approx(0.46557).epsilon(1e-4));  // frozen from the oracle

  const double j = steady_state_current(d, p, 1.0, true);
  CHECK(std::abs(j - expected) < 1e-10);
  CHECK(std::abs(j * (1.0 + j) * (1.0 + j) - 1.0) < 1e-10);
}

TEST_CASE("steady state: high generation reaches the amplified ceiling") {
  ModelParams p = square_params();
  DriveInputs d;
  d.gen_rate = 1e9;
  d.source_power = 1.0;
  // lim G->inf J = B_max^c P_S^d j_s for the simplified form
  const double j = steady_state_current(d, p, 1.0, true);
  CHECK(j == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fixed point is bracketed, unique and monotone in the drives") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    ModelParams p;
    p.capture_exp = 1 + (rng() & 1);
    p.depletion_exp = 1 + (rng() & 1);
    p.gain_exp = 1 + (rng() & 1);
    p.injection_exp = 1 + (rng() & 1);
    p.trap_capacity = 0.2 + 3.0 * u(rng);
    p.recomb_coeff = 2.0 * u(rng);
    const double g = 3.0 * u(rng);
    const double pb = 2.0 * u(rng);
    const double ps = 0.1 + 1.5 * u(rng);
    const double js = 0.1 + 2.0 * u(rng);
    const bool simplified = (rng() & 1) != 0;

    auto f = [&](double j) {
      const double gen = std::pow(g, p.capture_exp);
      const double denom = gen + std::pow(pb, p.depletion_exp) + p.recomb_coeff * j;
      const double b = denom > 0 ? gen * p.trap_capacity / denom : 0.0;
      return (std::pow(b, p.gain_exp) + (simplified ? 0.0 : 1.0)) *
             std::pow(ps, p.injection_exp) * js;
    };
    const double hi = (std::pow(p.trap_capacity, p.gain_exp) + 1.0) *
                      std::pow(ps, p.injection_exp) * js;
    auto h = [&](double j) { return j - f(j); };

    REQUIRE(h(0.0) <= 0.0);
    REQUIRE(h(hi) >= 0.0);
    // h strictly increasing on a grid across the bracket
    double prev = h(0.0);
    for (int k = 1; k <= 20; ++k) {
      const double cur = h(hi * k / 20.0);
      REQUIRE(cur > prev);
      prev = cur;
    }

    DriveInputs d;
    d.gen_rate = g;
    d.bridge_power = pb;
    d.source_power = ps;
    const double j = steady_state_current(d, p, js, simplified);
    const double oracle = steady_oracle(g, pb, ps, js, p, simplified);
    CHECK(std::abs(j - oracle) <= 1e-9 * std::max(1.0, oracle));

    // Monotonicity: nondecreasing in G, nonincreasing in P_B.
    DriveInputs dg = d;
    dg.gen_rate = g * 1.3 + 0.01;
    CHECK(steady_state_current(dg, p, js, simplified) >= j - 1e-12);
    DriveInputs db = d;
    db.bridge_power = pb * 1.3 + 0.01;
    CHECK(steady_state_current(db, p, js, simplified) <= j + 1e-12);

    // MW ordering: reducing G by (1 - C_PL) never raises J.
    DriveInputs dm = d;
    dm.gen_rate = 0.8 * g;
    dm.mw_on = true;
    CHECK(steady_state_current(dm, p, js, simplified) <= j + 1e-12);
  }
}

TEST_CASE("transient converges to the steady-state fixed point") {
  ModelParams p = square_params();
  p.trap_capacity = 2.0;
  p.recomb_coeff = 0.5;
  IVCurve iv = unit_iv();

  DriveInputs d;
  d.gen_rate = 1.2;
  d.bridge_power = 0.4;
  d.source_power = 1.0;
  d.bias = std::log(2.0);  // j_s = 1

  std::vector<DriveSegment> sched{{0.0, 40.0, d}};
  SystemState s0;
  const auto series = integrate_transient(s0, sched, p, iv);
  REQUIRE(series.size() > 2);
  const SystemState end = series.back();

  // dB/dt at the endpoint is zero within tolerance
  const double n_rec = p.recomb_coeff * end.current;
  CHECK(std::abs(bridge_rate(end, d, p, n_rec)) < 1e-6);

  // and J matches the full-form implicit solve
  const double j_st = steady_state_current(d, p, iv, false);
  CHECK(end.current == doctest::Approx(j_st).epsilon(1e-6));
}

TEST_CASE("transient decay is strictly decreasing toward the unamplified floor") {
  ModelParams p = square_params();
  p.trap_capacity = 1.5;
  p.recomb_coeff = 1.0;
  IVCurve iv = unit_iv();

  DriveInputs d;
  d.gen_rate = 0.0;
  d.bridge_power = 0.0;
  d.source_power = 1.0;
  d.bias = std::log(2.0);

  SystemState s0;
  s0.bridge_pop = 1.2;
  std::vector<DriveSegment> sched{{0.0, 30.0, d}};
  const auto series = integrate_transient(s0, sched, p, iv);

  const double floor = 1.0;  // (0^c + 1) * P_S^d * j_s
  for (size_t i = 1; i < series.size(); ++i) {
    CHECK(series[i].bridge_pop < series[i - 1].bridge_pop);
    CHECK(series[i].current <= series[i - 1].current);
    // Strict decrease until the amplified part drowns in roundoff.
    if (series[i].current - floor > 1e-12)
      CHECK(series[i].current < series[i - 1].current);
    CHECK(series[i].current >= floor - 1e-9);
  }
  CHECK(series.back().current == doctest::Approx(floor).epsilon(1e-3));
}

TEST_CASE("adaptive integrator tracks the fine-step Euler oracle") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    ModelParams p;
    p.capture_exp = 1 + (rng() & 1);
    p.depletion_exp = 1 + (rng() & 1);
    p.gain_exp = 1 + (rng() & 1);
    p.injection_exp = 1;
    p.trap_capacity = 0.5 + 2.0 * u(rng);
    p.recomb_coeff = u(rng);
    IVCurve iv = unit_iv();

    std::vector<DriveSegment> sched;
    double t = 0;
    for (int seg = 0; seg < 3; ++seg) {
      DriveInputs d;
      d.gen_rate = 2.0 * u(rng);
      d.bridge_power = 1.5 * u(rng);
      d.source_power = 1.2 * u(rng);
      d.bias = 0.5 + u(rng);
      const double span = 0.5 + 1.5 * u(rng);
      sched.push_back({t, t + span, d});
      t += span;
    }

    SystemState s0;
    s0.bridge_pop = p.trap_capacity * u(rng);
    const auto series = integrate_transient(s0, sched, p, iv);
    const double b_euler = euler_oracle(s0.bridge_pop, sched, p, iv);
    CHECK(std::abs(series.back().bridge_pop - b_euler) <
          1e-4 * std::max(1.0, p.trap_capacity));

    // Boundedness along the whole trajectory.
    for (const auto& s : series) {
      CHECK(s.bridge_pop >= -1e-8 * p.trap_capacity);
      CHECK(s.bridge_pop <= p.trap_capacity * (1 + 1e-8));
    }
  }
}

TEST_CASE("integrator input validation") {
  ModelParams p = square_params();
  IVCurve iv = unit_iv();
  SystemState s0;
  std::vector<DriveSegment> overlapping{{0.0, 1.0, {}}, {0.5, 2.0, {}}};
  CHECK_THROWS_AS(integrate_transient(s0, overlapping, p, iv), std::invalid_argument);

  IntegratorOptions bad;
  bad.dt_max = 0.0;
  std::vector<DriveSegment> one{{0.0, 1.0, {}}};
  CHECK_THROWS_AS(integrate_transient(s0, one, p, iv, bad), std::invalid_argument);
}

TEST_CASE("contrast of a linear curve equals the optical contrast") {
  std::vector<std::pair<double, double>> curve;
  for (int i = 0; i <= 100; ++i) {
    const double g = 0.5 + 1.5 * i / 100.0;
    curve.emplace_back(g, 3.0 * g);
  }
  const ContrastPair pair = contrast_from_curve(curve, 2.0, 0.20);
  CHECK(pair.c_pc == doctest::Approx(0.20).epsilon(1e-12));
  CHECK(std::abs(pair.intercept) < 1e-12);
}

TEST_CASE("contrast of a square-law curve: 20% PL gives 36% PC") {
  // J = G^2, C_PL = 0.2: J_on/J_off = 0.8^2 = 0.64, so C_PC = 0.36.
  std::vector<std::pair<double, double>> curve;
  for (int i = 0; i <= 1000; ++i) {
    const double g = 2.0 * i / 1000.0;  // includes G_on = 1.6 and G_off = 2 exactly
    curve.emplace_back(g, g * g);
  }
  const ContrastPair pair = contrast_from_curve(curve, 2.0, 0.20);
  CHECK(pair.c_pc == doctest::Approx(0.36).epsilon(1e-12));
  CHECK(pair.c_pc / pair.c_pl == doctest::Approx(1.8).epsilon(1e-12));
  // Identity: C_PC / C_PL = 1 - B / J_off
  CHECK(std::abs(pair.c_pc / pair.c_pl - (1.0 - pair.intercept / pair.j_off)) < 1e-12);
}

TEST_CASE("contrast identity holds on random sampled curves") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> curve;
    const double k1 = 0.2 + u(rng), k2 = u(rng), k3 = u(rng);
    for (int i = 0; i <= 64; ++i) {
      const double g = 3.0 * i / 64.0;
      curve.emplace_back(g, 0.05 + k1 * g + k2 * g * g + k3 * g * g * g);
    }
    const double c_pl = 0.05 + 0.4 * u(rng);
    const double g_off = 1.0 + 1.9 * u(rng);
    const ContrastPair pair = contrast_from_curve(curve, g_off, c_pl);
    CHECK(std::abs(pair.c_pc / pair.c_pl - (1.0 - pair.intercept / pair.j_off)) < 1e-12);
  }
}

TEST_CASE("contrast error paths") {
  std::vector<std::pair<double, double>> curve{{0.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(contrast_from_curve(curve, 2.0, 0.2), std::out_of_range);
  CHECK_THROWS_AS(contrast_from_curve(curve, 0.0, 0.2), std::domain_error);  // J_off = 0
}

TEST_CASE("high-power asymptote has unit slope in source power") {
  // d = 1 linearity: at the top decade, log J vs log P_S slope -> d.
  ModelParams p = square_params();
  p.trap_capacity = 2.0;
  double prev_p = 0, prev_j = 0;
  double slope_lo = 10, slope_hi = -10;
  for (int i = 0; i <= 10; ++i) {
    const double ps = 100.0 * std::pow(10.0, i / 10.0);  // top decade of a wide sweep
    DriveInputs d;
    d.gen_rate = ps * ps;  // the main laser drives both the NV and the Source
    d.source_power = ps;
    const double j = steady_state_current(d, p, 1.0, true);
    if (i > 0) {
      const double slope = (std::log(j) - std::log(prev_j)) / (std::log(ps) - std::log(prev_p));
      slope_lo = std::min(slope_lo, slope);
      slope_hi = std::max(slope_hi, slope);
    }
    prev_p = ps;
    prev_j = j;
  }
  CHECK(slope_lo > 0.98);
  CHECK(slope_hi < 1.02);
}
