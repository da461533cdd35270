#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "pdmr/photophysics.hpp"

using namespace pdmr;

TEST_CASE("no light, no carriers, no photons") {
  NVCentre nv;
  const NVResponse r = generation_rate(nv, 0.0, false);
  CHECK(r.gen_rate == 0.0);
  CHECK(r.pl == 0.0);
}

TEST_CASE("unsaturated G is quadratic in power") {
  NVCentre nv;
  nv.gen_coeff = 0.7;
  const double g1 = generation_rate(nv, 0.5, false).gen_rate;
  const double g2 = generation_rate(nv, 1.0, false).gen_rate;
  CHECK(g2 == doctest::Approx(4.0 * g1).epsilon(1e-14));
}

TEST_CASE("microwaves scale G by one minus the contrast") {
  NVCentre nv;
  nv.odmr_contrast = 0.20;
  const double off = generation_rate(nv, 1.3, false).gen_rate;
  const double on = generation_rate(nv, 1.3, true).gen_rate;
  CHECK(on == doctest::Approx(0.8 * off).epsilon(1e-14));
}

TEST_CASE("G is proportional to PL times power, exactly, saturated or not") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int i = 0; i < 300; ++i) {
    NVCentre nv;
    nv.gen_coeff = 0.1 + u(rng);
    nv.radiative_rel = 0.1 + u(rng);
    nv.saturation_power = (i % 3 == 0) ? std::numeric_limits<double>::infinity()
                                       : 0.5 + 4.0 * u(rng);
    nv.odmr_contrast = 0.4 * u(rng);
    const bool mw = (i % 2) == 0;
    const double p = 5.0 * u(rng);
    const NVResponse r = generation_rate(nv, p, mw);
    // G = (gen_coeff / radiative_rel) * PL * P identically
    const double expected = nv.gen_coeff / nv.radiative_rel * r.pl * p;
    CHECK(std::abs(r.gen_rate - expected) <= 1e-12 * std::max(1.0, expected));
    // exact MW ratio property
    const double off = generation_rate(nv, p, false).gen_rate;
    const double on = generation_rate(nv, p, true).gen_rate;
    if (off > 0) CHECK(on / off == doctest::Approx(1.0 - nv.odmr_contrast).epsilon(1e-12));
  }
}

TEST_CASE("IV curve: zero at zero bias, zero in the dark, e-1 at one scale") {
  IVCurve iv;
  iv.j0 = 2.0;
  iv.u0 = 0.5;
  CHECK(iv_current(iv, 0.0, true) == 0.0);
  CHECK(iv_current(iv, 3.0, false) == 0.0);  // dark gate
  CHECK(iv_current(iv, 0.5, true) == doctest::Approx(2.0 * (std::numbers::e - 1.0)));

  iv.dark_gate = false;
  CHECK(iv_current(iv, 0.5, false) > 0.0);
}

TEST_CASE("IV curve is nondecreasing and the reverse branch is a bounded leak") {
  IVCurve iv;
  iv.j0 = 1.0;
  iv.u0 = 1.0;
  iv.reverse_leak = 0.02;
  double prev = -1e300;
  for (int i = -40; i <= 40; ++i) {
    const double u = 0.25 * i;
    const double j = iv_current(iv, u, true);
    CHECK(j >= prev);
    prev = j;
    if (u < 0) CHECK(std::abs(j) <= iv.reverse_leak * iv.j0 + 1e-15);
  }
}

TEST_CASE("IV overflow guard caps the exponent") {
  IVCurve iv;
  iv.j0 = 1.0;
  iv.u0 = 0.01;
  const double j = iv_current(iv, 1e6, true);  // U/U0 = 1e8 without the cap
  CHECK(std::isfinite(j));
  CHECK(j == doctest::Approx(std::expm1(60.0)));
}

TEST_CASE("field validation") {
  NVCentre nv;
  nv.odmr_contrast = 0.7;
  CHECK_THROWS_AS(nv.validate(), std::invalid_argument);
  IVCurve iv;
  iv.reverse_leak = 0.2;
  CHECK_THROWS_AS(iv.validate(), std::invalid_argument);
}
