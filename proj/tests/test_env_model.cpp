#include <cmath>
#include <vector>

#include <boost/math/special_functions/digamma.hpp>

#include "doctest.h"

#include "heavyrange/env_model.hpp"
#include "heavyrange/errors.hpp"
#include "heavyrange/rng.hpp"
#include "test_support.hpp"

using namespace heavyrange;
using namespace heavyrange::testing;
using doctest::Approx;

namespace {

const double kLog2 = std::log(2.0);

// psi tangent to zero at s = 1/2: BetaRho(2, 1) with E[nu] = 4 / pi.
EnvSpec tangent_spec() {
  const double m = 4.0 / M_PI;
  return EnvSpec({0.0, 2.0 - m, m - 1.0}, BetaRho{2.0, 1.0});
}

std::vector<EnvSpec> sample_specs() {
  return {deterministic_spec(2.0 * kLog2), beta_spec(3, 1), beta_spec(5, 2), beta_spec(7, 3),
          two_point_kappa2(), EnvSpec({0.2, 0.3, 0.5}, BetaRho{4.0, 1.5}),
          EnvSpec({0.1, 0.0, 0.6, 0.3}, TwoPoint{1.2, -0.4, 0.35})};
}

}  // namespace

TEST_CASE("env spec validation") {
  CHECK_THROWS_AS(EnvSpec({0.5, 0.5}, Deterministic{1.0}), DomainError);  // E[nu] < 1
  CHECK_THROWS_AS(EnvSpec({0.0, 0.5, 0.4}, Deterministic{1.0}), DomainError);
  CHECK_THROWS_AS(beta_spec(1.0, 1.0), DomainError);
  CHECK_THROWS_AS(beta_spec(3.0, 0.0), DomainError);
  CHECK_THROWS_AS(EnvSpec(fixed_offspring(2), TwoPoint{1.0, 0.0, 1.5}), DomainError);
  const EnvSpec s({0.1, 0.2, 0.7}, Deterministic{1.0});
  CHECK(s.mean_offspring() == Approx(1.6));
  CHECK(s.max_offspring() == 2);
  CHECK(s.can_die());
  CHECK(s.sample_offspring(0.05) == 0);
  CHECK(s.sample_offspring(0.25) == 1);
  CHECK(s.sample_offspring(0.95) == 2);
}

TEST_CASE("psi closed forms") {
  CHECK(psi(deterministic_spec(2.0 * kLog2), 0.0) == Approx(kLog2).epsilon(1e-15));
  const EnvSpec tp = two_point_kappa2();
  CHECK(std::abs(psi(tp, 1.0)) < 1e-15);
  CHECK(std::abs(psi(tp, 2.0)) < 1e-15);
  // B(4,3) / B(5,2) = 1/2
  CHECK(std::abs(psi(beta_spec(5, 2), 1.0)) < 1e-14);
  CHECK_THROWS_AS(psi(beta_spec(5, 2), 5.0), DomainError);
  CHECK_THROWS_AS(psi(beta_spec(5, 2), -2.5), DomainError);
}

TEST_CASE("psi prime closed forms") {
  CHECK(psi_prime(deterministic_spec(0.7), 0.3) == Approx(-0.7));
  CHECK(psi_prime(deterministic_spec(0.7), 2.0) == Approx(-0.7));
  CHECK(std::abs(psi_prime(beta_spec(3, 1), 1.0)) < 1e-14);
  // digamma(3) - digamma(4) = -1/3
  CHECK(psi_prime(beta_spec(5, 2), 1.0) == Approx(-1.0 / 3.0).epsilon(1e-13));
}

TEST_CASE("psi prime matches central differences") {
  const double h = 1e-6;
  for (const auto& spec : sample_specs()) {
    const auto dom = spec.psi_domain();
    for (double s = -0.4; s <= 2.6; s += 0.2) {
      if (!dom.contains(s - h) || !dom.contains(s + h)) continue;
      const double fd = (psi(spec, s + h) - psi(spec, s - h)) / (2.0 * h);
      const double exact = psi_prime(spec, s);
      CHECK(std::abs(fd - exact) <= 1e-5 * std::max(1.0, std::abs(exact)));
    }
  }
}

TEST_CASE("psi is convex") {
  for (const auto& spec : sample_specs()) {
    const auto dom = spec.psi_domain();
    for (double s1 = -0.5; s1 <= 3.0; s1 += 0.25) {
      for (double s2 = s1 + 0.25; s2 <= 3.0; s2 += 0.25) {
        if (!dom.contains(s1) || !dom.contains(s2)) continue;
        CHECK(psi(spec, 0.5 * (s1 + s2)) <= 0.5 * (psi(spec, s1) + psi(spec, s2)) + 1e-10);
      }
    }
  }
}

TEST_CASE("psi agrees with Monte Carlo over (nu, omega)") {
  // log of the sample mean of sum_{children} exp(-s omega) within 4 standard
  // errors (delta method) of psi(s).
  const int n = 1'000'000;
  for (const auto& spec : {beta_spec(5, 2), EnvSpec({0.1, 0.0, 0.6, 0.3}, TwoPoint{1.2, -0.4, 0.35})}) {
    for (double s : {0.5, 1.0, 1.5}) {
      Philox g(derive_key(11, {static_cast<std::uint64_t>(s * 10)}));
      double sum = 0.0, sum2 = 0.0;
      for (int i = 0; i < n; ++i) {
        const std::uint32_t nu = spec.sample_offspring(g.uniform());
        double x = 0.0;
        for (std::uint32_t k = 0; k < nu; ++k) x += std::exp(-s * spec.sample_increment(g));
        sum += x;
        sum2 += x * x;
      }
      const double mean = sum / n;
      const double se = std::sqrt((sum2 / n - mean * mean) / n);
      CHECK(std::abs(std::log(mean) - psi(spec, s)) <= 4.0 * se / mean);
    }
  }
}

TEST_CASE("first zero t0") {
  CHECK(find_t0(deterministic_spec(2.0 * kLog2)) == Approx(0.5).epsilon(1e-10));
  CHECK(find_t0(beta_spec(3, 1)) == 1.0);
  CHECK(find_t0(beta_spec(5, 2)) == 1.0);
  CHECK(find_t0(tangent_spec()) == Approx(0.5).epsilon(1e-6));
  CHECK_THROWS_AS(find_t0(deterministic_spec(0.1)), NoRoot);
  const double t0 = find_t0(deterministic_spec(1.5));
  CHECK(std::abs(psi(deterministic_spec(1.5), t0)) <= 1e-9);
}

TEST_CASE("kappa") {
  for (double c : {2.0, 3.0, 1.5, 4.0}) {
    const EnvSpec spec = beta_spec(2.0 * c + 1.0, c);
    const Kappa k = find_kappa(spec);
    REQUIRE_FALSE(k.is_infinite());
    CHECK(k.value() == Approx(c).epsilon(1e-9));
    CHECK(std::abs(psi(spec, k.value())) <= 1e-9);
  }
  CHECK(find_kappa(two_point_kappa2()).value() == Approx(2.0).epsilon(1e-9));
  const double x = 0.3;
  const EnvSpec no_root(fixed_offspring(2), TwoPoint{-std::log(x), -std::log(1.0 - x), 0.5});
  CHECK(find_kappa(no_root).is_infinite());
  CHECK_THROWS_AS(find_kappa(beta_spec(3, 1)), DomainError);
  CHECK_THROWS_AS(Kappa::infinite().value(), DomainError);
}

TEST_CASE("regime table") {
  const auto very_slow = classify(deterministic_spec(2.0 * kLog2));
  CHECK(very_slow.regime == Regime::PositiveRecurrentVerySlow);
  CHECK(*very_slow.t0 == Approx(0.5));

  const auto boundary = classify(beta_spec(3, 1));
  CHECK(boundary.regime == Regime::NullRecurrentSlow);
  CHECK(*boundary.t0 == 1.0);

  const auto fast = classify(beta_spec(5, 2));
  CHECK(fast.regime == Regime::NullRecurrentFast);
  CHECK(fast.kappa->value() == Approx(2.0));

  const auto tangent = classify(tangent_spec());
  CHECK(tangent.regime == Regime::PositiveRecurrentSlow);
  CHECK(*tangent.t0 == Approx(0.5).epsilon(1e-6));
  CHECK(tangent.psi_prime_1 == Approx(1.0));  // digamma(2) - digamma(1)

  const auto transient = classify(deterministic_spec(0.1));
  CHECK(transient.regime == Regime::Transient);
  CHECK_FALSE(transient.t0.has_value());
  CHECK_THROWS_AS(xi(transient, 0.5), DomainError);

  const auto infinite = classify(
      EnvSpec(fixed_offspring(2), TwoPoint{-std::log(0.3), -std::log(0.7), 0.5}));
  CHECK(infinite.regime == Regime::NullRecurrentFast);
  CHECK(infinite.kappa->is_infinite());
}

TEST_CASE("heavy-range exponents") {
  const auto boundary = classify(beta_spec(3, 1));
  CHECK(xi(boundary, 0.5) == Approx(0.5));
  CHECK(xi(boundary, 0.0) == Approx(1.0));
  const auto k3 = classify(beta_spec(7, 3));
  CHECK(xi(k3, 0.2) == Approx(1.4));
  CHECK(xi(k3, 0.25) == Approx(1.25));
  CHECK(xi(k3, 0.6) == Approx(0.4));
  for (const auto& r : {boundary, k3, classify(beta_spec(4, 1.5))}) {
    CHECK(xi(r, 1.0) == 0.0);
    CHECK(xi(r, 1.7) == 0.0);
  }
  CHECK(xi(classify(beta_spec(4, 1.5)), 0.2) == Approx(1.2));
  const auto inf = classify(
      EnvSpec(fixed_offspring(2), TwoPoint{-std::log(0.3), -std::log(0.7), 0.5}));
  CHECK(xi(inf, 0.0) == 2.0);
  CHECK(xi_is_formula_limit(inf, 0.0));
  CHECK_FALSE(xi_is_formula_limit(inf, 0.2));
  CHECK(xi(inf, 0.2) == Approx(0.8));
}

TEST_CASE("deterministic-time exponents") {
  CHECK(xi_tilde(classify(beta_spec(3, 1)), 0.3) == Approx(0.7));
  CHECK(xi_tilde(classify(beta_spec(4, 1.5)), 0.8) == 0.0);
  CHECK(xi_tilde(classify(beta_spec(4, 1.5)), 0.4) == Approx(0.4));
  CHECK(xi_tilde(classify(beta_spec(9, 4)), 0.3) == Approx(0.2));
  CHECK(xi_tilde(classify(beta_spec(5, 2)), 0.25) == Approx(0.5));
  CHECK(xi_tilde(classify(beta_spec(5, 2)), 0.6) == 0.0);
}

TEST_CASE("exponents are continuous and non-increasing in theta") {
  for (const auto& spec : {deterministic_spec(2.0 * kLog2), beta_spec(3, 1), beta_spec(4, 1.5),
                           beta_spec(5, 2), beta_spec(7, 3), beta_spec(11, 5)}) {
    const auto r = classify(spec);
    double prev_xi = xi(r, 0.0), prev_xt = xi_tilde(r, 0.0);
    for (double theta = 0.001; theta <= 1.0; theta += 0.001) {
      const double a = xi(r, theta), b = xi_tilde(r, theta);
      CHECK(a <= prev_xi + 1e-12);
      CHECK(b <= prev_xt + 1e-12);
      CHECK(prev_xi - a < 0.02);
      CHECK(prev_xt - b < 0.02);
      prev_xi = a;
      prev_xt = b;
    }
  }
}

TEST_CASE("estimation rates") {
  CHECK(rate(classify(beta_spec(3, 1)), 2.0, Clock::ExcursionCount) == Approx(2.0 / 3.0));
  CHECK(rate(classify(beta_spec(7, 3)), 2.0, Clock::ExcursionCount) == Approx(0.8));
  CHECK(rate(classify(beta_spec(9, 4)), 1.0, Clock::ReturnTime) == Approx(0.25));
  CHECK(rate(classify(beta_spec(5, 2)), 2.0, Clock::ExcursionCount) == Approx(1.0));
  CHECK(rate(classify(beta_spec(9, 4)), 1.0, Clock::ExcursionCount) == Approx(0.5));
  CHECK_THROWS_AS(rate(classify(beta_spec(3, 1)), 2.5, Clock::ExcursionCount), DomainError);
}

TEST_CASE("calibration reaches the regime targets") {
  CalibrationTargets k2;
  k2.psi1_zero = true;
  k2.kappa = 2.0;
  const EnvSpec s1 = calibrate(beta_spec(4.0, 1.5), k2);
  const auto b1 = std::get<BetaRho>(s1.increments());
  CHECK(b1.a == Approx(5.0).epsilon(1e-8));
  CHECK(b1.c == Approx(2.0).epsilon(1e-8));

  CalibrationTargets boundary;
  boundary.psi1_zero = true;
  boundary.psi_prime1 = 0.0;
  const auto b2 = std::get<BetaRho>(calibrate(beta_spec(4.0, 1.5), boundary).increments());
  CHECK(b2.a == Approx(3.0).epsilon(1e-8));
  CHECK(b2.c == Approx(1.0).epsilon(1e-8));

  CalibrationTargets half;
  half.t0 = 0.5;
  const auto d = std::get<Deterministic>(calibrate(deterministic_spec(1.0), half).increments());
  CHECK(d.omega == Approx(2.0 * kLog2).epsilon(1e-10));

  CalibrationTargets two;
  two.psi1_zero = true;
  two.kappa = 2.0;
  const EnvSpec tp = calibrate(EnvSpec(fixed_offspring(2), TwoPoint{1.0, -0.5, 0.9}), two);
  CHECK(std::abs(psi(tp, 1.0)) < 1e-10);
  CHECK(std::abs(psi(tp, 2.0)) < 1e-10);

  CHECK_THROWS_AS(calibrate(beta_spec(4.0, 1.5), half), DomainError);  // 1 target, 2 params
}

TEST_CASE("moments of rho") {
  CHECK(rho_moment(beta_spec(3, 1), 1, 0) == Approx(0.75));
  CHECK(rho_moment(beta_spec(5, 2), 2, 1) == Approx(5.0 / 42.0));
  CHECK(rho_moment(beta_spec(5, 2), 0, 0) == Approx(1.0));
  const double r = 1.0 / (1.0 + std::exp(-0.7));
  CHECK(rho_moment(deterministic_spec(0.7), 2, 3) == Approx(r * r * std::pow(1 - r, 3)));
  const double rh = 0.75, rl = 1.0 / 3.0;  // rho at log 3 and -log 2
  CHECK(rho_moment(two_point_kappa2(), 1, 2) ==
        Approx(0.9 * rh * (1 - rh) * (1 - rh) + 0.1 * rl * (1 - rl) * (1 - rl)));
}

TEST_CASE("c.d.f. of rho") {
  const EnvSpec b = beta_spec(3, 1);
  for (double u : {0.0, 0.1, 0.5, 0.9, 1.0}) CHECK(rho_cdf(b, u) == Approx(u * u * u));
  CHECK(rho_cdf_continuous(b));
  const EnvSpec d = deterministic_spec(0.0);  // rho = 1/2
  CHECK(rho_cdf(d, 0.5) == 1.0);
  CHECK(rho_cdf_left(d, 0.5) == 0.0);
  CHECK(rho_cdf(d, 0.49) == 0.0);
  const EnvSpec tp = two_point_kappa2();  // rho in {1/3 (p=0.1), 3/4 (p=0.9)}
  CHECK(rho_cdf(tp, 0.5) == Approx(0.1));
  CHECK(rho_cdf(tp, 0.75) == Approx(1.0));
  CHECK(rho_cdf_left(tp, 0.75) == Approx(0.1));
}

TEST_CASE("report serialisation") {
  const auto j = to_json(classify(beta_spec(5, 2)));
  CHECK(j["regime"] == regime_name(Regime::NullRecurrentFast));
  CHECK(j["kappa"].get<double>() == Approx(2.0));
  const auto inf = to_json(classify(
      EnvSpec(fixed_offspring(2), TwoPoint{-std::log(0.3), -std::log(0.7), 0.5})));
  CHECK(inf["kappa"] == "inf");
  CHECK(to_json(classify(deterministic_spec(0.1)))["t0"].is_null());
}
