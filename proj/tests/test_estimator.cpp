#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "doctest.h"

#include "heavyrange/errors.hpp"
#include "heavyrange/estimator.hpp"
#include "heavyrange/localtime.hpp"
#include "test_support.hpp"

using namespace heavyrange;
using namespace heavyrange::testing;
using doctest::Approx;

namespace {

using u128 = unsigned __int128;

// Pascal's triangle up to row 120.
const std::vector<std::vector<u128>>& pascal() {
  static const auto rows = [] {
    std::vector<std::vector<u128>> p(121);
    for (std::size_t n = 0; n < p.size(); ++n) {
      p[n].assign(n + 1, 1);
      for (std::size_t k = 1; k < n; ++k) p[n][k] = p[n - 1][k - 1] + p[n - 1][k];
    }
    return p;
  }();
  return rows;
}

u128 binom(std::uint64_t n, std::uint64_t k) { return k > n ? 0 : pascal()[n][k]; }

double log_binom_std(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

LocalTimeField random_field(std::uint64_t seed, std::uint64_t n) {
  EnvTree tree(EnvSpec({0.1, 0.2, 0.4, 0.2, 0.1}, BetaRho{3.0, 1.0}), seed);
  Philox rng(derive_key(seed, {1}));
  return sample_field(tree, n, rng);
}

}  // namespace

TEST_CASE("binomial helpers against Pascal's triangle") {
  for (std::uint64_t n = 0; n <= 120; n += 7) {
    for (std::uint64_t k = 0; k <= n + 1; ++k) {
      CHECK((binomial_exact(n, k) == binom(n, k)));
      if (k <= n) {
        const double exact = static_cast<double>(static_cast<long double>(binom(n, k)));
        CHECK(std::exp(log_binomial(n, k)) == Approx(exact).epsilon(1e-11));
      }
    }
  }
  CHECK_THROWS_AS(binomial_exact(121, 3), DomainError);
}

TEST_CASE("kernel values") {
  CHECK(phi(1, 0, 2, 1) == 0.5);  // C(1,0) / C(2,1)
  CHECK(psi_l(2, 1, 3, 2) == 0.5);  // C(2,0) C(2,1) / C(4,1)
  for (std::uint64_t a = 1; a <= 12; ++a) {
    CHECK(psi_l(a, a, a, 5) == Approx(1.0).epsilon(1e-15));
    CHECK(psi_l(a, 0, a + 2, 3) == 0.0);
    for (std::uint64_t l = 0; l <= a; ++l) {
      CHECK(psi_l(a, l, a + 3, 0) == (l == a ? 1.0 : 0.0));
    }
  }
  CHECK(psi_l(4, 2, 3, 10) == 0.0);  // i < alpha
  CHECK(phi(2, 1, 2, 5) == 0.0);     // i < alpha + 1
  CHECK(phi(1, 3, 4, 2) == 0.0);     // j < beta
  CHECK_THROWS_AS(psi_l(3, 4, 5, 5), DomainError);
}

TEST_CASE("kernels against exact rational evaluation") {
  // For i + j <= 60 the kernels use exact integers; compare a log-space
  // evaluation with std::lgamma for larger arguments.
  for (std::uint64_t alpha : {1u, 2u, 5u, 17u, 40u}) {
    for (std::uint64_t i : {alpha, alpha + 1, alpha + 9, alpha + 80}) {
      for (std::uint64_t j : {0u, 1u, 3u, 30u, 95u, 400u}) {
        const auto row = psi_row(alpha, i, j);
        double acc = 0.0;
        for (std::uint64_t k = 0; k < alpha; ++k) {
          if (alpha - 1 - k <= j) {
            acc += std::exp(log_binom_std(i - 1.0, k) +
                            log_binom_std(static_cast<double>(j), alpha - 1.0 - k) -
                            log_binom_std(i - 1.0 + j, alpha - 1.0));
          }
          CHECK(row[k + 1] == Approx(acc).epsilon(1e-9));
        }
        for (std::uint64_t l = 1; l <= alpha; ++l) CHECK(row[l] >= row[l - 1] - 1e-15);
      }
    }
  }
  for (std::uint64_t a = 0; a < 5; ++a) {
    for (std::uint64_t b = 0; b < 5; ++b) {
      for (std::uint64_t i = a + 1; i < a + 30; i += 3) {
        for (std::uint64_t j = b; j < 80; j += 7) {
          const double expected =
              i + j <= 120 ? static_cast<double>(static_cast<long double>(binom(i + j - a - 1 - b, i - a - 1)) /
                                                 static_cast<long double>(binom(i + j - 1, j)))
                           : 0.0;
          if (i + j <= 120) CHECK(phi(a, b, i, j) == Approx(expected).epsilon(1e-12));
          CHECK(phi(a, b, i, j) <= (1.0 + 1e-12) / static_cast<double>(binom(a + b, a)));
          CHECK(phi(a, b, i, j) >= 0.0);
        }
      }
    }
  }
}

TEST_CASE("simple combinatoric equality") {
  // sum_{j>=beta} C(i-alpha+j-beta, i-alpha) a^{i+1} (1-a)^j = a^alpha (1-a)^beta
  const double a = 0.3;
  const std::uint64_t alpha = 1, beta = 2, i = 3;
  double sum = 0.0;
  for (std::uint64_t j = beta; j <= 200; ++j) {
    sum += std::exp(log_binom_std(static_cast<double>(i - alpha + j - beta),
                                  static_cast<double>(i - alpha)) +
                    (i + 1.0) * std::log(a) + j * std::log1p(-a));
  }
  CHECK(std::abs(sum - a * (1 - a) * (1 - a)) < 1e-12);
}

TEST_CASE("conditional unbiasedness of the moment kernel") {
  for (double rho : {0.2, 0.5, 0.9}) {
    for (std::uint64_t a = 0; a <= 4; ++a) {
      for (std::uint64_t b = 0; b <= 4; ++b) {
        for (std::uint64_t i = a + 1; i <= a + 6; ++i) {
          double sum = 0.0;
          for (std::uint64_t j = 0; j < 3000; ++j) sum += phi(a, b, i, j) * negbin_pmf(i, rho, j);
          CHECK(std::abs(sum - std::pow(rho, a) * std::pow(1 - rho, b)) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("conditional unbiasedness of the c.d.f. kernel") {
  // E[psi^l_alpha(i, N)] = sum_{k<l} C(alpha-1, k) rho^k (1-rho)^{alpha-1-k}, N ~ NegBin(i, rho)
  for (double rho : {0.2, 0.5, 0.9}) {
    for (std::uint64_t alpha : {1u, 2u, 3u, 6u}) {
      for (std::uint64_t i = alpha; i <= alpha + 5; ++i) {
        std::vector<double> expected(alpha + 1, 0.0), got(alpha + 1, 0.0);
        for (std::uint64_t k = 0; k < alpha; ++k) {
          expected[k + 1] = expected[k] + static_cast<double>(binom(alpha - 1, k)) *
                                              std::pow(rho, k) * std::pow(1 - rho, alpha - 1 - k);
        }
        for (std::uint64_t j = 0; j < 3000; ++j) {
          const double w = negbin_pmf(i, rho, j);
          if (w < 1e-300) continue;
          const auto row = psi_row(alpha, i, j);
          for (std::uint64_t l = 0; l <= alpha; ++l) got[l] += w * row[l];
        }
        for (std::uint64_t l = 0; l <= alpha; ++l) CHECK(std::abs(got[l] - expected[l]) < 1e-10);
      }
    }
  }
}

TEST_CASE("moment estimator") {
  const LocalTimeField field = random_field(4, 500);
  const double mean_nu = 2.0;
  const auto m00 = estimate_moment(field, 0, 0, mean_nu);
  double nu_sum = 0.0;
  std::uint64_t r1 = 0;
  for (const auto& e : field.entries()) {
    if (e.count >= 1) {
      nu_sum += e.num_children;
      ++r1;
    }
  }
  CHECK(m00.support == r1);
  CHECK(m00.value == Approx(nu_sum / (mean_nu * static_cast<double>(r1))));
  for (std::uint64_t a = 0; a <= 3; ++a) {
    for (std::uint64_t b = 0; b <= 3; ++b) {
      const auto m = estimate_moment(field, a, b, mean_nu);
      CHECK(m.value >= 0.0);
      CHECK(m.value <= 4.0 / mean_nu + 1e-12);
    }
  }
  const auto none = estimate_moment(field, 100000, 0, mean_nu);
  CHECK(none.support == 0);
  CHECK(none.value == 0.0);
  CHECK(moment_oracle(beta_spec(3, 1), 1, 0) == Approx(0.75));
}

TEST_CASE("moment estimator is unbiased across replicas") {
  const EnvSpec spec = beta_spec(3, 1);
  std::vector<double> values;
  for (std::uint64_t r = 0; r < 40; ++r) {
    EnvTree tree(spec, derive_key(100, {r}));
    Philox rng(derive_key(101, {r}));
    values.push_back(estimate_moment(sample_field(tree, 10000, rng), 1, 0, 2.0).value);
  }
  const auto ms = mean_se(values);
  CHECK(std::abs(ms.mean - 0.75) <= 4.0 * ms.se);
}

TEST_CASE("c.d.f. estimator grid identities") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const LocalTimeField field = random_field(1000 + s, 50 + 10 * s);
    const double mean_nu = 2.0;
    for (std::uint64_t alpha : {1u, 2u, 3u, 8u, 40u}) {
      const EmpiricalCdf cdf = estimate_cdf(field, alpha, mean_nu);
      REQUIRE(cdf.values().size() == alpha + 1);
      CHECK(cdf.at_grid(0) == 0.0);
      for (std::uint64_t l = 1; l <= alpha; ++l) CHECK(cdf.at_grid(l) >= cdf.at_grid(l - 1) - 1e-15);
      // v_alpha E[nu] R_alpha = sum_{x: N_x >= alpha} nu_x
      double nu_sum = 0.0;
      for (const auto& e : field.entries()) {
        if (e.count >= alpha) nu_sum += e.num_children;
      }
      const auto r = static_cast<double>(heavy_range(field, alpha));
      CHECK(cdf.at_grid(alpha) * mean_nu * r == Approx(nu_sum).epsilon(1e-10));
    }
  }
}

TEST_CASE("c.d.f. estimator on a single heavy vertex") {
  // Root count n, children all zero: v = nu_e / E[nu] at u = 1 only.
  EnvTree tree(EnvSpec({0.0, 0.0, 0.0, 1.0}, Deterministic{50.0}), 1);
  Philox rng(1);
  const LocalTimeField field = sample_field(tree, 10, rng);
  REQUIRE(field.max_count() == 10);
  const EmpiricalCdf cdf = estimate_cdf(field, 4, 2.0);
  CHECK(cdf.at_grid(3) == 0.0);
  CHECK(cdf.at_grid(4) == Approx(1.5));
  const EmpiricalCdf empty = estimate_cdf(field, 11, 2.0);
  for (double v : empty.values()) CHECK(v == 0.0);
}

TEST_CASE("Bernstein-type approximation from moments") {
  const EnvSpec spec = beta_spec(3, 1);
  const auto moment = [&spec](int a, int b) { return moment_oracle(spec, a, b); };
  const EmpiricalCdf f1 = f_alpha_from_moments(1, moment);
  CHECK(f1.at_grid(0) == 0.0);
  CHECK(f1.at_grid(1) == Approx(1.0));
  const EmpiricalCdf f2 = f_alpha_from_moments(2, moment);
  CHECK(f2.at_grid(1) == Approx(0.25));  // E[1 - rho]
  // Bias bound ||F||_gamma / (2^gamma (alpha + 1)^{gamma/2}) with gamma = 2 and
  // ||u^3||_2 = sup|F'| + Lip(F') = 3 + 6.
  const std::uint64_t alpha = 40;
  const EmpiricalCdf f40 = f_alpha_from_moments(alpha, moment);
  double worst = 0.0;
  for (std::uint64_t l = 0; l <= alpha; ++l) {
    const double u = static_cast<double>(l) / alpha;
    worst = std::max(worst, std::abs(u * u * u - f40.at_grid(l)));
  }
  CHECK(worst <= 9.0 / (4.0 * (alpha + 1)));
  CHECK(f40.at_grid(alpha) == Approx(1.0));
}

TEST_CASE("sup distance on the merged grid") {
  Philox rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const std::uint64_t a1 = 1 + rng() % 17, a2 = 1 + rng() % 23;
    const auto make = [&rng](std::uint64_t a) {
      std::vector<double> v(a + 1, 0.0);
      for (std::uint64_t l = 1; l <= a; ++l) v[l] = v[l - 1] + rng.uniform() / a;
      return EmpiricalCdf(a, v);
    };
    const EmpiricalCdf f = make(a1), g = make(a2);
    // Every breakpoint lies on the grid k / (a1 a2).
    double brute = 0.0;
    for (std::uint64_t k = 0; k <= a1 * a2; ++k) {
      brute = std::max(brute, std::abs(f.at_grid(k / a2) - g.at_grid(k / a1)));
    }
    CHECK(sup_distance(f, g) == brute);
    CHECK(sup_distance(g, f) == brute);
  }
}

TEST_CASE("sup error against the true c.d.f.") {
  const EnvSpec spec = beta_spec(3, 1);
  const LocalTimeField field = random_field(3, 2000);
  const EmpiricalCdf cdf = estimate_cdf(field, 12, 2.0);
  double brute = 0.0;
  for (int k = 0; k <= 120000; ++k) {
    const double u = k / 120000.0;
    brute = std::max(brute, std::abs(cdf(u) - u * u * u));
  }
  const double exact = sup_error(cdf, spec);
  CHECK(exact >= brute - 1e-12);
  CHECK(exact <= brute + 1e-4);
}

TEST_CASE("estimation error decreases with n") {
  const EnvSpec spec = beta_spec(3, 1);
  std::vector<double> means;
  for (std::uint64_t n : {100u, 1000u, 10000u}) {
    const auto alpha = static_cast<std::uint64_t>(std::lround(std::sqrt(static_cast<double>(n))));
    double sum = 0.0;
    for (std::uint64_t r = 0; r < 20; ++r) {
      EnvTree tree(spec, derive_key(n, {r}));
      Philox rng(derive_key(n, {r, 1}));
      sum += sup_error(estimate_cdf(sample_field(tree, n, rng), alpha, 2.0), spec);
    }
    means.push_back(sum / 20.0);
  }
  CHECK(means[1] < means[0]);
  CHECK(means[2] < means[1]);
}

TEST_CASE("Goldenshluger-Lepski selection") {
  const EnvSpec spec = beta_spec(3, 1);
  EnvTree tree(spec, 8);
  Philox rng(8);
  const LocalTimeField field = sample_field(tree, 1000, rng);

  const GlSelection single = gl_select(field, 3.0, 2.0, 2.0, {4});
  CHECK(single.chosen == 4);
  CHECK(single.delta[0] == Approx(-single.majorant[0]));

  const auto cands = default_candidates(field);
  REQUIRE_FALSE(cands.empty());
  CHECK(cands.front() == 1);
  CHECK(cands.back() <= field.max_count());
  CHECK(cands.back() * 2 > field.max_count());
  const GlSelection sel = gl_select(field, 3.0, 2.0, 2.0, cands);
  CHECK(std::find(sel.candidates.begin(), sel.candidates.end(), sel.chosen) != sel.candidates.end());
  for (std::size_t k = 0; k < sel.candidates.size(); ++k) {
    CHECK(sel.delta[k] >= -sel.majorant[k] - 1e-15);
    const double r = static_cast<double>(sel.heavy_range[k]);
    CHECK(sel.majorant[k] ==
          Approx(std::sqrt((3.0 + std::log(static_cast<double>(sel.candidates[k])) + 2 * std::log(r)) /
                           (2 * r))));
  }
  // argmin of Delta + B, smallest on ties
  std::size_t best = 0;
  for (std::size_t k = 0; k < sel.candidates.size(); ++k) {
    if (sel.delta[k] + sel.majorant[k] < sel.delta[best] + sel.majorant[best]) best = k;
  }
  CHECK(sel.chosen == sel.candidates[best]);

  // Levels with R_alpha = 0 are dropped; none left is an error.
  const GlSelection trimmed = gl_select(field, 3.0, 2.0, 2.0, {2, 1u << 30});
  CHECK(trimmed.candidates.size() == 1);
  CHECK_THROWS_AS(gl_select(field, 3.0, 2.0, 2.0, {1u << 30}), EmptyCandidates);
  CHECK_THROWS_AS(gl_select(LocalTimeField(), 3.0, 2.0, 2.0, {}), EmptyCandidates);
  CHECK_THROWS_AS(gl_select(field, 0.0, 2.0, 2.0, cands), DomainError);
}

TEST_CASE("c.d.f. CSV and JSON") {
  const EmpiricalCdf cdf(2, {0.0, 0.25, 1.0});
  std::ostringstream with, without;
  const EnvSpec spec = beta_spec(3, 1);
  write_cdf_csv(with, cdf, &spec);
  write_cdf_csv(without, cdf);
  CHECK(with.str() == "u,F_hat,F_true\n0,0,0\n0.5,0.25,0.125\n1,1,1\n");
  CHECK(without.str() == "u,F_hat,F_true\n0,0,\n0.5,0.25,\n1,1,\n");
  CHECK(to_json(cdf)["alpha"] == 2);
  CHECK_THROWS_AS(EmpiricalCdf(3, {0.0, 1.0}), DomainError);
}
