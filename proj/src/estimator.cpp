#include "heavyrange/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include <boost/math/special_functions/gamma.hpp>

#include "heavyrange/errors.hpp"

namespace heavyrange {

namespace {

// Below this value of i + j the kernels are evaluated in exact integer
// arithmetic.
constexpr std::uint64_t kExactLimit = 60;

double lgam(double x) { return boost::math::lgamma(x); }

}  // namespace

double log_binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return -std::numeric_limits<double>::infinity();
  return lgam(static_cast<double>(n) + 1.0) - lgam(static_cast<double>(k) + 1.0) -
         lgam(static_cast<double>(n - k) + 1.0);
}

unsigned __int128 binomial_exact(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (n > 120) throw DomainError("binomial_exact supports n <= 120");
  k = std::min(k, n - k);
  unsigned __int128 r = 1;
  for (std::uint64_t t = 1; t <= k; ++t) {
    // r * (n - k + t) is divisible by t at every step.
    r = r * (n - k + t) / t;
  }
  return r;
}

double phi(std::uint64_t alpha, std::uint64_t beta, std::uint64_t i, std::uint64_t j) {
  if (i < alpha + 1 || j < beta) return 0.0;
  const std::uint64_t top_n = i + j - (alpha + 1 + beta);
  const std::uint64_t top_k = i - (alpha + 1);
  const std::uint64_t bottom_n = i + j - 1;
  if (i + j <= kExactLimit) {
    const auto top = binomial_exact(top_n, top_k);
    const auto bottom = binomial_exact(bottom_n, j);
    return static_cast<double>(static_cast<long double>(top) / static_cast<long double>(bottom));
  }
  return std::exp(log_binomial(top_n, top_k) - log_binomial(bottom_n, j));
}

std::vector<double> psi_row(std::uint64_t alpha, std::uint64_t i, std::uint64_t j) {
  if (alpha == 0) throw DomainError("psi_row needs alpha >= 1");
  std::vector<double> row(alpha + 1, 0.0);
  if (i < alpha) return row;
  const std::uint64_t draws = alpha - 1;
  if (j == 0) {
    // Only k = alpha - 1 survives.
    row[alpha] = 1.0;
    return row;
  }
  const std::uint64_t k_lo = draws > j ? draws - j : 0;
  if (i + j <= kExactLimit) {
    const auto denom = static_cast<long double>(binomial_exact(i - 1 + j, draws));
    unsigned __int128 acc = 0;
    for (std::uint64_t k = 0; k < alpha; ++k) {
      if (k >= k_lo) acc += binomial_exact(i - 1, k) * binomial_exact(j, draws - k);
      row[k + 1] = static_cast<double>(static_cast<long double>(acc) / denom);
    }
    return row;
  }
  // Hypergeometric pmf over k in [k_lo, alpha-1], built outward from the mode
  // with the ratio p(k+1)/p(k) = (i-1-k)(alpha-1-k) / ((k+1)(j-alpha+2+k)),
  // anchored by the exact log-pmf at the mode.
  const double population = static_cast<double>(i - 1 + j);
  const double successes = static_cast<double>(i - 1);
  auto mode = static_cast<std::uint64_t>(
      std::floor((static_cast<double>(draws) + 1.0) * (successes + 1.0) / (population + 2.0)));
  mode = std::clamp<std::uint64_t>(mode, k_lo, draws);
  const double log_pmode = log_binomial(i - 1, mode) + log_binomial(j, draws - mode) -
                           log_binomial(i - 1 + j, draws);
  const double pmode = std::exp(log_pmode);

  std::vector<double> pmf(alpha, 0.0);
  pmf[mode] = pmode;
  const auto ratio_up = [&](std::uint64_t k) {
    return (successes - static_cast<double>(k)) * static_cast<double>(draws - k) /
           ((static_cast<double>(k) + 1.0) *
            (static_cast<double>(j) + static_cast<double>(k) + 2.0 - static_cast<double>(alpha)));
  };
  for (std::uint64_t k = mode; k < draws; ++k) {
    pmf[k + 1] = pmf[k] * ratio_up(k);
    if (pmf[k + 1] == 0.0) break;
  }
  for (std::uint64_t k = mode; k > k_lo; --k) {
    pmf[k - 1] = pmf[k] / ratio_up(k - 1);
    if (pmf[k - 1] == 0.0) break;
  }
  double acc = 0.0;
  for (std::uint64_t k = 0; k < alpha; ++k) {
    acc += pmf[k];
    row[k + 1] = acc;
  }
  return row;
}

double psi_l(std::uint64_t alpha, std::uint64_t l, std::uint64_t i, std::uint64_t j) {
  if (l > alpha) throw DomainError("psi_l needs l <= alpha");
  if (l == 0) return 0.0;
  return psi_row(alpha, i, j)[l];
}

MomentEstimate estimate_moment(const LocalTimeField& field, std::uint64_t alpha, std::uint64_t beta,
                               double mean_nu) {
  MomentEstimate m{alpha, beta, 0.0, 0};
  double sum = 0.0;
  for (const auto& e : field.entries()) {
    if (e.count < alpha + 1) continue;
    if (!e.expanded) {
      throw DomainError("field is truncated below a vertex used by the moment estimator");
    }
    ++m.support;
    for (const auto& child : field.children_of(e)) sum += phi(alpha, beta, e.count, child.count);
  }
  if (m.support > 0) m.value = sum / (mean_nu * static_cast<double>(m.support));
  return m;
}

double moment_oracle(const EnvSpec& spec, int alpha, int beta) {
  return rho_moment(spec, alpha, beta);
}

EmpiricalCdf::EmpiricalCdf(std::uint64_t alpha, std::vector<double> values)
    : alpha_(alpha), values_(std::move(values)) {
  if (alpha_ == 0 || values_.size() != alpha_ + 1) {
    throw DomainError("an empirical c.d.f. of level alpha needs alpha + 1 grid values");
  }
}

double EmpiricalCdf::operator()(double u) const {
  if (u < 0.0) return 0.0;
  if (u >= 1.0) return values_.back();
  const auto l = static_cast<std::uint64_t>(std::floor(static_cast<double>(alpha_) * u));
  return values_[std::min(l, alpha_)];
}

EmpiricalCdf estimate_cdf(const LocalTimeField& field, std::uint64_t alpha, double mean_nu) {
  if (alpha == 0) throw DomainError("estimate_cdf needs alpha >= 1");
  std::vector<double> values(alpha + 1, 0.0);
  std::uint64_t support = 0;
  for (const auto& e : field.entries()) {
    if (e.count < alpha) continue;
    if (!e.expanded) {
      throw DomainError("field is truncated below a vertex used by the c.d.f. estimator");
    }
    ++support;
    for (const auto& child : field.children_of(e)) {
      if (child.count == 0) {
        values[alpha] += 1.0;
        continue;
      }
      const auto row = psi_row(alpha, e.count, child.count);
      for (std::uint64_t l = 1; l <= alpha; ++l) values[l] += row[l];
    }
  }
  if (support > 0) {
    const double scale = 1.0 / (mean_nu * static_cast<double>(support));
    for (auto& v : values) v *= scale;
  }
  // Zero-count children only contribute at l = alpha.
  return EmpiricalCdf(alpha, std::move(values));
}

EmpiricalCdf f_alpha_from_moments(std::uint64_t alpha,
                                  const std::function<double(int, int)>& moment) {
  if (alpha == 0) throw DomainError("f_alpha_from_moments needs alpha >= 1");
  std::vector<double> values(alpha + 1, 0.0);
  double acc = 0.0;
  for (std::uint64_t k = 0; k < alpha; ++k) {
    const double m = moment(static_cast<int>(k), static_cast<int>(alpha - 1 - k));
    if (m > 0.0) acc += std::exp(log_binomial(alpha - 1, k) + std::log(m));
    values[k + 1] = acc;
  }
  return EmpiricalCdf(alpha, std::move(values));
}

double sup_distance(const EmpiricalCdf& a, const EmpiricalCdf& b) {
  // Both functions are constant between consecutive points of the merged
  // grid, so comparing at every breakpoint of either grid is exact.
  const std::uint64_t na = a.alpha(), nb = b.alpha();
  double d = 0.0;
  for (std::uint64_t l = 0; l <= na; ++l) {
    d = std::max(d, std::abs(a.at_grid(l) - b.at_grid(nb * l / na)));
  }
  for (std::uint64_t l = 0; l <= nb; ++l) {
    d = std::max(d, std::abs(b.at_grid(l) - a.at_grid(na * l / nb)));
  }
  return d;
}

double sup_error(const EmpiricalCdf& cdf, const EnvSpec& spec) {
  const std::uint64_t alpha = cdf.alpha();
  const double step = 1.0 / static_cast<double>(alpha);
  // On [0, 0) nothing; for u < 0 both are 0.
  double d = 0.0;
  for (std::uint64_t l = 0; l < alpha; ++l) {
    const double v = cdf.at_grid(l);
    const double left = rho_cdf(spec, static_cast<double>(l) * step);
    const double right = rho_cdf_left(spec, static_cast<double>(l + 1) * step);
    d = std::max({d, std::abs(v - left), std::abs(v - right)});
  }
  d = std::max(d, std::abs(cdf.at_grid(alpha) - rho_cdf(spec, 1.0)));
  return d;
}

std::vector<std::uint64_t> default_candidates(const LocalTimeField& field) {
  std::vector<std::uint64_t> out;
  const std::uint64_t max_n = field.max_count();
  for (std::uint64_t a = 1; a <= max_n && a != 0; a *= 2) out.push_back(a);
  return out;
}

GlSelection gl_select(const LocalTimeField& field, double z, double mean_nu, double max_offspring,
                      std::vector<std::uint64_t> candidates) {
  if (!(z > 0.0)) throw DomainError("GL threshold z must be > 0");
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  GlSelection sel;
  sel.z = z;
  for (std::uint64_t alpha : candidates) {
    if (alpha == 0) continue;
    const std::uint64_t r = heavy_range(field, alpha);
    if (r == 0) continue;
    const double rd = static_cast<double>(r);
    sel.candidates.push_back(alpha);
    sel.heavy_range.push_back(r);
    sel.majorant.push_back((max_offspring / mean_nu) *
                           std::sqrt((z + std::log(static_cast<double>(alpha)) + 2.0 * std::log(rd)) /
                                     (2.0 * rd)));
    sel.family.push_back(estimate_cdf(field, alpha, mean_nu));
  }
  if (sel.candidates.empty()) {
    throw EmptyCandidates("no candidate level alpha has a positive heavy range");
  }

  const std::size_t m = sel.candidates.size();
  sel.delta.assign(m, -std::numeric_limits<double>::infinity());
  // Candidates are sorted, so min(alpha, alpha') is the smaller index.
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      const std::size_t lo = std::min(a, b);
      const double gap = sup_distance(sel.family[b], sel.family[lo]) - sel.majorant[b];
      sel.delta[a] = std::max(sel.delta[a], gap);
    }
  }
  std::size_t best = 0;
  for (std::size_t a = 1; a < m; ++a) {
    if (sel.delta[a] + sel.majorant[a] < sel.delta[best] + sel.majorant[best]) best = a;
  }
  sel.chosen = sel.candidates[best];
  sel.cdf = sel.family[best];
  return sel;
}

nlohmann::json to_json(const EmpiricalCdf& cdf) {
  return {{"alpha", cdf.alpha()}, {"values", cdf.values()}};
}

nlohmann::json to_json(const GlSelection& selection) {
  nlohmann::json j;
  j["z"] = selection.z;
  j["chosen_alpha"] = selection.chosen;
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t k = 0; k < selection.candidates.size(); ++k) {
    rows.push_back({{"alpha", selection.candidates[k]},
                    {"heavy_range", selection.heavy_range[k]},
                    {"majorant", selection.majorant[k]},
                    {"delta", selection.delta[k]}});
  }
  j["candidates"] = rows;
  j["cdf"] = to_json(selection.cdf);
  return j;
}

void write_cdf_csv(std::ostream& out, const EmpiricalCdf& cdf, const EnvSpec* spec) {
  out << "u,F_hat,F_true\n" << std::setprecision(12);
  for (std::uint64_t l = 0; l <= cdf.alpha(); ++l) {
    const double u = static_cast<double>(l) / static_cast<double>(cdf.alpha());
    out << u << ',' << cdf.at_grid(l) << ',';
    if (spec != nullptr) out << rho_cdf(*spec, u);
    out << '\n';
  }
}

}  // namespace heavyrange
