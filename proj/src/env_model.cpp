#include "heavyrange/env_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "heavyrange/errors.hpp"

namespace heavyrange {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Distance kept from the edge of the finiteness interval when searching.
constexpr double kBoundaryGap = 1e-6;
constexpr double kUnboundedSearchCap = 64.0;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double log_gamma(double x) { return boost::math::lgamma(x); }

double log_beta(double a, double b) { return log_gamma(a) + log_gamma(b) - log_gamma(a + b); }

double rho_of(double omega) { return 1.0 / (1.0 + std::exp(-omega)); }

void check_domain(const EnvSpec& spec, double s) {
  const PsiDomain d = spec.psi_domain();
  if (!d.contains(s)) {
    std::ostringstream msg;
    msg << "psi(" << s << ") is infinite for the " << family_name(spec.increments())
        << " family (finite on (" << d.lo << ", " << d.hi << "))";
    throw DomainError(msg.str());
  }
}

// log E[exp(-s omega)]
double log_laplace_increment(const IncrementFamily& family, double s) {
  return std::visit(
      Overloaded{
          [s](const BetaRho& b) {
            return log_gamma(b.a - s) + log_gamma(b.c + s) - log_gamma(b.a) - log_gamma(b.c);
          },
          [s](const TwoPoint& t) {
            const double x = std::log(t.p_hi) - s * t.omega_hi;
            const double y = std::log1p(-t.p_hi) - s * t.omega_lo;
            if (t.p_hi == 1.0) return -s * t.omega_hi;
            if (t.p_hi == 0.0) return -s * t.omega_lo;
            const double m = std::max(x, y);
            return m + std::log(std::exp(x - m) + std::exp(y - m));
          },
          [s](const Deterministic& d) { return -s * d.omega; },
      },
      family);
}

double bisect(const std::function<double(double)>& f, double lo, double hi, double tol) {
  double flo = f(lo);
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if (std::abs(fm) <= tol || hi - lo < 1e-15) {
      return mid;
    }
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double search_cap(const EnvSpec& spec) {
  const double hi = spec.psi_domain().hi;
  return std::isfinite(hi) ? hi - kBoundaryGap : kUnboundedSearchCap;
}

// Minimiser of the convex function psi on [0, 1].
double argmin_psi_01(const EnvSpec& spec) {
  if (psi_prime(spec, 0.0) >= 0.0) return 0.0;
  if (psi_prime(spec, 1.0) <= 0.0) return 1.0;
  double lo = 0.0, hi = 1.0;
  while (hi - lo > 1e-15) {
    const double mid = 0.5 * (lo + hi);
    if (psi_prime(spec, mid) < 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::string family_name(const IncrementFamily& family) {
  return std::visit(Overloaded{
                        [](const BetaRho&) { return std::string("beta_rho"); },
                        [](const TwoPoint&) { return std::string("two_point"); },
                        [](const Deterministic&) { return std::string("deterministic"); },
                    },
                    family);
}

EnvSpec::EnvSpec(std::vector<double> offspring, IncrementFamily increments, bool iid_children)
    : offspring_(std::move(offspring)), increments_(increments), iid_children_(iid_children) {
  if (offspring_.empty()) {
    throw DomainError("offspring law is empty");
  }
  double total = 0.0;
  for (std::size_t k = 0; k < offspring_.size(); ++k) {
    const double p = offspring_[k];
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError("offspring probability for nu=" + std::to_string(k) + " is not in [0,1]");
    }
    total += p;
    mean_offspring_ += static_cast<double>(k) * p;
    if (p > 0.0) max_offspring_ = static_cast<int>(k);
    offspring_cdf_.push_back(total);
  }
  if (std::abs(total - 1.0) > 1e-12) {
    throw DomainError("offspring probabilities sum to " + std::to_string(total) + ", not 1");
  }
  if (!(mean_offspring_ > 1.0)) {
    throw DomainError("offspring mean " + std::to_string(mean_offspring_) +
                      " <= 1: the tree is not supercritical");
  }
  std::visit(Overloaded{
                 [](const BetaRho& b) {
                   if (!(b.c > 0.0)) throw DomainError("beta_rho requires c > 0");
                   if (!(b.a > 1.0)) {
                     throw DomainError("beta_rho requires a > 1 so that psi(1) is finite");
                   }
                 },
                 [](const TwoPoint& t) {
                   if (!(t.p_hi >= 0.0 && t.p_hi <= 1.0)) {
                     throw DomainError("two_point requires p_hi in [0,1]");
                   }
                   if (!std::isfinite(t.omega_hi) || !std::isfinite(t.omega_lo)) {
                     throw DomainError("two_point requires finite omega values");
                   }
                 },
                 [](const Deterministic& d) {
                   if (!std::isfinite(d.omega)) throw DomainError("deterministic omega must be finite");
                 },
             },
             increments_);
}

PsiDomain EnvSpec::psi_domain() const {
  if (const auto* b = std::get_if<BetaRho>(&increments_)) {
    return {-b->c, b->a};
  }
  return {-kInf, kInf};
}

std::uint32_t EnvSpec::sample_offspring(double u) const {
  const auto it = std::upper_bound(offspring_cdf_.begin(), offspring_cdf_.end(), u);
  const auto k = static_cast<std::uint32_t>(it - offspring_cdf_.begin());
  return std::min<std::uint32_t>(k, static_cast<std::uint32_t>(max_offspring_));
}

double EnvSpec::sample_increment(Philox& rng) const {
  return heavyrange::sample_increment(increments_, rng);
}

EnvSpec EnvSpec::with_increments(IncrementFamily increments) const {
  return EnvSpec(offspring_, increments, iid_children_);
}

std::vector<double> fixed_offspring(int k) {
  std::vector<double> p(static_cast<std::size_t>(k) + 1, 0.0);
  p.back() = 1.0;
  return p;
}

double sample_increment(const IncrementFamily& family, Philox& rng) {
  return std::visit(
      Overloaded{
          [&rng](const BetaRho& b) {
            std::gamma_distribution<double> ga(b.a, 1.0);
            std::gamma_distribution<double> gc(b.c, 1.0);
            const double x = ga(rng);
            const double y = gc(rng);
            const double omega = std::log(x) - std::log(y);
            return std::clamp(omega, -700.0, 700.0);
          },
          [&rng](const TwoPoint& t) { return rng.uniform() < t.p_hi ? t.omega_hi : t.omega_lo; },
          [](const Deterministic& d) { return d.omega; },
      },
      family);
}

double psi(const EnvSpec& spec, double s) {
  check_domain(spec, s);
  return std::log(spec.mean_offspring()) + log_laplace_increment(spec.increments(), s);
}

double psi_prime(const EnvSpec& spec, double s) {
  check_domain(spec, s);
  return std::visit(
      Overloaded{
          [s](const BetaRho& b) {
            return boost::math::digamma(b.c + s) - boost::math::digamma(b.a - s);
          },
          [s](const TwoPoint& t) {
            // Weighted mean of -omega under the exponentially tilted two-point law.
            const double x = std::log(t.p_hi) - s * t.omega_hi;
            const double y = std::log1p(-t.p_hi) - s * t.omega_lo;
            if (t.p_hi == 1.0) return -t.omega_hi;
            if (t.p_hi == 0.0) return -t.omega_lo;
            const double m = std::max(x, y);
            const double wx = std::exp(x - m);
            const double wy = std::exp(y - m);
            return -(t.omega_hi * wx + t.omega_lo * wy) / (wx + wy);
          },
          [](const Deterministic& d) { return -d.omega; },
      },
      spec.increments());
}

double rho_moment(const EnvSpec& spec, int alpha, int beta) {
  if (alpha < 0 || beta < 0) {
    throw DomainError("moment orders must be non-negative");
  }
  const auto power = [alpha, beta](double r) {
    return std::pow(r, alpha) * std::pow(1.0 - r, beta);
  };
  return std::visit(Overloaded{
                        [alpha, beta](const BetaRho& b) {
                          return std::exp(log_beta(b.a + alpha, b.c + beta) - log_beta(b.a, b.c));
                        },
                        [&power](const TwoPoint& t) {
                          return t.p_hi * power(rho_of(t.omega_hi)) +
                                 (1.0 - t.p_hi) * power(rho_of(t.omega_lo));
                        },
                        [&power](const Deterministic& d) { return power(rho_of(d.omega)); },
                    },
                    spec.increments());
}

double rho_cdf(const EnvSpec& spec, double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return std::visit(Overloaded{
                        [u](const BetaRho& b) { return boost::math::ibeta(b.a, b.c, u); },
                        [u](const TwoPoint& t) {
                          return (rho_of(t.omega_hi) <= u ? t.p_hi : 0.0) +
                                 (rho_of(t.omega_lo) <= u ? 1.0 - t.p_hi : 0.0);
                        },
                        [u](const Deterministic& d) { return rho_of(d.omega) <= u ? 1.0 : 0.0; },
                    },
                    spec.increments());
}

double rho_cdf_left(const EnvSpec& spec, double u) {
  if (u <= 0.0) return 0.0;
  if (u > 1.0) return 1.0;
  return std::visit(Overloaded{
                        [u](const BetaRho& b) { return boost::math::ibeta(b.a, b.c, u); },
                        [u](const TwoPoint& t) {
                          return (rho_of(t.omega_hi) < u ? t.p_hi : 0.0) +
                                 (rho_of(t.omega_lo) < u ? 1.0 - t.p_hi : 0.0);
                        },
                        [u](const Deterministic& d) { return rho_of(d.omega) < u ? 1.0 : 0.0; },
                    },
                    spec.increments());
}

bool rho_cdf_continuous(const EnvSpec& spec) {
  return std::holds_alternative<BetaRho>(spec.increments());
}

Kappa Kappa::finite(double value) {
  if (!(value > 1.0) || !std::isfinite(value)) {
    throw DomainError("kappa must be a finite value > 1");
  }
  Kappa k;
  k.value_ = value;
  return k;
}

double Kappa::value() const {
  if (!value_) throw DomainError("kappa is infinite");
  return *value_;
}

std::string regime_name(Regime regime) {
  switch (regime) {
    case Regime::PositiveRecurrentVerySlow: return "PositiveRecurrentVerySlow";
    case Regime::PositiveRecurrentSlow: return "PositiveRecurrentSlow";
    case Regime::NullRecurrentSlow: return "NullRecurrentSlow";
    case Regime::NullRecurrentFast: return "NullRecurrentFast";
    case Regime::Transient: return "Transient";
  }
  return "Unknown";
}

bool is_recurrent(Regime regime) { return regime != Regime::Transient; }

bool is_slow(Regime regime) {
  return regime == Regime::PositiveRecurrentVerySlow || regime == Regime::PositiveRecurrentSlow ||
         regime == Regime::NullRecurrentSlow;
}

double find_t0(const EnvSpec& spec) {
  const double s_min = argmin_psi_01(spec);
  const double inf_psi = psi(spec, s_min);
  if (inf_psi > kPsiZeroTolerance) {
    throw NoRoot("psi > 0 on [0,1] (inf = " + std::to_string(inf_psi) + "): transient environment");
  }
  const double psi1 = psi(spec, 1.0);
  if (std::abs(psi1) <= kPsiZeroTolerance && psi_prime(spec, 1.0) <= kPsiPrimeZeroBand) {
    return 1.0;
  }
  if (inf_psi >= -kPsiZeroTolerance) {
    // Tangential zero: the minimiser is the first zero.
    return s_min;
  }
  // psi(0) = log E[nu] > 0 and psi(s_min) < 0.
  return bisect([&spec](double s) { return psi(spec, s); }, 0.0, s_min, 1e-13);
}

Kappa find_kappa(const EnvSpec& spec) {
  if (psi_prime(spec, 1.0) >= 0.0) {
    throw DomainError("kappa is defined only when psi'(1) < 0");
  }
  if (psi(spec, 1.0) > kPsiZeroTolerance) {
    throw DomainError("kappa is defined only when psi(1) = 0");
  }
  const auto f = [&spec](double s) { return psi(spec, s); };
  const double cap = search_cap(spec);
  double prev = 1.0;
  double step = 1e-3;
  bool seen_negative = false;
  while (prev < cap) {
    const double s = std::min(prev + step, cap);
    const double value = f(s);
    if (value < 0.0) {
      seen_negative = true;
    } else if (seen_negative) {
      return Kappa::finite(bisect(f, prev, s, 1e-13));
    }
    prev = s;
    step *= 2.0;
  }
  return Kappa::infinite();
}

RegimeReport classify(const EnvSpec& spec) {
  RegimeReport r;
  r.argmin_psi_01 = argmin_psi_01(spec);
  r.inf_psi_01 = psi(spec, r.argmin_psi_01);
  r.psi_prime_1 = psi_prime(spec, 1.0);
  if (r.inf_psi_01 > kPsiZeroTolerance) {
    r.regime = Regime::Transient;
    return r;
  }
  if (r.inf_psi_01 < -kPsiZeroTolerance) {
    r.regime = Regime::PositiveRecurrentVerySlow;
  } else if (r.psi_prime_1 > kPsiPrimeZeroBand) {
    r.regime = Regime::PositiveRecurrentSlow;
  } else if (r.psi_prime_1 >= -kPsiPrimeZeroBand) {
    r.regime = Regime::NullRecurrentSlow;
  } else {
    r.regime = Regime::NullRecurrentFast;
    r.kappa = find_kappa(spec);
  }
  r.t0 = find_t0(spec);
  return r;
}

namespace {

void require_recurrent(const RegimeReport& report) {
  if (!is_recurrent(report.regime)) {
    throw DomainError("heavy-range exponents are defined for recurrent regimes only");
  }
}

}  // namespace

double xi(const RegimeReport& report, double theta) {
  require_recurrent(report);
  if (theta < 0.0) throw DomainError("theta must be >= 0");
  if (theta >= 1.0) return 0.0;
  if (is_slow(report.regime)) {
    return report.t0.value() * (1.0 - theta);
  }
  const Kappa& kappa = report.kappa.value();
  if (kappa.is_infinite()) {
    return theta == 0.0 ? 2.0 : 1.0 - theta;
  }
  const double k = kappa.value();
  if (k <= 2.0) return k * (1.0 - theta);
  return std::max(2.0 - k * theta, 1.0 - theta);
}

double xi_tilde(const RegimeReport& report, double theta) {
  require_recurrent(report);
  if (theta < 0.0 || theta > 1.0) throw DomainError("theta must lie in [0,1]");
  if (is_slow(report.regime)) {
    return report.t0.value() * (1.0 - theta);
  }
  const Kappa& kappa = report.kappa.value();
  if (kappa.is_infinite()) {
    if (theta == 0.0) return 1.0;
    return theta <= 0.5 ? 0.5 - theta : 0.0;
  }
  const double k = kappa.value();
  if (k <= 2.0) return theta <= 1.0 / k ? 1.0 - k * theta : 0.0;
  return theta <= 0.5 ? std::max(1.0 - k * theta, 0.5 - theta) : 0.0;
}

bool xi_is_formula_limit(const RegimeReport& report, double theta) {
  return report.regime == Regime::NullRecurrentFast && report.kappa &&
         report.kappa->is_infinite() && theta == 0.0;
}

double rate(const RegimeReport& report, double gamma, Clock clock) {
  require_recurrent(report);
  if (!(gamma > 0.0 && gamma <= 2.0)) throw DomainError("gamma must lie in (0,2]");
  if (is_slow(report.regime)) {
    const double t0 = report.t0.value();
    return gamma * t0 / (gamma + t0);
  }
  const Kappa& kappa = report.kappa.value();
  const bool beyond = kappa.is_infinite() || kappa.value() > 2.0 + gamma;
  if (clock == Clock::ExcursionCount) {
    if (beyond) return gamma / (gamma + 1.0);
    const double k = kappa.value();
    if (k <= 2.0) return gamma * k / (gamma + k);
    return 2.0 * gamma / (gamma + k);
  }
  if (beyond) return gamma / (2.0 * (gamma + 1.0));
  return gamma / (gamma + kappa.value());
}

namespace {

// Free parameters of each family, mapped to an unconstrained vector.
std::vector<double> to_params(const IncrementFamily& family) {
  return std::visit(Overloaded{
                        [](const BetaRho& b) {
                          return std::vector<double>{std::log(b.a - 1.0), std::log(b.c)};
                        },
                        [](const TwoPoint& t) { return std::vector<double>{t.omega_hi, t.omega_lo}; },
                        [](const Deterministic& d) { return std::vector<double>{d.omega}; },
                    },
                    family);
}

IncrementFamily from_params(const IncrementFamily& family, const std::vector<double>& p) {
  return std::visit(Overloaded{
                        [&p](const BetaRho&) -> IncrementFamily {
                          return BetaRho{1.0 + std::exp(p[0]), std::exp(p[1])};
                        },
                        [&p](const TwoPoint& t) -> IncrementFamily {
                          return TwoPoint{p[0], p[1], t.p_hi};
                        },
                        [&p](const Deterministic&) -> IncrementFamily { return Deterministic{p[0]}; },
                    },
                    family);
}

// Solves J dx = -r for up to three unknowns by Gaussian elimination with
// partial pivoting.
std::vector<double> solve_dense(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t row = col + 1; row < n; ++row) {
      if (std::abs(a[row][col]) > std::abs(a[piv][col])) piv = row;
    }
    if (std::abs(a[piv][col]) < 1e-300) throw NoRoot("calibration Jacobian is singular");
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t row = col + 1; row < n; ++row) {
      const double f = a[row][col] / a[col][col];
      for (std::size_t k = col; k < n; ++k) a[row][k] -= f * a[col][k];
      b[row] -= f * b[col];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
    x[i] = s / a[i][i];
  }
  return x;
}

}  // namespace

EnvSpec calibrate(const EnvSpec& start, const CalibrationTargets& targets) {
  const std::size_t n_eq = (targets.t0 ? 1 : 0) + (targets.psi1_zero ? 1 : 0) +
                           (targets.psi_prime1 ? 1 : 0) + (targets.kappa ? 1 : 0);
  std::vector<double> params = to_params(start.increments());
  if (n_eq != params.size()) {
    throw DomainError("calibration of the " + family_name(start.increments()) + " family needs " +
                      std::to_string(params.size()) + " targets, got " + std::to_string(n_eq));
  }

  // Residual vector; NaN signals parameters outside the valid region.
  const auto residuals = [&](const std::vector<double>& p) {
    std::vector<double> r;
    try {
      const EnvSpec spec = start.with_increments(from_params(start.increments(), p));
      if (targets.t0) r.push_back(psi(spec, *targets.t0));
      if (targets.psi1_zero) r.push_back(psi(spec, 1.0));
      if (targets.psi_prime1) r.push_back(psi_prime(spec, 1.0) - *targets.psi_prime1);
      if (targets.kappa) r.push_back(psi(spec, *targets.kappa));
    } catch (const Error&) {
      r.assign(n_eq, std::numeric_limits<double>::quiet_NaN());
    }
    return r;
  };
  const auto norm = [](const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return std::isnan(s) ? kInf : std::sqrt(s);
  };

  std::vector<double> r = residuals(params);
  if (!std::isfinite(norm(r))) {
    throw DomainError("calibration start point is outside the family's valid region");
  }
  for (int it = 0; it < 200 && norm(r) > 1e-14; ++it) {
    std::vector<std::vector<double>> jac(n_eq, std::vector<double>(n_eq));
    for (std::size_t j = 0; j < n_eq; ++j) {
      const double h = 1e-6 * std::max(1.0, std::abs(params[j]));
      auto plus = params, minus = params;
      plus[j] += h;
      minus[j] -= h;
      const auto rp = residuals(plus), rm = residuals(minus);
      for (std::size_t i = 0; i < n_eq; ++i) jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
    }
    std::vector<double> neg_r(n_eq);
    for (std::size_t i = 0; i < n_eq; ++i) neg_r[i] = -r[i];
    const std::vector<double> dx = solve_dense(jac, neg_r);

    double step = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      auto trial = params;
      for (std::size_t j = 0; j < n_eq; ++j) trial[j] += step * dx[j];
      const auto rt = residuals(trial);
      if (norm(rt) < norm(r)) {
        params = trial;
        r = rt;
        improved = true;
        break;
      }
    }
    if (!improved) break;
  }
  if (norm(r) > 1e-10) {
    throw NoRoot("calibration did not converge (residual " + std::to_string(norm(r)) + ")");
  }
  return start.with_increments(from_params(start.increments(), params));
}

nlohmann::json to_json(const EnvSpec& spec) {
  nlohmann::json j;
  j["offspring"] = spec.offspring();
  j["mean_offspring"] = spec.mean_offspring();
  j["iid_children"] = spec.iid_children();
  j["family"] = family_name(spec.increments());
  std::visit(Overloaded{
                 [&j](const BetaRho& b) {
                   j["a"] = b.a;
                   j["c"] = b.c;
                 },
                 [&j](const TwoPoint& t) {
                   j["omega_hi"] = t.omega_hi;
                   j["omega_lo"] = t.omega_lo;
                   j["p_hi"] = t.p_hi;
                 },
                 [&j](const Deterministic& d) { j["omega"] = d.omega; },
             },
             spec.increments());
  return j;
}

nlohmann::json to_json(const RegimeReport& report) {
  nlohmann::json j;
  j["inf_psi_01"] = report.inf_psi_01;
  j["argmin_psi_01"] = report.argmin_psi_01;
  j["psi_prime_1"] = report.psi_prime_1;
  j["t0"] = report.t0 ? nlohmann::json(*report.t0) : nlohmann::json(nullptr);
  if (!report.kappa) {
    j["kappa"] = nullptr;
  } else if (report.kappa->is_infinite()) {
    j["kappa"] = "inf";
  } else {
    j["kappa"] = report.kappa->value();
  }
  j["regime"] = regime_name(report.regime);
  return j;
}

}  // namespace heavyrange
