#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "heavyrange/rng.hpp"

namespace heavyrange {

// Increment families for the marks omega of the children of a vertex.
// rho = 1 / (1 + exp(-omega)) is the probability of stepping back to the
// parent when the walk sits on a single-edge path.

// rho ~ Beta(a, c), omega = log(rho / (1 - rho)).
struct BetaRho {
  double a = 0.0;
  double c = 0.0;
};

// omega = omega_hi with probability p_hi, omega_lo otherwise.
struct TwoPoint {
  double omega_hi = 0.0;
  double omega_lo = 0.0;
  double p_hi = 0.0;
};

struct Deterministic {
  double omega = 0.0;
};

using IncrementFamily = std::variant<BetaRho, TwoPoint, Deterministic>;

std::string family_name(const IncrementFamily& family);

// Open interval on which psi is finite.  Unbounded ends are reported as
// +/- infinity.
struct PsiDomain {
  double lo;
  double hi;
  bool contains(double s) const { return s > lo && s < hi; }
};

// A parametric environment: offspring law on {0, ..., K} and an increment
// family for the i.i.d. children marks.
class EnvSpec {
 public:
  EnvSpec(std::vector<double> offspring, IncrementFamily increments, bool iid_children = true);

  const std::vector<double>& offspring() const { return offspring_; }
  const IncrementFamily& increments() const { return increments_; }
  bool iid_children() const { return iid_children_; }

  double mean_offspring() const { return mean_offspring_; }
  // Largest value in the support of the offspring law.
  int max_offspring() const { return max_offspring_; }
  bool can_die() const { return offspring_.front() > 0.0; }

  PsiDomain psi_domain() const;

  // Inverse-CDF draw of nu from a uniform in (0, 1).
  std::uint32_t sample_offspring(double u) const;
  double sample_increment(Philox& rng) const;

  EnvSpec with_increments(IncrementFamily increments) const;

 private:
  std::vector<double> offspring_;
  std::vector<double> offspring_cdf_;
  IncrementFamily increments_;
  bool iid_children_;
  double mean_offspring_ = 0.0;
  int max_offspring_ = 0;
};

// nu = k almost surely.
std::vector<double> fixed_offspring(int k);

// Draws omega from an increment family.  Beta draws go through two gammas so
// that omega = log X - log Y keeps full precision near rho in {0, 1}.
double sample_increment(const IncrementFamily& family, Philox& rng);

// Log-Laplace transform psi(s) = log E[sum_{|z|=1} exp(-s V(z))].
double psi(const EnvSpec& spec, double s);
double psi_prime(const EnvSpec& spec, double s);

// E[rho^alpha (1 - rho)^beta] in closed form.
double rho_moment(const EnvSpec& spec, int alpha, int beta);
// c.d.f. of rho, P(rho <= u), and its left limit P(rho < u).
double rho_cdf(const EnvSpec& spec, double u);
double rho_cdf_left(const EnvSpec& spec, double u);
// True when the c.d.f. of rho is continuous (BetaRho).
bool rho_cdf_continuous(const EnvSpec& spec);

// Kappa lives in (1, inf]; infinity is a state, not a large number.
class Kappa {
 public:
  static Kappa finite(double value);
  static Kappa infinite() { return Kappa(); }

  bool is_infinite() const { return !value_.has_value(); }
  double value() const;  // throws DomainError when infinite

  friend bool operator==(const Kappa&, const Kappa&) = default;

 private:
  Kappa() = default;
  std::optional<double> value_;
};

enum class Regime {
  PositiveRecurrentVerySlow,  // inf_[0,1] psi < 0
  PositiveRecurrentSlow,      // inf = 0, psi'(1) > 0
  NullRecurrentSlow,          // inf = 0, psi'(1) = 0 (boundary case)
  NullRecurrentFast,          // inf = 0, psi'(1) < 0
  Transient,                  // inf > 0
};

std::string regime_name(Regime regime);
bool is_recurrent(Regime regime);
bool is_slow(Regime regime);

struct RegimeReport {
  double inf_psi_01 = 0.0;
  double argmin_psi_01 = 0.0;
  double psi_prime_1 = 0.0;
  std::optional<double> t0;
  std::optional<Kappa> kappa;
  Regime regime = Regime::Transient;
};

// Tolerances used for the "= 0" branches of the regime table.
inline constexpr double kPsiZeroTolerance = 1e-9;
inline constexpr double kPsiPrimeZeroBand = 1e-8;

// First zero of psi on [0, +inf); requires a recurrent spec.
double find_t0(const EnvSpec& spec);
// First zero of psi after 1; requires psi'(1) < 0.
Kappa find_kappa(const EnvSpec& spec);
RegimeReport classify(const EnvSpec& spec);

// Heavy-range exponent at the n-th return time, theta >= 0.
double xi(const RegimeReport& report, double theta);
// Heavy-range exponent at deterministic time, theta in [0, 1].
double xi_tilde(const RegimeReport& report, double theta);
// kappa = inf and theta = 0: xi is the limit of max(2 - kappa theta, 1 - theta).
bool xi_is_formula_limit(const RegimeReport& report, double theta);

enum class Clock { ExcursionCount, ReturnTime };

// Polynomial rate exponent r of the adaptive c.d.f. estimator for a
// gamma-Holder c.d.f., gamma in (0, 2].
double rate(const RegimeReport& report, double gamma, Clock clock);

// Targets for calibrate().  Each present target contributes one equation; the
// number of equations must match the number of free parameters of the family
// (Deterministic: omega; BetaRho: a, c; TwoPoint: omega_hi, omega_lo).
struct CalibrationTargets {
  std::optional<double> t0;          // psi(t0) = 0
  bool psi1_zero = false;            // psi(1) = 0
  std::optional<double> psi_prime1;  // psi'(1) = value
  std::optional<double> kappa;       // psi(kappa) = 0
};

// Newton iteration starting from the parameters of `start`.
EnvSpec calibrate(const EnvSpec& start, const CalibrationTargets& targets);

nlohmann::json to_json(const EnvSpec& spec);
nlohmann::json to_json(const RegimeReport& report);

}  // namespace heavyrange
