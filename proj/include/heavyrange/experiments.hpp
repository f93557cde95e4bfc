#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "heavyrange/env_model.hpp"
#include "heavyrange/localtime.hpp"
#include "heavyrange/rng.hpp"
#include "heavyrange/tree_env.hpp"
#include "heavyrange/walk_sim.hpp"

namespace heavyrange {

enum class StudyKind { Exponent, DeterministicTime, ReturnTime, Rate, HsTail };

std::string study_kind_name(StudyKind kind);
StudyKind parse_study_kind(const std::string& name);

struct StudyConfig {
  EnvSpec spec{fixed_offspring(2), BetaRho{3.0, 1.0}};
  StudyKind kind = StudyKind::Exponent;
  std::vector<std::uint64_t> n_grid;  // empty: 2^10 .. 2^17
  std::vector<double> theta_grid{0.0, 0.15, 0.3, 0.45, 0.6};
  int replicas = 20;
  std::uint64_t seed = 1;
  Backend backend = Backend::Branching;
  double gamma = 2.0;               // rate study: Holder exponent of F
  double z = 3.0;                   // rate study: GL threshold
  std::uint64_t ell = 200;          // hs-tail study
  std::uint64_t samples = 1'000'000;  // hs-tail study
  std::uint64_t step_budget = kDefaultStepBudget;
  std::optional<std::uint32_t> depth_limit;
  std::size_t node_cap = kDefaultNodeCap;
  // Branching-backend return-time and heavy-range studies: a replica whose
  // field exceeds node_cap keeps its partial counts (lower bounds) instead of
  // failing the study.  Censored replicas are counted in the result.
  bool censor_at_budget = false;
  unsigned workers = 1;
};

std::vector<std::uint64_t> default_n_grid();
std::vector<std::uint64_t> effective_n_grid(const StudyConfig& config);

// ceil(n^theta), at least 1.
std::uint64_t level_for(std::uint64_t n, double theta);

// Runs fn(0), ..., fn(count-1) on `workers` threads.  Tasks must write their
// results into slots owned by their index.  The exception of the lowest
// failing index is rethrown.
void run_tasks(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn);

// Least-squares line through (x_k, y_k), optionally weighted.
struct SlopeFit {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> dispersion;  // per-point replicate standard error, if known
  double slope = 0.0;
  double intercept = 0.0;
  double slope_stderr = 0.0;
  double residual = 0.0;  // root mean square residual
};

SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y,
                    std::span<const double> weights = {});

// A recurrent environment conditioned on survival.  `rejected` counts the
// extinct trees discarded before this one.
struct Replica {
  EnvTree tree;
  std::uint64_t walk_key = 0;
  std::uint64_t rejected = 0;
};

Replica make_replica(const StudyConfig& config, std::initializer_list<std::uint64_t> labels);

// Field at the n-th return to e* with the configured backend.
WalkRun field_at_return(EnvTree& tree, std::uint64_t n, Backend backend, Philox& rng,
                        const StudyConfig& config);

// Field at deterministic time n.  The step backend simulates exactly n
// steps; the branching backend accumulates independent excursion fields
// while their total duration stays <= n, so the last partial excursion is
// dropped.
WalkRun field_at_time(EnvTree& tree, std::uint64_t n, Backend backend, Philox& rng,
                      const StudyConfig& config);

struct RejectionStats {
  std::uint64_t accepted = 0;
  std::uint64_t rejected = 0;
  double rate() const {
    const auto total = accepted + rejected;
    return total == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(total);
  }
};

struct HeavyRangeSample {
  double theta = 0.0;
  std::uint64_t n = 0;
  int replica = 0;
  std::uint64_t heavy_range = 0;
  double log_ratio = 0.0;  // log+ R / log n
};

struct ExponentFit {
  double theta = 0.0;
  SlopeFit fit;
  double xi_theory = 0.0;
  bool formula_limit = false;
  double abs_gap() const { return std::abs(fit.slope - xi_theory); }
};

struct ExponentStudy {
  std::vector<HeavyRangeSample> samples;
  std::vector<ExponentFit> fits;
  RejectionStats rejection;
  std::uint64_t censored = 0;
};

// R_{ceil(n^theta)} at the n-th return time, fitted as mean log+ R against log n.
ExponentStudy exponent_study(const StudyConfig& config);
// Same statistic at deterministic time n, paired with xi_tilde.
ExponentStudy deterministic_time_study(const StudyConfig& config);

struct ReturnTimeSample {
  std::uint64_t n = 0;
  int replica = 0;
  std::uint64_t return_time = 0;
};

struct ReturnTimeStudy {
  std::vector<ReturnTimeSample> samples;
  SlopeFit fit;  // mean log T^(n) against log n
  double theory = 0.0;
  RejectionStats rejection;
  std::uint64_t censored = 0;
};

// Scaling exponent of T^(n): 1 in the slow regimes (n log n at the
// boundary), min(kappa, 2) in the fast regime.
double return_time_exponent(const RegimeReport& report);

ReturnTimeStudy return_time_study(const StudyConfig& config);

struct RateSample {
  std::uint64_t n = 0;
  int replica = 0;
  std::uint64_t alpha_hat = 0;
  double error = 0.0;  // sup |F_hat^alpha_hat - F|
  std::uint64_t best_alpha = 0;
  double best_error = 0.0;  // min over candidates of sup |F_hat^alpha - F|
};

struct RateRow {
  std::uint64_t n = 0;
  double mean_error = 0.0;
  double stderr_error = 0.0;
};

struct RateStudy {
  std::vector<RateSample> samples;
  std::vector<RateRow> rows;
  SlopeFit fit;  // log mean error against log n
  double theory = 0.0;  // -r
  RejectionStats rejection;
};

RateStudy rate_study(const StudyConfig& config);

// Increment of the random walk S under the law tilted by exp(-t omega).
double sample_tilted_increment(const EnvSpec& spec, double t, Philox& rng);
// S_0 = 0, ..., S_len.
std::vector<double> sample_tilted_walk(const EnvSpec& spec, double t, std::uint64_t len,
                                       Philox& rng);

struct HsTailStudy {
  std::uint64_t ell = 0;
  std::uint64_t samples = 0;
  std::vector<double> survival;   // levels P(H >= m) used by the fit
  std::vector<double> quantiles;  // matching m
  SlopeFit fit;                   // log survival against log m
  double theory = 0.0;            // -(kappa - 1)
  double min_value = 0.0;
};

// Survival-slope window for the tail fit.
inline constexpr double kHsSurvivalHigh = 1e-2;
inline constexpr double kHsSurvivalLow = 1e-4;

// Samples H = sum_{k<=ell} exp(-S_k) for the walk tilted at t = 1.
HsTailStudy hs_tail_study(const StudyConfig& config);

// Exact enumeration of both sides of the many-to-one identity at depth m:
//   E[sum_{|x|=m} f(V(x_1), ..., V(x_m))] = E[exp(t S_m + psi(t) m) f(S_1, ..., S_m)].
// The left side enumerates offspring numbers and sibling mark tuples
// generation by generation.  Only TwoPoint and Deterministic marks.
using PathFunctional = std::function<double(std::span<const double>)>;
std::pair<double, double> many_to_one_check(const EnvSpec& spec, int m, double t,
                                            const PathFunctional& f);

void write_exponent_samples_csv(std::ostream& out, const ExponentStudy& study);
void write_exponent_fits_csv(std::ostream& out, const ExponentStudy& study);
void write_return_time_csv(std::ostream& out, const ReturnTimeStudy& study);
void write_rate_samples_csv(std::ostream& out, const RateStudy& study);
void write_rate_rows_csv(std::ostream& out, const RateStudy& study);
void write_hs_tail_csv(std::ostream& out, const HsTailStudy& study);

nlohmann::json to_json(const StudyConfig& config);
nlohmann::json to_json(const SlopeFit& fit);

}  // namespace heavyrange
