#include "heavyrange/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <thread>

#include "heavyrange/errors.hpp"
#include "heavyrange/estimator.hpp"

namespace heavyrange {

namespace {

// First label of every per-replica key, one per study kind.
enum StudyTag : std::uint64_t {
  kTagExponent = 1,
  kTagDeterministicTime = 2,
  kTagReturnTime = 3,
  kTagRate = 4,
  kTagHsTail = 5,
};

constexpr std::uint64_t kMaxExtinctions = 100'000;
constexpr std::uint64_t kHsChunk = 10'000;

RegimeReport recurrent_report(const EnvSpec& spec) {
  RegimeReport report = classify(spec);
  if (!is_recurrent(report.regime)) {
    throw DomainError("study needs a recurrent environment, got " + regime_name(report.regime));
  }
  return report;
}

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double standard_error(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double log_plus(std::uint64_t r) { return r <= 1 ? 0.0 : std::log(static_cast<double>(r)); }

WalkOptions walk_options(const StudyConfig& config) {
  WalkOptions o;
  o.step_budget = config.step_budget;
  o.depth_limit = config.depth_limit;
  return o;
}

// Per-replica heavy ranges for one clock, shared by the two exponent studies.
ExponentStudy heavy_range_study(const StudyConfig& config, StudyTag tag, bool deterministic_time) {
  const RegimeReport report = recurrent_report(config.spec);
  const auto grid = effective_n_grid(config);
  const auto reps = static_cast<std::size_t>(config.replicas);
  if (reps == 0) throw ConfigError("replicas must be >= 1");

  struct Slot {
    std::vector<std::uint64_t> ranges;
    std::uint64_t rejected = 0;
    bool censored = false;
  };
  std::vector<Slot> slots(grid.size() * reps);
  run_tasks(slots.size(), config.workers, [&](std::size_t t) {
    const std::size_t ni = t / reps, r = t % reps;
    const std::uint64_t n = grid[ni];
    Replica rep = make_replica(config, {tag, ni, r});
    Philox rng(rep.walk_key);
    std::vector<std::uint64_t> levels;
    for (double theta : config.theta_grid) levels.push_back(level_for(n, theta));
    if (!deterministic_time && config.backend == Backend::Branching) {
      // Fields at large n are too big to store; only the counts are needed.
      const FieldSummary f =
          summarize_field(rep.tree, n, rng, levels, FieldOptions{config.depth_limit, {}},
                          config.node_cap, config.censor_at_budget);
      slots[t] = {f.heavy_ranges, rep.rejected, f.truncated};
      return;
    }
    const WalkRun run = deterministic_time
                            ? field_at_time(rep.tree, n, config.backend, rng, config)
                            : field_at_return(rep.tree, n, config.backend, rng, config);
    slots[t] = {heavy_ranges(run.field, levels), rep.rejected, false};
  });

  ExponentStudy study;
  for (const auto& s : slots) {
    study.rejection.rejected += s.rejected;
    study.censored += s.censored;
  }
  study.rejection.accepted = slots.size();
  for (std::size_t k = 0; k < config.theta_grid.size(); ++k) {
    const double theta = config.theta_grid[k];
    std::vector<double> xs, ys, disp;
    for (std::size_t ni = 0; ni < grid.size(); ++ni) {
      const double log_n = std::log(static_cast<double>(grid[ni]));
      std::vector<double> logs;
      for (std::size_t r = 0; r < reps; ++r) {
        const std::uint64_t range = slots[ni * reps + r].ranges[k];
        study.samples.push_back(
            {theta, grid[ni], static_cast<int>(r), range, log_plus(range) / log_n});
        logs.push_back(log_plus(range));
      }
      xs.push_back(log_n);
      ys.push_back(mean(logs));
      disp.push_back(standard_error(logs));
    }
    ExponentFit fit;
    fit.theta = theta;
    fit.fit = fit_loglog(xs, ys);
    fit.fit.dispersion = disp;
    if (deterministic_time) {
      fit.xi_theory = xi_tilde(report, theta);
    } else {
      fit.xi_theory = xi(report, theta);
      fit.formula_limit = xi_is_formula_limit(report, theta);
    }
    study.fits.push_back(fit);
  }
  return study;
}

void write_double(std::ostream& out, double v) { out << std::setprecision(12) << v; }

}  // namespace

std::string study_kind_name(StudyKind kind) {
  switch (kind) {
    case StudyKind::Exponent:
      return "exponent";
    case StudyKind::DeterministicTime:
      return "deterministic_time";
    case StudyKind::ReturnTime:
      return "return_time";
    case StudyKind::Rate:
      return "rate";
    case StudyKind::HsTail:
      return "hs_tail";
  }
  return "unknown";
}

StudyKind parse_study_kind(const std::string& name) {
  for (auto k : {StudyKind::Exponent, StudyKind::DeterministicTime, StudyKind::ReturnTime,
                 StudyKind::Rate, StudyKind::HsTail}) {
    if (study_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown study '" + name +
                    "' (expected exponent, deterministic_time, return_time, rate or hs_tail)");
}

std::vector<std::uint64_t> default_n_grid() {
  std::vector<std::uint64_t> g;
  for (int k = 10; k <= 17; ++k) g.push_back(std::uint64_t{1} << k);
  return g;
}

std::vector<std::uint64_t> effective_n_grid(const StudyConfig& config) {
  return config.n_grid.empty() ? default_n_grid() : config.n_grid;
}

std::uint64_t level_for(std::uint64_t n, double theta) {
  if (theta < 0.0) throw DomainError("theta must be >= 0");
  // The relative guard keeps exact powers such as 4^{1/2} from rounding up.
  const double v = std::ceil(std::pow(static_cast<double>(n), theta) * (1.0 - 1e-12));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(v));
}

void run_tasks(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  const auto threads = static_cast<std::size_t>(std::clamp<std::size_t>(workers, 1, count));
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t error_index = count;
  std::exception_ptr error;

  const auto worker = [&] {
    for (;;) {
      if (failed.load(std::memory_order_relaxed)) return;
      const std::size_t t = next.fetch_add(1);
      if (t >= count) return;
      try {
        fn(t);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (t < error_index) {
          error_index = t;
          error = std::current_exception();
        }
        failed = true;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);
}

SlopeFit fit_loglog(std::span<const double> x, std::span<const double> y,
                    std::span<const double> weights) {
  if (x.size() != y.size() || (!weights.empty() && weights.size() != x.size())) {
    throw DomainError("fit_loglog: mismatched input lengths");
  }
  if (x.size() < 2) throw DomainError("fit_loglog needs at least two points");
  const auto w = [&](std::size_t k) { return weights.empty() ? 1.0 : weights[k]; };
  double sw = 0.0, sx = 0.0, sy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sw += w(k);
    sx += w(k) * x[k];
    sy += w(k) * y[k];
  }
  const double xbar = sx / sw, ybar = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += w(k) * (x[k] - xbar) * (x[k] - xbar);
    sxy += w(k) * (x[k] - xbar) * (y[k] - ybar);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_loglog: x values are all equal");

  SlopeFit fit;
  fit.x.assign(x.begin(), x.end());
  fit.y.assign(y.begin(), y.end());
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double ssr = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double r = y[k] - (fit.intercept + fit.slope * x[k]);
    ssr += w(k) * r * r;
  }
  fit.residual = std::sqrt(ssr / sw);
  if (x.size() > 2) {
    fit.slope_stderr = std::sqrt(ssr / static_cast<double>(x.size() - 2) / sxx);
  }
  return fit;
}

Replica make_replica(const StudyConfig& config, std::initializer_list<std::uint64_t> labels) {
  const std::uint64_t base = derive_key(config.seed, labels);
  for (std::uint64_t attempt = 0; attempt < kMaxExtinctions; ++attempt) {
    const std::uint64_t key = derive_key(base, {attempt});
    EnvTree tree(config.spec, key, config.node_cap);
    if (!config.spec.can_die() || tree.survives()) {
      return Replica{std::move(tree), derive_key(key, {0x5741'4c4bULL}), attempt};
    }
  }
  throw DomainError("no surviving tree in " + std::to_string(kMaxExtinctions) + " attempts");
}

WalkRun field_at_return(EnvTree& tree, std::uint64_t n, Backend backend, Philox& rng,
                        const StudyConfig& config) {
  if (backend == Backend::Step) return run_excursions(tree, n, rng, walk_options(config));
  WalkRun run;
  run.field = sample_field(tree, n, rng, FieldOptions{config.depth_limit, {}});
  run.steps = return_time(run.field);
  run.n_excursions = n;
  run.max_generation = run.field.max_generation();
  return run;
}

WalkRun field_at_time(EnvTree& tree, std::uint64_t n, Backend backend, Philox& rng,
                      const StudyConfig& config) {
  if (backend == Backend::Step) return run_steps(tree, n, rng, walk_options(config));
  FieldAccumulator acc(tree);
  std::uint64_t steps = 0, excursions = 0;
  for (;;) {
    // An excursion with total count c lasts 2c steps.
    const std::uint64_t room = (n - steps) / 2;
    const LocalTimeField f = sample_field(tree, 1, rng, FieldOptions{config.depth_limit, room});
    if (f.incomplete()) break;
    acc.add(f);
    steps += return_time(f);
    ++excursions;
  }
  WalkRun run;
  run.field = acc.build(Backend::Branching);
  run.steps = steps;
  run.n_excursions = excursions;
  run.max_generation = run.field.max_generation();
  return run;
}

ExponentStudy exponent_study(const StudyConfig& config) {
  return heavy_range_study(config, kTagExponent, false);
}

ExponentStudy deterministic_time_study(const StudyConfig& config) {
  for (double theta : config.theta_grid) {
    if (theta > 1.0) throw ConfigError("deterministic-time study needs theta in [0, 1]");
  }
  return heavy_range_study(config, kTagDeterministicTime, true);
}

double return_time_exponent(const RegimeReport& report) {
  if (!is_recurrent(report.regime)) throw DomainError("transient walks have no return times");
  if (report.regime != Regime::NullRecurrentFast) return 1.0;
  if (!report.kappa || report.kappa->is_infinite()) return 2.0;
  return std::min(report.kappa->value(), 2.0);
}

ReturnTimeStudy return_time_study(const StudyConfig& config) {
  const RegimeReport report = recurrent_report(config.spec);
  const auto grid = effective_n_grid(config);
  const auto reps = static_cast<std::size_t>(config.replicas);
  if (reps == 0) throw ConfigError("replicas must be >= 1");

  std::vector<std::uint64_t> times(grid.size() * reps), rejected(grid.size() * reps),
      censored(grid.size() * reps);
  run_tasks(times.size(), config.workers, [&](std::size_t t) {
    const std::size_t ni = t / reps, r = t % reps;
    Replica rep = make_replica(config, {kTagReturnTime, ni, r});
    Philox rng(rep.walk_key);
    if (config.backend == Backend::Branching) {
      const FieldSummary f =
          summarize_field(rep.tree, grid[ni], rng, {}, FieldOptions{config.depth_limit, {}},
                          config.node_cap, config.censor_at_budget);
      times[t] = 2 * f.total_count;
      censored[t] = f.truncated;
    } else {
      times[t] = field_at_return(rep.tree, grid[ni], config.backend, rng, config).steps;
    }
    rejected[t] = rep.rejected;
  });

  ReturnTimeStudy study;
  study.theory = return_time_exponent(report);
  for (auto r : rejected) study.rejection.rejected += r;
  for (auto c : censored) study.censored += c;
  study.rejection.accepted = times.size();
  std::vector<double> xs, ys, disp;
  for (std::size_t ni = 0; ni < grid.size(); ++ni) {
    std::vector<double> logs;
    for (std::size_t r = 0; r < reps; ++r) {
      const std::uint64_t tn = times[ni * reps + r];
      study.samples.push_back({grid[ni], static_cast<int>(r), tn});
      logs.push_back(std::log(static_cast<double>(tn)));
    }
    xs.push_back(std::log(static_cast<double>(grid[ni])));
    ys.push_back(mean(logs));
    disp.push_back(standard_error(logs));
  }
  study.fit = fit_loglog(xs, ys);
  study.fit.dispersion = disp;
  return study;
}

RateStudy rate_study(const StudyConfig& config) {
  const RegimeReport report = recurrent_report(config.spec);
  const auto grid = effective_n_grid(config);
  const auto reps = static_cast<std::size_t>(config.replicas);
  if (reps == 0) throw ConfigError("replicas must be >= 1");
  const double mean_nu = config.spec.mean_offspring();
  const auto k_max = static_cast<double>(config.spec.max_offspring());

  std::vector<RateSample> samples(grid.size() * reps);
  std::vector<std::uint64_t> rejected(samples.size());
  run_tasks(samples.size(), config.workers, [&](std::size_t t) {
    const std::size_t ni = t / reps, r = t % reps;
    Replica rep = make_replica(config, {kTagRate, ni, r});
    Philox rng(rep.walk_key);
    const WalkRun run = field_at_return(rep.tree, grid[ni], config.backend, rng, config);
    const GlSelection sel =
        gl_select(run.field, config.z, mean_nu, k_max, default_candidates(run.field));
    RateSample s;
    s.n = grid[ni];
    s.replica = static_cast<int>(r);
    s.alpha_hat = sel.chosen;
    s.error = sup_error(sel.cdf, config.spec);
    s.best_error = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < sel.candidates.size(); ++k) {
      const double e = sup_error(sel.family[k], config.spec);
      if (e < s.best_error) {
        s.best_error = e;
        s.best_alpha = sel.candidates[k];
      }
    }
    samples[t] = s;
    rejected[t] = rep.rejected;
  });

  RateStudy study;
  study.theory = -rate(report, config.gamma, Clock::ExcursionCount);
  study.samples = samples;
  for (auto r : rejected) study.rejection.rejected += r;
  study.rejection.accepted = samples.size();
  std::vector<double> xs, ys, disp;
  for (std::size_t ni = 0; ni < grid.size(); ++ni) {
    std::vector<double> errors;
    for (std::size_t r = 0; r < reps; ++r) errors.push_back(samples[ni * reps + r].error);
    RateRow row{grid[ni], mean(errors), standard_error(errors)};
    study.rows.push_back(row);
    xs.push_back(std::log(static_cast<double>(grid[ni])));
    ys.push_back(std::log(row.mean_error));
    disp.push_back(row.mean_error > 0.0 ? row.stderr_error / row.mean_error : 0.0);
  }
  if (grid.size() >= 2) {
    study.fit = fit_loglog(xs, ys);
    study.fit.dispersion = disp;
  }
  return study;
}

double sample_tilted_increment(const EnvSpec& spec, double t, Philox& rng) {
  if (!spec.psi_domain().contains(t)) {
    throw DomainError("tilt parameter outside the domain of psi");
  }
  const auto& fam = spec.increments();
  if (const auto* b = std::get_if<BetaRho>(&fam)) {
    // exp(-t omega) rho^{a-1}(1-rho)^{c-1} = rho^{a-t-1}(1-rho)^{c+t-1}
    return sample_increment(IncrementFamily{BetaRho{b->a - t, b->c + t}}, rng);
  }
  if (const auto* tp = std::get_if<TwoPoint>(&fam)) {
    const double hi = tp->p_hi * std::exp(-t * tp->omega_hi);
    const double lo = (1.0 - tp->p_hi) * std::exp(-t * tp->omega_lo);
    return rng.uniform() < hi / (hi + lo) ? tp->omega_hi : tp->omega_lo;
  }
  return std::get<Deterministic>(fam).omega;
}

std::vector<double> sample_tilted_walk(const EnvSpec& spec, double t, std::uint64_t len,
                                       Philox& rng) {
  std::vector<double> s(len + 1, 0.0);
  for (std::uint64_t k = 1; k <= len; ++k) s[k] = s[k - 1] + sample_tilted_increment(spec, t, rng);
  return s;
}

HsTailStudy hs_tail_study(const StudyConfig& config) {
  const RegimeReport report = classify(config.spec);
  if (report.regime != Regime::NullRecurrentFast || !report.kappa ||
      report.kappa->is_infinite()) {
    throw DomainError("the H^S tail study needs a fast regime with finite kappa");
  }
  if (config.samples < 100'000) throw ConfigError("hs_tail study needs samples >= 100000");
  const std::uint64_t chunks = (config.samples + kHsChunk - 1) / kHsChunk;
  std::vector<double> values(config.samples);
  run_tasks(chunks, config.workers, [&](std::size_t c) {
    Philox rng(derive_key(config.seed, {kTagHsTail, c}));
    const std::uint64_t begin = c * kHsChunk;
    const std::uint64_t end = std::min(config.samples, begin + kHsChunk);
    for (std::uint64_t i = begin; i < end; ++i) {
      double s = 0.0, h = 1.0;
      for (std::uint64_t k = 1; k <= config.ell; ++k) {
        s += sample_tilted_increment(config.spec, 1.0, rng);
        h += std::exp(-s);
      }
      values[i] = h;
    }
  });
  std::sort(values.begin(), values.end());

  HsTailStudy study;
  study.ell = config.ell;
  study.samples = config.samples;
  study.theory = -(report.kappa->value() - 1.0);
  study.min_value = values.front();
  constexpr int kPoints = 9;
  const double n = static_cast<double>(values.size());
  std::vector<double> xs, ys;
  for (int k = 0; k < kPoints; ++k) {
    const double frac = static_cast<double>(k) / (kPoints - 1);
    const double p = std::exp(std::log(kHsSurvivalHigh) +
                              frac * (std::log(kHsSurvivalLow) - std::log(kHsSurvivalHigh)));
    const auto tail = static_cast<std::size_t>(std::llround(p * n));
    const double m = values[values.size() - tail];
    // Exact empirical survival at m, ties included.
    const auto at_least = static_cast<double>(
        values.end() - std::lower_bound(values.begin(), values.end(), m));
    study.survival.push_back(at_least / n);
    study.quantiles.push_back(m);
    xs.push_back(std::log(m));
    ys.push_back(std::log(at_least / n));
  }
  study.fit = fit_loglog(xs, ys);
  return study;
}

std::pair<double, double> many_to_one_check(const EnvSpec& spec, int m, double t,
                                            const PathFunctional& f) {
  if (m < 1 || m > 5) throw DomainError("many-to-one enumeration supports depth 1..5");
  std::vector<double> marks, probs;
  if (const auto* tp = std::get_if<TwoPoint>(&spec.increments())) {
    marks = {tp->omega_hi, tp->omega_lo};
    probs = {tp->p_hi, 1.0 - tp->p_hi};
  } else if (const auto* d = std::get_if<Deterministic>(&spec.increments())) {
    marks = {d->omega};
    probs = {1.0};
  } else {
    throw DomainError("many-to-one enumeration needs finitely supported marks");
  }
  const auto& offspring = spec.offspring();
  const std::size_t kmax = offspring.size() - 1;
  if (std::pow(static_cast<double>(marks.size()), static_cast<double>(kmax)) > 4096.0) {
    throw DomainError("many-to-one enumeration: sibling mark tuples too many");
  }

  // Left side: per vertex, sum over nu = k and over the k-tuple of sibling
  // marks, then over each child.
  std::vector<double> path;
  std::function<double(int, double)> lhs = [&](int level, double v) -> double {
    double total = 0.0;
    for (std::size_t k = 1; k <= kmax; ++k) {
      if (offspring[k] == 0.0) continue;
      std::vector<std::size_t> tuple(k, 0);
      for (;;) {
        double prob = offspring[k];
        double inner = 0.0;
        for (std::size_t i = 0; i < k; ++i) prob *= probs[tuple[i]];
        for (std::size_t i = 0; i < k; ++i) {
          const double vc = v + marks[tuple[i]];
          path.push_back(vc);
          inner += level + 1 == m ? f(path) : lhs(level + 1, vc);
          path.pop_back();
        }
        total += prob * inner;
        std::size_t pos = 0;
        while (pos < k && ++tuple[pos] == marks.size()) tuple[pos++] = 0;
        if (pos == k) break;
      }
    }
    return total;
  };
  const double left = lhs(0, 0.0);

  // Right side: the walk with increments tilted by exp(-t omega).
  const double psi_t = psi(spec, t);
  double z = 0.0;
  for (std::size_t i = 0; i < marks.size(); ++i) z += probs[i] * std::exp(-t * marks[i]);
  std::vector<double> tilted(marks.size());
  for (std::size_t i = 0; i < marks.size(); ++i) tilted[i] = probs[i] * std::exp(-t * marks[i]) / z;
  double right = 0.0;
  std::vector<std::size_t> seq(static_cast<std::size_t>(m), 0);
  std::vector<double> s(static_cast<std::size_t>(m));
  for (;;) {
    double prob = 1.0, acc = 0.0;
    for (std::size_t k = 0; k < seq.size(); ++k) {
      prob *= tilted[seq[k]];
      acc += marks[seq[k]];
      s[k] = acc;
    }
    right += prob * std::exp(t * acc + psi_t * m) * f(s);
    std::size_t pos = 0;
    while (pos < seq.size() && ++seq[pos] == marks.size()) seq[pos++] = 0;
    if (pos == seq.size()) break;
  }
  return {left, right};
}

void write_exponent_samples_csv(std::ostream& out, const ExponentStudy& study) {
  out << "theta,n,replica,R,logR_over_logn\n";
  for (const auto& s : study.samples) {
    write_double(out, s.theta);
    out << ',' << s.n << ',' << s.replica << ',' << s.heavy_range << ',';
    write_double(out, s.log_ratio);
    out << '\n';
  }
}

void write_exponent_fits_csv(std::ostream& out, const ExponentStudy& study) {
  out << "theta,slope,stderr,xi_theory,abs_gap\n";
  for (const auto& f : study.fits) {
    write_double(out, f.theta);
    out << ',';
    write_double(out, f.fit.slope);
    out << ',';
    write_double(out, f.fit.slope_stderr);
    out << ',';
    write_double(out, f.xi_theory);
    out << ',';
    write_double(out, f.abs_gap());
    out << '\n';
  }
}

void write_return_time_csv(std::ostream& out, const ReturnTimeStudy& study) {
  out << "n,replica,T\n";
  for (const auto& s : study.samples) out << s.n << ',' << s.replica << ',' << s.return_time << '\n';
}

void write_rate_samples_csv(std::ostream& out, const RateStudy& study) {
  out << "n,replica,alpha_hat,error,best_alpha,best_error\n";
  for (const auto& s : study.samples) {
    out << s.n << ',' << s.replica << ',' << s.alpha_hat << ',';
    write_double(out, s.error);
    out << ',' << s.best_alpha << ',';
    write_double(out, s.best_error);
    out << '\n';
  }
}

void write_rate_rows_csv(std::ostream& out, const RateStudy& study) {
  out << "n,mean_error,stderr,slope,minus_r\n";
  for (const auto& r : study.rows) {
    out << r.n << ',';
    write_double(out, r.mean_error);
    out << ',';
    write_double(out, r.stderr_error);
    out << ',';
    write_double(out, study.fit.slope);
    out << ',';
    write_double(out, study.theory);
    out << '\n';
  }
}

void write_hs_tail_csv(std::ostream& out, const HsTailStudy& study) {
  out << "survival,m\n";
  for (std::size_t k = 0; k < study.survival.size(); ++k) {
    write_double(out, study.survival[k]);
    out << ',';
    write_double(out, study.quantiles[k]);
    out << '\n';
  }
}

nlohmann::json to_json(const StudyConfig& config) {
  nlohmann::json j;
  j["spec"] = to_json(config.spec);
  j["study"] = study_kind_name(config.kind);
  j["n"] = effective_n_grid(config);
  j["theta"] = config.theta_grid;
  j["replicas"] = config.replicas;
  j["seed"] = config.seed;
  j["backend"] = backend_name(config.backend);
  j["gamma"] = config.gamma;
  j["z"] = config.z;
  j["ell"] = config.ell;
  j["samples"] = config.samples;
  j["step_budget"] = config.step_budget;
  j["depth_limit"] = config.depth_limit ? nlohmann::json(*config.depth_limit) : nlohmann::json();
  j["node_cap"] = config.node_cap;
  j["censor_at_budget"] = config.censor_at_budget;
  return j;
}

nlohmann::json to_json(const SlopeFit& fit) {
  return {{"x", fit.x},
          {"y", fit.y},
          {"dispersion", fit.dispersion},
          {"slope", fit.slope},
          {"intercept", fit.intercept},
          {"slope_stderr", fit.slope_stderr},
          {"residual", fit.residual}};
}

}  // namespace heavyrange
