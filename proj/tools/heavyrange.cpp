// heavyrange: command-line front end for the simulator, the estimator and
// the Monte Carlo studies.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "heavyrange/config.hpp"
#include "heavyrange/env_model.hpp"
#include "heavyrange/errors.hpp"
#include "heavyrange/estimator.hpp"
#include "heavyrange/experiments.hpp"
#include "heavyrange/localtime.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace heavyrange;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitResources = 3;
constexpr int kExitEmptyCandidates = 4;

constexpr std::uint64_t kTagSimulate = 6;

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
}

fs::path prepare_out_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

struct Options {
  std::string spec_file;
  std::string study_file;
  std::string field_file;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::optional<std::string> backend;
  double z = 3.0;
  double gamma = 2.0;
  std::optional<std::uint64_t> budget;
  std::uint64_t n = 0;
  std::optional<std::uint32_t> depth_limit;
  std::optional<double> mean_nu;
  std::optional<double> max_offspring;
};

json manifest_base(const std::string& command, std::uint64_t seed, const std::string& started) {
  json m;
  m["command"] = command;
  m["tool"] = "heavyrange";
  m["version"] = HEAVYRANGE_VERSION;
  m["master_seed"] = seed;
  m["started"] = started;
  return m;
}

int cmd_classify(const Options& o) {
  const EnvSpec spec = load_env_spec(o.spec_file);
  const RegimeReport report = classify(spec);
  json j;
  j["spec"] = to_json(spec);
  j["report"] = to_json(report);
  if (is_recurrent(report.regime)) {
    json table = json::array();
    for (double theta : {0.0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 1.0}) {
      json row{{"theta", theta}, {"xi", xi(report, theta)}, {"xi_tilde", xi_tilde(report, theta)}};
      if (xi_is_formula_limit(report, theta)) row["xi_formula_limit"] = true;
      table.push_back(row);
    }
    j["exponents"] = table;
    j["rate"] = {{"gamma", o.gamma},
                 {"excursion_count", rate(report, o.gamma, Clock::ExcursionCount)},
                 {"return_time", rate(report, o.gamma, Clock::ReturnTime)}};
  }
  std::cout << j.dump(2) << '\n';
  return kExitOk;
}

StudyConfig single_run_config(const EnvSpec& spec, const Options& o) {
  StudyConfig c;
  c.spec = spec;
  c.seed = o.seed.value_or(1);
  if (o.backend) c.backend = parse_backend(*o.backend);
  if (o.budget) c.step_budget = *o.budget;
  c.depth_limit = o.depth_limit;
  return c;
}

int cmd_simulate(const Options& o) {
  const std::string started = utc_now();
  if (o.n == 0) throw ConfigError("--n must be >= 1");
  const EnvSpec spec = load_env_spec(o.spec_file);
  const StudyConfig c = single_run_config(spec, o);
  Replica rep = make_replica(c, {kTagSimulate, o.n});
  Philox rng(rep.walk_key);
  const WalkRun run = field_at_return(rep.tree, o.n, c.backend, rng, c);

  json summary;
  summary["n"] = o.n;
  summary["backend"] = backend_name(c.backend);
  summary["N_e"] = run.field.empty() ? 0 : run.field.entries().front().count;
  summary["return_time"] = run.steps;
  summary["max_generation"] = run.max_generation;
  summary["extinct_trees_rejected"] = rep.rejected;
  json ranges = json::array();
  for (std::uint64_t a = 1; a <= run.field.max_count(); a *= 2) {
    ranges.push_back({{"alpha", a}, {"R", heavy_range(run.field, a)}});
  }
  summary["heavy_range"] = ranges;

  std::ostringstream field_csv;
  write_field_csv(field_csv, run.field);
  if (o.out_dir.empty()) {
    std::cout << summary.dump(2) << '\n';
    return kExitOk;
  }
  const fs::path dir = prepare_out_dir(o.out_dir);
  write_file(dir / "field.csv", field_csv.str());
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  json m = manifest_base("simulate", c.seed, started);
  m["spec"] = to_json(spec);
  m["n"] = o.n;
  m["backend"] = backend_name(c.backend);
  m["outputs"] = {"field.csv", "summary.json"};
  m["finished"] = utc_now();
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_estimate(const Options& o) {
  const std::string started = utc_now();
  std::optional<EnvSpec> spec;
  if (!o.spec_file.empty()) spec = load_env_spec(o.spec_file);

  LocalTimeField field;
  if (!o.field_file.empty()) {
    std::ifstream in(o.field_file);
    if (!in) throw ConfigError("cannot open field file '" + o.field_file + "'");
    field = read_field_csv(in);
  } else {
    if (!spec) throw ConfigError("estimate needs --field or --spec");
    if (o.n == 0) throw ConfigError("estimating from a simulated field needs --n >= 1");
    const StudyConfig c = single_run_config(*spec, o);
    Replica rep = make_replica(c, {kTagSimulate, o.n});
    Philox rng(rep.walk_key);
    field = field_at_return(rep.tree, o.n, c.backend, rng, c).field;
  }

  const double mean_nu = o.mean_nu ? *o.mean_nu : spec ? spec->mean_offspring() : 0.0;
  const double k_max =
      o.max_offspring ? *o.max_offspring : spec ? static_cast<double>(spec->max_offspring()) : 0.0;
  if (!(mean_nu > 1.0) || !(k_max >= mean_nu)) {
    throw ConfigError("E[nu] and K are needed: pass --spec or --mean-nu and --K (K >= E[nu] > 1)");
  }
  const GlSelection sel = gl_select(field, o.z, mean_nu, k_max, default_candidates(field));
  json diag = to_json(sel);
  if (spec) diag["sup_error"] = sup_error(sel.cdf, *spec);

  std::ostringstream csv;
  write_cdf_csv(csv, sel.cdf, spec ? &*spec : nullptr);
  if (o.out_dir.empty()) {
    std::cout << csv.str();
    std::cerr << diag.dump(2) << '\n';
    return kExitOk;
  }
  const fs::path dir = prepare_out_dir(o.out_dir);
  write_file(dir / "cdf.csv", csv.str());
  write_file(dir / "gl.json", diag.dump(2) + "\n");
  json m = manifest_base("estimate", o.seed.value_or(1), started);
  if (spec) m["spec"] = to_json(*spec);
  m["field"] = o.field_file.empty() ? json() : json(o.field_file);
  m["z"] = o.z;
  m["outputs"] = {"cdf.csv", "gl.json"};
  m["finished"] = utc_now();
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  std::cout << diag.dump(2) << '\n';
  return kExitOk;
}

int cmd_study(const Options& o) {
  const std::string started = utc_now();
  StudyConfig c = load_study(o.study_file);
  if (o.seed) c.seed = *o.seed;
  if (o.backend) c.backend = parse_backend(*o.backend);
  if (o.budget) c.step_budget = *o.budget;
  if (o.depth_limit) c.depth_limit = o.depth_limit;
  c.workers = o.workers;
  if (o.out_dir.empty()) throw ConfigError("study needs --out-dir");
  const fs::path dir = prepare_out_dir(o.out_dir);

  json m = manifest_base("study", c.seed, started);
  m["config"] = to_json(c);
  m["workers"] = c.workers;
  json outputs = json::array();
  json result;
  const auto emit = [&](const std::string& name, const auto& writer) {
    std::ostringstream os;
    writer(os);
    write_file(dir / name, os.str());
    outputs.push_back(name);
  };
  RejectionStats rejection;
  std::uint64_t censored = 0;

  switch (c.kind) {
    case StudyKind::Exponent:
    case StudyKind::DeterministicTime: {
      const ExponentStudy s = c.kind == StudyKind::Exponent ? exponent_study(c)
                                                             : deterministic_time_study(c);
      emit("samples.csv", [&](std::ostream& os) { write_exponent_samples_csv(os, s); });
      emit("fits.csv", [&](std::ostream& os) { write_exponent_fits_csv(os, s); });
      json fits = json::array();
      for (const auto& f : s.fits) {
        fits.push_back({{"theta", f.theta},
                        {"fit", to_json(f.fit)},
                        {"theory", f.xi_theory},
                        {"formula_limit", f.formula_limit}});
      }
      result["fits"] = fits;
      result["censored"] = s.censored;
      rejection = s.rejection;
      censored = s.censored;
      break;
    }
    case StudyKind::ReturnTime: {
      const ReturnTimeStudy s = return_time_study(c);
      emit("return_time.csv", [&](std::ostream& os) { write_return_time_csv(os, s); });
      result = {{"fit", to_json(s.fit)}, {"theory", s.theory}, {"censored", s.censored}};
      rejection = s.rejection;
      censored = s.censored;
      break;
    }
    case StudyKind::Rate: {
      const RateStudy s = rate_study(c);
      emit("rate_samples.csv", [&](std::ostream& os) { write_rate_samples_csv(os, s); });
      emit("rate.csv", [&](std::ostream& os) { write_rate_rows_csv(os, s); });
      result = {{"fit", to_json(s.fit)}, {"theory", s.theory}};
      rejection = s.rejection;
      break;
    }
    case StudyKind::HsTail: {
      const HsTailStudy s = hs_tail_study(c);
      emit("hs_tail.csv", [&](std::ostream& os) { write_hs_tail_csv(os, s); });
      result = {{"fit", to_json(s.fit)}, {"theory", s.theory}, {"min_value", s.min_value}};
      break;
    }
  }
  m["rejection"] = {{"accepted", rejection.accepted},
                    {"rejected", rejection.rejected},
                    {"rate", rejection.rate()}};
  m["censored_replicas"] = censored;
  m["result"] = result;
  m["outputs"] = outputs;
  m["finished"] = utc_now();
  write_file(dir / "manifest.json", m.dump(2) + "\n");
  std::cout << result.dump(2) << '\n';
  return kExitOk;
}

int report(const std::string& tag, const std::string& what, int code) {
  std::cerr << "error[" << tag << "]: " << what << '\n';
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random walks in random environment on Galton-Watson trees: simulation, "
               "heavy-range studies and c.d.f. estimation"};
  app.require_subcommand(1);
  Options o;

  auto* classify_cmd = app.add_subcommand("classify", "Regime, t0, kappa, exponents and rates");
  classify_cmd->add_option("--spec", o.spec_file, "Environment file")->required();
  classify_cmd->add_option("--gamma", o.gamma, "Holder exponent for the rate")
      ->check(CLI::Range(0.0, 2.0));

  const auto add_run_flags = [&o](CLI::App* cmd) {
    cmd->add_option("--seed", o.seed, "Master seed");
    cmd->add_option("--backend", o.backend, "step or branching")
        ->check(CLI::IsMember({"step", "branching"}));
    cmd->add_option("--budget", o.budget, "Step budget of the step backend");
    cmd->add_option("--depth-limit", o.depth_limit, "Treat vertices at this depth as leaves");
    cmd->add_option("--out-dir", o.out_dir, "Output directory");
  };

  auto* simulate_cmd = app.add_subcommand("simulate", "Local-time field at the n-th return");
  simulate_cmd->add_option("--spec", o.spec_file, "Environment file")->required();
  simulate_cmd->add_option("--n", o.n, "Number of excursions")->required();
  add_run_flags(simulate_cmd);

  auto* estimate_cmd = app.add_subcommand("estimate", "Adaptive estimate of the c.d.f. of rho");
  estimate_cmd->add_option("--spec", o.spec_file, "Environment file (true c.d.f., E[nu], K)");
  estimate_cmd->add_option("--field", o.field_file, "Stored field (CSV from simulate)");
  estimate_cmd->add_option("--n", o.n, "Simulate a field with n excursions");
  estimate_cmd->add_option("--z", o.z, "GL threshold z")->check(CLI::PositiveNumber);
  estimate_cmd->add_option("--mean-nu", o.mean_nu, "E[nu] when no spec is given");
  estimate_cmd->add_option("--K", o.max_offspring, "Offspring bound when no spec is given");
  add_run_flags(estimate_cmd);

  auto* study_cmd = app.add_subcommand("study", "Replicated Monte Carlo study");
  study_cmd->add_option("--study", o.study_file, "Study file")->required();
  study_cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  add_run_flags(study_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("usage", e.what(), kExitConfig);
  }

  try {
    if (*classify_cmd) return cmd_classify(o);
    if (*simulate_cmd) return cmd_simulate(o);
    if (*estimate_cmd) return cmd_estimate(o);
    if (*study_cmd) return cmd_study(o);
  } catch (const ConfigError& e) {
    return report(e.tag(), e.what(), kExitConfig);
  } catch (const CapacityExceeded& e) {
    return report(e.tag(), e.what(), kExitResources);
  } catch (const StepBudgetExceeded& e) {
    return report(e.tag(), e.what(), kExitResources);
  } catch (const EmptyCandidates& e) {
    return report(e.tag(), e.what(), kExitEmptyCandidates);
  } catch (const Error& e) {
    return report(e.tag(), e.what(), kExitFailure);
  } catch (const std::exception& e) {
    return report("internal", e.what(), kExitFailure);
  }
  return kExitFailure;
}
