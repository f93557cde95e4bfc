#include "heavyrange/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "heavyrange/errors.hpp"

namespace heavyrange {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string format_real(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

double parse_real(const std::string& text) {
  std::string s = trim(text);
  double sign = 1.0;
  if (!s.empty() && s[0] == '-') {
    sign = -1.0;
    s = trim(s.substr(1));
  }
  if (auto v = parse_number(s)) return sign * *v;
  double coef = 1.0;
  if (const auto star = s.find('*'); star != std::string::npos) {
    const auto c = parse_number(trim(s.substr(0, star)));
    if (!c) throw ConfigError("cannot parse real '" + text + "'");
    coef = *c;
    s = trim(s.substr(star + 1));
  }
  if (s.size() > 5 && s.rfind("log(", 0) == 0 && s.back() == ')') {
    const auto x = parse_number(trim(s.substr(4, s.size() - 5)));
    if (x && *x > 0.0) return sign * coef * std::log(*x);
  }
  throw ConfigError("cannot parse real '" + text + "'");
}

ConfigFile ConfigFile::parse(std::istream& in, const std::string& source) {
  ConfigFile cfg;
  cfg.source_ = source;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    Entry e{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no};
    if (e.key.empty()) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    }
    for (const auto& prev : cfg.entries_) {
      if (prev.key == e.key) {
        throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + e.key +
                          "' (first set on line " + std::to_string(prev.line) + ")");
      }
    }
    cfg.entries_.push_back(std::move(e));
  }
  return cfg;
}

ConfigFile ConfigFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse(in, path.string());
}

bool ConfigFile::has(const std::string& key) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.key == key; });
}

const ConfigFile::Entry& ConfigFile::find(const std::string& key) const {
  for (const auto& e : entries_) {
    if (e.key == key) return e;
  }
  throw ConfigError(source_ + ": missing required key '" + key + "'");
}

void ConfigFile::fail(const Entry& e, const std::string& what) const {
  throw ConfigError(source_ + ":" + std::to_string(e.line) + ": " + e.key + ": " + what);
}

std::string ConfigFile::get_string(const std::string& key) const { return find(key).value; }

double ConfigFile::get_real(const std::string& key) const {
  const Entry& e = find(key);
  try {
    return parse_real(e.value);
  } catch (const ConfigError& err) {
    fail(e, err.what());
  }
}

std::vector<double> ConfigFile::get_reals(const std::string& key) const {
  const Entry& e = find(key);
  std::vector<double> out;
  try {
    for (const auto& item : split_list(e.value)) out.push_back(parse_real(item));
  } catch (const ConfigError& err) {
    fail(e, err.what());
  }
  if (out.empty()) fail(e, "empty list");
  return out;
}

std::uint64_t ConfigFile::get_uint(const std::string& key) const {
  const Entry& e = find(key);
  const auto values = get_uints(key);
  if (values.size() != 1) fail(e, "expected a single non-negative integer");
  return values.front();
}

std::vector<std::uint64_t> ConfigFile::get_uints(const std::string& key) const {
  const Entry& e = find(key);
  std::vector<std::uint64_t> out;
  for (const auto& item : split_list(e.value)) {
    if (item.empty() || !std::all_of(item.begin(), item.end(), ::isdigit)) {
      fail(e, "'" + item + "' is not a non-negative integer");
    }
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      fail(e, "'" + item + "' is out of range");
    }
  }
  if (out.empty()) fail(e, "empty list");
  return out;
}

bool ConfigFile::get_bool(const std::string& key) const {
  const Entry& e = find(key);
  if (e.value == "true") return true;
  if (e.value == "false") return false;
  fail(e, "expected true or false");
}

void ConfigFile::check_keys(const std::set<std::string>& allowed) const {
  for (const auto& e : entries_) {
    if (!allowed.count(e.key)) fail(e, "unknown key");
  }
}

const std::set<std::string>& env_spec_keys() {
  static const std::set<std::string> keys{"offspring", "family", "a",     "c",           "omega_hi",
                                          "omega_lo",  "p_hi",   "omega", "iid_children"};
  return keys;
}

EnvSpec env_spec_from_config(const ConfigFile& config) {
  std::vector<double> offspring;
  const std::string off = config.get_string("offspring");
  if (off.rfind("fixed", 0) == 0) {
    const std::string k = trim(off.substr(5));
    if (k.empty() || !std::all_of(k.begin(), k.end(), ::isdigit) || k.size() > 6) {
      throw ConfigError(config.source() + ": offspring: expected 'fixed K'");
    }
    offspring = fixed_offspring(std::stoi(k));
  } else {
    offspring = config.get_reals("offspring");
  }

  const std::string family = config.get_string("family");
  IncrementFamily inc;
  std::set<std::string> needed;
  if (family == "beta_rho") {
    inc = BetaRho{config.get_real("a"), config.get_real("c")};
    needed = {"a", "c"};
  } else if (family == "two_point") {
    inc = TwoPoint{config.get_real("omega_hi"), config.get_real("omega_lo"),
                   config.get_real("p_hi")};
    needed = {"omega_hi", "omega_lo", "p_hi"};
  } else if (family == "deterministic") {
    inc = Deterministic{config.get_real("omega")};
    needed = {"omega"};
  } else {
    throw ConfigError(config.source() + ": family: unknown family '" + family +
                      "' (expected beta_rho, two_point or deterministic)");
  }
  for (const char* k : {"a", "c", "omega_hi", "omega_lo", "p_hi", "omega"}) {
    if (config.has(k) && !needed.count(k)) {
      throw ConfigError(config.source() + ": key '" + k + "' does not apply to family " + family);
    }
  }
  const bool iid = config.has("iid_children") ? config.get_bool("iid_children") : true;
  try {
    return EnvSpec(std::move(offspring), inc, iid);
  } catch (const DomainError& e) {
    throw ConfigError(config.source() + ": invalid environment: " + e.what());
  }
}

EnvSpec load_env_spec(const std::filesystem::path& path) {
  const ConfigFile cfg = ConfigFile::load(path);
  cfg.check_keys(env_spec_keys());
  return env_spec_from_config(cfg);
}

std::string env_spec_to_config(const EnvSpec& spec) {
  std::ostringstream os;
  os << "offspring = ";
  const auto& p = spec.offspring();
  for (std::size_t k = 0; k < p.size(); ++k) os << (k ? ", " : "") << format_real(p[k]);
  os << '\n';
  std::visit(
      [&os](const auto& f) {
        using T = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<T, BetaRho>) {
          os << "family = beta_rho\na = " << format_real(f.a) << "\nc = " << format_real(f.c)
             << '\n';
        } else if constexpr (std::is_same_v<T, TwoPoint>) {
          os << "family = two_point\nomega_hi = " << format_real(f.omega_hi)
             << "\nomega_lo = " << format_real(f.omega_lo) << "\np_hi = " << format_real(f.p_hi)
             << '\n';
        } else {
          os << "family = deterministic\nomega = " << format_real(f.omega) << '\n';
        }
      },
      spec.increments());
  os << "iid_children = " << (spec.iid_children() ? "true" : "false") << '\n';
  return os.str();
}

StudyConfig study_from_config(const ConfigFile& config) {
  std::set<std::string> allowed = env_spec_keys();
  allowed.insert({"study", "n", "n_pow2", "theta", "replicas", "seed", "backend", "gamma", "z",
                  "ell", "samples", "step_budget", "depth_limit", "node_cap",
                  "censor_at_budget"});
  config.check_keys(allowed);

  StudyConfig s;
  s.spec = env_spec_from_config(config);
  s.kind = parse_study_kind(config.get_string("study"));
  if (config.has("n") && config.has("n_pow2")) {
    throw ConfigError(config.source() + ": set either n or n_pow2, not both");
  }
  if (config.has("n")) s.n_grid = config.get_uints("n");
  if (config.has("n_pow2")) {
    const std::string r = config.get_string("n_pow2");
    const auto dots = r.find("..");
    int lo = -1, hi = -1;
    try {
      if (dots != std::string::npos) {
        lo = std::stoi(r.substr(0, dots));
        hi = std::stoi(r.substr(dots + 2));
      }
    } catch (const std::exception&) {
    }
    if (lo < 0 || hi < lo || hi > 40) {
      throw ConfigError(config.source() + ": n_pow2: expected 'lo..hi' with 0 <= lo <= hi <= 40");
    }
    for (int k = lo; k <= hi; ++k) s.n_grid.push_back(std::uint64_t{1} << k);
  }
  for (auto n : s.n_grid) {
    if (n == 0) throw ConfigError(config.source() + ": n: values must be >= 1");
  }
  if (config.has("theta")) s.theta_grid = config.get_reals("theta");
  for (double t : s.theta_grid) {
    if (t < 0.0) throw ConfigError(config.source() + ": theta: values must be >= 0");
  }
  if (config.has("replicas")) {
    const auto r = config.get_uint("replicas");
    if (r == 0 || r > 1'000'000) throw ConfigError(config.source() + ": replicas: out of range");
    s.replicas = static_cast<int>(r);
  }
  if (config.has("seed")) s.seed = config.get_uint("seed");
  if (config.has("backend")) s.backend = parse_backend(config.get_string("backend"));
  if (config.has("gamma")) s.gamma = config.get_real("gamma");
  if (!(s.gamma > 0.0 && s.gamma <= 2.0)) {
    throw ConfigError(config.source() + ": gamma: must lie in (0, 2]");
  }
  if (config.has("z")) s.z = config.get_real("z");
  if (!(s.z > 0.0)) throw ConfigError(config.source() + ": z: must be > 0");
  if (config.has("ell")) s.ell = config.get_uint("ell");
  if (config.has("samples")) s.samples = config.get_uint("samples");
  if (config.has("step_budget")) s.step_budget = config.get_uint("step_budget");
  if (config.has("depth_limit")) {
    const auto d = config.get_uint("depth_limit");
    if (d > 0xFFFFFFFEull) throw ConfigError(config.source() + ": depth_limit: out of range");
    s.depth_limit = static_cast<std::uint32_t>(d);
  }
  if (config.has("node_cap")) s.node_cap = config.get_uint("node_cap");
  if (config.has("censor_at_budget")) s.censor_at_budget = config.get_bool("censor_at_budget");
  return s;
}

StudyConfig load_study(const std::filesystem::path& path) {
  return study_from_config(ConfigFile::load(path));
}

}  // namespace heavyrange
