#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heavyrange/env_model.hpp"
#include "heavyrange/experiments.hpp"

namespace heavyrange {

// Plain-text configuration: one `key = value` per line, `#` starts a comment.
// Reals accept a number or [-][coef*]log(x), e.g. `2*log(2)` or `-log(2)`.
// Lists are comma separated.  Every diagnostic names the source and line.
class ConfigFile {
 public:
  static ConfigFile parse(std::istream& in, const std::string& source = "<input>");
  static ConfigFile load(const std::filesystem::path& path);

  const std::string& source() const { return source_; }
  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  double get_real(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::vector<std::uint64_t> get_uints(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  // Rejects the first key not in `allowed`.
  void check_keys(const std::set<std::string>& allowed) const;

 private:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;
  };
  const Entry& find(const std::string& key) const;
  [[noreturn]] void fail(const Entry& e, const std::string& what) const;

  std::string source_;
  std::vector<Entry> entries_;
};

// Parses a real with the grammar above; throws ConfigError.
double parse_real(const std::string& text);

// Keys: offspring (`fixed K` or probabilities of 0..K), family
// (beta_rho | two_point | deterministic), a, c, omega_hi, omega_lo, p_hi,
// omega, iid_children.
const std::set<std::string>& env_spec_keys();
EnvSpec env_spec_from_config(const ConfigFile& config);
EnvSpec load_env_spec(const std::filesystem::path& path);
// Inverse of env_spec_from_config; reals are written with 17 digits.
std::string env_spec_to_config(const EnvSpec& spec);

// Study files hold the environment keys plus: study, n, n_pow2 (`lo..hi`),
// theta, replicas, seed, backend, gamma, z, ell, samples, step_budget,
// depth_limit, node_cap, censor_at_budget.
StudyConfig study_from_config(const ConfigFile& config);
StudyConfig load_study(const std::filesystem::path& path);

}  // namespace heavyrange
