#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"

#include "heavyrange/env_model.hpp"
#include "heavyrange/localtime.hpp"

namespace heavyrange {

// Binomial coefficient helpers; C(n, k) = 0 for k > n.
double log_binomial(std::uint64_t n, std::uint64_t k);
// Exact value; requires n <= 120 so that the result fits in 128 bits.
unsigned __int128 binomial_exact(std::uint64_t n, std::uint64_t k);

// Moment kernel Phi_{alpha,beta}(i, j)
//   = 1{i >= alpha+1, j >= beta} C(i+j-(alpha+1+beta), i-(alpha+1)) / C(i+j-1, j).
// Given a parent count i >= alpha+1, E[Phi(i, N_child)] = rho^alpha (1-rho)^beta.
double phi(std::uint64_t alpha, std::uint64_t beta, std::uint64_t i, std::uint64_t j);

// C.d.f. kernel psi^l_alpha(i, j)
//   = 1{i >= alpha} / C(i-1+j, alpha-1) * sum_{k<l} C(i-1, k) C(j, alpha-1-k),
// i.e. the c.d.f. at l-1 of a hypergeometric law.  0 <= l <= alpha.
double psi_l(std::uint64_t alpha, std::uint64_t l, std::uint64_t i, std::uint64_t j);

// psi^l_alpha(i, j) for every l = 0..alpha at once.
std::vector<double> psi_row(std::uint64_t alpha, std::uint64_t i, std::uint64_t j);

struct MomentEstimate {
  std::uint64_t alpha = 0;
  std::uint64_t beta = 0;
  double value = 0.0;
  std::uint64_t support = 0;  // R_{alpha+1}
};

MomentEstimate estimate_moment(const LocalTimeField& field, std::uint64_t alpha, std::uint64_t beta,
                               double mean_nu);

// m^{alpha,beta} = E[rho^alpha (1-rho)^beta] for the spec's increment family.
double moment_oracle(const EnvSpec& spec, int alpha, int beta);

// Right-continuous step function on [0,1]; value v_l on [l/alpha, (l+1)/alpha).
class EmpiricalCdf {
 public:
  EmpiricalCdf() = default;
  EmpiricalCdf(std::uint64_t alpha, std::vector<double> values);

  std::uint64_t alpha() const { return alpha_; }
  const std::vector<double>& values() const { return values_; }
  double at_grid(std::uint64_t l) const { return values_.at(l); }
  double operator()(double u) const;

 private:
  std::uint64_t alpha_ = 0;
  std::vector<double> values_;
};

// F_hat^alpha from the pairs (N_{x*}, N_x) with N_{x*} >= alpha.  An all-zero
// c.d.f. is returned when R_alpha = 0.
EmpiricalCdf estimate_cdf(const LocalTimeField& field, std::uint64_t alpha, double mean_nu);

// F^alpha(l/alpha) = sum_{k<l} C(alpha-1, k) m^{k, alpha-1-k}.
EmpiricalCdf f_alpha_from_moments(std::uint64_t alpha,
                                  const std::function<double(int, int)>& moment);

// Exact sup distance between two step c.d.f.s on the merged grid.
double sup_distance(const EmpiricalCdf& a, const EmpiricalCdf& b);
// Exact sup distance to the c.d.f. of rho under `spec`.
double sup_error(const EmpiricalCdf& cdf, const EnvSpec& spec);

struct GlSelection {
  double z = 0.0;
  std::vector<std::uint64_t> candidates;
  std::vector<std::uint64_t> heavy_range;  // R_alpha per candidate
  std::vector<double> majorant;            // B_n(alpha)
  std::vector<double> delta;               // Delta(alpha)
  std::uint64_t chosen = 0;
  EmpiricalCdf cdf;
  std::vector<EmpiricalCdf> family;  // F_hat^alpha per candidate
};

// {1, 2, 4, ..., 2^floor(log2 max N)}; empty when the field has no visits.
std::vector<std::uint64_t> default_candidates(const LocalTimeField& field);

// Goldenshluger-Lepski selection over the candidate levels.  Candidates with
// R_alpha = 0 are dropped; throws EmptyCandidates when none remain.  Ties in
// the argmin go to the smallest alpha.
GlSelection gl_select(const LocalTimeField& field, double z, double mean_nu, double max_offspring,
                      std::vector<std::uint64_t> candidates);

nlohmann::json to_json(const EmpiricalCdf& cdf);
nlohmann::json to_json(const GlSelection& selection);
// Columns u,F_hat,F_true; F_true is left empty without a spec.
void write_cdf_csv(std::ostream& out, const EmpiricalCdf& cdf, const EnvSpec* spec = nullptr);

}  // namespace heavyrange
