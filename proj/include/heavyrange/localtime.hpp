#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heavyrange/rng.hpp"
#include "heavyrange/tree_env.hpp"

namespace heavyrange {

enum class Backend { Step, Branching };

std::string backend_name(Backend backend);
Backend parse_backend(const std::string& name);

inline constexpr std::uint32_t kNoEntry = 0xFFFFFFFFu;

struct FieldEntry {
  NodeId node = 0;
  std::uint32_t parent = kNoEntry;  // entry index of the parent; kNoEntry for the root
  std::uint32_t first_child = kNoEntry;
  std::uint32_t num_children = 0;  // nu_x; meaningful when `expanded`
  std::uint32_t depth = 0;
  std::uint64_t count = 0;  // N_x, downward crossings of (x*, x)
  double omega = 0.0;
  double potential = 0.0;
  bool expanded = false;  // all children of this vertex are recorded
};

// Edge local times on the visited part of the tree.  Entries are in
// breadth-first order and siblings are contiguous.  Every vertex with a
// positive count is expanded, i.e. all of its children appear (possibly with
// count 0), unless it sits on the depth limit of a truncated field.
class LocalTimeField {
 public:
  LocalTimeField() = default;
  LocalTimeField(std::uint64_t n, Backend backend, std::optional<std::uint32_t> depth_limit = {})
      : n_(n), backend_(backend), depth_limit_(depth_limit) {}

  std::uint64_t n() const { return n_; }
  Backend backend() const { return backend_; }
  // Fields sampled with a depth limit only record vertices up to that depth.
  std::optional<std::uint32_t> depth_limit() const { return depth_limit_; }
  // Set when sampling stopped at FieldOptions::count_limit.
  bool incomplete() const { return incomplete_; }
  void mark_incomplete() { incomplete_ = true; }

  const std::vector<FieldEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::span<const FieldEntry> children_of(const FieldEntry& e) const;

  std::uint64_t total_count() const;
  std::uint64_t max_count() const;
  // Largest depth with a positive count.
  std::uint32_t max_generation() const;
  // Count of a tree vertex, 0 when it is not recorded.  Linear scan.
  std::uint64_t count_of(NodeId node) const;

  // Appends an entry; returns its index.
  std::uint32_t push(const FieldEntry& entry);
  FieldEntry& entry(std::uint32_t index) { return entries_[index]; }

 private:
  std::uint64_t n_ = 0;
  Backend backend_ = Backend::Branching;
  std::optional<std::uint32_t> depth_limit_;
  bool incomplete_ = false;
  std::vector<FieldEntry> entries_;
};

struct FieldOptions {
  // Vertices at this depth are treated as leaves.  The law of the counts at
  // depth <= limit is unchanged in recurrent environments.
  std::optional<std::uint32_t> depth_limit;
  // Stop as soon as the total count exceeds this value; the returned field
  // is then marked incomplete and must only be discarded.
  std::optional<std::uint64_t> count_limit;
};

// Builds a field from dense per-node counts (indexed by NodeId) by breadth
// first traversal from the root.  Vertices with a positive count are expanded;
// `root_stood` also expands the root when its count is zero (walks started at
// the root).
LocalTimeField field_from_counts(const EnvTree& tree, std::span<const std::uint64_t> counts,
                                 std::uint64_t n, Backend backend, bool root_stood = false,
                                 std::optional<std::uint32_t> depth_limit = {});

// Samples the edge local times at the n-th return to e* without simulating
// steps.  Given N_x = i > 0, draws Lambda ~ Gamma(i, 1) and each child count
// as Poisson(Lambda * exp(-omega_child)); the sibling counts are then jointly
// negative multinomial with NegBin(i, rho_child) marginals.
LocalTimeField sample_field(EnvTree& tree, std::uint64_t n, Philox& rng,
                            const FieldOptions& options = {});

// Statistics of a field drawn as in sample_field, one generation at a time
// and without storing the tree.  The stream `rng` is consumed in the same
// order as sample_field, so on the same tree and stream the results agree
// with those of the stored field.  Memory is bounded by the widest
// generation.  Once more than `node_budget` children are drawn, sampling
// throws CapacityExceeded, or with `censor` set stops and marks the summary
// truncated.  Counts of a truncated summary are lower bounds.
struct FieldSummary {
  std::vector<std::uint64_t> heavy_ranges;  // one per requested level
  std::uint64_t total_count = 0;
  std::uint64_t nodes = 0;  // children drawn
  std::uint32_t max_generation = 0;
  bool incomplete = false;
  bool truncated = false;
};
FieldSummary summarize_field(const EnvTree& tree, std::uint64_t n, Philox& rng,
                             std::span<const std::uint64_t> levels,
                             const FieldOptions& options = {},
                             std::size_t node_budget = kDefaultNodeCap, bool censor = false);

// R_alpha = #{x : N_x >= alpha}.
std::uint64_t heavy_range(const LocalTimeField& field, std::uint64_t alpha);
// Heavy range for several levels in one pass; `alphas` need not be sorted.
std::vector<std::uint64_t> heavy_ranges(const LocalTimeField& field,
                                        std::span<const std::uint64_t> alphas);

// T^(n) = 2 * sum_x N_x.
std::uint64_t return_time(const LocalTimeField& field);

// Number of excursions (out of n) that hit x: Binomial(n, a_x).
std::uint64_t excursion_hits(const EnvTree& tree, std::uint64_t n, NodeId x, Philox& rng);

// Mean matrix of the multi-type Galton-Watson tree formed by the local times:
// m_{i,j} = C(i-1+j, j) E[nu] E[rho^i (1-rho)^j].
double mean_matrix(const EnvSpec& spec, std::uint64_t i, std::uint64_t j);

// Sums independent fields sampled on the same tree (e.g. single excursions).
class FieldAccumulator {
 public:
  explicit FieldAccumulator(const EnvTree& tree) : tree_(&tree) {}
  void add(const LocalTimeField& field);
  std::uint64_t total_count() const { return total_; }
  LocalTimeField build(Backend backend) const;

 private:
  const EnvTree* tree_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t n_ = 0;
  std::uint64_t total_ = 0;
};

// Columnar CSV dump: node_id,parent_id,depth,omega,V,N.
void write_field_csv(std::ostream& out, const LocalTimeField& field);
// Reads a dump back.  Child lists are reconstructed from parent ids; vertices
// with a positive count are marked expanded.
LocalTimeField read_field_csv(std::istream& in, Backend backend = Backend::Branching);

}  // namespace heavyrange
