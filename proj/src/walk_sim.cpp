#include "heavyrange/walk_sim.hpp"

#include "heavyrange/errors.hpp"

namespace heavyrange {

NodeId step(EnvTree& tree, NodeId current, Philox& rng, std::optional<std::uint32_t> depth_limit) {
  if (current == kRootParent) return kRoot;
  if (depth_limit && tree.depth(current) >= *depth_limit) return tree.parent(current);
  const ChildRange kids = tree.children(current);
  if (kids.empty()) return tree.parent(current);
  double u = rng.uniform() * (1.0 + tree.child_weight_sum(current));
  if (u < 1.0) return tree.parent(current);
  u -= 1.0;
  for (NodeId c : kids) {
    u -= tree.weight(c);
    if (u < 0.0) return c;
  }
  return kids.first + kids.count - 1;
}

namespace {

class Walker {
 public:
  Walker(EnvTree& tree, Philox& rng, const WalkOptions& options)
      : tree_(tree), rng_(rng), options_(options), counts_(tree.size(), 0) {}

  // Moves once; records a downward crossing when the walk enters a child.
  NodeId advance(NodeId x) {
    if (steps_ == options_.step_budget) {
      throw StepBudgetExceeded("walk exceeded its budget of " +
                               std::to_string(options_.step_budget) + " steps");
    }
    const NodeId next = step(tree_, x, rng_, options_.depth_limit);
    ++steps_;
    if (next != kRootParent && tree_.parent(next) == x) {
      if (next >= counts_.size()) counts_.resize(tree_.size(), 0);
      ++counts_[next];
    }
    return next;
  }

  std::uint64_t steps() const { return steps_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  EnvTree& tree_;
  Philox& rng_;
  const WalkOptions& options_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t steps_ = 0;
};

}  // namespace

WalkRun run_excursions(EnvTree& tree, std::uint64_t n, Philox& rng, const WalkOptions& options) {
  if (n == 0) throw DomainError("run_excursions needs n >= 1");
  Walker walker(tree, rng, options);
  WalkRun run;
  NodeId x = kRootParent;
  for (std::uint64_t k = 0; k < n; ++k) {
    const std::uint64_t start = walker.steps();
    do {
      x = walker.advance(x);
    } while (x != kRootParent);
    if (options.record_excursion_steps) run.excursion_steps.push_back(walker.steps() - start);
  }
  run.steps = walker.steps();
  run.n_excursions = n;
  run.field = field_from_counts(tree, walker.counts(), n, Backend::Step, false, options.depth_limit);
  run.max_generation = run.field.max_generation();
  return run;
}

WalkRun run_steps(EnvTree& tree, std::uint64_t n_steps, Philox& rng, const WalkOptions& options) {
  Walker walker(tree, rng, options);
  WalkRun run;
  NodeId x = kRoot;
  std::uint64_t start = 0;
  for (std::uint64_t k = 0; k < n_steps; ++k) {
    x = walker.advance(x);
    if (x == kRootParent) {
      ++run.n_excursions;
      if (options.record_excursion_steps) run.excursion_steps.push_back(walker.steps() - start);
      start = walker.steps();
    }
  }
  run.steps = walker.steps();
  const auto& counts = walker.counts();
  const std::uint64_t root_count = counts.size() > kRoot ? counts[kRoot] : 0;
  if (n_steps > 0) {
    run.field = field_from_counts(tree, counts, root_count, Backend::Step, true, options.depth_limit);
  } else {
    run.field = LocalTimeField(0, Backend::Step, options.depth_limit);
  }
  run.max_generation = run.field.max_generation();
  return run;
}

}  // namespace heavyrange
