#include "heavyrange/tree_env.hpp"

#include <cmath>

#include "heavyrange/errors.hpp"

namespace heavyrange {

EnvTree::EnvTree(EnvSpec spec, std::uint64_t seed, std::size_t node_cap)
    : spec_(std::move(spec)), seed_(seed), node_cap_(node_cap) {
  if (!spec_.iid_children()) {
    throw DomainError("only environments with i.i.d. children marks can be sampled");
  }
  if (node_cap_ < 2) throw DomainError("node cap must allow e* and the root");
  if (node_cap_ > kUnrealized) throw DomainError("node cap exceeds the 32-bit id space");
  // e*: its only child is the root, realised up front.
  push_node(kRootParent, 0.0, derive_key(seed_, {0}));
  push_node(kRootParent, 0.0, derive_key(seed_, {1}));
  first_child_[kRootParent] = kRoot;
  nu_[kRootParent] = 1;
  depth_[kRoot] = 0;
  child_weight_sum_[kRootParent] = 1.0;
}

NodeId EnvTree::push_node(NodeId parent, double omega, std::uint64_t key) {
  const auto id = static_cast<NodeId>(parent_.size());
  parent_.push_back(parent);
  first_child_.push_back(kUnrealized);
  nu_.push_back(0);
  depth_.push_back(parent_.size() <= 2 ? 0 : depth_[parent] + 1);
  omega_.push_back(omega);
  potential_.push_back(parent_.size() <= 2 ? 0.0 : potential_[parent] + omega);
  weight_.push_back(std::exp(-omega));
  child_weight_sum_.push_back(0.0);
  key_.push_back(key);
  return id;
}

void draw_children(const EnvSpec& spec, std::uint64_t key, std::vector<ChildDraw>& out) {
  Philox gen(key);
  const std::uint32_t nu = spec.sample_offspring(gen.uniform());
  out.clear();
  for (std::uint32_t i = 0; i < nu; ++i) {
    const double omega = spec.sample_increment(gen);
    out.push_back({omega, derive_key(key, {i})});
  }
}

void EnvTree::realize(NodeId x) {
  thread_local std::vector<ChildDraw> draws;
  draw_children(spec_, key_[x], draws);
  const auto nu = static_cast<std::uint32_t>(draws.size());
  if (parent_.size() + nu > node_cap_) {
    throw CapacityExceeded("realising " + std::to_string(nu) + " children would exceed the cap of " +
                           std::to_string(node_cap_) + " nodes");
  }
  const auto first = static_cast<NodeId>(parent_.size());
  double sum = 0.0;
  for (const ChildDraw& d : draws) sum += weight_[push_node(x, d.omega, d.key)];
  first_child_[x] = first;
  nu_[x] = nu;
  child_weight_sum_[x] = sum;
}

ChildRange EnvTree::realized_children(NodeId x) const {
  if (first_child_[x] == kUnrealized) {
    throw DomainError("children of node " + std::to_string(x) + " are not realised");
  }
  return {first_child_[x], nu_[x]};
}

double EnvTree::omega(NodeId x) const {
  if (x == kRootParent) throw DomainError("e* carries no mark");
  return omega_[x];
}

double EnvTree::potential(NodeId x) const {
  if (x == kRootParent) throw DomainError("e* carries no potential");
  return potential_[x];
}

double EnvTree::rho(NodeId x) const { return 1.0 / (1.0 + std::exp(-omega(x))); }

HittingQuantities EnvTree::hitting_quantities(NodeId x) const {
  if (x == kRootParent) throw DomainError("hitting quantities are defined for tree vertices only");
  std::vector<NodeId> path;
  for (NodeId y = x; y != kRootParent; y = parent_[y]) path.push_back(y);
  // H_e = 1, H_x = 1 + exp(-omega_x) H_{x*}
  double h = 1.0;
  for (std::size_t i = path.size() - 1; i-- > 0;) {
    h = 1.0 + weight_[path[i]] * h;
  }
  return {h, std::exp(-potential_[x]) / h, 1.0 - 1.0 / h};
}

bool EnvTree::survives(std::size_t population, std::uint32_t max_generations) {
  std::vector<NodeId> generation{kRoot};
  for (std::uint32_t g = 0; g < max_generations; ++g) {
    if (generation.empty()) return false;
    if (generation.size() >= population) return true;
    std::vector<NodeId> next;
    for (NodeId x : generation) {
      for (NodeId c : children(x)) next.push_back(c);
    }
    generation = std::move(next);
  }
  return !generation.empty();
}

}  // namespace heavyrange
