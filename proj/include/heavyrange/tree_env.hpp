#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "heavyrange/env_model.hpp"

namespace heavyrange {

using NodeId = std::uint32_t;

// e*, the parent added above the root.  It is not a vertex of the tree.
inline constexpr NodeId kRootParent = 0;
inline constexpr NodeId kRoot = 1;

inline constexpr std::size_t kDefaultNodeCap = 200'000'000;

// Contiguous block of sibling ids.
struct ChildRange {
  NodeId first = 0;
  std::uint32_t count = 0;

  struct Iterator {
    NodeId id;
    NodeId operator*() const { return id; }
    Iterator& operator++() {
      ++id;
      return *this;
    }
    bool operator==(const Iterator&) const = default;
  };
  Iterator begin() const { return {first}; }
  Iterator end() const { return {first + count}; }
  bool empty() const { return count == 0; }
};

struct HittingQuantities {
  double h = 1.0;  // sum_{y <= x} exp(V(y) - V(x))
  double a = 1.0;  // P_e(T_x < T_e*)
  double b = 0.0;  // P_x*(T_x < T_e*)
};

// Lazily realised marked Galton-Watson tree.  Children of a vertex are drawn
// on first access from a Philox stream keyed by the vertex's path from the
// root, so the realised environment does not depend on the access order.
//
// Storage is an arena of parallel arrays; the children of a vertex occupy a
// contiguous id range.
struct ChildDraw {
  double omega;
  std::uint64_t key;
};

// Offspring number and child marks of the vertex with environment key `key`,
// with the keys of the children.  EnvTree realises its vertices through this
// function, so a vertex can be regenerated from its key alone.
void draw_children(const EnvSpec& spec, std::uint64_t key, std::vector<ChildDraw>& out);

class EnvTree {
 public:
  EnvTree(EnvSpec spec, std::uint64_t seed, std::size_t node_cap = kDefaultNodeCap);

  const EnvSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  std::uint64_t key(NodeId x) const { return key_[x]; }
  std::size_t size() const { return parent_.size(); }
  std::size_t node_cap() const { return node_cap_; }

  bool children_realized(NodeId x) const { return first_child_[x] != kUnrealized; }

  // Realises the children of x on first call.  Throws CapacityExceeded when
  // the arena would grow beyond node_cap.
  ChildRange children(NodeId x) {
    if (first_child_[x] == kUnrealized) realize(x);
    return {first_child_[x], nu_[x]};
  }
  // Children of an already realised vertex.
  ChildRange realized_children(NodeId x) const;

  NodeId parent(NodeId x) const { return parent_[x]; }
  std::uint32_t depth(NodeId x) const { return depth_[x]; }
  double omega(NodeId x) const;
  double potential(NodeId x) const;
  double rho(NodeId x) const;
  // exp(-omega_x), the transition weight of x seen from its parent.
  double weight(NodeId x) const { return weight_[x]; }
  // sum of the weights of the children of x; children must be realised.
  double child_weight_sum(NodeId x) const { return child_weight_sum_[x]; }

  HittingQuantities hitting_quantities(NodeId x) const;

  // Realises the tree generation by generation until a generation reaches
  // `population` vertices (survival) or becomes empty (extinction).
  bool survives(std::size_t population = 1000, std::uint32_t max_generations = 100'000);

 private:
  static constexpr NodeId kUnrealized = 0xFFFFFFFFu;

  void realize(NodeId x);
  NodeId push_node(NodeId parent, double omega, std::uint64_t key);

  EnvSpec spec_;
  std::uint64_t seed_;
  std::size_t node_cap_;

  std::vector<NodeId> parent_;
  std::vector<NodeId> first_child_;
  std::vector<std::uint32_t> nu_;
  std::vector<std::uint32_t> depth_;
  std::vector<double> omega_;
  std::vector<double> potential_;
  std::vector<double> weight_;
  std::vector<double> child_weight_sum_;
  std::vector<std::uint64_t> key_;
};

}  // namespace heavyrange
