#include <cmath>
#include <deque>
#include <map>
#include <vector>

#include "doctest.h"

#include "heavyrange/errors.hpp"
#include "heavyrange/tree_env.hpp"
#include "heavyrange/walk_sim.hpp"
#include "test_support.hpp"

using namespace heavyrange;
using namespace heavyrange::testing;
using doctest::Approx;

namespace {

using Path = std::vector<std::uint32_t>;

struct NodeRecord {
  std::uint32_t nu;
  double omega;
};

// Realises every vertex up to `depth` in DFS or BFS order and records it by
// its path of child indices.
std::map<Path, NodeRecord> realise(EnvTree& tree, std::uint32_t depth, bool bfs) {
  std::map<Path, NodeRecord> out;
  std::deque<std::pair<NodeId, Path>> work{{kRoot, {}}};
  while (!work.empty()) {
    auto [x, path] = bfs ? work.front() : work.back();
    bfs ? work.pop_front() : work.pop_back();
    if (path.size() > depth) continue;
    const ChildRange kids = tree.children(x);
    out[path] = {kids.count, tree.omega(x)};
    std::uint32_t i = 0;
    for (NodeId c : kids) {
      Path p = path;
      p.push_back(i++);
      work.emplace_back(c, p);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("the realised environment does not depend on access order") {
  const EnvSpec spec({0.2, 0.3, 0.3, 0.2}, BetaRho{3.0, 1.0});
  EnvTree a(spec, 77), b(spec, 77), c(spec, 78);
  const auto ra = realise(a, 6, true);
  const auto rb = realise(b, 6, false);
  CHECK(ra.size() == rb.size());
  for (const auto& [path, rec] : ra) {
    REQUIRE(rb.count(path));
    CHECK(rb.at(path).nu == rec.nu);
    CHECK(rb.at(path).omega == rec.omega);
  }
  const auto rc = realise(c, 6, true);
  bool differs = rc.size() != ra.size();
  for (const auto& [path, rec] : ra) {
    if (rc.count(path) && rc.at(path).omega != rec.omega) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("binary tree sizes and root conventions") {
  EnvTree tree(deterministic_spec(std::log(2.0)), 1);
  realise(tree, 4, true);  // realises children of depths 0..4
  CHECK(tree.size() == 1 + ((std::size_t{1} << 6) - 1));  // e* and the 63 vertices of depth <= 5
  CHECK(tree.omega(kRoot) == 0.0);
  CHECK(tree.potential(kRoot) == 0.0);
  CHECK(tree.depth(kRoot) == 0);
  CHECK(tree.parent(kRoot) == kRootParent);
  CHECK_THROWS_AS(tree.omega(kRootParent), DomainError);
  CHECK_THROWS_AS(tree.potential(kRootParent), DomainError);
  const ChildRange kids = tree.children(kRoot);
  for (NodeId c : kids) {
    CHECK(tree.parent(c) == kRoot);
    CHECK(tree.depth(c) == 1);
    CHECK(tree.potential(c) == Approx(std::log(2.0)));
    CHECK(tree.weight(c) == Approx(0.5));
    CHECK(tree.rho(c) == Approx(2.0 / 3.0));
  }
  CHECK(tree.child_weight_sum(kRoot) == Approx(1.0));
}

TEST_CASE("capacity cap") {
  EnvTree tree(deterministic_spec(std::log(2.0)), 1, 10);
  CHECK_THROWS_AS(realise(tree, 5, true), CapacityExceeded);
  CHECK(tree.size() <= 10);
}

TEST_CASE("hitting quantities on a binary tree") {
  EnvTree tree(deterministic_spec(std::log(2.0)), 1);
  const NodeId x1 = tree.children(kRoot).first;
  const NodeId x2 = tree.children(x1).first;
  // Conductances 1, 1/2, 1/4 along e*-e-x1-x2.
  const auto h1 = tree.hitting_quantities(x1);
  CHECK(h1.h == Approx(1.5));
  CHECK(h1.a == Approx(1.0 / 3.0));
  CHECK(h1.b == Approx(1.0 / 3.0));
  const auto h2 = tree.hitting_quantities(x2);
  CHECK(h2.h == Approx(1.75));
  CHECK(h2.a == Approx(1.0 / 7.0));
  CHECK(h2.b == Approx(3.0 / 7.0));
  const auto he = tree.hitting_quantities(kRoot);
  CHECK(he.a == 1.0);
  CHECK(he.b == 0.0);
}

TEST_CASE("hitting recursion on a random tree") {
  EnvTree tree(beta_spec(5, 2), 3);
  realise(tree, 5, true);
  for (NodeId x = 2; x < tree.size(); ++x) {
    const auto hx = tree.hitting_quantities(x);
    const auto hp = tree.hitting_quantities(tree.parent(x));
    CHECK(hx.h == Approx(1.0 + std::exp(-tree.omega(x)) * hp.h));
    // a_x = exp(-V(x)) / H_x
    CHECK(hx.a == Approx(std::exp(-tree.potential(x)) / hx.h));
  }
}

TEST_CASE("simulated hitting probability of a child of the root") {
  // omega = 2 log 2: a_x = (1/4) / (1 + 1/4) = 0.2
  EnvTree tree(deterministic_spec(2.0 * std::log(2.0)), 5);
  const NodeId x = tree.children(kRoot).first;
  CHECK(tree.hitting_quantities(x).a == Approx(0.2));
  Philox rng(99);
  const int trials = 100000;
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    NodeId cur = kRoot;
    for (;;) {
      cur = step(tree, cur, rng);
      if (cur == x) {
        ++hits;
        break;
      }
      if (cur == kRootParent) break;
    }
  }
  const double p = static_cast<double>(hits) / trials;
  CHECK(std::abs(p - 0.2) < 4.0 * std::sqrt(0.2 * 0.8 / trials));
}

TEST_CASE("extinction rejection frequency") {
  // P(nu=0) = 0.3, P(nu=2) = 0.7: extinction probability solves q = 0.3 + 0.7 q^2, q = 3/7.
  const EnvSpec spec({0.3, 0.0, 0.7}, Deterministic{std::log(2.0)});
  const int trials = 4000;
  int extinct = 0;
  for (int t = 0; t < trials; ++t) {
    EnvTree tree(spec, derive_key(5, {static_cast<std::uint64_t>(t)}));
    if (!tree.survives()) ++extinct;
  }
  const double q = 3.0 / 7.0;
  CHECK(std::abs(static_cast<double>(extinct) / trials - q) < 4.0 * std::sqrt(q * (1 - q) / trials));
  EnvTree sure(deterministic_spec(std::log(2.0)), 1);
  CHECK(sure.survives());
}

TEST_CASE("non-i.i.d. children are rejected") {
  const EnvSpec spec(fixed_offspring(2), Deterministic{1.0}, false);
  CHECK_THROWS_AS(EnvTree(spec, 1), DomainError);
}
