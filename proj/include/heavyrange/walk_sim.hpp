#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "heavyrange/localtime.hpp"
#include "heavyrange/rng.hpp"
#include "heavyrange/tree_env.hpp"

namespace heavyrange {

inline constexpr std::uint64_t kDefaultStepBudget = 1'000'000'000;

struct WalkOptions {
  std::uint64_t step_budget = kDefaultStepBudget;
  // Vertices at this depth act as leaves (see FieldOptions::depth_limit).
  std::optional<std::uint32_t> depth_limit;
  bool record_excursion_steps = false;
};

struct WalkRun {
  LocalTimeField field;
  std::uint64_t steps = 0;
  std::uint64_t n_excursions = 0;
  std::uint32_t max_generation = 0;
  std::vector<std::uint64_t> excursion_steps;  // filled when requested
};

// One transition of the quenched chain.  From x the walk moves to x* with
// probability 1 / (1 + sum_i exp(-omega_{x_i})) and to child x_j with
// probability exp(-omega_{x_j}) / (1 + sum_i exp(-omega_{x_i})).
NodeId step(EnvTree& tree, NodeId current, Philox& rng,
            std::optional<std::uint32_t> depth_limit = {});

// Simulates n excursions e* -> ... -> e* and records downward crossings.
// Throws StepBudgetExceeded when the budget runs out.
WalkRun run_excursions(EnvTree& tree, std::uint64_t n, Philox& rng,
                       const WalkOptions& options = {});

// Simulates exactly n_steps transitions from X_0 = e.
WalkRun run_steps(EnvTree& tree, std::uint64_t n_steps, Philox& rng,
                  const WalkOptions& options = {});

}  // namespace heavyrange
