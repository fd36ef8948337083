// mining.hpp -- top-M discriminative action search: branch-and-bound over the
// prefix tree plus the unpruned exhaustive baseline, and batch construction
// of week representations from a mined action list.
#pragma once

#include <cstdint>
#include <vector>

#include "bbdrop/actions.hpp"
#include "bbdrop/clickstream.hpp"
#include "bbdrop/representation.hpp"

namespace bbdrop {

struct MineOptions {
  int alphabet_size = kNumClickTypes;
  int action_size = 4;  // n
  int top_m = 100;      // M
  BoundStrategy bound = BoundStrategy::Admissible;
  bool parallel = true;  // false = serial reference walk
  int threads = 0;       // 0 = all cores
  // exhaustive_top_actions refuses alphabets with more leaves than this
  std::uint64_t leaf_safety_limit = 10'000'000;
};

struct NodeCounts {
  std::uint64_t internal = 0;  // prefix nodes expanded (depth 1..n-1)
  std::uint64_t leaves = 0;    // leaf spreads evaluated
  std::uint64_t pruned = 0;    // subtrees skipped by the bound
};

struct MineResult {
  std::vector<ScoredAction> actions;  // spread descending, ties lex ascending
  NodeCounts counts;
};

// Depth-first search with bound-based pruning. With the admissible bound the
// returned list is identical to exhaustive_top_actions, including tie order.
// Results do not depend on thread count; node counts may.
MineResult mine_top_actions(const std::vector<Sequence>& sequences, const MineOptions& options);

// Evaluates every one of the C^n actions. The reference the pruned search is
// checked against.
MineResult exhaustive_top_actions(const std::vector<Sequence>& sequences, const MineOptions& options);

Sequence to_sequence(const std::vector<ClickType>& clicks);

// Normalized scores of each mined action against one week's clicks.
ActionRepresentation build_representation(const WeekSequence& week, const std::vector<Action>& actions);

// All weeks of the dataset, canonical order, parallel across weeks.
std::vector<ActionRepresentation> build_representations(const Dataset& dataset,
                                                        const std::vector<Action>& actions,
                                                        int threads);

int resolve_threads(int threads);

}  // namespace bbdrop
