// actions.hpp -- n-gram action scoring and the spread bounds used by the
// branch-and-bound search.
//
// Scoring is generic over the alphabet: a sequence is a vector of small
// integer symbols. The production pipeline uses the 7 click types as symbols;
// tests exercise smaller alphabets.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bbdrop/clickstream.hpp"

namespace bbdrop {

using Symbol = std::uint8_t;
using Sequence = std::vector<Symbol>;

// An n-gram of clicks. Ordered lexicographically by symbol value, which for
// click types is the ClickType enumeration order.
struct Action {
  std::vector<Symbol> clicks;

  friend bool operator==(const Action&, const Action&) = default;
  friend auto operator<=>(const Action& a, const Action& b) {
    return a.clicks <=> b.clicks;
  }
};

struct ScoredAction {
  Action action;
  double spread = 0.0;  // population std of normalized scores across sequences
};

// Achievable normalized-score range, over all completions of a prefix, for
// one sequence.
struct PrefixInterval {
  double lower = 0.0;
  double upper = 0.0;
};

struct ActionScore {
  std::int64_t raw = 0;
  double normalized = 0.0;  // raw / (n * (L - n + 1)), in [0,1]
};

int hamming_distance(std::span<const Symbol> a, std::span<const Symbol> b);

// Sum over sliding windows of (n - hamming distance to the window), plus the
// [0,1] normalization. Requires len(sequence) >= action length.
ActionScore action_score(const Action& action, const Sequence& sequence);

// Score range achievable by any length-n completion of `prefix` on one
// sequence. Per window the filled positions contribute their matches and the
// free positions contribute anywhere from 0 to n-k.
PrefixInterval prefix_interval(std::span<const Symbol> prefix, const Sequence& sequence, int n);

enum class BoundStrategy {
  // Exact maximum population std over the interval box. Never below the std
  // of any descendant leaf, so pruning with it preserves exhaustive results.
  Admissible,
  // Std of the upper endpoints: assumes the undefined postfix always matches.
  // Cheap but not admissible; can prune branches that held a top-M action.
  PaperOptimistic,
};

const char* to_string(BoundStrategy s);

// Upper bound on the spread reachable by any point of the interval box.
// Admissible strategy: variance is convex so the box maximum sits at a
// vertex; sorting by midpoint and testing every low/high threshold split
// finds it (exact for the equal-width intervals prefixes produce).
double spread_upper_bound(const std::vector<PrefixInterval>& intervals, BoundStrategy strategy);

double population_std(std::span<const double> values);

// Hyphen-joined click-type names, e.g. "SeekBw-SeekFw-SeekBw-Quiz".
std::string action_to_string(const Action& action);
Action action_from_string(std::string_view text);

}  // namespace bbdrop
