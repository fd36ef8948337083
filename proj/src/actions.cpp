#include "bbdrop/actions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bbdrop/error.hpp"

namespace bbdrop {

int hamming_distance(std::span<const Symbol> a, std::span<const Symbol> b) {
  if (a.size() != b.size())
    throw Error("hamming_distance: length mismatch");
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) ++d;
  return d;
}

ActionScore action_score(const Action& action, const Sequence& sequence) {
  const int n = static_cast<int>(action.clicks.size());
  const int len = static_cast<int>(sequence.size());
  if (n == 0) throw InputError("action_score: empty action");
  if (len < n)
    throw InputError("action_score: sequence length " + std::to_string(len) +
                     " shorter than action size " + std::to_string(n));

  const int windows = len - n + 1;
  std::int64_t raw = 0;
  for (int i = 0; i < windows; ++i) {
    int matches = 0;
    for (int j = 0; j < n; ++j)
      if (sequence[i + j] == action.clicks[j]) ++matches;
    raw += matches;  // n - hamming distance
  }
  ActionScore s;
  s.raw = raw;
  s.normalized = static_cast<double>(raw) /
                 (static_cast<double>(n) * static_cast<double>(windows));
  return s;
}

PrefixInterval prefix_interval(std::span<const Symbol> prefix, const Sequence& sequence, int n) {
  const int k = static_cast<int>(prefix.size());
  const int len = static_cast<int>(sequence.size());
  if (k > n) throw InputError("prefix_interval: prefix longer than action size");
  if (len < n)
    throw InputError("prefix_interval: sequence length " + std::to_string(len) +
                     " shorter than action size " + std::to_string(n));

  const int windows = len - n + 1;
  std::int64_t matched = 0;
  for (int i = 0; i < windows; ++i)
    for (int j = 0; j < k; ++j)
      if (sequence[i + j] == prefix[j]) ++matched;

  const double denom = static_cast<double>(n) * static_cast<double>(windows);
  PrefixInterval iv;
  iv.lower = static_cast<double>(matched) / denom;
  // every free position can still match in every window
  iv.upper = static_cast<double>(matched + static_cast<std::int64_t>(windows) * (n - k)) / denom;
  return iv;
}

const char* to_string(BoundStrategy s) {
  return s == BoundStrategy::Admissible ? "admissible" : "paper";
}

double population_std(std::span<const double> values) {
  if (values.empty()) return 0.0;
  // identical values have exactly zero spread; the summation below could
  // round and break exact tie-breaking otherwise
  bool all_equal = true;
  for (double v : values)
    if (v != values.front()) {
      all_equal = false;
      break;
    }
  if (all_equal) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) /
                      static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) {
    const double d = v - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(values.size()));
}

namespace {

// Population std of the vertex that takes the lower endpoint on the first
// `split` intervals (in the given order) and the upper endpoint on the rest.
double split_vertex_std(const std::vector<const PrefixInterval*>& sorted, std::size_t split,
                        std::vector<double>& scratch) {
  scratch.clear();
  for (std::size_t i = 0; i < sorted.size(); ++i)
    scratch.push_back(i < split ? sorted[i]->lower : sorted[i]->upper);
  return population_std(scratch);
}

}  // namespace

double spread_upper_bound(const std::vector<PrefixInterval>& intervals, BoundStrategy strategy) {
  if (intervals.empty()) throw InputError("spread_upper_bound: no intervals");

  if (strategy == BoundStrategy::PaperOptimistic) {
    std::vector<double> uppers;
    uppers.reserve(intervals.size());
    for (const auto& iv : intervals) uppers.push_back(iv.upper);
    return population_std(uppers);
  }

  const std::size_t n = intervals.size();
  std::vector<const PrefixInterval*> sorted;
  sorted.reserve(n);
  for (const auto& iv : intervals) sorted.push_back(&iv);
  std::sort(sorted.begin(), sorted.end(), [](const PrefixInterval* a, const PrefixInterval* b) {
    const double ma = a->lower + a->upper;
    const double mb = b->lower + b->upper;
    if (ma != mb) return ma < mb;
    if (a->lower != b->lower) return a->lower < b->lower;
    return a->upper < b->upper;
  });

  // Scan the N+1 threshold splits with prefix sums, then recompute the best
  // vertex with the same two-pass std used at the leaves so the bound and
  // the leaf spreads compare consistently.
  std::vector<double> lo_sum(n + 1, 0.0), lo_sq(n + 1, 0.0);
  std::vector<double> hi_sum(n + 1, 0.0), hi_sq(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    lo_sum[i + 1] = lo_sum[i] + sorted[i]->lower;
    lo_sq[i + 1] = lo_sq[i] + sorted[i]->lower * sorted[i]->lower;
    hi_sum[i + 1] = hi_sum[i] + sorted[i]->upper;
    hi_sq[i + 1] = hi_sq[i] + sorted[i]->upper * sorted[i]->upper;
  }
  const double hi_total_sum = hi_sum[n];
  const double hi_total_sq = hi_sq[n];

  std::size_t best_split = 0;
  double best_var = -1.0;
  for (std::size_t split = 0; split <= n; ++split) {
    const double sum = lo_sum[split] + (hi_total_sum - hi_sum[split]);
    const double sq = lo_sq[split] + (hi_total_sq - hi_sq[split]);
    const double mean = sum / static_cast<double>(n);
    const double var = sq / static_cast<double>(n) - mean * mean;
    if (var > best_var) {
      best_var = var;
      best_split = split;
    }
  }

  std::vector<double> scratch;
  scratch.reserve(n);
  return split_vertex_std(sorted, best_split, scratch);
}

std::string action_to_string(const Action& action) {
  std::string out;
  for (std::size_t i = 0; i < action.clicks.size(); ++i) {
    if (i > 0) out.push_back('-');
    out += to_string(static_cast<ClickType>(action.clicks[i]));
  }
  return out;
}

Action action_from_string(std::string_view text) {
  Action a;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t dash = text.find('-', pos);
    const std::string_view part =
        text.substr(pos, dash == std::string_view::npos ? std::string_view::npos : dash - pos);
    const auto type = click_type_from_string(part);
    if (!type)
      throw InputError("unknown click type \"" + std::string(part) + "\" in action \"" +
                       std::string(text) + "\"");
    a.clicks.push_back(static_cast<Symbol>(*type));
    if (dash == std::string_view::npos) break;
    pos = dash + 1;
  }
  if (a.clicks.empty()) throw InputError("empty action string");
  return a;
}

}  // namespace bbdrop
