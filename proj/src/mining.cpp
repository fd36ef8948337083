#include "bbdrop/mining.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <set>

#include <omp.h>

#include "bbdrop/error.hpp"

namespace bbdrop {

int resolve_threads(int threads) {
  return threads > 0 ? threads : omp_get_max_threads();
}

namespace {

// spread descending, then lexicographically smaller action wins
struct BetterThan {
  bool operator()(const ScoredAction& a, const ScoredAction& b) const {
    if (a.spread != b.spread) return a.spread > b.spread;
    return a.action < b.action;
  }
};

// Best-M set shared across workers. The comparator is a strict total order
// (actions are unique), so the final contents are the best M of everything
// offered regardless of insertion order.
class TopSet {
 public:
  explicit TopSet(std::size_t capacity) : capacity_(capacity) {}

  void offer(ScoredAction candidate) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (set_.size() < capacity_) {
      set_.insert(std::move(candidate));
      return;
    }
    auto worst = std::prev(set_.end());
    if (BetterThan{}(candidate, *worst)) {
      set_.erase(worst);
      set_.insert(std::move(candidate));
    }
  }

  // True when no descendant of a prefix with the given bound can still enter.
  // A descendant enters on spread alone when bound > worst spread; on a tie
  // it enters only if its action orders before the current worst, and the
  // lexicographically smallest descendant decides that.
  bool can_prune(double bound, const Action& smallest_descendant) const {
    std::lock_guard<std::mutex> lock(mutex_);
    if (set_.size() < capacity_) return false;
    const ScoredAction& worst = *std::prev(set_.end());
    if (bound < worst.spread) return true;
    if (bound > worst.spread) return false;
    return !(smallest_descendant < worst.action);
  }

  std::vector<ScoredAction> sorted() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return {set_.begin(), set_.end()};
  }

 private:
  std::size_t capacity_;
  mutable std::mutex mutex_;
  std::set<ScoredAction, BetterThan> set_;
};

struct Counters {
  std::atomic<std::uint64_t> internal{0};
  std::atomic<std::uint64_t> leaves{0};
  std::atomic<std::uint64_t> pruned{0};
};

// Per-worker DFS state. Level k holds, for every sliding window of every
// sequence, how many of the first k prefix positions match that window.
class Walker {
 public:
  Walker(const std::vector<Sequence>& sequences, const MineOptions& opt, bool prune,
         TopSet& top, Counters& counters)
      : seqs_(sequences), opt_(opt), prune_(prune), top_(top), counters_(counters) {
    n_ = opt.action_size;
    win_offset_.reserve(seqs_.size());
    std::size_t total = 0;
    for (const auto& s : seqs_) {
      win_offset_.push_back(total);
      total += s.size() - static_cast<std::size_t>(n_) + 1;
    }
    levels_.assign(static_cast<std::size_t>(n_) + 1, std::vector<std::uint8_t>(total, 0));
    prefix_.reserve(static_cast<std::size_t>(n_));
    raw_lower_.resize(seqs_.size());
    scores_.resize(seqs_.size());
    intervals_.resize(seqs_.size());
  }

  // Positions the walker at the given prefix, then explores its subtree.
  void explore_from(const std::vector<Symbol>& spine) {
    prefix_.clear();
    for (Symbol c : spine) fill_next_level(c);
    walk(static_cast<int>(spine.size()));
  }

  // Bound for the node the walker currently sits on (depth >= 1).
  double current_bound() {
    gather_intervals();
    return spread_upper_bound(intervals_, opt_.bound);
  }

 private:
  void fill_next_level(Symbol c) {
    const int depth = static_cast<int>(prefix_.size());
    const auto& cur = levels_[static_cast<std::size_t>(depth)];
    auto& next = levels_[static_cast<std::size_t>(depth) + 1];
    for (std::size_t s = 0; s < seqs_.size(); ++s) {
      const Sequence& seq = seqs_[s];
      const std::size_t base = win_offset_[s];
      const std::size_t windows = seq.size() - static_cast<std::size_t>(n_) + 1;
      const Symbol* probe = seq.data() + depth;
      for (std::size_t w = 0; w < windows; ++w)
        next[base + w] = static_cast<std::uint8_t>(cur[base + w] + (probe[w] == c ? 1 : 0));
    }
    prefix_.push_back(c);
  }

  void pop_level() { prefix_.pop_back(); }

  // Per-sequence sums of matched positions at the current depth.
  void gather_lower_sums() {
    const auto& counts = levels_[prefix_.size()];
    for (std::size_t s = 0; s < seqs_.size(); ++s) {
      const std::size_t base = win_offset_[s];
      const std::size_t windows = seqs_[s].size() - static_cast<std::size_t>(n_) + 1;
      std::int64_t sum = 0;
      for (std::size_t w = 0; w < windows; ++w) sum += counts[base + w];
      raw_lower_[s] = sum;
    }
  }

  void gather_intervals() {
    ensure_sums();
    const int k = static_cast<int>(prefix_.size());
    for (std::size_t s = 0; s < seqs_.size(); ++s) {
      const double windows =
          static_cast<double>(seqs_[s].size() - static_cast<std::size_t>(n_) + 1);
      const double denom = static_cast<double>(n_) * windows;
      intervals_[s].lower = static_cast<double>(raw_lower_[s]) / denom;
      intervals_[s].upper =
          (static_cast<double>(raw_lower_[s]) + windows * static_cast<double>(n_ - k)) / denom;
    }
  }

  void ensure_sums() { gather_lower_sums(); }

  Action smallest_descendant() const {
    Action a;
    a.clicks = prefix_;
    a.clicks.resize(static_cast<std::size_t>(n_), 0);
    return a;
  }

  void evaluate_leaf() {
    ensure_sums();
    for (std::size_t s = 0; s < seqs_.size(); ++s) {
      const double windows =
          static_cast<double>(seqs_[s].size() - static_cast<std::size_t>(n_) + 1);
      scores_[s] = static_cast<double>(raw_lower_[s]) / (static_cast<double>(n_) * windows);
    }
    counters_.leaves.fetch_add(1, std::memory_order_relaxed);
    ScoredAction cand;
    cand.action.clicks = prefix_;
    cand.spread = population_std(scores_);
    top_.offer(std::move(cand));
  }

  void walk(int depth) {
    if (depth == n_) {
      evaluate_leaf();
      return;
    }
    if (depth >= 1) {
      if (prune_ && top_.can_prune(current_bound(), smallest_descendant())) {
        counters_.pruned.fetch_add(1, std::memory_order_relaxed);
        return;
      }
      counters_.internal.fetch_add(1, std::memory_order_relaxed);
    }
    for (int c = 0; c < opt_.alphabet_size; ++c) {
      fill_next_level(static_cast<Symbol>(c));
      walk(depth + 1);
      pop_level();
    }
  }

  const std::vector<Sequence>& seqs_;
  const MineOptions& opt_;
  bool prune_;
  TopSet& top_;
  Counters& counters_;

  int n_ = 0;
  std::vector<std::size_t> win_offset_;
  std::vector<std::vector<std::uint8_t>> levels_;
  std::vector<Symbol> prefix_;
  std::vector<std::int64_t> raw_lower_;
  std::vector<double> scores_;
  std::vector<PrefixInterval> intervals_;
};

std::uint64_t leaf_count(int alphabet_size, int action_size) {
  std::uint64_t count = 1;
  for (int i = 0; i < action_size; ++i) {
    if (count > (std::uint64_t{1} << 62) / static_cast<std::uint64_t>(alphabet_size))
      return std::uint64_t{1} << 62;  // saturate
    count *= static_cast<std::uint64_t>(alphabet_size);
  }
  return count;
}

void validate_mining_input(const std::vector<Sequence>& sequences, const MineOptions& opt) {
  if (opt.alphabet_size < 1 || opt.alphabet_size > 255)
    throw InputError("alphabet size must be in [1,255]");
  if (opt.action_size < 1 || opt.action_size > 200)
    throw InputError("action size must be in [1,200]");
  if (opt.top_m < 1) throw InputError("top_m must be positive");
  if (sequences.empty()) throw InputError("no sequences to mine");
  const auto leaves = leaf_count(opt.alphabet_size, opt.action_size);
  if (static_cast<std::uint64_t>(opt.top_m) > leaves)
    throw InputError("top_m " + std::to_string(opt.top_m) + " exceeds the " +
                     std::to_string(leaves) + " possible actions");
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].size() < static_cast<std::size_t>(opt.action_size))
      throw InputError("sequence " + std::to_string(i) + " shorter than the action size");
    for (Symbol s : sequences[i])
      if (s >= opt.alphabet_size)
        throw InputError("sequence " + std::to_string(i) + " contains symbol " +
                         std::to_string(int(s)) + " outside the alphabet");
  }
}

MineResult run_search(const std::vector<Sequence>& sequences, const MineOptions& opt, bool prune) {
  validate_mining_input(sequences, opt);

  TopSet top(static_cast<std::size_t>(opt.top_m));
  Counters counters;

  if (!opt.parallel) {
    Walker walker(sequences, opt, prune, top, counters);
    walker.explore_from({});
  } else {
    const int threads = std::min(resolve_threads(opt.threads), opt.alphabet_size);
#pragma omp parallel num_threads(threads)
    {
      Walker walker(sequences, opt, prune, top, counters);
#pragma omp for schedule(dynamic, 1)
      for (int c = 0; c < opt.alphabet_size; ++c)
        walker.explore_from({static_cast<Symbol>(c)});
    }
  }

  MineResult result;
  result.actions = top.sorted();
  result.counts.internal = counters.internal.load();
  result.counts.leaves = counters.leaves.load();
  result.counts.pruned = counters.pruned.load();
  return result;
}

}  // namespace

MineResult mine_top_actions(const std::vector<Sequence>& sequences, const MineOptions& options) {
  return run_search(sequences, options, /*prune=*/true);
}

MineResult exhaustive_top_actions(const std::vector<Sequence>& sequences,
                                  const MineOptions& options) {
  const auto leaves = leaf_count(options.alphabet_size, options.action_size);
  if (leaves > options.leaf_safety_limit)
    throw InputError("exhaustive search over " + std::to_string(leaves) +
                     " actions exceeds the safety limit of " +
                     std::to_string(options.leaf_safety_limit));
  return run_search(sequences, options, /*prune=*/false);
}

Sequence to_sequence(const std::vector<ClickType>& clicks) {
  Sequence seq;
  seq.reserve(clicks.size());
  for (ClickType c : clicks) seq.push_back(static_cast<Symbol>(c));
  return seq;
}

ActionRepresentation build_representation(const WeekSequence& week,
                                          const std::vector<Action>& actions) {
  ActionRepresentation rep;
  rep.week.user_id = week.user_id;
  rep.week.week_index = week.week_index;
  rep.week.label = week.dropout_label;
  rep.scores.reserve(actions.size());
  const Sequence seq = to_sequence(week.clicks);
  for (const auto& action : actions)
    rep.scores.push_back(action_score(action, seq).normalized);
  return rep;
}

std::vector<ActionRepresentation> build_representations(const Dataset& dataset,
                                                        const std::vector<Action>& actions,
                                                        int threads) {
  std::vector<const WeekSequence*> weeks;
  for (const auto& user : dataset.users)
    for (const auto& week : user.weeks) weeks.push_back(&week);

  std::vector<ActionRepresentation> reps(weeks.size());
  const int t = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic, 16) num_threads(t)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(weeks.size()); ++i)
    reps[static_cast<std::size_t>(i)] = build_representation(*weeks[static_cast<std::size_t>(i)], actions);
  return reps;
}

std::vector<UserHistory> group_by_user(std::vector<ActionRepresentation> reps) {
  std::stable_sort(reps.begin(), reps.end(),
                   [](const ActionRepresentation& a, const ActionRepresentation& b) {
                     if (a.week.user_id != b.week.user_id) return a.week.user_id < b.week.user_id;
                     return a.week.week_index < b.week.week_index;
                   });
  std::vector<UserHistory> users;
  for (auto& rep : reps) {
    if (users.empty() || users.back().user_id != rep.week.user_id) {
      users.push_back(UserHistory{rep.week.user_id, {}});
    }
    users.back().weeks.push_back(std::move(rep));
  }
  return users;
}

}  // namespace bbdrop
