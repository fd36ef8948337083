// Benchmark for the data-parallel kernels: serial reference vs OpenMP, on a
// synthetic mining workload. Prints one row per kernel with the speedup.
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "bbdrop/metrics.hpp"
#include "bbdrop/mining.hpp"
#include "bbdrop/rng.hpp"
#include "bbdrop/synth.hpp"

using namespace bbdrop;

namespace {

// best of two runs, so first-touch and thread-pool warmup do not skew the
// comparison
double time_ms(const std::function<void()>& fn) {
  double best = 0.0;
  for (int rep = 0; rep < 2; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    const auto stop = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(stop - start).count();
    if (rep == 0 || ms < best) best = ms;
  }
  return best;
}

std::vector<Sequence> make_workload(int n_sequences, int length, std::uint64_t seed) {
  // two saturated cohorts so that the branch-and-bound has something to prune
  std::vector<Sequence> seqs;
  Rng rng(seed);
  for (int s = 0; s < n_sequences; ++s) {
    Sequence seq(static_cast<std::size_t>(length));
    const bool first = s < n_sequences / 2;
    for (auto& sym : seq) {
      const auto r = rng.bounded(10);
      if (r < 7)
        sym = static_cast<Symbol>(first ? rng.bounded(2) : 2 + rng.bounded(2));
      else
        sym = static_cast<Symbol>(rng.bounded(kNumClickTypes));
    }
    seqs.push_back(std::move(seq));
  }
  return seqs;
}

void report(const char* name, double serial_ms, double parallel_ms) {
  std::printf("%-28s serial %9.1f ms   omp %9.1f ms   speedup %.2fx\n", name, serial_ms,
              parallel_ms, serial_ms / parallel_ms);
}

}  // namespace

int main(int argc, char** argv) {
  int n_sequences = 400;
  int length = 240;
  if (argc > 1) n_sequences = std::stoi(argv[1]);
  if (argc > 2) length = std::stoi(argv[2]);

  std::printf("kernel benchmark: %d sequences of length %d, %d threads available\n", n_sequences,
              length, omp_get_max_threads());

  const auto seqs = make_workload(n_sequences, length, 7);

  MineOptions opt;
  opt.action_size = 4;
  opt.top_m = 100;

  {
    MineOptions serial = opt;
    serial.parallel = false;
    MineOptions parallel = opt;
    MineResult rs, rp;
    const double ts = time_ms([&] { rs = exhaustive_top_actions(seqs, serial); });
    const double tp = time_ms([&] { rp = exhaustive_top_actions(seqs, parallel); });
    report("exhaustive top-M", ts, tp);
    if (rs.actions.size() != rp.actions.size()) std::printf("  MISMATCH in result size!\n");
  }
  {
    MineOptions serial = opt;
    serial.parallel = false;
    MineOptions parallel = opt;
    MineResult rs, rp;
    const double ts = time_ms([&] { rs = mine_top_actions(seqs, serial); });
    const double tp = time_ms([&] { rp = mine_top_actions(seqs, parallel); });
    report("branch-and-bound top-M", ts, tp);
    std::printf("  leaves evaluated: serial %llu / omp %llu (exhaustive %d), pruned subtrees %llu\n",
                static_cast<unsigned long long>(rs.counts.leaves),
                static_cast<unsigned long long>(rp.counts.leaves), 7 * 7 * 7 * 7,
                static_cast<unsigned long long>(rs.counts.pruned));
  }

  // representation building over a dataset assembled from the same sequences
  Dataset ds;
  ds.variant = DatasetVariant::TypeA;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    UserWeeks uw;
    uw.user_id = "u" + std::to_string(i);
    WeekSequence ws;
    ws.user_id = uw.user_id;
    ws.week_index = 1;
    for (Symbol s : seqs[i]) ws.clicks.push_back(static_cast<ClickType>(s));
    uw.weeks.push_back(std::move(ws));
    ds.users.push_back(std::move(uw));
  }
  const auto mined = mine_top_actions(seqs, opt);
  std::vector<Action> actions;
  for (const auto& a : mined.actions) actions.push_back(a.action);
  {
    std::vector<ActionRepresentation> rs, rp;
    const double ts = time_ms([&] { rs = build_representations(ds, actions, 1); });
    const double tp = time_ms([&] { rp = build_representations(ds, actions, 0); });
    report("representation building", ts, tp);

    const double tc_s = time_ms([&] {
      auto tagged = rs;
      for (std::size_t i = 0; i < tagged.size(); ++i) tagged[i].week.label = i % 7 == 0;
      (void)characterize_actions(tagged, actions, 10, 1);
    });
    const double tc_p = time_ms([&] {
      auto tagged = rs;
      for (std::size_t i = 0; i < tagged.size(); ++i) tagged[i].week.label = i % 7 == 0;
      (void)characterize_actions(tagged, actions, 10, 0);
    });
    report("per-action t-tests", tc_s, tc_p);
  }
  return 0;
}
