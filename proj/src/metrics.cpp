#include "bbdrop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "bbdrop/error.hpp"
#include "bbdrop/mining.hpp"

namespace bbdrop {

double f1_score(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size())
    throw InputError("f1_score: labels/predictions length mismatch");
  if (labels.empty()) throw InputError("f1_score: empty input");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool l = labels[i] != 0;
    const bool p = predictions[i] != 0;
    if (p && l) ++tp;
    else if (p && !l) ++fp;
    else if (!p && l) ++fn;
  }
  const std::int64_t denom = 2 * tp + fp + fn;
  if (denom == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double auc(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw InputError("auc: labels/scores length mismatch");
  const std::size_t n = labels.size();
  std::size_t n_pos = 0;
  for (int l : labels) n_pos += l != 0 ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw InputError("auc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] != 0) pos_rank_sum += avg_rank;
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

namespace {

// Continued fraction for the incomplete beta function (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw Error("incomplete beta continued fraction did not converge");
}

double sample_variance(std::span<const double> v, double mean) {
  double ss = 0.0;
  for (double x : v) {
    const double d = x - mean;
    ss += d * d;
  }
  return ss / static_cast<double>(v.size() - 1);
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (x < 0.0 || x > 1.0) throw InputError("regularized_incomplete_beta: x outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                          a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double students_t_two_sided_p(double t, double df) {
  if (df <= 0.0) throw InputError("students_t_two_sided_p: df must be positive");
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

TTestResult welch_t_test(std::span<const double> group_dropout,
                         std::span<const double> group_nondropout) {
  if (group_dropout.size() < 2 || group_nondropout.size() < 2)
    throw InputError("welch_t_test: each group needs at least 2 values");

  const double n1 = static_cast<double>(group_dropout.size());
  const double n2 = static_cast<double>(group_nondropout.size());
  const double mean1 = std::accumulate(group_dropout.begin(), group_dropout.end(), 0.0) / n1;
  const double mean2 =
      std::accumulate(group_nondropout.begin(), group_nondropout.end(), 0.0) / n2;
  const double var1 = sample_variance(group_dropout, mean1);
  const double var2 = sample_variance(group_nondropout, mean2);

  const double a = var1 / n1;
  const double b = var2 / n2;
  TTestResult r;
  if (a + b == 0.0) {
    // no variance at all: equal means are indistinguishable, different means
    // are infinitely separated
    if (mean1 == mean2) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mean1 > mean2 ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
    }
    return r;
  }
  r.t = (mean1 - mean2) / std::sqrt(a + b);
  const double df = (a + b) * (a + b) / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
  r.p = students_t_two_sided_p(r.t, df);
  return r;
}

CharacterizationTables characterize_actions(const std::vector<ActionRepresentation>& reps,
                                            const std::vector<Action>& actions, int k,
                                            int threads) {
  if (actions.empty()) throw InputError("characterize_actions: no actions");
  const int M = static_cast<int>(actions.size());
  std::size_t n_pos = 0;
  for (const auto& r : reps) {
    if (static_cast<int>(r.scores.size()) != M)
      throw InputError("characterize_actions: representation dimension mismatch");
    if (r.week.label) ++n_pos;
  }
  if (n_pos < 2 || reps.size() - n_pos < 2)
    throw InputError("characterize_actions: need at least 2 weeks per label group");

  std::vector<CharacterizationRow> rows(static_cast<std::size_t>(M));
  const int t = resolve_threads(threads);
#pragma omp parallel num_threads(t)
  {
    std::vector<double> dropout_scores, nondropout_scores;
    dropout_scores.reserve(n_pos);
    nondropout_scores.reserve(reps.size() - n_pos);
#pragma omp for schedule(dynamic, 4)
    for (int j = 0; j < M; ++j) {
      dropout_scores.clear();
      nondropout_scores.clear();
      for (const auto& r : reps) {
        (r.week.label ? dropout_scores : nondropout_scores)
            .push_back(r.scores[static_cast<std::size_t>(j)]);
      }
      const auto res = welch_t_test(dropout_scores, nondropout_scores);
      rows[static_cast<std::size_t>(j)] =
          CharacterizationRow{actions[static_cast<std::size_t>(j)], res.t, res.p};
    }
  }

  const int keep = std::min(k, M);
  CharacterizationTables tables;

  std::vector<const CharacterizationRow*> by_t;
  by_t.reserve(rows.size());
  for (const auto& r : rows) by_t.push_back(&r);
  std::sort(by_t.begin(), by_t.end(), [](const CharacterizationRow* a, const CharacterizationRow* b) {
    if (a->t_score != b->t_score) return a->t_score < b->t_score;
    return a->action < b->action;
  });

  for (int i = 0; i < keep; ++i) tables.nondropout.push_back(*by_t[static_cast<std::size_t>(i)]);
  std::sort(by_t.begin(), by_t.end(), [](const CharacterizationRow* a, const CharacterizationRow* b) {
    if (a->t_score != b->t_score) return a->t_score > b->t_score;
    return a->action < b->action;
  });
  for (int i = 0; i < keep; ++i) tables.dropout.push_back(*by_t[static_cast<std::size_t>(i)]);
  return tables;
}

std::string format_p_value(double p) {
  if (p < 1e-15) return "< 2e-16";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", p);
  return buf;
}

}  // namespace bbdrop
