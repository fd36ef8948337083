// metrics.hpp -- F1, rank-based AUC, Welch's t-test and the per-action
// dropout/non-dropout characterization tables.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "bbdrop/actions.hpp"
#include "bbdrop/representation.hpp"

namespace bbdrop {

// F1 over the positive class, computed as 2TP / (2TP + FP + FN); defined as 0
// when no true or predicted positives exist.
double f1_score(std::span<const int> labels, std::span<const int> predictions);

// Mann-Whitney AUC with average ranks for tied scores. Both classes must be
// present.
double auc(std::span<const int> labels, std::span<const double> scores);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
};

// Welch's unequal-variance two-sample t-test, two-sided p at the
// Welch-Satterthwaite degrees of freedom. Positive t means the first
// (dropout) group scores higher. Each group needs at least 2 values.
TTestResult welch_t_test(std::span<const double> group_dropout,
                         std::span<const double> group_nondropout);

// Two-sided Student-t tail probability via the regularized incomplete beta
// function. Exposed for the oracle tests.
double students_t_two_sided_p(double t, double df);
double regularized_incomplete_beta(double a, double b, double x);

struct CharacterizationRow {
  Action action;
  double t_score = 0.0;
  double p_value = 1.0;
};

struct CharacterizationTables {
  std::vector<CharacterizationRow> nondropout;  // k smallest t, ascending
  std::vector<CharacterizationRow> dropout;     // k largest t, descending
};

// Per-action Welch t over the score columns split by dropout label. k is
// clamped to the number of actions; ties break by lexicographic action order.
CharacterizationTables characterize_actions(const std::vector<ActionRepresentation>& reps,
                                            const std::vector<Action>& actions, int k,
                                            int threads);

// Table formatting for p-values: "< 2e-16" below 1e-15, else 6 significant
// digits.
std::string format_p_value(double p);

}  // namespace bbdrop
