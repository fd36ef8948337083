// predictor.hpp -- dropout probability prediction with a small feed-forward
// network trained under margin ranking loss over within-user pairs.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bbdrop/representation.hpp"

namespace bbdrop {

struct PredictorLayer {
  int in = 0, out = 0;
  std::vector<double> w;  // out x in, row-major
  std::vector<double> b;  // out
};

// Four layers: input -> 100 -> 50 -> 25 -> 1. Rectifier activations on the
// hidden layers, sigmoid on the output unit.
struct PredictorParams {
  std::vector<PredictorLayer> layers;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
};

inline constexpr int kPredictorHidden[3] = {100, 50, 25};

PredictorParams init_predictor_params(int input_dim, std::uint64_t seed);

// Dropout probability for one week representation, in (0,1).
double predict(const PredictorParams& params, std::span<const double> rep);

// max(0, -(p_pos - p_neg) + margin)
double margin_pair_loss(double p_pos, double p_neg, double margin);

// One positive/negative week pair of a single user, by index into a flat
// representation list.
struct TrainPair {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

// Pairs every positive week of the user with every negative week of the same
// user, shuffled with the seeded generator. Users without a positive or
// without negatives yield nothing.
std::vector<TrainPair> sample_pairs(const UserHistory& user, std::size_t base_index,
                                    std::uint64_t seed);

struct PredictorHyper {
  double margin = 0.5;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_pairs = 10;
  int max_epochs = 500;
  int patience = 5;        // consecutive epochs of < tol improvement
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

struct PredictorTrainResult {
  PredictorParams params;
  std::vector<double> epoch_loss;  // mean pair loss per epoch
};

// Adam over shuffled pair batches, stopping after `patience` consecutive
// epochs whose mean loss improves by less than `tol`, or at max_epochs.
// Deterministic given the seed.
PredictorTrainResult train_predictor(const std::vector<UserHistory>& users, int input_dim,
                                     const PredictorHyper& hyper);

// Gradient of margin_pair_loss(predict(pos), predict(neg), margin) for one
// pair, accumulated into `grads` (same shapes as params). Returns the loss.
// Exposed for the finite-difference checks.
struct PredictorGrads {
  std::vector<PredictorLayer> layers;
  void resize_like(const PredictorParams& params);
  void zero();
};

double pair_loss_and_grads(const PredictorParams& params, std::span<const double> pos,
                           std::span<const double> neg, double margin, PredictorGrads* grads);

struct ClassifyResult {
  std::vector<int> predictions;
  double threshold = 0.5;
};

enum class ThresholdPolicy { Fixed, TuneOnValidation };

// Fixed: positive iff score >= tau. Tune: tau picked from the distinct score
// values maximizing F1 against the given labels; ties go to the smaller tau.
ClassifyResult classify(std::span<const double> scores, std::span<const int> labels,
                        ThresholdPolicy policy, double fixed_tau = 0.5);

}  // namespace bbdrop
