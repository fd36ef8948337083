// lfr.hpp -- week-representation learning: a linear encoder plus sigmoid
// decoder trained on inter-week context reconstruction and intra-week action
// co-occurrence.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "bbdrop/representation.hpp"

namespace bbdrop {

// Encoder/decoder weights. w_a is hidden x input row-major (column i is the
// embedding of action i), w_o is input x hidden row-major.
struct LfrParams {
  int input_dim = 0;   // M
  int hidden_dim = 0;  // m
  std::vector<double> w_a;
  std::vector<double> b_a;
  std::vector<double> w_o;
  std::vector<double> b_o;
};

struct LfrHyper {
  int hidden = 20;
  int window = 1;          // context window w
  double rep_pct = 20.0;   // representative percentile R
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_users = 200;
  int max_epochs = 1000;
  double early_stop = 1e-6;
  double val_frac = 0.15;
  std::uint64_t seed = 0;
};

struct LfrForwardResult {
  std::vector<double> hidden;  // u = W_a x + b_a, no nonlinearity
  std::vector<double> output;  // y = sigmoid(W_o u + b_o), entries in (0,1)
};

LfrParams init_lfr_params(int input_dim, int hidden_dim, std::uint64_t seed);

LfrForwardResult lfr_forward(const LfrParams& params, std::span<const double> x);

// Final representation fed to dropout prediction (decoder output).
std::vector<double> encode(const LfrParams& params, std::span<const double> x);

// Mean over realized (week, neighbor) pairs of the squared reconstruction
// error against in-window neighbors. Out-of-range neighbors are skipped and
// do not count toward the normalizer; needs at least two weeks.
double context_loss(const LfrParams& params,
                    const std::vector<std::vector<double>>& user_weeks, int window);

// Indices of the ceil(R*M/100) largest entries, ascending; cutoff ties go to
// the smaller index.
std::vector<int> representative_actions(std::span<const double> x, double rep_pct);

// Negative log-likelihood of every ordered pair of representative actions
// under the softmax of embedding dot products. Zero when fewer than two
// actions are representative.
double cooccurrence_loss(const LfrParams& params, std::span<const double> x, double rep_pct);

struct LfrGrads {
  std::vector<double> w_a, b_a, w_o, b_o;

  void resize_like(const LfrParams& params);
  void zero();
  void add(const LfrGrads& other);
};

// Combined objective over a batch of users: mean per-week co-occurrence loss
// plus mean per-realized-pair context loss, with exact analytic gradients.
// Weight decay is the optimizer's business and is not included here.
double unified_loss_and_grads(const LfrParams& params,
                              std::span<const UserHistory* const> batch,
                              const LfrHyper& hyper, LfrGrads* grads, int threads);

struct LfrEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct LfrTrainResult {
  LfrParams params;
  std::vector<LfrEpochLog> log;
};

// SGD with momentum and weight decay on the weight matrices. Users are
// shuffled into batches each epoch; 15% of users (by default) form the
// validation split used for early stopping. Bit-reproducible given the seed,
// independent of thread count.
LfrTrainResult train_lfr(const std::vector<UserHistory>& users, const LfrHyper& hyper,
                         int threads);

}  // namespace bbdrop
