#include "bbdrop/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bbdrop/error.hpp"
#include "bbdrop/metrics.hpp"
#include "bbdrop/rng.hpp"

namespace bbdrop {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardTrace {
  // pre-activations and activations per layer; activations[0] is the input
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> act;
  double prob = 0.0;
};

ForwardTrace forward(const PredictorParams& params, std::span<const double> rep) {
  if (params.layers.empty()) throw Error("predictor has no layers");
  if (static_cast<int>(rep.size()) != params.input_dim())
    throw InputError("representation has dimension " + std::to_string(rep.size()) +
                     ", predictor expects " + std::to_string(params.input_dim()));

  ForwardTrace tr;
  tr.act.emplace_back(rep.begin(), rep.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const auto& in = tr.act.back();
    std::vector<double> z(static_cast<std::size_t>(layer.out));
    for (int o = 0; o < layer.out; ++o) {
      double acc = layer.b[static_cast<std::size_t>(o)];
      const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += row[i] * in[static_cast<std::size_t>(i)];
      z[static_cast<std::size_t>(o)] = acc;
    }
    tr.pre.push_back(z);
    const bool last = l + 1 == params.layers.size();
    std::vector<double> a(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) a[i] = last ? sigmoid(z[i]) : std::max(0.0, z[i]);
    tr.act.push_back(std::move(a));
  }
  tr.prob = tr.act.back().front();
  return tr;
}

// d(loss)/d(prob) -> gradients of all layers, added into grads.
void backward(const PredictorParams& params, const ForwardTrace& tr, double dprob,
              PredictorGrads& grads) {
  const std::size_t L = params.layers.size();
  const double p = tr.prob;
  std::vector<double> delta{dprob * p * (1.0 - p)};

  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = params.layers[l];
    auto& glayer = grads.layers[l];
    const auto& in = tr.act[l];
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      double* row = glayer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) row[i] += d * in[static_cast<std::size_t>(i)];
      glayer.b[static_cast<std::size_t>(o)] += d;
    }
    if (l == 0) break;
    std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int i = 0; i < layer.in; ++i) {
      double acc = 0.0;
      for (int o = 0; o < layer.out; ++o)
        acc += layer.w[static_cast<std::size_t>(o) * layer.in + i] *
               delta[static_cast<std::size_t>(o)];
      // rectifier derivative of the producing layer
      prev[static_cast<std::size_t>(i)] =
          tr.pre[l - 1][static_cast<std::size_t>(i)] > 0.0 ? acc : 0.0;
    }
    delta = std::move(prev);
  }
}

}  // namespace

PredictorParams init_predictor_params(int input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw InputError("predictor input dimension must be positive");
  PredictorParams p;
  Rng rng(mix_seed(seed, 0xd20));
  int in = input_dim;
  std::vector<int> outs{kPredictorHidden[0], kPredictorHidden[1], kPredictorHidden[2], 1};
  for (int out : outs) {
    PredictorLayer layer;
    layer.in = in;
    layer.out = out;
    layer.w.resize(static_cast<std::size_t>(in) * out);
    layer.b.resize(static_cast<std::size_t>(out));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (auto& v : layer.w) v = rng.uniform(-bound, bound);
    for (auto& v : layer.b) v = rng.uniform(-bound, bound);
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

double predict(const PredictorParams& params, std::span<const double> rep) {
  return forward(params, rep).prob;
}

double margin_pair_loss(double p_pos, double p_neg, double margin) {
  return std::max(0.0, -(p_pos - p_neg) + margin);
}

std::vector<TrainPair> sample_pairs(const UserHistory& user, std::size_t base_index,
                                    std::uint64_t seed) {
  std::vector<std::size_t> positives, negatives;
  for (std::size_t i = 0; i < user.weeks.size(); ++i) {
    (user.weeks[i].week.label ? positives : negatives).push_back(base_index + i);
  }
  std::vector<TrainPair> pairs;
  if (positives.empty() || negatives.empty()) return pairs;
  pairs.reserve(positives.size() * negatives.size());
  for (std::size_t p : positives)
    for (std::size_t n : negatives) pairs.push_back(TrainPair{p, n});
  Rng rng(seed);
  rng.shuffle(pairs);
  return pairs;
}

void PredictorGrads::resize_like(const PredictorParams& params) {
  layers.clear();
  for (const auto& l : params.layers) {
    PredictorLayer g;
    g.in = l.in;
    g.out = l.out;
    g.w.assign(l.w.size(), 0.0);
    g.b.assign(l.b.size(), 0.0);
    layers.push_back(std::move(g));
  }
}

void PredictorGrads::zero() {
  for (auto& l : layers) {
    std::fill(l.w.begin(), l.w.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

double pair_loss_and_grads(const PredictorParams& params, std::span<const double> pos,
                           std::span<const double> neg, double margin, PredictorGrads* grads) {
  const auto tr_pos = forward(params, pos);
  const auto tr_neg = forward(params, neg);
  const double loss = margin_pair_loss(tr_pos.prob, tr_neg.prob, margin);
  if (grads != nullptr && loss > 0.0) {
    backward(params, tr_pos, -1.0, *grads);
    backward(params, tr_neg, +1.0, *grads);
  }
  return loss;
}

PredictorTrainResult train_predictor(const std::vector<UserHistory>& users, int input_dim,
                                     const PredictorHyper& hyper) {
  // flat week list in canonical order, plus all within-user pairs
  std::vector<const ActionRepresentation*> weeks;
  std::vector<TrainPair> pairs;
  for (const auto& user : users) {
    const std::size_t base = weeks.size();
    for (const auto& w : user.weeks) weeks.push_back(&w);
    auto user_pairs = sample_pairs(user, base, mix_seed(hyper.seed, 0x9a11 + base));
    pairs.insert(pairs.end(), user_pairs.begin(), user_pairs.end());
  }
  if (pairs.empty()) throw InputError("train_predictor: no positive/negative pairs to train on");

  PredictorTrainResult result;
  result.params = init_predictor_params(input_dim, hyper.seed);
  PredictorParams& params = result.params;

  PredictorGrads grads, m1, m2;
  grads.resize_like(params);
  m1.resize_like(params);
  m2.resize_like(params);

  std::int64_t step_count = 0;
  const auto adam_step = [&]() {
    ++step_count;
    const double bc1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step_count));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      auto& layer = params.layers[l];
      const auto& g = grads.layers[l];
      auto& mom = m1.layers[l];
      auto& v = m2.layers[l];
      for (std::size_t i = 0; i < layer.w.size(); ++i) {
        mom.w[i] = hyper.beta1 * mom.w[i] + (1.0 - hyper.beta1) * g.w[i];
        v.w[i] = hyper.beta2 * v.w[i] + (1.0 - hyper.beta2) * g.w[i] * g.w[i];
        layer.w[i] -= hyper.learning_rate * (mom.w[i] / bc1) / (std::sqrt(v.w[i] / bc2) + hyper.adam_eps);
      }
      for (std::size_t i = 0; i < layer.b.size(); ++i) {
        mom.b[i] = hyper.beta1 * mom.b[i] + (1.0 - hyper.beta1) * g.b[i];
        v.b[i] = hyper.beta2 * v.b[i] + (1.0 - hyper.beta2) * g.b[i] * g.b[i];
        layer.b[i] -= hyper.learning_rate * (mom.b[i] / bc1) / (std::sqrt(v.b[i] / bc2) + hyper.adam_eps);
      }
    }
  };

  double prev_loss = 0.0;
  bool have_prev = false;
  int stale_epochs = 0;

  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    Rng epoch_rng(mix_seed(hyper.seed, 0xada0 + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(pairs);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(hyper.batch_pairs)) {
      const std::size_t end =
          std::min(pairs.size(), start + static_cast<std::size_t>(hyper.batch_pairs));
      grads.zero();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        batch_loss += pair_loss_and_grads(params, weeks[pairs[k].pos]->scores,
                                          weeks[pairs[k].neg]->scores, hyper.margin, &grads);
      }
      // mean over the batch
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& l : grads.layers) {
        for (auto& v : l.w) v *= inv;
        for (auto& v : l.b) v *= inv;
      }
      adam_step();
      epoch_loss += batch_loss;
    }
    const double mean_loss = epoch_loss / static_cast<double>(pairs.size());
    result.epoch_loss.push_back(mean_loss);

    if (have_prev) {
      stale_epochs = (prev_loss - mean_loss < hyper.tol) ? stale_epochs + 1 : 0;
      if (stale_epochs >= hyper.patience) break;
    }
    prev_loss = mean_loss;
    have_prev = true;
  }
  return result;
}

ClassifyResult classify(std::span<const double> scores, std::span<const int> labels,
                        ThresholdPolicy policy, double fixed_tau) {
  if (scores.empty()) throw InputError("classify: empty input");
  if (scores.size() != labels.size()) throw InputError("classify: scores/labels length mismatch");

  const auto apply = [&](double tau) {
    std::vector<int> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) preds[i] = scores[i] >= tau ? 1 : 0;
    return preds;
  };

  ClassifyResult result;
  if (policy == ThresholdPolicy::Fixed) {
    result.threshold = fixed_tau;
    result.predictions = apply(fixed_tau);
    return result;
  }

  std::vector<double> grid(scores.begin(), scores.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  std::vector<int> label_vec(labels.begin(), labels.end());
  double best_tau = grid.front();
  double best_f1 = -1.0;
  for (double tau : grid) {
    const auto preds = apply(tau);
    const double f1 = f1_score(label_vec, preds);
    if (f1 > best_f1) {  // ties keep the smaller tau already seen
      best_f1 = f1;
      best_tau = tau;
    }
  }
  result.threshold = best_tau;
  result.predictions = apply(best_tau);
  return result;
}

}  // namespace bbdrop
