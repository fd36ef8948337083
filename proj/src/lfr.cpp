#include "bbdrop/lfr.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <omp.h>

#include "bbdrop/error.hpp"
#include "bbdrop/mining.hpp"
#include "bbdrop/rng.hpp"

namespace bbdrop {

namespace {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void check_dim(const LfrParams& p, std::size_t x_dim) {
  if (static_cast<std::size_t>(p.input_dim) != x_dim)
    throw InputError("input has dimension " + std::to_string(x_dim) + ", params expect " +
                     std::to_string(p.input_dim));
  if (p.w_a.size() != static_cast<std::size_t>(p.hidden_dim) * p.input_dim ||
      p.b_a.size() != static_cast<std::size_t>(p.hidden_dim) ||
      p.w_o.size() != static_cast<std::size_t>(p.input_dim) * p.hidden_dim ||
      p.b_o.size() != static_cast<std::size_t>(p.input_dim))
    throw Error("LfrParams block shapes are inconsistent");
}

int representative_count(int input_dim, double rep_pct) {
  return static_cast<int>(std::ceil(rep_pct * input_dim / 100.0));
}

}  // namespace

LfrParams init_lfr_params(int input_dim, int hidden_dim, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1) throw InputError("lfr dimensions must be positive");
  LfrParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  Rng rng(mix_seed(seed, 0xf17));
  const double a_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double o_bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  p.w_a.resize(static_cast<std::size_t>(hidden_dim) * input_dim);
  p.b_a.resize(static_cast<std::size_t>(hidden_dim));
  p.w_o.resize(static_cast<std::size_t>(input_dim) * hidden_dim);
  p.b_o.resize(static_cast<std::size_t>(input_dim));
  for (auto& v : p.w_a) v = rng.uniform(-a_bound, a_bound);
  for (auto& v : p.b_a) v = rng.uniform(-a_bound, a_bound);
  for (auto& v : p.w_o) v = rng.uniform(-o_bound, o_bound);
  for (auto& v : p.b_o) v = rng.uniform(-o_bound, o_bound);
  return p;
}

LfrForwardResult lfr_forward(const LfrParams& params, std::span<const double> x) {
  check_dim(params, x.size());
  const int M = params.input_dim;
  const int m = params.hidden_dim;

  LfrForwardResult r;
  r.hidden.resize(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double acc = params.b_a[static_cast<std::size_t>(i)];
    const double* row = params.w_a.data() + static_cast<std::size_t>(i) * M;
    for (int j = 0; j < M; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
    r.hidden[static_cast<std::size_t>(i)] = acc;
  }
  r.output.resize(static_cast<std::size_t>(M));
  for (int i = 0; i < M; ++i) {
    double acc = params.b_o[static_cast<std::size_t>(i)];
    const double* row = params.w_o.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) acc += row[j] * r.hidden[static_cast<std::size_t>(j)];
    r.output[static_cast<std::size_t>(i)] = sigmoid(acc);
  }
  return r;
}

std::vector<double> encode(const LfrParams& params, std::span<const double> x) {
  return lfr_forward(params, x).output;
}

double context_loss(const LfrParams& params,
                    const std::vector<std::vector<double>>& user_weeks, int window) {
  if (user_weeks.size() < 2)
    throw InputError("context_loss needs at least two weeks, got " +
                     std::to_string(user_weeks.size()));
  const int T = static_cast<int>(user_weeks.size());
  double total = 0.0;
  std::size_t pairs = 0;
  for (int t = 0; t < T; ++t) {
    const auto y = lfr_forward(params, user_weeks[static_cast<std::size_t>(t)]).output;
    for (int i = -window; i <= window; ++i) {
      if (i == 0) continue;
      const int s = t + i;
      if (s < 0 || s >= T) continue;
      const auto& x = user_weeks[static_cast<std::size_t>(s)];
      double err = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) {
        const double d = y[j] - x[j];
        err += d * d;
      }
      total += err;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<int> representative_actions(std::span<const double> x, double rep_pct) {
  if (rep_pct <= 0.0 || rep_pct > 100.0)
    throw InputError("representative percentile must be in (0,100]");
  const int M = static_cast<int>(x.size());
  const int keep = std::min(M, representative_count(M, rep_pct));
  std::vector<int> order(static_cast<std::size_t>(M));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (x[static_cast<std::size_t>(a)] != x[static_cast<std::size_t>(b)])
      return x[static_cast<std::size_t>(a)] > x[static_cast<std::size_t>(b)];
    return a < b;
  });
  std::vector<int> picked(order.begin(), order.begin() + keep);
  std::sort(picked.begin(), picked.end());
  return picked;
}

namespace {

// Co-occurrence term of one week. Appends analytic gradients to grads->w_a
// (scaled by `scale`) when grads is non-null; returns the unscaled loss.
//
// For a representative action i with embedding w_i (column i of W_a), the
// aggregated loss over partners j is (K-1)*logsumexp(l) - sum_j l_j with
// logits l_h = w_h . w_i. Writing q = (K-1)*softmax(l) - indicator(partners),
// the gradient is q_h * w_i for column h plus an extra W_a q + q_i w_i on
// column i (the logits also move through w_i).
double cooccurrence_week(const LfrParams& params, std::span<const double> x, double rep_pct,
                         double scale, LfrGrads* grads) {
  const int M = params.input_dim;
  const int m = params.hidden_dim;
  const auto reps = representative_actions(x, rep_pct);
  const int K = static_cast<int>(reps.size());
  if (K < 2) return 0.0;

  std::vector<char> is_rep(static_cast<std::size_t>(M), 0);
  for (int idx : reps) is_rep[static_cast<std::size_t>(idx)] = 1;

  std::vector<double> logits(static_cast<std::size_t>(M));
  std::vector<double> soft(static_cast<std::size_t>(M));
  std::vector<double> q(static_cast<std::size_t>(M));
  std::vector<double> w_i(static_cast<std::size_t>(m));
  std::vector<double> waq(static_cast<std::size_t>(m));

  double loss = 0.0;
  for (int i : reps) {
    for (int r = 0; r < m; ++r)
      w_i[static_cast<std::size_t>(r)] = params.w_a[static_cast<std::size_t>(r) * M + i];

    for (int h = 0; h < M; ++h) {
      double acc = 0.0;
      for (int r = 0; r < m; ++r)
        acc += params.w_a[static_cast<std::size_t>(r) * M + h] * w_i[static_cast<std::size_t>(r)];
      logits[static_cast<std::size_t>(h)] = acc;
    }

    const double max_logit = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (int h = 0; h < M; ++h) {
      soft[static_cast<std::size_t>(h)] = std::exp(logits[static_cast<std::size_t>(h)] - max_logit);
      z += soft[static_cast<std::size_t>(h)];
    }
    for (int h = 0; h < M; ++h) soft[static_cast<std::size_t>(h)] /= z;
    const double lse = max_logit + std::log(z);

    double partner_logits = 0.0;
    for (int j : reps)
      if (j != i) partner_logits += logits[static_cast<std::size_t>(j)];
    loss += static_cast<double>(K - 1) * lse - partner_logits;

    if (grads != nullptr) {
      for (int h = 0; h < M; ++h) {
        q[static_cast<std::size_t>(h)] = static_cast<double>(K - 1) * soft[static_cast<std::size_t>(h)] -
                                         ((is_rep[static_cast<std::size_t>(h)] && h != i) ? 1.0 : 0.0);
      }
      for (int r = 0; r < m; ++r) {
        double acc = 0.0;
        const double* row = params.w_a.data() + static_cast<std::size_t>(r) * M;
        for (int h = 0; h < M; ++h) acc += row[h] * q[static_cast<std::size_t>(h)];
        waq[static_cast<std::size_t>(r)] = acc;
      }
      for (int r = 0; r < m; ++r) {
        double* grow = grads->w_a.data() + static_cast<std::size_t>(r) * M;
        const double wir = w_i[static_cast<std::size_t>(r)];
        for (int h = 0; h < M; ++h) grow[h] += scale * q[static_cast<std::size_t>(h)] * wir;
        grow[i] += scale * waq[static_cast<std::size_t>(r)];
      }
    }
  }
  return loss;
}

struct UserTermCounts {
  std::size_t weeks = 0;
  std::size_t context_pairs = 0;
};

UserTermCounts count_terms(const UserHistory& user, int window) {
  UserTermCounts c;
  const int T = static_cast<int>(user.weeks.size());
  c.weeks = user.weeks.size();
  for (int t = 0; t < T; ++t)
    for (int i = -window; i <= window; ++i) {
      if (i == 0) continue;
      const int s = t + i;
      if (s >= 0 && s < T) ++c.context_pairs;
    }
  return c;
}

// Loss and gradient contribution of a single user given batch normalizers.
double user_loss_and_grads(const LfrParams& params, const UserHistory& user,
                           const LfrHyper& hyper, double week_scale, double pair_scale,
                           LfrGrads* grads) {
  const int M = params.input_dim;
  const int m = params.hidden_dim;
  const int T = static_cast<int>(user.weeks.size());
  double loss = 0.0;

  std::vector<LfrForwardResult> fwd(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto& x = user.weeks[static_cast<std::size_t>(t)].scores;
    if (static_cast<int>(x.size()) != M)
      throw InputError("representation dimension mismatch for user " + user.user_id);
    fwd[static_cast<std::size_t>(t)] = lfr_forward(params, x);
  }

  // co-occurrence term, per week
  for (int t = 0; t < T; ++t) {
    const double l = cooccurrence_week(params, user.weeks[static_cast<std::size_t>(t)].scores,
                                       hyper.rep_pct, week_scale, grads);
    if (!std::isfinite(l)) throw Error("non-finite co-occurrence loss");
    loss += week_scale * l;
  }

  // context term, per realized neighbor pair
  if (pair_scale > 0.0 && T >= 2) {
    std::vector<double> g_y(static_cast<std::size_t>(M));
    std::vector<double> dz(static_cast<std::size_t>(M));
    for (int t = 0; t < T; ++t) {
      const auto& y = fwd[static_cast<std::size_t>(t)].output;
      std::fill(g_y.begin(), g_y.end(), 0.0);
      bool any = false;
      for (int i = -hyper.window; i <= hyper.window; ++i) {
        if (i == 0) continue;
        const int s = t + i;
        if (s < 0 || s >= T) continue;
        any = true;
        const auto& x_nb = user.weeks[static_cast<std::size_t>(s)].scores;
        double err = 0.0;
        for (int j = 0; j < M; ++j) {
          const double d = y[static_cast<std::size_t>(j)] - x_nb[static_cast<std::size_t>(j)];
          err += d * d;
          g_y[static_cast<std::size_t>(j)] += 2.0 * d;
        }
        if (!std::isfinite(err)) throw Error("non-finite context loss");
        loss += pair_scale * err;
      }
      if (!any || grads == nullptr) continue;

      const auto& u = fwd[static_cast<std::size_t>(t)].hidden;
      const auto& x_t = user.weeks[static_cast<std::size_t>(t)].scores;
      for (int j = 0; j < M; ++j) {
        const double yj = y[static_cast<std::size_t>(j)];
        dz[static_cast<std::size_t>(j)] = pair_scale * g_y[static_cast<std::size_t>(j)] * yj * (1.0 - yj);
      }
      for (int j = 0; j < M; ++j) {
        const double d = dz[static_cast<std::size_t>(j)];
        double* row = grads->w_o.data() + static_cast<std::size_t>(j) * m;
        for (int r = 0; r < m; ++r) row[r] += d * u[static_cast<std::size_t>(r)];
        grads->b_o[static_cast<std::size_t>(j)] += d;
      }
      for (int r = 0; r < m; ++r) {
        double du = 0.0;
        for (int j = 0; j < M; ++j)
          du += params.w_o[static_cast<std::size_t>(j) * m + r] * dz[static_cast<std::size_t>(j)];
        double* row = grads->w_a.data() + static_cast<std::size_t>(r) * M;
        for (int j = 0; j < M; ++j) row[j] += du * x_t[static_cast<std::size_t>(j)];
        grads->b_a[static_cast<std::size_t>(r)] += du;
      }
    }
  }
  return loss;
}

}  // namespace

double cooccurrence_loss(const LfrParams& params, std::span<const double> x, double rep_pct) {
  check_dim(params, x.size());
  return cooccurrence_week(params, x, rep_pct, 1.0, nullptr);
}

void LfrGrads::resize_like(const LfrParams& params) {
  w_a.assign(params.w_a.size(), 0.0);
  b_a.assign(params.b_a.size(), 0.0);
  w_o.assign(params.w_o.size(), 0.0);
  b_o.assign(params.b_o.size(), 0.0);
}

void LfrGrads::zero() {
  std::fill(w_a.begin(), w_a.end(), 0.0);
  std::fill(b_a.begin(), b_a.end(), 0.0);
  std::fill(w_o.begin(), w_o.end(), 0.0);
  std::fill(b_o.begin(), b_o.end(), 0.0);
}

void LfrGrads::add(const LfrGrads& other) {
  for (std::size_t i = 0; i < w_a.size(); ++i) w_a[i] += other.w_a[i];
  for (std::size_t i = 0; i < b_a.size(); ++i) b_a[i] += other.b_a[i];
  for (std::size_t i = 0; i < w_o.size(); ++i) w_o[i] += other.w_o[i];
  for (std::size_t i = 0; i < b_o.size(); ++i) b_o[i] += other.b_o[i];
}

double unified_loss_and_grads(const LfrParams& params,
                              std::span<const UserHistory* const> batch,
                              const LfrHyper& hyper, LfrGrads* grads, int threads) {
  if (batch.empty()) throw InputError("empty batch");

  std::size_t n_weeks = 0, n_pairs = 0;
  for (const UserHistory* user : batch) {
    const auto c = count_terms(*user, hyper.window);
    n_weeks += c.weeks;
    n_pairs += c.context_pairs;
  }
  if (n_weeks == 0) throw InputError("batch has no weeks");
  const double week_scale = 1.0 / static_cast<double>(n_weeks);
  const double pair_scale = n_pairs == 0 ? 0.0 : 1.0 / static_cast<double>(n_pairs);

  // Per-user slots, then a fixed-order reduction: results do not depend on
  // the thread count or schedule.
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<LfrGrads> slots;
  if (grads != nullptr) {
    slots.resize(batch.size());
    for (auto& s : slots) s.resize_like(params);
  }

  const int t = resolve_threads(threads);
#pragma omp parallel for schedule(dynamic, 1) num_threads(t)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(batch.size()); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    losses[idx] = user_loss_and_grads(params, *batch[idx], hyper, week_scale, pair_scale,
                                      grads != nullptr ? &slots[idx] : nullptr);
  }

  double loss = 0.0;
  for (double l : losses) loss += l;
  if (grads != nullptr) {
    grads->resize_like(params);
    for (const auto& s : slots) grads->add(s);
  }
  if (!std::isfinite(loss)) throw Error("non-finite combined loss");
  return loss;
}

LfrTrainResult train_lfr(const std::vector<UserHistory>& users, const LfrHyper& hyper,
                         int threads) {
  if (users.empty()) throw InputError("train_lfr: empty dataset");
  for (const auto& u : users)
    if (u.weeks.empty()) throw InputError("train_lfr: user " + u.user_id + " has no weeks");
  const int M = static_cast<int>(users.front().weeks.front().scores.size());
  if (M < 1) throw InputError("train_lfr: empty representations");

  // validation split by user
  std::vector<std::size_t> order(users.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng(mix_seed(hyper.seed, 0x5b17));
  split_rng.shuffle(order);
  std::size_t n_val = 0;
  if (users.size() >= 2) {
    n_val = static_cast<std::size_t>(std::llround(hyper.val_frac * static_cast<double>(users.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, users.size() - 1);
  }
  std::vector<const UserHistory*> val_users, train_users;
  for (std::size_t i = 0; i < n_val; ++i) val_users.push_back(&users[order[i]]);
  for (std::size_t i = n_val; i < users.size(); ++i) train_users.push_back(&users[order[i]]);

  LfrTrainResult result;
  result.params = init_lfr_params(M, hyper.hidden, hyper.seed);
  LfrParams& params = result.params;

  LfrGrads grads, velocity;
  velocity.resize_like(params);

  const auto step = [&](const LfrGrads& g) {
    const double lr = hyper.learning_rate;
    const double mu = hyper.momentum;
    const double wd = hyper.weight_decay;
    for (std::size_t i = 0; i < params.w_a.size(); ++i) {
      velocity.w_a[i] = mu * velocity.w_a[i] + g.w_a[i] + wd * params.w_a[i];
      params.w_a[i] -= lr * velocity.w_a[i];
    }
    for (std::size_t i = 0; i < params.b_a.size(); ++i) {
      velocity.b_a[i] = mu * velocity.b_a[i] + g.b_a[i];
      params.b_a[i] -= lr * velocity.b_a[i];
    }
    for (std::size_t i = 0; i < params.w_o.size(); ++i) {
      velocity.w_o[i] = mu * velocity.w_o[i] + g.w_o[i] + wd * params.w_o[i];
      params.w_o[i] -= lr * velocity.w_o[i];
    }
    for (std::size_t i = 0; i < params.b_o.size(); ++i) {
      velocity.b_o[i] = mu * velocity.b_o[i] + g.b_o[i];
      params.b_o[i] -= lr * velocity.b_o[i];
    }
  };

  const auto eval_loss = [&](const std::vector<const UserHistory*>& set) {
    if (set.empty()) return 0.0;
    return unified_loss_and_grads(params, std::span<const UserHistory* const>(set), hyper,
                                  nullptr, threads);
  };

  double prev_stop_loss = 0.0;
  bool have_prev = false;

  std::vector<const UserHistory*> shuffled = train_users;
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    Rng epoch_rng(mix_seed(hyper.seed, 0xe90c + static_cast<std::uint64_t>(epoch)));
    epoch_rng.shuffle(shuffled);

    double epoch_loss = 0.0;
    std::size_t epoch_weeks = 0;
    for (std::size_t start = 0; start < shuffled.size();
         start += static_cast<std::size_t>(hyper.batch_users)) {
      const std::size_t end =
          std::min(shuffled.size(), start + static_cast<std::size_t>(hyper.batch_users));
      std::span<const UserHistory* const> batch(shuffled.data() + start, end - start);
      const double batch_loss = unified_loss_and_grads(params, batch, hyper, &grads, threads);
      step(grads);
      std::size_t batch_weeks = 0;
      for (const auto* u : batch) batch_weeks += u->weeks.size();
      epoch_loss += batch_loss * static_cast<double>(batch_weeks);
      epoch_weeks += batch_weeks;
    }
    const double train_loss = epoch_weeks == 0 ? 0.0 : epoch_loss / static_cast<double>(epoch_weeks);
    const double val_loss = eval_loss(val_users);

    result.log.push_back(LfrEpochLog{epoch, train_loss, val_loss});

    // stop when the validation loss plateaus (train loss when no split)
    const double stop_loss = val_users.empty() ? train_loss : val_loss;
    if (have_prev && std::abs(stop_loss - prev_stop_loss) < hyper.early_stop) break;
    prev_stop_loss = stop_loss;
    have_prev = true;
  }
  return result;
}

}  // namespace bbdrop
