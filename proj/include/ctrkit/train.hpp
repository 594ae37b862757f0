#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/graph.hpp"
#include "ctrkit/metrics.hpp"
#include "ctrkit/models.hpp"
#include "ctrkit/optim.hpp"

namespace ctrkit {

struct SchedulerConfig {
  bool enabled = true;
  double t0_epochs = 1.0;
  double t_mult = 2.0;
  double lr_min = 1e-6;
};

struct TrainConfig {
  int batch_size = 1024;
  int epochs = 10;
  double lr = 1e-3;
  std::string optimizer = "adamw";  // adam | adamw
  double weight_decay = 1e-4;
  double clip_norm = 1.0;
  SchedulerConfig scheduler;
  int patience = 3;
  double val_fraction = 0.2;
  std::string split = "random";  // random | chronological
  bool class_weight = true;
  std::uint64_t seed = 1;

  void validate() const {
    require(batch_size >= 1, "train: batch_size must be >= 1");
    require(epochs >= 0, "train: epochs must be >= 0");
    require(lr > 0.0, "train: learning rate must be positive");
    require(optimizer == "adam" || optimizer == "adamw",
            "train: optimizer must be adam or adamw");
    require(weight_decay >= 0.0, "train: weight decay must be >= 0");
    require(clip_norm > 0.0, "train: clip norm must be positive");
    require(patience >= 1, "train: patience must be >= 1");
    require(val_fraction > 0.0 && val_fraction < 1.0,
            "train: validation fraction must be in (0, 1)");
    require(split == "random" || split == "chronological",
            "train: split must be random or chronological");
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_auc = 0.0;
  double val_log_loss = 0.0;
  double lr = 0.0;
};

using TrainHistory = std::vector<EpochStats>;

struct SplitMask {
  std::vector<bool> train;  // true = training row

  std::vector<std::size_t> train_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (train[i]) out.push_back(i);
    }
    return out;
  }
  std::vector<std::size_t> val_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (!train[i]) out.push_back(i);
    }
    return out;
  }
};

// Seeded 8:2 split (random) or time-ordered split (earliest rows train).
inline SplitMask make_split(std::size_t n_rows, double val_fraction,
                            std::uint64_t seed, const std::string& mode,
                            const std::vector<std::int64_t>& timestamps = {}) {
  require(n_rows >= 2, "split: need at least 2 rows");
  const auto n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(n_rows)));
  require(n_val >= 1 && n_val < n_rows, "split: degenerate validation size");
  SplitMask mask;
  mask.train.assign(n_rows, true);
  if (mode == "chronological") {
    require(timestamps.size() == n_rows, "split: timestamps required");
    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return timestamps[a] < timestamps[b];
    });
    for (std::size_t i = n_rows - n_val; i < n_rows; ++i) mask.train[order[i]] = false;
  } else {
    require(mode == "random", "split: unknown mode " + mode);
    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(hash_combine(seed, 0x59117ULL));
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_val; ++i) mask.train[order[i]] = false;
  }
  return mask;
}

struct TrainResult {
  TrainHistory history;
  double w_plus = 1.0;
  int best_epoch = 0;
  double best_val_auc = 0.0;
};

// Full training loop: weighted BCE, Adam/AdamW, cosine warm restarts,
// global-norm clipping, patience-based early stopping with best-checkpoint
// restore. Deterministic end to end for a fixed seed and a single thread.
template <typename T>
TrainResult train_model(DeepModel<T>& model, const EncodedBatch& batch,
                        const SequenceSet* sequences, const TrainConfig& config,
                        const SplitMask& mask) {
  config.validate();
  require(mask.train.size() == batch.n_rows, "train: split mask size mismatch");
  if (model.needs_sequences()) {
    require(sequences != nullptr, "train: model requires sequences");
  }

  TrainResult result;
  if (config.epochs == 0) return result;  // initialized model, empty history

  const auto train_rows = mask.train_rows();
  const auto val_rows = mask.val_rows();
  require(!train_rows.empty() && !val_rows.empty(),
          "train: empty train or validation split");

  std::size_t n_pos = 0;
  for (std::size_t r : train_rows) n_pos += batch.labels[r] ? 1 : 0;
  const std::size_t n_neg = train_rows.size() - n_pos;
  require(n_pos > 0 && n_neg > 0, "train: training labels are single-class");
  const double w_plus =
      config.class_weight ? static_cast<double>(n_neg) / static_cast<double>(n_pos)
                          : 1.0;
  result.w_plus = w_plus;

  AdamConfig adam;
  adam.weight_decay = config.weight_decay;
  adam.decoupled = (config.optimizer == "adamw");
  if (!adam.decoupled) adam.weight_decay = 0.0;  // plain Adam: no decay
  AdamOptimizer<T> optimizer(adam);

  const std::size_t steps_per_epoch =
      (train_rows.size() + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size);
  const double t0_steps =
      config.scheduler.t0_epochs * static_cast<double>(steps_per_epoch);

  std::vector<int> val_labels(val_rows.size());
  for (std::size_t i = 0; i < val_rows.size(); ++i) {
    val_labels[i] = batch.labels[val_rows[i]];
  }

  EarlyStopper stopper(config.patience);
  auto best_snapshot = model.params().snapshot();
  std::int64_t global_step = 0;
  std::vector<std::size_t> order(train_rows);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::mt19937_64 shuffle_rng(hash_combine(config.seed, static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    std::size_t loss_batches = 0;
    double last_lr = config.lr;
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      rows.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                  order.begin() + static_cast<std::ptrdiff_t>(end));
      auto mb = make_minibatch<T>(batch, rows,
                                  model.needs_sequences() ? sequences : nullptr);
      Graph<T> g;
      g.seed_dropout(hash_combine(config.seed,
                                  static_cast<std::uint64_t>(global_step) * 2654435761ULL));
      model.params().zero_grads();
      const auto probs = model.build_probs(g, mb, RunMode::kTrain);
      const auto loss = g.weighted_bce(probs, mb.labels, w_plus, 1.0);
      const double loss_value = static_cast<double>(g.value(loss)[0]);
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("training diverged: non-finite loss at epoch " +
                              std::to_string(epoch));
      }
      loss_sum += loss_value;
      ++loss_batches;
      g.backward(loss);
      clip_gradients(model.params(), config.clip_norm);
      const double lr = config.scheduler.enabled
                            ? cosine_warm_restarts(static_cast<double>(global_step),
                                                   t0_steps, config.scheduler.t_mult,
                                                   config.lr, config.scheduler.lr_min)
                            : config.lr;
      last_lr = lr;
      optimizer.step(model.params(), lr);
      ++global_step;
    }

    // Validation in eval mode.
    std::vector<double> val_scores = model.predict_rows(batch, sequences, val_rows);
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(loss_batches);
    stats.val_auc = auc(val_scores, val_labels);
    stats.val_log_loss = log_loss(val_scores, val_labels);
    stats.lr = last_lr;
    result.history.push_back(stats);

    const bool keep_going = stopper.observe(stats.val_auc);
    if (stopper.best_epoch() == epoch) {
      best_snapshot = model.params().snapshot();
    }
    if (!keep_going) break;
  }

  model.params().restore(best_snapshot);
  result.best_epoch = stopper.best_epoch();
  result.best_val_auc = stopper.best();
  return result;
}

}  // namespace ctrkit
