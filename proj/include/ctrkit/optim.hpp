#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/params.hpp"

namespace ctrkit {

// ---------------------------------------------------------------------------
// Adam / AdamW. AdamW applies decoupled weight decay directly to the
// weights; plain Adam applies no decay.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;  // true = AdamW
};

template <typename T>
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  void step(ParameterSet<T>& params, double lr) {
    ensure_state(params);
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, t_);
    const double bc2 = 1.0 - std::pow(config_.beta2, t_);
    for (std::size_t pi = 0; pi < params.count(); ++pi) {
      auto& p = params.at(static_cast<int>(pi));
      if (!p.trainable) continue;
      auto& m = m_[pi];
      auto& v = v_[pi];
      const std::size_t frozen_begin =
          p.frozen_row >= 0 ? static_cast<std::size_t>(p.frozen_row) *
                                  (p.value.rank() == 2 ? p.value.dim(1) : 0)
                            : p.value.size();
      const std::size_t frozen_end =
          p.frozen_row >= 0 && p.value.rank() == 2
              ? frozen_begin + p.value.dim(1)
              : frozen_begin;
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        if (i >= frozen_begin && i < frozen_end) continue;
        const double g = static_cast<double>(p.grad[i]);
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        double w = static_cast<double>(p.value[i]);
        if (config_.decoupled && config_.weight_decay > 0.0) {
          w -= lr * config_.weight_decay * w;
        }
        w -= lr * mhat / (std::sqrt(vhat) + config_.eps);
        p.value[i] = static_cast<T>(w);
      }
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  void ensure_state(const ParameterSet<T>& params) {
    if (m_.size() == params.count()) return;
    require(m_.empty(), "optimizer bound to a different parameter set");
    m_.resize(params.count());
    v_.resize(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      m_[i].assign(params.at(static_cast<int>(i)).value.size(), 0.0);
      v_[i].assign(params.at(static_cast<int>(i)).value.size(), 0.0);
    }
  }

  AdamConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Cosine annealing with warm restarts. Cycle lengths T0, T0*T_mult, ...;
// within a cycle of length T at phase t in [0, T]:
//   lr = lr_min + 0.5 * (lr_max - lr_min) * (1 + cos(pi * t / T))
// ---------------------------------------------------------------------------

inline double cosine_cycle_value(double t, double period, double lr_max,
                                 double lr_min) {
  require(period > 0.0, "cosine schedule: period must be positive");
  return lr_min + 0.5 * (lr_max - lr_min) *
                      (1.0 + std::cos(3.14159265358979323846 * t / period));
}

inline double cosine_warm_restarts(double step, double t0, double t_mult,
                                   double lr_max, double lr_min) {
  require(step >= 0.0, "cosine schedule: negative step");
  require(t0 > 0.0 && t_mult >= 1.0, "cosine schedule: bad cycle spec");
  double t = step;
  double period = t0;
  if (t_mult == 1.0) {
    t = std::fmod(t, period);
  } else {
    while (t >= period) {
      t -= period;
      period *= t_mult;
    }
  }
  return cosine_cycle_value(t, period, lr_max, lr_min);
}

// ---------------------------------------------------------------------------
// Global-norm gradient clipping: if the L2 norm across every parameter
// gradient exceeds max_norm, all gradients scale by max_norm / norm.
// Direction is preserved exactly.
// ---------------------------------------------------------------------------

template <typename T>
double clip_gradients(ParameterSet<T>& params, double max_norm) {
  require(max_norm > 0.0, "clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (const auto& p : params.all()) {
    if (!p.trainable) continue;
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      sq += static_cast<double>(p.grad[i]) * static_cast<double>(p.grad[i]);
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const T scale = static_cast<T>(max_norm / norm);
    for (auto& p : params.all()) {
      if (!p.trainable) continue;
      for (std::size_t i = 0; i < p.grad.size(); ++i) p.grad[i] *= scale;
    }
  }
  return norm;
}

// Plain-vector variant for callers outside the parameter machinery.
inline double clip_gradients(std::vector<double>& grads, double max_norm) {
  require(max_norm > 0.0, "clip_gradients: max_norm must be positive");
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Patience-based early stopping on validation AUC. Improvement is strict;
// matching the best value counts as no improvement.
// ---------------------------------------------------------------------------

class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {
    require(patience >= 1, "early stopping patience must be >= 1");
  }

  // Returns true while training should continue.
  bool observe(double val_auc) {
    ++epochs_seen_;
    if (val_auc > best_) {
      best_ = val_auc;
      best_epoch_ = epochs_seen_;
      stale_ = 0;
      return true;
    }
    ++stale_;
    return stale_ < patience_;
  }

  double best() const { return best_; }
  int best_epoch() const { return best_epoch_; }  // 1-based
  bool stopped() const { return stale_ >= patience_; }

 private:
  int patience_;
  double best_ = -std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int stale_ = 0;
  int epochs_seen_ = 0;
};

}  // namespace ctrkit
