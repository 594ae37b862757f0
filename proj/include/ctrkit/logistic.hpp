#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrkit/common.hpp"
#include "ctrkit/features.hpp"

namespace ctrkit {

// Logistic regression over one-hot categorical indicators plus numeric
// features. Objective: mean weighted BCE + (1 / (2 C n)) * ||w||^2,
// minimized by mini-batch gradient descent. The positive-class weight
// defaults to n_neg / n_pos computed on the training split.
class LogisticModel {
 public:
  struct Config {
    double C = 0.1;
    bool class_weight = true;
    int epochs = 10;
    double lr = 0.1;
    int batch_size = 256;
    std::uint64_t seed = 1;
  };

  LogisticModel() = default;

  static LogisticModel fit(const EncodedBatch& batch,
                           const std::vector<std::size_t>& train_rows,
                           const Config& config) {
    require(config.C > 0.0, "lr_fit: C must be positive");
    require(!train_rows.empty(), "lr_fit: empty training set");

    LogisticModel m;
    m.config_ = config;
    m.offsets_.resize(batch.n_cat);
    std::size_t dim = 0;
    for (std::size_t c = 0; c < batch.n_cat; ++c) {
      m.offsets_[c] = dim;
      dim += static_cast<std::size_t>(batch.vocab_sizes[c]);
    }
    m.num_offset_ = dim;
    dim += batch.n_num;
    m.weights_.assign(dim, 0.0);
    m.bias_ = 0.0;

    std::size_t n_pos = 0;
    for (std::size_t r : train_rows) n_pos += batch.labels[r] ? 1 : 0;
    const std::size_t n_neg = train_rows.size() - n_pos;
    require(n_pos > 0 && n_neg > 0, "lr_fit: labels are single-class");
    m.w_plus_ = config.class_weight
                    ? static_cast<double>(n_neg) / static_cast<double>(n_pos)
                    : 1.0;

    const double n_train = static_cast<double>(train_rows.size());
    std::vector<std::size_t> order(train_rows);
    std::mt19937_64 rng(config.seed);
    std::vector<double> grad(dim);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size();
           start += static_cast<std::size_t>(config.batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
        const double bsz = static_cast<double>(end - start);
        std::fill(grad.begin(), grad.end(), 0.0);
        double gb = 0.0;
        for (std::size_t t = start; t < end; ++t) {
          const std::size_t r = order[t];
          const double p = m.score_row(batch, r);
          const int y = batch.labels[r];
          // d(weighted BCE)/d(logit)
          const double gz = y ? m.w_plus_ * (p - 1.0) : p;
          for (std::size_t c = 0; c < batch.n_cat; ++c) {
            grad[m.offsets_[c] + static_cast<std::size_t>(batch.cat_at(r, c))] += gz;
          }
          for (std::size_t c = 0; c < batch.n_num; ++c) {
            grad[m.num_offset_ + c] += gz * batch.num_at(r, c);
          }
          gb += gz;
        }
        // Proximal form of the L2 term: stable for any C > 0.
        const double shrink = 1.0 / (1.0 + config.lr / (config.C * n_train));
        for (std::size_t i = 0; i < dim; ++i) {
          m.weights_[i] = (m.weights_[i] - config.lr * grad[i] / bsz) * shrink;
        }
        m.bias_ -= config.lr * gb / bsz;
      }
    }
    return m;
  }

  double score_row(const EncodedBatch& batch, std::size_t r) const {
    double z = bias_;
    for (std::size_t c = 0; c < batch.n_cat; ++c) {
      z += weights_[offsets_[c] + static_cast<std::size_t>(batch.cat_at(r, c))];
    }
    for (std::size_t c = 0; c < batch.n_num; ++c) {
      z += weights_[num_offset_ + c] * batch.num_at(r, c);
    }
    return 1.0 / (1.0 + std::exp(-z));
  }

  // Pure scoring: sigmoid(w . x + b).
  std::vector<double> predict(const EncodedBatch& batch) const {
    std::vector<double> out(batch.n_rows);
    for (std::size_t r = 0; r < batch.n_rows; ++r) out[r] = score_row(batch, r);
    return out;
  }

  std::size_t count_parameters() const { return weights_.size() + 1; }
  double weight_norm() const {
    return std::sqrt(std::inner_product(weights_.begin(), weights_.end(),
                                        weights_.begin(), 0.0));
  }
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }
  double positive_weight() const { return w_plus_; }

  json to_json() const {
    return json{{"weights", weights_},     {"bias", bias_},
                {"offsets", offsets_},     {"num_offset", num_offset_},
                {"w_plus", w_plus_},       {"C", config_.C}};
  }
  static LogisticModel from_json(const json& j) {
    LogisticModel m;
    m.weights_ = j.at("weights").get<std::vector<double>>();
    m.bias_ = j.at("bias").get<double>();
    m.offsets_ = j.at("offsets").get<std::vector<std::size_t>>();
    m.num_offset_ = j.at("num_offset").get<std::size_t>();
    m.w_plus_ = j.at("w_plus").get<double>();
    m.config_.C = j.at("C").get<double>();
    return m;
  }

 private:
  Config config_;
  std::vector<double> weights_;
  std::vector<std::size_t> offsets_;
  std::size_t num_offset_ = 0;
  double bias_ = 0.0;
  double w_plus_ = 1.0;
};

}  // namespace ctrkit
