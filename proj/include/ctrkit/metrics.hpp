#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "ctrkit/common.hpp"

namespace ctrkit {

constexpr double kProbClipMetrics = 1e-7;

// ---------------------------------------------------------------------------
// ROC AUC via the Mann-Whitney rank-sum formulation, O(n log n). Ties get
// average ranks, which counts tied pairs as one half. The numerator is kept
// in exact integer arithmetic (doubled ranks), so the result is identical to
// a pairwise count.
// ---------------------------------------------------------------------------

inline double auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), "auc: size mismatch");
  require(!scores.empty(), "auc: empty input");
  std::int64_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  const std::int64_t n_neg = static_cast<std::int64_t>(labels.size()) - n_pos;
  require(n_pos > 0 && n_neg > 0, "auc: needs both classes present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  // 2 * sum of average ranks of positives, exact in int64.
  std::int64_t rank2_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    // Tied block occupies ranks i+1 .. j (1-based); average rank = (i+1+j)/2.
    const std::int64_t rank2 = static_cast<std::int64_t>(i) + 1 + static_cast<std::int64_t>(j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) rank2_sum += rank2;
    }
    i = j;
  }
  const std::int64_t numerator2 = rank2_sum - n_pos * (n_pos + 1);
  return static_cast<double>(numerator2) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ---------------------------------------------------------------------------
// PR AUC as average precision. Descending-score order; each tied block is
// processed atomically, every positive in the block contributes the
// precision measured at the end of the block.
// ---------------------------------------------------------------------------

inline double pr_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  require(scores.size() == labels.size(), "pr_auc: size mismatch");
  require(!scores.empty(), "pr_auc: empty input");
  std::int64_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  require(n_pos > 0, "pr_auc: no positive labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::int64_t block_pos = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      block_pos += labels[order[j]] ? 1 : 0;
      ++j;
    }
    tp += block_pos;
    seen += static_cast<std::int64_t>(j - i);
    if (block_pos > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(seen);
      ap += static_cast<double>(block_pos) * precision;
    }
    i = j;
  }
  return ap / static_cast<double>(n_pos);
}

// ---------------------------------------------------------------------------
// Weighted binary cross entropy on clipped predictions; log_loss is the
// unit-weight case and shares the code path bit for bit.
// ---------------------------------------------------------------------------

inline double weighted_bce(const std::vector<double>& preds,
                           const std::vector<int>& labels, double w_plus,
                           double w_minus) {
  require(preds.size() == labels.size(), "weighted_bce: size mismatch");
  require(!preds.empty(), "weighted_bce: empty batch");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds[i], kProbClipMetrics, 1.0 - kProbClipMetrics);
    acc += labels[i] ? w_plus * std::log(p) : w_minus * std::log(1.0 - p);
  }
  return -acc / static_cast<double>(preds.size());
}

inline double log_loss(const std::vector<double>& preds, const std::vector<int>& labels) {
  return weighted_bce(preds, labels, 1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Threshold metrics. Prediction is positive iff score >= threshold. With no
// predicted positives, precision and F1 are defined as 0.
// ---------------------------------------------------------------------------

struct ThresholdMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double threshold = 0.0;
};

inline ThresholdMetrics threshold_metrics(const std::vector<double>& scores,
                                          const std::vector<int>& labels,
                                          double threshold) {
  require(scores.size() == labels.size(), "threshold_metrics: size mismatch");
  require(!scores.empty(), "threshold_metrics: empty input");
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    else if (pred) ++fp;
    else if (labels[i]) ++fn;
    else ++tn;
  }
  ThresholdMetrics m;
  m.threshold = threshold;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  return m;
}

// Scans every unique score as a candidate threshold; F1 ties break toward
// the lower threshold.
inline double best_threshold(const std::vector<double>& scores,
                             const std::vector<int>& labels) {
  require(scores.size() == labels.size(), "best_threshold: size mismatch");
  require(!scores.empty(), "best_threshold: empty input");
  std::int64_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double best_f1 = -1.0;
  double best_thr = scores[order[0]];
  std::int64_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] ? 1 : 0;
      ++j;
    }
    seen += static_cast<std::int64_t>(j - i);
    // Threshold at this block's score: everything seen so far is predicted
    // positive.
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    const double recall =
        n_pos > 0 ? static_cast<double>(tp) / static_cast<double>(n_pos) : 0.0;
    const double f1 = (precision + recall) > 0.0
                          ? 2.0 * precision * recall / (precision + recall)
                          : 0.0;
    if (f1 >= best_f1) {  // >= keeps the lower threshold on ties
      best_f1 = f1;
      best_thr = scores[order[i]];
    }
    i = j;
  }
  return best_thr;
}

struct MetricReport {
  double auc = 0.0;
  double pr_auc = 0.0;
  double log_loss = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double accuracy = 0.0;
  double threshold = 0.0;
};

inline MetricReport metric_report(const std::vector<double>& scores,
                                  const std::vector<int>& labels) {
  MetricReport r;
  r.auc = auc(scores, labels);
  r.pr_auc = pr_auc(scores, labels);
  r.log_loss = log_loss(scores, labels);
  const double thr = best_threshold(scores, labels);
  const ThresholdMetrics tm = threshold_metrics(scores, labels, thr);
  r.precision = tm.precision;
  r.recall = tm.recall;
  r.f1 = tm.f1;
  r.accuracy = tm.accuracy;
  r.threshold = thr;
  return r;
}

}  // namespace ctrkit
