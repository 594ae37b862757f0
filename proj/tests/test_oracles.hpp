#pragma once

// Independent brute-force oracles used by the tests. These must never call
// into the implementation paths they check.

#include <algorithm>
#include <cstdint>
#include <map>
#include <vector>

namespace oracles {

// O(n^2) pairwise AUC with half-credit ties, exact integer numerator.
inline double pairwise_auc(const std::vector<double>& scores,
                           const std::vector<int>& labels) {
  std::int64_t numerator2 = 0;  // 2*concordant + ties
  std::int64_t n_pos = 0, n_neg = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    ++n_pos;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      if (scores[i] > scores[j]) numerator2 += 2;
      else if (scores[i] == scores[j]) numerator2 += 1;
    }
  }
  for (int y : labels) n_neg += y ? 0 : 1;
  return static_cast<double>(numerator2) /
         (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision by exhaustive rescan at every distinct threshold,
// descending; tied blocks contribute at the block-end precision.
inline double exhaustive_average_precision(const std::vector<double>& scores,
                                           const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  std::int64_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  double ap = 0.0;
  std::int64_t prev_tp = 0;
  for (double thr : thresholds) {
    std::int64_t tp = 0, predicted = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] >= thr) {
        ++predicted;
        tp += labels[i] ? 1 : 0;
      }
    }
    const std::int64_t block_pos = tp - prev_tp;
    if (block_pos > 0) {
      const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
      ap += static_cast<double>(block_pos) * precision;
    }
    prev_tp = tp;
  }
  return ap / static_cast<double>(n_pos);
}

// Exhaustive best-F1 threshold scan over unique scores (lower threshold on
// ties), recomputing the confusion matrix from scratch each time.
inline double exhaustive_best_threshold(const std::vector<double>& scores,
                                        const std::vector<int>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  double best_f1 = -1.0, best_thr = thresholds.back();
  for (double thr : thresholds) {
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pred = scores[i] >= thr;
      if (pred && labels[i]) ++tp;
      else if (pred) ++fp;
      else if (labels[i]) ++fn;
    }
    const double precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 =
        (precision + recall) > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    // Scanning ascending: strictly-better keeps the lowest threshold on ties.
    if (f1 > best_f1) {
      best_f1 = f1;
      best_thr = thr;
    }
  }
  return best_thr;
}

}  // namespace oracles
