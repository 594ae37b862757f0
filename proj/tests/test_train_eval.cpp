#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctrkit/metrics.hpp"
#include "ctrkit/optim.hpp"
#include "ctrkit/params.hpp"
#include "test_oracles.hpp"

namespace {

using namespace ctrkit;

// ---------------------------------------------------------------------------
// AUC
// ---------------------------------------------------------------------------

TEST(Auc, WorkedExample) {
  EXPECT_NEAR(auc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}), 0.75, 1e-12);
}

TEST(Auc, PerfectAndReversed) {
  EXPECT_DOUBLE_EQ(auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(auc({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1}), 0.0);
}

TEST(Auc, AllTiedGivesHalf) {
  EXPECT_DOUBLE_EQ(auc({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.5);
}

TEST(Auc, SingleClassThrows) {
  EXPECT_THROW(auc({0.1, 0.2}, {1, 1}), ValidationError);
  EXPECT_THROW(auc({0.1, 0.2}, {0, 0}), ValidationError);
}

TEST(Auc, RankSumEqualsPairwiseCountExactly) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 499;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      // Quantized scores force plenty of ties.
      scores[i] = static_cast<double>(rng() % 17) / 16.0;
      labels[i] = static_cast<int>(rng() % 2);
      (labels[i] ? has_pos : has_neg) = true;
    }
    if (!has_pos || !has_neg) continue;
    EXPECT_EQ(auc(scores, labels), oracles::pairwise_auc(scores, labels));
  }
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(5);
  std::vector<double> scores(200);
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < 200; ++i) {
    scores[i] = static_cast<double>(rng() % 1000) / 1000.0;
    labels[i] = static_cast<int>(rng() % 2);
  }
  std::vector<double> transformed(200);
  for (std::size_t i = 0; i < 200; ++i) {
    transformed[i] = std::exp(3.0 * scores[i]) + 7.0;  // strictly monotone
  }
  EXPECT_EQ(auc(scores, labels), auc(transformed, labels));
}

TEST(Auc, ComplementSymmetryWithoutTies) {
  std::mt19937_64 rng(7);
  std::vector<double> scores(99);
  std::vector<int> labels(99);
  for (std::size_t i = 0; i < 99; ++i) {
    scores[i] = (static_cast<double>(i) + 0.5) / 100.0;  // all distinct
    labels[i] = static_cast<int>(rng() % 2);
  }
  std::vector<double> complement(99);
  for (std::size_t i = 0; i < 99; ++i) complement[i] = 1.0 - scores[i];
  EXPECT_NEAR(auc(complement, labels), 1.0 - auc(scores, labels), 1e-12);
}

// ---------------------------------------------------------------------------
// PR AUC
// ---------------------------------------------------------------------------

TEST(PrAuc, PerfectRanking) {
  EXPECT_DOUBLE_EQ(pr_auc({0.9, 0.8, 0.1, 0.2}, {1, 1, 0, 0}), 1.0);
}

TEST(PrAuc, WorkedExample) {
  EXPECT_NEAR(pr_auc({0.9, 0.8, 0.7}, {1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(pr_auc({0.9, 0.8, 0.7}, {1, 0, 1}), 0.8333, 5e-5);
}

TEST(PrAuc, RandomScoresApproachPrevalence) {
  std::mt19937_64 rng(11);
  const std::size_t n = 100000;
  const double prevalence = 0.3;
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  std::uniform_real_distribution<double> unif(0, 1);
  std::bernoulli_distribution lab(prevalence);
  for (std::size_t i = 0; i < n; ++i) {
    scores[i] = unif(rng);
    labels[i] = lab(rng) ? 1 : 0;
  }
  EXPECT_NEAR(pr_auc(scores, labels), prevalence, 0.01);
}

TEST(PrAuc, MatchesExhaustiveComputationWithTies) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng() % 400;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 13) / 12.0;
      labels[i] = static_cast<int>(rng() % 3 == 0);
      has_pos = has_pos || labels[i];
    }
    if (!has_pos) continue;
    EXPECT_NEAR(pr_auc(scores, labels),
                oracles::exhaustive_average_precision(scores, labels), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// log loss & weighted BCE
// ---------------------------------------------------------------------------

TEST(LogLoss, Half) {
  EXPECT_NEAR(log_loss({0.5, 0.5}, {0, 1}), 0.6931471805599453, 1e-12);
}

TEST(LogLoss, ClippingFloor) {
  EXPECT_NEAR(log_loss({1.0, 0.0}, {1, 0}), -std::log(1.0 - 1e-7), 1e-15);
  EXPECT_LT(log_loss({1.0, 0.0}, {1, 0}), 2e-7);
}

TEST(LogLoss, EqualsUnitWeightedBceBitwise) {
  std::mt19937_64 rng(17);
  std::vector<double> preds(500);
  std::vector<int> labels(500);
  std::uniform_real_distribution<double> unif(0, 1);
  for (std::size_t i = 0; i < 500; ++i) {
    preds[i] = unif(rng);
    labels[i] = static_cast<int>(rng() % 2);
  }
  EXPECT_EQ(log_loss(preds, labels), weighted_bce(preds, labels, 1.0, 1.0));
}

TEST(WeightedBceMetric, HandCase) {
  EXPECT_NEAR(weighted_bce({0.9, 0.1}, {1, 0}, 1.0, 1.0), 0.10536051565782628,
              1e-10);
}

TEST(WeightedBceMetric, EmptyBatchThrows) {
  EXPECT_THROW(weighted_bce({}, {}, 1.0, 1.0), ValidationError);
}

// ---------------------------------------------------------------------------
// threshold metrics
// ---------------------------------------------------------------------------

TEST(ThresholdMetricsTest, PerfectSplit) {
  const auto m = threshold_metrics({0.2, 0.8}, {0, 1}, 0.5);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
}

TEST(ThresholdMetricsTest, NoPredictedPositives) {
  const auto m = threshold_metrics({0.1, 0.2}, {0, 1}, 0.9);
  EXPECT_DOUBLE_EQ(m.precision, 0.0);
  EXPECT_DOUBLE_EQ(m.f1, 0.0);
  EXPECT_DOUBLE_EQ(m.recall, 0.0);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.5);
}

TEST(ThresholdMetricsTest, BestThresholdMatchesExhaustiveScan) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng() % 200;
    std::vector<double> scores(n);
    std::vector<int> labels(n);
    bool has_pos = false;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = static_cast<double>(rng() % 19) / 18.0;
      labels[i] = static_cast<int>(rng() % 4 == 0);
      has_pos = has_pos || labels[i];
    }
    if (!has_pos) continue;
    EXPECT_DOUBLE_EQ(best_threshold(scores, labels),
                     oracles::exhaustive_best_threshold(scores, labels));
  }
}

// ---------------------------------------------------------------------------
// Adam / AdamW
// ---------------------------------------------------------------------------

TEST(Adam, FirstStepIsSignedStep) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({2}, {1.0, -1.0}));
  ps.by_name("w").grad = Tensor<double>::from({2}, {0.3, -0.7});
  AdamOptimizer<double> opt{AdamConfig{}};
  opt.step(ps, 0.01);
  // First step: m_hat/v_hat reduce to g/|g| up to eps.
  EXPECT_NEAR(ps.by_name("w").value[0], 1.0 - 0.01, 1e-6);
  EXPECT_NEAR(ps.by_name("w").value[1], -1.0 + 0.01, 1e-6);
}

TEST(AdamW, DecayOnlyWithZeroGradient) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({1}, {2.0}));
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.decoupled = true;
  AdamOptimizer<double> opt(cfg);
  opt.step(ps, 0.5);  // grad is zero
  EXPECT_DOUBLE_EQ(ps.by_name("w").value[0], 2.0 * (1.0 - 0.5 * 0.1));
}

TEST(Adam, PlainAdamIgnoresDecay) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({1}, {2.0}));
  AdamConfig cfg;
  cfg.weight_decay = 0.1;
  cfg.decoupled = false;
  AdamOptimizer<double> opt(cfg);
  opt.step(ps, 0.5);
  EXPECT_DOUBLE_EQ(ps.by_name("w").value[0], 2.0);
}

TEST(Adam, ConvergesOnQuadratic) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({1}, {0.0}));
  AdamOptimizer<double> opt{AdamConfig{}};
  for (int step = 0; step < 100; ++step) {
    auto& p = ps.by_name("w");
    p.grad[0] = 2.0 * (p.value[0] - 3.0);  // d/dw (w-3)^2
    opt.step(ps, 0.1);
  }
  EXPECT_LT(std::fabs(ps.by_name("w").value[0] - 3.0), 0.5);
}

// ---------------------------------------------------------------------------
// cosine schedule
// ---------------------------------------------------------------------------

TEST(Cosine, CycleEndpointsExact) {
  EXPECT_DOUBLE_EQ(cosine_cycle_value(0.0, 10.0, 0.1, 0.001), 0.1);
  EXPECT_NEAR(cosine_cycle_value(5.0, 10.0, 0.1, 0.001), (0.1 + 0.001) / 2.0, 1e-12);
  EXPECT_NEAR(cosine_cycle_value(10.0, 10.0, 0.1, 0.001), 0.001, 1e-12);
}

TEST(Cosine, WarmRestartCycles) {
  // cycles: [0,10), [10,30), [30,70) with t_mult 2
  EXPECT_DOUBLE_EQ(cosine_warm_restarts(0, 10, 2, 0.1, 0.001), 0.1);
  EXPECT_DOUBLE_EQ(cosine_warm_restarts(10, 10, 2, 0.1, 0.001), 0.1);  // restart
  EXPECT_DOUBLE_EQ(cosine_warm_restarts(30, 10, 2, 0.1, 0.001), 0.1);  // restart
  EXPECT_NEAR(cosine_warm_restarts(20, 10, 2, 0.1, 0.001), (0.1 + 0.001) / 2.0,
              1e-12);  // midpoint of the second cycle
  // approaching a cycle end from below tends to lr_min
  EXPECT_NEAR(cosine_warm_restarts(10.0 - 1e-7, 10, 2, 0.1, 0.001), 0.001, 1e-9);
}

TEST(Cosine, ValuesWithinBounds) {
  for (double step = 0; step < 500; step += 0.37) {
    const double lr = cosine_warm_restarts(step, 7, 2, 0.05, 1e-6);
    EXPECT_GE(lr, 1e-6 - 1e-15);
    EXPECT_LE(lr, 0.05 + 1e-15);
  }
}

TEST(Cosine, TMultOneWraps) {
  EXPECT_DOUBLE_EQ(cosine_warm_restarts(25, 10, 1, 0.1, 0.0),
                   cosine_warm_restarts(5, 10, 1, 0.1, 0.0));
}

// ---------------------------------------------------------------------------
// clipping
// ---------------------------------------------------------------------------

TEST(Clip, BelowThresholdUnchanged) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({2}, {0, 0}));
  ps.by_name("w").grad = Tensor<double>::from({2}, {0.3, 0.4});  // norm 0.5
  clip_gradients(ps, 1.0);
  EXPECT_DOUBLE_EQ(ps.by_name("w").grad[0], 0.3);
  EXPECT_DOUBLE_EQ(ps.by_name("w").grad[1], 0.4);
}

TEST(Clip, AboveThresholdScaledToMaxNorm) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({2}, {0, 0}));
  ps.by_name("w").grad = Tensor<double>::from({2}, {6.0, 8.0});  // norm 10
  clip_gradients(ps, 1.0);
  const double norm = std::hypot(ps.by_name("w").grad[0], ps.by_name("w").grad[1]);
  EXPECT_NEAR(norm, 1.0, 1e-12);
}

TEST(Clip, DirectionPreserved) {
  ParameterSet<double> ps;
  ps.add("w", Tensor<double>::from({3}, {0, 0, 0}));
  ps.by_name("w").grad = Tensor<double>::from({3}, {3.0, -4.0, 12.0});  // norm 13
  const std::vector<double> before = ps.by_name("w").grad.raw();
  clip_gradients(ps, 2.0);
  const auto& after = ps.by_name("w").grad.raw();
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    dot += before[i] * after[i];
    na += before[i] * before[i];
    nb += after[i] * after[i];
  }
  EXPECT_NEAR(dot / std::sqrt(na * nb), 1.0, 1e-12);
}

// ---------------------------------------------------------------------------
// early stopping
// ---------------------------------------------------------------------------

TEST(EarlyStop, ImprovingContinues) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.observe(0.60));
  EXPECT_TRUE(s.observe(0.61));
  EXPECT_TRUE(s.observe(0.62));
  EXPECT_FALSE(s.stopped());
  EXPECT_EQ(s.best_epoch(), 3);
}

TEST(EarlyStop, DecliningStopsAfterPatience) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.observe(0.62));
  EXPECT_TRUE(s.observe(0.61));   // stale 1 of 2
  EXPECT_FALSE(s.observe(0.60));  // stale 2 of 2: stop after epoch 3
  EXPECT_TRUE(s.stopped());
  EXPECT_EQ(s.best_epoch(), 1);
  EXPECT_DOUBLE_EQ(s.best(), 0.62);
}

TEST(EarlyStop, TieCountsAsNoImprovement) {
  EarlyStopper s(2);
  EXPECT_TRUE(s.observe(0.62));
  EXPECT_TRUE(s.observe(0.62));   // tie: stale
  EXPECT_FALSE(s.observe(0.62));  // tie again: stop
  EXPECT_EQ(s.best_epoch(), 1);
}

}  // namespace
