#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "ctrkit/checkpoint.hpp"
#include "ctrkit/grad_check.hpp"
#include "ctrkit/logistic.hpp"
#include "ctrkit/models.hpp"

namespace {

using namespace ctrkit;

// ---------------------------------------------------------------------------
// tiny fixtures
// ---------------------------------------------------------------------------

EncodedBatch tiny_batch(std::size_t n, std::vector<int> vocab_sizes,
                        std::size_t n_num, std::uint64_t seed) {
  EncodedBatch b;
  b.n_rows = n;
  b.n_cat = vocab_sizes.size();
  b.n_num = n_num;
  b.vocab_sizes = std::move(vocab_sizes);
  std::mt19937_64 rng(seed);
  b.cat.resize(n * b.n_cat);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < b.n_cat; ++c) {
      // valid indices only: 1 .. vocab-1 (0 is padding, never produced)
      b.cat[r * b.n_cat + c] = 1 + static_cast<std::int32_t>(
                                       rng() % (b.vocab_sizes[c] - 1));
    }
  }
  b.num.resize(n * n_num);
  std::normal_distribution<double> normal(0, 1);
  for (auto& v : b.num) v = normal(rng);
  b.labels.resize(n);
  for (auto& y : b.labels) y = static_cast<int>(rng() % 2);
  b.user_id.resize(n);
  for (std::size_t r = 0; r < n; ++r) b.user_id[r] = static_cast<std::int64_t>(r);
  b.time_stamp.assign(n, 1494028800);
  for (std::size_t c = 0; c < b.n_cat; ++c) {
    b.cat_names.push_back("c" + std::to_string(c));
  }
  for (std::size_t c = 0; c < n_num; ++c) {
    b.num_names.push_back("n" + std::to_string(c));
  }
  return b;
}

SequenceSet tiny_sequences(std::size_t n_users, int L, int cate_vocab,
                           int brand_vocab, std::uint64_t seed,
                           std::size_t empty_from = SIZE_MAX) {
  SequenceSet set;
  set.length = L;
  set.cate_vocab_size = cate_vocab;
  set.brand_vocab_size = brand_vocab;
  set.empty_sequence = BehaviorSequence(L);
  std::mt19937_64 rng(seed);
  for (std::size_t u = 0; u < n_users; ++u) {
    BehaviorSequence s(L);
    if (u < empty_from) {
      s.valid_len = 1 + static_cast<int>(rng() % L);
      for (int i = 0; i < s.valid_len; ++i) {
        s.cate_idx[i] = 1 + static_cast<std::int32_t>(rng() % (cate_vocab - 1));
        s.brand_idx[i] = 1 + static_cast<std::int32_t>(rng() % (brand_vocab - 1));
        s.mask[i] = 1;
      }
    }
    set.by_user.emplace(static_cast<std::int64_t>(u), std::move(s));
  }
  return set;
}

MlpConfig tiny_mlp_config() {
  MlpConfig c;
  c.emb_dim = 4;
  c.hidden = {8, 4};
  c.dropout = 0.1;
  c.use_batch_norm = true;
  return c;
}

TransformerConfig tiny_transformer_config() {
  TransformerConfig c;
  c.d_model = 8;
  c.heads = 2;
  c.layers = 1;
  c.ff = 16;
  c.static_emb = 4;
  c.head_hidden = {8, 4};
  c.cross_layers = 2;
  c.dropout = 0.1;
  return c;
}

// ---------------------------------------------------------------------------
// parameter counting
// ---------------------------------------------------------------------------

TEST(ParamCount, LogisticTenPlusThreeIsFourteen) {
  // one-hot width 10 (vocabs 4 + 6) plus 3 numerics plus bias
  auto batch = tiny_batch(20, {4, 6}, 3, 1);
  // make labels two-class for fit
  batch.labels[0] = 1;
  batch.labels[1] = 0;
  LogisticModel::Config cfg;
  cfg.epochs = 1;
  std::vector<std::size_t> rows(batch.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto model = LogisticModel::fit(batch, rows, cfg);
  EXPECT_EQ(model.count_parameters(), 14u);
}

TEST(ParamCount, MlpHeadClosedForm) {
  // d -> 128 -> 64 -> 1 without batch norm:
  // 128 d + 128 + 64*128 + 64 + 64 + 1
  const std::size_t d_in = 2 * 16 + 16;  // 2 cat features * emb 16 + num proj 16
  MlpConfig cfg;
  cfg.emb_dim = 16;
  cfg.hidden = {128, 64};
  cfg.use_batch_norm = false;
  DataDims dims;
  dims.vocab_sizes = {5, 9};
  dims.n_num = 3;
  MlpModel<double> model(dims, cfg, 3);
  const std::size_t head = 128 * d_in + 128 + 64 * 128 + 64 + 64 + 1;
  const std::size_t embeddings = (5 + 9) * 16 + 3 * 16 + 16;
  EXPECT_EQ(model.expected_parameter_count(), head + embeddings);
  EXPECT_EQ(model.count_parameters(), model.expected_parameter_count());
}

TEST(ParamCount, AllDeepFamiliesMatchAllocation) {
  DataDims dims;
  dims.vocab_sizes = {5, 7, 4};
  dims.n_num = 2;
  dims.seq_len = 6;
  dims.cate_vocab = 9;
  dims.brand_vocab = 11;

  MlpModel<double> mlp(dims, tiny_mlp_config(), 5);
  EXPECT_EQ(mlp.count_parameters(), mlp.expected_parameter_count());

  BehaviorMlpConfig bcfg;
  bcfg.base = tiny_mlp_config();
  bcfg.cate_dim = 3;
  bcfg.brand_dim = 5;
  BehaviorMlpModel<double> bmlp(dims, bcfg, 7);
  EXPECT_EQ(bmlp.count_parameters(), bmlp.expected_parameter_count());

  TransformerModel<double> tr(dims, tiny_transformer_config(), 11);
  EXPECT_EQ(tr.count_parameters(), tr.expected_parameter_count());
}

// ---------------------------------------------------------------------------
// logistic regression
// ---------------------------------------------------------------------------

TEST(Logistic, SeparableDataGetsPositiveWeight) {
  // single numeric feature equal to the label
  EncodedBatch b = tiny_batch(200, {3}, 1, 13);
  for (std::size_t r = 0; r < b.n_rows; ++r) {
    b.labels[r] = static_cast<int>(r % 2);
    b.num[r] = b.labels[r];
    b.cat[r] = 1;  // constant categorical
  }
  LogisticModel::Config cfg;
  cfg.epochs = 30;
  cfg.lr = 0.5;
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto model = LogisticModel::fit(b, rows, cfg);
  // weight on the numeric feature (offset: 3 one-hot slots then numeric)
  EXPECT_GT(model.weights()[3], 0.0);
}

TEST(Logistic, StrongRegularizationShrinksWeights) {
  EncodedBatch b = tiny_batch(300, {4, 5}, 2, 17);
  for (std::size_t r = 0; r < b.n_rows; ++r) b.labels[r] = static_cast<int>(r % 4 == 0);
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LogisticModel::Config strong;
  strong.C = 1e-6;
  strong.epochs = 20;
  strong.lr = 0.3;
  LogisticModel::Config weak;
  weak.C = 100.0;
  weak.epochs = 20;
  weak.lr = 0.3;
  const auto m_strong = LogisticModel::fit(b, rows, strong);
  const auto m_weak = LogisticModel::fit(b, rows, weak);
  EXPECT_LT(m_strong.weight_norm(), 0.05);
  EXPECT_LT(m_strong.weight_norm(), m_weak.weight_norm());
}

double weighted_bce_of(const std::vector<double>& p, const std::vector<int>& y) {
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double c = std::clamp(p[i], 1e-7, 1 - 1e-7);
    acc += y[i] ? std::log(c) : std::log(1 - c);
  }
  return -acc / static_cast<double>(p.size());
}

TEST(Logistic, FitBeatsZeroWeightModel) {
  EncodedBatch b = tiny_batch(400, {3}, 2, 19);
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise(0, 0.3);
  for (std::size_t r = 0; r < b.n_rows; ++r) {
    const double z = 1.5 * b.num[r * 2] - 0.8 + noise(rng);
    b.labels[r] = z > 0 ? 1 : 0;
  }
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LogisticModel::Config cfg;
  cfg.epochs = 15;
  cfg.lr = 0.3;
  cfg.class_weight = false;
  const auto model = LogisticModel::fit(b, rows, cfg);
  const auto scores = model.predict(b);
  std::vector<double> zero_scores(b.n_rows, 0.5);
  EXPECT_LT(weighted_bce_of(scores, b.labels), weighted_bce_of(zero_scores, b.labels));
}

TEST(Logistic, PredictMatchesIndependentRecomputation) {
  EncodedBatch b = tiny_batch(50, {4, 6}, 2, 23);
  b.labels[0] = 1;
  b.labels[1] = 0;
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LogisticModel::Config cfg;
  cfg.epochs = 3;
  const auto model = LogisticModel::fit(b, rows, cfg);
  const auto scores = model.predict(b);
  for (std::size_t r = 0; r < b.n_rows; ++r) {
    // independent dot-product recomputation
    double z = model.bias();
    z += model.weights()[static_cast<std::size_t>(b.cat_at(r, 0))];
    z += model.weights()[4 + static_cast<std::size_t>(b.cat_at(r, 1))];
    z += model.weights()[10] * b.num_at(r, 0);
    z += model.weights()[11] * b.num_at(r, 1);
    const double p = 1.0 / (1.0 + std::exp(-z));
    EXPECT_NEAR(scores[r], p, 1e-12);
  }
}

TEST(Logistic, ZeroWeightsPredictHalf) {
  EncodedBatch b = tiny_batch(5, {3}, 1, 29);
  LogisticModel model;  // default-constructed: no weights -> score 0.5?
  // default model has empty weights; build through a 0-epoch fit instead
  b.labels[0] = 1;
  b.labels[1] = 0;
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  LogisticModel::Config cfg;
  cfg.epochs = 0;
  const auto fitted = LogisticModel::fit(b, rows, cfg);
  for (double s : fitted.predict(b)) EXPECT_DOUBLE_EQ(s, 0.5);
}

TEST(Logistic, SingleClassLabelsThrow) {
  EncodedBatch b = tiny_batch(10, {3}, 1, 31);
  for (auto& y : b.labels) y = 1;
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  EXPECT_THROW(LogisticModel::fit(b, rows, {}), ValidationError);
}

// ---------------------------------------------------------------------------
// deep model contracts
// ---------------------------------------------------------------------------

std::vector<std::size_t> all_rows(const EncodedBatch& b) {
  std::vector<std::size_t> rows(b.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

TEST(Mlp, OutputShapeAndRange) {
  const auto batch = tiny_batch(17, {5, 7}, 2, 37);
  DataDims dims = DataDims::from(batch);
  MlpModel<double> model(dims, tiny_mlp_config(), 41);
  const auto scores = model.predict(batch, nullptr);
  ASSERT_EQ(scores.size(), 17u);
  for (double s : scores) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Mlp, EvalDeterministic) {
  const auto batch = tiny_batch(9, {5, 7}, 2, 43);
  DataDims dims = DataDims::from(batch);
  MlpModel<double> model(dims, tiny_mlp_config(), 47);
  EXPECT_EQ(model.predict(batch, nullptr), model.predict(batch, nullptr));
}

TEST(Mlp, RowPermutationPermutesOutputs) {
  const auto batch = tiny_batch(11, {5, 7}, 2, 53);
  DataDims dims = DataDims::from(batch);
  MlpModel<double> model(dims, tiny_mlp_config(), 59);
  const auto direct = model.predict(batch, nullptr);
  // permuted copy
  std::vector<std::size_t> perm = {4, 2, 9, 0, 1, 10, 3, 7, 5, 8, 6};
  EncodedBatch shuffled = batch;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t c = 0; c < batch.n_cat; ++c) {
      shuffled.cat[i * batch.n_cat + c] = batch.cat_at(perm[i], c);
    }
    for (std::size_t c = 0; c < batch.n_num; ++c) {
      shuffled.num[i * batch.n_num + c] = batch.num_at(perm[i], c);
    }
    shuffled.user_id[i] = batch.user_id[perm[i]];
  }
  const auto shuffled_scores = model.predict(shuffled, nullptr);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    EXPECT_DOUBLE_EQ(shuffled_scores[i], direct[perm[i]]);
  }
}

TEST(Mlp, RejectsOutOfRangeCategoricalIndex) {
  auto batch = tiny_batch(4, {5}, 1, 61);
  batch.cat[0] = 5;  // vocab size is 5: valid indices 0..4
  DataDims dims = DataDims::from(batch);
  dims.vocab_sizes = {5};
  MlpModel<double> model(dims, tiny_mlp_config(), 67);
  EXPECT_THROW(model.predict(batch, nullptr), ValidationError);
}

TEST(BehaviorMlp, EmptySequenceIgnoresSequenceTables) {
  const auto batch = tiny_batch(6, {5, 7}, 2, 71);
  auto sequences = tiny_sequences(6, 5, 9, 11, 73, /*empty_from=*/0);  // all empty
  DataDims dims = DataDims::from(batch, &sequences);
  BehaviorMlpConfig cfg;
  cfg.base = tiny_mlp_config();
  cfg.cate_dim = 3;
  cfg.brand_dim = 4;
  BehaviorMlpModel<double> model(dims, cfg, 79);
  const auto before = model.predict(batch, &sequences);
  // Perturb the sequence embedding tables; outputs must not move.
  for (const char* name : {"seq_cate_emb", "seq_brand_emb"}) {
    auto& p = model.params().by_name(name);
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] += 3.14159;
  }
  const auto after = model.predict(batch, &sequences);
  EXPECT_EQ(before, after);
}

TEST(BehaviorMlp, DuplicatingEveryEventLeavesOutputUnchanged) {
  const auto batch = tiny_batch(1, {5}, 1, 83);
  SequenceSet seqs;
  seqs.length = 8;
  seqs.cate_vocab_size = 9;
  seqs.brand_vocab_size = 9;
  seqs.empty_sequence = BehaviorSequence(8);
  BehaviorSequence twice(8), once(8);
  once.valid_len = 2;
  once.cate_idx = {3, 5, 0, 0, 0, 0, 0, 0};
  once.brand_idx = {2, 7, 0, 0, 0, 0, 0, 0};
  once.mask = {1, 1, 0, 0, 0, 0, 0, 0};
  twice.valid_len = 4;
  twice.cate_idx = {3, 5, 3, 5, 0, 0, 0, 0};
  twice.brand_idx = {2, 7, 2, 7, 0, 0, 0, 0};
  twice.mask = {1, 1, 1, 1, 0, 0, 0, 0};

  DataDims dims = DataDims::from(batch, &seqs);
  BehaviorMlpConfig cfg;
  cfg.base = tiny_mlp_config();
  BehaviorMlpModel<double> model(dims, cfg, 89);

  seqs.by_user.clear();
  seqs.by_user.emplace(0, once);
  const auto s_once = model.predict(batch, &seqs);
  seqs.by_user.clear();
  seqs.by_user.emplace(0, twice);
  const auto s_twice = model.predict(batch, &seqs);
  EXPECT_EQ(s_once, s_twice);  // mean pooling: exact invariance
}

TEST(BehaviorMlp, EventOrderInvariantBitLevel) {
  const auto batch = tiny_batch(10, {5, 7}, 2, 97);
  auto seqs = tiny_sequences(10, 6, 9, 11, 101);
  DataDims dims = DataDims::from(batch, &seqs);
  BehaviorMlpConfig cfg;
  cfg.base = tiny_mlp_config();
  BehaviorMlpModel<double> model(dims, cfg, 103);
  const auto before = model.predict(batch, &seqs);
  // reverse every user's valid prefix
  for (auto& [uid, s] : seqs.by_user) {
    std::reverse(s.cate_idx.begin(), s.cate_idx.begin() + s.valid_len);
    std::reverse(s.brand_idx.begin(), s.brand_idx.begin() + s.valid_len);
  }
  const auto after = model.predict(batch, &seqs);
  EXPECT_EQ(before, after);
}

TEST(Transformer, OutputShapeRangeAndDeterminism) {
  const auto batch = tiny_batch(7, {5, 7}, 2, 107);
  auto seqs = tiny_sequences(7, 6, 9, 11, 109);
  DataDims dims = DataDims::from(batch, &seqs);
  TransformerModel<double> model(dims, tiny_transformer_config(), 113);
  const auto scores = model.predict(batch, &seqs);
  ASSERT_EQ(scores.size(), 7u);
  for (double s : scores) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  EXPECT_EQ(scores, model.predict(batch, &seqs));
}

TEST(Transformer, SwappingEventsChangesOutput) {
  const auto batch = tiny_batch(30, {5}, 1, 127);
  auto seqs = tiny_sequences(30, 8, 9, 11, 131);
  DataDims dims = DataDims::from(batch, &seqs);
  TransformerModel<double> model(dims, tiny_transformer_config(), 137);
  const auto before = model.predict(batch, &seqs);
  // swap the first two valid events of each user with >= 2 distinct events
  std::size_t eligible = 0, changed = 0;
  for (auto& [uid, s] : seqs.by_user) {
    if (s.valid_len < 2) continue;
    if (s.cate_idx[0] == s.cate_idx[1] && s.brand_idx[0] == s.brand_idx[1]) continue;
    std::swap(s.cate_idx[0], s.cate_idx[1]);
    std::swap(s.brand_idx[0], s.brand_idx[1]);
    ++eligible;
  }
  ASSERT_GT(eligible, 10u);
  const auto after = model.predict(batch, &seqs);
  for (std::size_t r = 0; r < before.size(); ++r) {
    if (before[r] != after[r]) ++changed;
  }
  EXPECT_GE(changed, eligible * 95 / 100);
}

TEST(Transformer, MaskedTailContentIrrelevant) {
  const auto batch = tiny_batch(5, {5}, 1, 139);
  auto seqs = tiny_sequences(5, 8, 9, 11, 149);
  DataDims dims = DataDims::from(batch, &seqs);
  TransformerModel<double> model(dims, tiny_transformer_config(), 151);
  const auto before = model.predict(batch, &seqs);
  // scribble on masked positions without touching the mask
  for (auto& [uid, s] : seqs.by_user) {
    for (int i = s.valid_len; i < seqs.length; ++i) {
      s.cate_idx[i] = 4;
      s.brand_idx[i] = 6;
    }
  }
  const auto after = model.predict(batch, &seqs);
  EXPECT_EQ(before, after);  // bit-identical
}

TEST(Transformer, RejectsWrongSequenceLength) {
  const auto batch = tiny_batch(3, {5}, 1, 157);
  auto seqs = tiny_sequences(3, 4, 9, 11, 163);  // model expects L = 6
  DataDims dims = DataDims::from(batch, &seqs);
  dims.seq_len = 6;
  TransformerModel<double> model(dims, tiny_transformer_config(), 167);
  EXPECT_THROW(model.predict(batch, &seqs), ValidationError);
}

// ---------------------------------------------------------------------------
// full-model gradient checks (tiny configs, 64-bit)
// ---------------------------------------------------------------------------

template <typename Model>
double model_grad_check(Model& model, const EncodedBatch& batch,
                        const SequenceSet* seqs) {
  std::vector<std::size_t> rows(batch.n_rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto mb = make_minibatch<double>(batch, rows,
                                         model.needs_sequences() ? seqs : nullptr);
  auto loss_fn = [&](bool with_backward) {
    Graph<double> g;
    g.seed_dropout(4242);
    const auto probs = model.build_probs(g, mb, RunMode::kTrain);
    const auto loss = g.weighted_bce(probs, mb.labels, 2.5, 1.0);
    if (with_backward) g.backward(loss);
    return static_cast<double>(g.value(loss)[0]);
  };
  return ctrkit::grad_check(model.params(), loss_fn).max_rel_err;
}

TEST(FullModelGrad, MlpPasses) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto batch = tiny_batch(6, {4, 5}, 2, 1000 + seed);
    batch.labels = {1, 0, 1, 0, 0, 1};
    DataDims dims = DataDims::from(batch);
    MlpModel<double> model(dims, tiny_mlp_config(), seed);
    EXPECT_LT(model_grad_check(model, batch, nullptr), 1e-4) << seed;
  }
}

TEST(FullModelGrad, BehaviorMlpPasses) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto batch = tiny_batch(6, {4, 5}, 2, 2000 + seed);
    batch.labels = {1, 0, 1, 0, 0, 1};
    auto seqs = tiny_sequences(6, 5, 7, 8, 3000 + seed, /*empty_from=*/5);
    DataDims dims = DataDims::from(batch, &seqs);
    BehaviorMlpConfig cfg;
    cfg.base = tiny_mlp_config();
    cfg.cate_dim = 3;
    cfg.brand_dim = 4;
    BehaviorMlpModel<double> model(dims, cfg, seed);
    EXPECT_LT(model_grad_check(model, batch, &seqs), 1e-4) << seed;
  }
}

TEST(FullModelGrad, TransformerPasses) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto batch = tiny_batch(4, {4, 5}, 2, 4000 + seed);
    batch.labels = {1, 0, 0, 1};
    auto seqs = tiny_sequences(4, 5, 7, 8, 5000 + seed, /*empty_from=*/3);
    DataDims dims = DataDims::from(batch, &seqs);
    TransformerModel<double> model(dims, tiny_transformer_config(), seed);
    EXPECT_LT(model_grad_check(model, batch, &seqs), 1e-4) << seed;
  }
}

TEST(FullModelGrad, FrozenPaddingRowsStayZero) {
  auto batch = tiny_batch(5, {4}, 1, 6000);
  batch.labels = {1, 0, 1, 0, 1};
  auto seqs = tiny_sequences(5, 4, 7, 8, 6001, /*empty_from=*/4);
  DataDims dims = DataDims::from(batch, &seqs);
  TransformerModel<double> model(dims, tiny_transformer_config(), 6002);
  std::vector<std::size_t> rows = {0, 1, 2, 3, 4};
  const auto mb = make_minibatch<double>(batch, rows, &seqs);
  Graph<double> g;
  g.seed_dropout(1);
  const auto probs = model.build_probs(g, mb, RunMode::kTrain);
  const auto loss = g.weighted_bce(probs, mb.labels, 1.0, 1.0);
  model.params().zero_grads();
  g.backward(loss);
  for (const char* name : {"seq_cate_emb", "seq_brand_emb"}) {
    const auto& p = model.params().by_name(name);
    for (std::size_t k = 0; k < p.value.dim(1); ++k) {
      EXPECT_DOUBLE_EQ(p.grad.at(0, k), 0.0) << name;
      EXPECT_DOUBLE_EQ(p.value.at(0, k), 0.0) << name;
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoint round trip
// ---------------------------------------------------------------------------

TEST(Checkpoint, DeepRoundTripIsValueExact) {
  const auto batch = tiny_batch(5, {4, 5}, 2, 7000);
  auto seqs = tiny_sequences(5, 4, 7, 8, 7001);
  DataDims dims = DataDims::from(batch, &seqs);
  TransformerModel<float> model(dims, tiny_transformer_config(), 7002);

  ModelManifest manifest;
  manifest.family = "transformer";
  manifest.feature_hash = 0xabcdef;
  manifest.config_hash = 42;
  manifest.dims = dims;
  manifest.hyper = model.hyper_json();
  manifest.precision = "f32";
  const std::string path = "/tmp/ctrkit_test_ckpt.bin";
  save_deep_checkpoint(manifest, model, path);

  auto loaded = load_checkpoint(path);
  ASSERT_NE(loaded.deep_f32, nullptr);
  EXPECT_EQ(loaded.manifest.feature_hash, 0xabcdefu);
  const auto& a = model.params();
  const auto& b = loaded.deep_f32->params();
  ASSERT_EQ(a.count(), b.count());
  for (std::size_t i = 0; i < a.count(); ++i) {
    EXPECT_EQ(a.at(static_cast<int>(i)).value.raw(),
              b.at(static_cast<int>(i)).value.raw());
  }
  // Identical scoring after reload.
  EXPECT_EQ(model.predict(batch, &seqs), loaded.deep_f32->predict(batch, &seqs));
}

}  // namespace
