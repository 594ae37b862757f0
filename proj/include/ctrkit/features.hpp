#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrkit/common.hpp"
#include "ctrkit/ingest.hpp"

namespace ctrkit {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary encoding with rare-value bucketing.
// Index layout: 0 = padding (never produced by transform), 1 = "__other__",
// 2 = missing sentinel, 3.. = retained values.
// ---------------------------------------------------------------------------

class VocabEncoder {
 public:
  static constexpr int kPadding = 0;
  static constexpr int kOther = 1;
  static constexpr int kMissing = 2;
  static constexpr int kFirstValue = 3;

  enum class Retention { kAll, kTopK, kMinCount };

  VocabEncoder() = default;

  template <typename OptStringRange>
  static VocabEncoder fit(const OptStringRange& values, Retention retention,
                          int k = 1) {
    if (retention != Retention::kAll) {
      require(k >= 1, "vocab retention parameter must be >= 1");
    }
    std::unordered_map<std::string, std::size_t> counts;
    std::size_t seen = 0;
    for (const auto& v : values) {
      if (!v) continue;
      ++counts[*v];
      ++seen;
    }
    require(seen > 0, "build_vocab: no observed values");

    // Deterministic order: frequency desc, then raw value lexicographic asc.
    std::vector<std::pair<std::string, std::size_t>> order(counts.begin(), counts.end());
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });

    VocabEncoder enc;
    enc.retention_ = retention;
    enc.k_ = k;
    int next = kFirstValue;
    for (std::size_t i = 0; i < order.size(); ++i) {
      const bool keep =
          retention == Retention::kAll ||
          (retention == Retention::kTopK && i < static_cast<std::size_t>(k)) ||
          (retention == Retention::kMinCount &&
           order[i].second >= static_cast<std::size_t>(k));
      if (!keep) break;  // order is frequency-sorted, so the cut is a prefix
      enc.index_.emplace(order[i].first, next++);
    }
    enc.size_ = next;
    enc.fitted_ = true;
    return enc;
  }

  // Total: every value maps to some index; unseen values go to "__other__".
  int transform(const std::optional<std::string>& value) const {
    require(fitted_, "vocab encoder used before fit");
    if (!value) return kMissing;
    auto it = index_.find(*value);
    return it == index_.end() ? kOther : it->second;
  }

  int size() const { return size_; }
  bool fitted() const { return fitted_; }
  std::size_t retained_values() const { return index_.size(); }

  json to_json() const {
    // Entries sorted by index so the dump (and its hash) is canonical.
    std::vector<std::pair<int, std::string>> entries;
    entries.reserve(index_.size());
    for (const auto& [v, i] : index_) entries.emplace_back(i, v);
    std::sort(entries.begin(), entries.end());
    json values = json::array();
    for (const auto& [i, v] : entries) values.push_back(v);
    return json{{"size", size_}, {"values", values}};
  }

  static VocabEncoder from_json(const json& j) {
    VocabEncoder enc;
    enc.size_ = j.at("size").get<int>();
    int next = kFirstValue;
    for (const auto& v : j.at("values")) {
      enc.index_.emplace(v.get<std::string>(), next++);
    }
    require(next == enc.size_, "vocab deserialization: inconsistent size");
    enc.fitted_ = true;
    return enc;
  }

 private:
  std::unordered_map<std::string, int> index_;
  int size_ = kFirstValue;
  Retention retention_ = Retention::kAll;
  int k_ = 1;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Cross-validated smoothed CTR target encoding.
// Encoded value for a train row in fold f:
//   (clicks_outside_f(key) + alpha * prior) / (impressions_outside_f(key) + alpha)
// Validation / scoring rows use the full-training table with the same
// smoothing. Keys with no out-of-fold exposures resolve to the prior.
// ---------------------------------------------------------------------------

class TargetEncoder {
 public:
  TargetEncoder() = default;

  // Fits the encoder on the training rows and returns the leak-free encoded
  // training column (each row encoded from the folds excluding its own).
  // `row_ids` give each row a stable identity for fold hashing; callers that
  // don't care pass 0..n-1.
  std::vector<double> fit(const std::vector<std::int64_t>& keys,
                          const std::vector<int>& labels,
                          const std::vector<std::size_t>& row_ids, int n_folds,
                          double alpha, std::uint64_t seed) {
    require(keys.size() == labels.size() && keys.size() == row_ids.size(),
            "target encoder: column length mismatch");
    require(n_folds >= 2, "target encoder: n_folds must be >= 2");
    require(static_cast<std::size_t>(n_folds) <= keys.size(),
            "target encoder: n_folds exceeds row count");
    require(alpha >= 0.0, "target encoder: alpha must be >= 0");

    n_folds_ = n_folds;
    alpha_ = alpha;
    seed_ = seed;
    table_.clear();

    std::size_t total_clicks = 0;
    for (int y : labels) total_clicks += static_cast<std::size_t>(y);
    prior_ = static_cast<double>(total_clicks) / keys.size();

    struct Counts {
      std::int64_t n = 0, clicks = 0;
    };
    std::unordered_map<std::int64_t, Counts> totals;
    std::vector<std::unordered_map<std::int64_t, Counts>> per_fold(
        static_cast<std::size_t>(n_folds));
    std::vector<int> fold_of(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const int f = fold_of_row(row_ids[i]);
      fold_of[i] = f;
      auto& t = totals[keys[i]];
      ++t.n;
      t.clicks += labels[i];
      auto& pf = per_fold[static_cast<std::size_t>(f)][keys[i]];
      ++pf.n;
      pf.clicks += labels[i];
    }

    std::vector<double> encoded_train(keys.size());
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const auto& t = totals.at(keys[i]);
      const auto& fold_map = per_fold[static_cast<std::size_t>(fold_of[i])];
      Counts in_fold;
      if (auto it = fold_map.find(keys[i]); it != fold_map.end()) in_fold = it->second;
      const double n_oof = static_cast<double>(t.n - in_fold.n);
      const double c_oof = static_cast<double>(t.clicks - in_fold.clicks);
      encoded_train[i] = smoothed(c_oof, n_oof, alpha, prior_);
    }

    table_.reserve(totals.size());
    for (const auto& [key, c] : totals) {
      table_.emplace(key, smoothed(static_cast<double>(c.clicks),
                                   static_cast<double>(c.n), alpha, prior_));
    }
    fitted_ = true;
    return encoded_train;
  }

  double transform(std::int64_t key) const {
    require(fitted_, "target encoder used before fit");
    auto it = table_.find(key);
    return it == table_.end() ? prior_ : it->second;
  }

  double prior() const { return prior_; }

  int fold_of_row(std::size_t row_id) const {
    return static_cast<int>(hash_combine(seed_, row_id) %
                            static_cast<std::uint64_t>(n_folds_));
  }

  json to_json() const {
    std::vector<std::pair<std::int64_t, double>> entries(table_.begin(), table_.end());
    std::sort(entries.begin(), entries.end());
    json keys = json::array(), values = json::array();
    for (const auto& [k, v] : entries) {
      keys.push_back(k);
      values.push_back(v);
    }
    return json{{"prior", prior_}, {"alpha", alpha_},   {"n_folds", n_folds_},
                {"seed", seed_},   {"keys", keys},      {"values", values}};
  }

  static TargetEncoder from_json(const json& j) {
    TargetEncoder enc;
    enc.prior_ = j.at("prior").get<double>();
    enc.alpha_ = j.at("alpha").get<double>();
    enc.n_folds_ = j.at("n_folds").get<int>();
    enc.seed_ = j.at("seed").get<std::uint64_t>();
    const auto& keys = j.at("keys");
    const auto& values = j.at("values");
    for (std::size_t i = 0; i < keys.size(); ++i) {
      enc.table_.emplace(keys[i].get<std::int64_t>(), values[i].get<double>());
    }
    enc.fitted_ = true;
    return enc;
  }

 private:
  static double smoothed(double clicks, double n, double alpha, double prior) {
    const double denom = n + alpha;
    if (denom <= 0.0) return prior;
    return (clicks + alpha * prior) / denom;
  }

  std::unordered_map<std::int64_t, double> table_;
  double prior_ = 0.0;
  double alpha_ = 0.0;
  int n_folds_ = 0;
  std::uint64_t seed_ = 0;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Price buckets: 7 levels (0 = Very Low .. 6 = Super Luxury) split at the
// empirical 1/7..6/7 quantiles of the training prices.
// ---------------------------------------------------------------------------

class PriceBucketizer {
 public:
  static constexpr int kLevels = 7;

  PriceBucketizer() = default;

  explicit PriceBucketizer(std::vector<double> thresholds)
      : thresholds_(std::move(thresholds)) {
    require(thresholds_.size() == kLevels - 1,
            "price bucketizer needs exactly 6 thresholds");
    for (std::size_t i = 1; i < thresholds_.size(); ++i) {
      require(thresholds_[i] > thresholds_[i - 1],
              "price bucket thresholds must be strictly increasing");
    }
    fitted_ = true;
  }

  static PriceBucketizer fit(std::vector<double> train_prices) {
    std::sort(train_prices.begin(), train_prices.end());
    std::vector<double> distinct = train_prices;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (distinct.size() < kLevels) {
      throw ValidationError(
          "price bucket fit needs at least 7 distinct training prices; "
          "pass explicit thresholds instead");
    }
    std::vector<double> thresholds;
    for (int level = 1; level < kLevels; ++level) {
      thresholds.push_back(quantile(train_prices, level / static_cast<double>(kLevels)));
    }
    // Heavy duplication can collapse full-sample quantiles; distinct-value
    // quantiles are strictly increasing by construction.
    bool strictly_increasing = true;
    for (std::size_t i = 1; i < thresholds.size(); ++i) {
      if (!(thresholds[i] > thresholds[i - 1])) strictly_increasing = false;
    }
    if (!strictly_increasing) {
      thresholds.clear();
      for (int level = 1; level < kLevels; ++level) {
        thresholds.push_back(quantile(distinct, level / static_cast<double>(kLevels)));
      }
    }
    return PriceBucketizer(std::move(thresholds));
  }

  // Monotone non-decreasing in price.
  int apply(double price) const {
    require(fitted_, "price bucketizer used before fit");
    int level = 0;
    for (double t : thresholds_) {
      if (price >= t) ++level;
    }
    return level;
  }

  const std::vector<double>& thresholds() const { return thresholds_; }

  json to_json() const { return json{{"thresholds", thresholds_}}; }
  static PriceBucketizer from_json(const json& j) {
    return PriceBucketizer(j.at("thresholds").get<std::vector<double>>());
  }

 private:
  // Linear interpolation at f*(n-1) over the sorted sample.
  static double quantile(const std::vector<double>& sorted, double f) {
    const double pos = f * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
  }

  std::vector<double> thresholds_;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Z-scoring (population std, n denominator). Constant columns transform to
// all zeros and are flagged.
// ---------------------------------------------------------------------------

class ZScore {
 public:
  ZScore() = default;

  static ZScore fit(const std::vector<double>& train_values) {
    require(!train_values.empty(), "zscore fit: empty column");
    // Accumulate in sorted order so a permuted fitting split produces
    // bit-identical statistics.
    std::vector<double> sorted = train_values;
    std::sort(sorted.begin(), sorted.end());
    ZScore z;
    double sum = 0.0;
    for (double v : sorted) sum += v;
    z.mean_ = sum / static_cast<double>(sorted.size());
    double ss = 0.0;
    for (double v : sorted) ss += (v - z.mean_) * (v - z.mean_);
    z.std_ = std::sqrt(ss / static_cast<double>(sorted.size()));
    z.constant_ = (z.std_ == 0.0);
    z.fitted_ = true;
    return z;
  }

  double apply(double x) const {
    require(fitted_, "zscore used before fit");
    if (constant_) return 0.0;
    return (x - mean_) / std_;
  }

  double mean() const { return mean_; }
  double stddev() const { return std_; }
  bool constant_column() const { return constant_; }

  json to_json() const {
    return json{{"mean", mean_}, {"std", std_}, {"constant", constant_}};
  }
  static ZScore from_json(const json& j) {
    ZScore z;
    z.mean_ = j.at("mean").get<double>();
    z.std_ = j.at("std").get<double>();
    z.constant_ = j.at("constant").get<bool>();
    z.fitted_ = true;
    return z;
  }

 private:
  double mean_ = 0.0;
  double std_ = 1.0;
  bool constant_ = false;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Pairwise interaction column: token "A×B", top-k retained, rest "__other__".
// ---------------------------------------------------------------------------

inline constexpr const char* kInteractionSeparator = "\xC3\x97";  // UTF-8 ×

inline std::optional<std::string> interaction_token(
    const std::optional<std::string>& a, const std::optional<std::string>& b) {
  if (!a || !b) return std::nullopt;
  return *a + kInteractionSeparator + *b;
}

struct InteractionResult {
  std::vector<std::optional<std::string>> tokens;
  VocabEncoder encoder;
};

inline InteractionResult make_interaction(
    const std::vector<std::optional<std::string>>& col_a,
    const std::vector<std::optional<std::string>>& col_b, int top_k) {
  require(col_a.size() == col_b.size(), "interaction: column length mismatch");
  InteractionResult r;
  r.tokens.reserve(col_a.size());
  for (std::size_t i = 0; i < col_a.size(); ++i) {
    r.tokens.push_back(interaction_token(col_a[i], col_b[i]));
  }
  r.encoder = VocabEncoder::fit(r.tokens, VocabEncoder::Retention::kTopK, top_k);
  return r;
}

// ---------------------------------------------------------------------------
// Feature spec: declarative description of the encoded feature matrix.
// ---------------------------------------------------------------------------

struct CatFeature {
  std::string name;
  std::string source;              // frame column (single-column feature)
  std::string source_a, source_b;  // interaction pair; used when source empty
  VocabEncoder::Retention retention = VocabEncoder::Retention::kAll;
  int k = 1;

  bool is_interaction() const { return source.empty(); }
};

struct NumFeature {
  std::string name;
  std::string source;      // frame numeric column; empty for target encodings
  std::string encode_key;  // "user_id" or "adgroup_id" for CTR encodings

  bool is_target_encoding() const { return source.empty(); }
};

struct FeatureSpec {
  std::vector<CatFeature> cats;
  std::vector<NumFeature> nums;
  std::string impute = "minus1";  // minus1 | missing | mode
  int n_folds = 5;
  double alpha = 20.0;

  json to_json() const {
    json jc = json::array();
    for (const auto& c : cats) {
      jc.push_back(json{{"name", c.name},
                        {"source", c.source},
                        {"source_a", c.source_a},
                        {"source_b", c.source_b},
                        {"retention", static_cast<int>(c.retention)},
                        {"k", c.k}});
    }
    json jn = json::array();
    for (const auto& n : nums) {
      jn.push_back(json{{"name", n.name}, {"source", n.source}, {"key", n.encode_key}});
    }
    return json{{"cats", jc},       {"nums", jn},   {"impute", impute},
                {"n_folds", n_folds}, {"alpha", alpha}};
  }

  static FeatureSpec from_json(const json& j) {
    FeatureSpec s;
    for (const auto& c : j.at("cats")) {
      CatFeature f;
      f.name = c.at("name").get<std::string>();
      f.source = c.at("source").get<std::string>();
      f.source_a = c.at("source_a").get<std::string>();
      f.source_b = c.at("source_b").get<std::string>();
      f.retention = static_cast<VocabEncoder::Retention>(c.at("retention").get<int>());
      f.k = c.at("k").get<int>();
      s.cats.push_back(std::move(f));
    }
    for (const auto& n : j.at("nums")) {
      NumFeature f;
      f.name = n.at("name").get<std::string>();
      f.source = n.at("source").get<std::string>();
      f.encode_key = n.at("key").get<std::string>();
      s.nums.push_back(std::move(f));
    }
    s.impute = j.at("impute").get<std::string>();
    s.n_folds = j.at("n_folds").get<int>();
    s.alpha = j.at("alpha").get<double>();
    return s;
  }
};

// Model-ready block: categorical index columns, z-scored numerics, labels.
struct EncodedBatch {
  std::size_t n_rows = 0;
  std::size_t n_cat = 0;
  std::size_t n_num = 0;
  std::vector<std::int32_t> cat;  // row-major n_rows x n_cat
  std::vector<double> num;        // row-major n_rows x n_num
  std::vector<int> labels;
  std::vector<std::int64_t> user_id;
  std::vector<std::int64_t> time_stamp;
  std::vector<std::string> cat_names;
  std::vector<int> vocab_sizes;
  std::vector<std::string> num_names;

  std::int32_t cat_at(std::size_t row, std::size_t col) const {
    return cat[row * n_cat + col];
  }
  double num_at(std::size_t row, std::size_t col) const {
    return num[row * n_num + col];
  }
};

// ---------------------------------------------------------------------------
// End-to-end fitted feature pipeline. Everything is fit on the training rows
// only; transforms are pure afterwards.
// ---------------------------------------------------------------------------

class FeaturePipeline {
 public:
  FeaturePipeline() = default;

  static FeaturePipeline fit(const FeatureSpec& spec, const ColumnFrame& frame,
                             const std::vector<bool>& train_mask,
                             std::uint64_t seed) {
    require(train_mask.size() == frame.n_rows, "feature fit: mask size mismatch");
    std::size_t n_train = 0;
    for (bool b : train_mask) n_train += b ? 1 : 0;
    require(n_train > 0, "feature fit: empty training split");

    FeaturePipeline p;
    p.spec_ = spec;
    p.seed_ = seed;

    // Imputation statistics from the training split, applied everywhere.
    ImputePolicy policy;
    if (spec.impute == "minus1") {
      policy = impute_policy_sentinel_minus1();
    } else if (spec.impute == "missing") {
      policy = impute_policy_sentinel_missing();
    } else if (spec.impute == "mode") {
      policy = impute_policy_mode();
    } else {
      throw ValidationError("unknown impute policy: " + spec.impute);
    }
    p.impute_ = fit_impute(frame, policy, train_mask);
    ColumnFrame filled = frame;
    p.impute_.apply(filled);

    // Interaction token columns are materialized before vocab fitting.
    std::map<std::string, std::vector<std::optional<std::string>>> derived;
    for (const auto& c : spec.cats) {
      if (!c.is_interaction()) continue;
      const auto& a = filled.cat(c.source_a);
      const auto& b = filled.cat(c.source_b);
      auto& col = derived[c.name];
      col.reserve(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        col.push_back(interaction_token(a[i], b[i]));
      }
    }
    auto column_of = [&](const CatFeature& c)
        -> const std::vector<std::optional<std::string>>& {
      return c.is_interaction() ? derived.at(c.name) : filled.cat(c.source);
    };

    // Vocabularies on training rows only.
    for (const auto& c : spec.cats) {
      const auto& col = column_of(c);
      std::vector<std::optional<std::string>> train_values;
      train_values.reserve(n_train);
      for (std::size_t i = 0; i < col.size(); ++i) {
        if (train_mask[i]) train_values.push_back(col[i]);
      }
      p.cat_encoders_.push_back(VocabEncoder::fit(train_values, c.retention, c.k));
    }

    // Numeric columns: target encodings get their out-of-fold training
    // values here; plain numerics are passed through. Z-scores are fit on
    // the resulting training column.
    std::vector<std::size_t> train_rows;
    train_rows.reserve(n_train);
    for (std::size_t i = 0; i < frame.n_rows; ++i) {
      if (train_mask[i]) train_rows.push_back(i);
    }

    for (const auto& nf : spec.nums) {
      std::vector<double> train_col(train_rows.size());
      if (nf.is_target_encoding()) {
        const auto& keys_all = key_column(frame, nf.encode_key);
        std::vector<std::int64_t> keys(train_rows.size());
        std::vector<int> labels(train_rows.size());
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          keys[i] = keys_all[train_rows[i]];
          labels[i] = frame.labels[train_rows[i]];
        }
        TargetEncoder encoder;
        const auto oof = encoder.fit(keys, labels, train_rows, spec.n_folds,
                                     spec.alpha, hash_combine(seed, fnv1a64(nf.name)));
        // Stash per-row training encodings so assemble() can reuse them.
        auto& stash = p.train_encodings_[nf.name];
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          stash.emplace(train_rows[i], oof[i]);
        }
        // The scaler is fit on the full-table transform of the training
        // keys, which is independent of row order and fold assignment;
        // feeding it the fold-dependent out-of-fold column would make the
        // validation transform depend on row order.
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          train_col[i] = encoder.transform(keys[i]);
        }
        p.target_encoders_.emplace(nf.name, std::move(encoder));
      } else {
        const auto& col = filled.num(nf.source);
        for (std::size_t i = 0; i < train_rows.size(); ++i) {
          const auto& v = col[train_rows[i]];
          require(v.has_value(), "numeric column " + nf.source +
                                     " still has absent values after imputation");
          train_col[i] = *v;
        }
      }
      p.num_scalers_.push_back(ZScore::fit(train_col));
    }
    p.fitted_ = true;
    return p;
  }

  // Assembles the encoded batch. Rows flagged in `train_mask` receive their
  // out-of-fold target encodings (leak-free); all other rows go through the
  // full-training tables. Column order follows the spec exactly.
  EncodedBatch assemble(const ColumnFrame& frame,
                        const std::vector<bool>& train_mask) const {
    require(fitted_, "assemble_batch: feature pipeline not fitted");
    require(train_mask.empty() || train_mask.size() == frame.n_rows,
            "assemble_batch: mask size mismatch");

    ColumnFrame filled = frame;
    impute_.apply(filled);

    EncodedBatch batch;
    batch.n_rows = frame.n_rows;
    batch.n_cat = spec_.cats.size();
    batch.n_num = spec_.nums.size();
    batch.labels = frame.labels;
    batch.user_id = frame.user_id;
    batch.time_stamp = frame.time_stamp;
    batch.cat.assign(batch.n_rows * batch.n_cat, 0);
    batch.num.assign(batch.n_rows * batch.n_num, 0.0);

    std::map<std::string, std::vector<std::optional<std::string>>> derived;
    for (const auto& c : spec_.cats) {
      if (!c.is_interaction()) continue;
      const auto& a = filled.cat(c.source_a);
      const auto& b = filled.cat(c.source_b);
      auto& col = derived[c.name];
      col.reserve(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        col.push_back(interaction_token(a[i], b[i]));
      }
    }

    for (std::size_t ci = 0; ci < spec_.cats.size(); ++ci) {
      const auto& c = spec_.cats[ci];
      const auto& col = c.is_interaction() ? derived.at(c.name) : filled.cat(c.source);
      const auto& enc = cat_encoders_[ci];
      batch.cat_names.push_back(c.name);
      batch.vocab_sizes.push_back(enc.size());
      for (std::size_t r = 0; r < batch.n_rows; ++r) {
        batch.cat[r * batch.n_cat + ci] = enc.transform(col[r]);
      }
    }

    for (std::size_t ni = 0; ni < spec_.nums.size(); ++ni) {
      const auto& nf = spec_.nums[ni];
      batch.num_names.push_back(nf.name);
      const auto& scaler = num_scalers_[ni];
      if (nf.is_target_encoding()) {
        const auto& enc = target_encoders_.at(nf.name);
        const auto& keys = key_column(frame, nf.encode_key);
        const auto stash = train_encodings_.find(nf.name);
        for (std::size_t r = 0; r < batch.n_rows; ++r) {
          double v;
          if (!train_mask.empty() && train_mask[r] && stash != train_encodings_.end() &&
              stash->second.count(r)) {
            v = stash->second.at(r);
          } else {
            v = enc.transform(keys[r]);
          }
          batch.num[r * batch.n_num + ni] = scaler.apply(v);
        }
      } else {
        const auto& col = filled.num(nf.source);
        for (std::size_t r = 0; r < batch.n_rows; ++r) {
          require(col[r].has_value(), "numeric column " + nf.source +
                                          " has absent value at assemble time");
          batch.num[r * batch.n_num + ni] = scaler.apply(*col[r]);
        }
      }
    }
    return batch;
  }

  const FeatureSpec& spec() const { return spec_; }
  const std::vector<VocabEncoder>& cat_encoders() const { return cat_encoders_; }
  const std::vector<ZScore>& num_scalers() const { return num_scalers_; }
  const TargetEncoder& target_encoder(const std::string& name) const {
    return target_encoders_.at(name);
  }
  bool fitted() const { return fitted_; }

  json to_json() const {
    json enc = json::array();
    for (const auto& e : cat_encoders_) enc.push_back(e.to_json());
    json scalers = json::array();
    for (const auto& s : num_scalers_) scalers.push_back(s.to_json());
    json tenc = json::object();
    for (const auto& [name, t] : target_encoders_) tenc[name] = t.to_json();
    json imp = json::object();
    imp["cat"] = impute_.cat_fill;
    imp["num"] = impute_.num_fill;
    json stash = json::object();
    for (const auto& [name, rows] : train_encodings_) {
      std::vector<std::pair<std::size_t, double>> sorted(rows.begin(), rows.end());
      std::sort(sorted.begin(), sorted.end());
      json r = json::array(), v = json::array();
      for (const auto& [row, val] : sorted) {
        r.push_back(row);
        v.push_back(val);
      }
      stash[name] = json{{"rows", r}, {"values", v}};
    }
    return json{{"spec", spec_.to_json()}, {"seed", seed_},
                {"impute", imp},           {"cat_encoders", enc},
                {"num_scalers", scalers},  {"target_encoders", tenc},
                {"train_encodings", stash}};
  }

  static FeaturePipeline from_json(const json& j) {
    FeaturePipeline p;
    p.spec_ = FeatureSpec::from_json(j.at("spec"));
    p.seed_ = j.at("seed").get<std::uint64_t>();
    p.impute_.cat_fill =
        j.at("impute").at("cat").get<std::map<std::string, std::string>>();
    p.impute_.num_fill =
        j.at("impute").at("num").get<std::map<std::string, double>>();
    for (const auto& e : j.at("cat_encoders")) {
      p.cat_encoders_.push_back(VocabEncoder::from_json(e));
    }
    for (const auto& s : j.at("num_scalers")) {
      p.num_scalers_.push_back(ZScore::from_json(s));
    }
    for (const auto& [name, t] : j.at("target_encoders").items()) {
      p.target_encoders_.emplace(name, TargetEncoder::from_json(t));
    }
    for (const auto& [name, st] : j.at("train_encodings").items()) {
      auto& stash = p.train_encodings_[name];
      const auto& rows = st.at("rows");
      const auto& values = st.at("values");
      for (std::size_t i = 0; i < rows.size(); ++i) {
        stash.emplace(rows[i].get<std::size_t>(), values[i].get<double>());
      }
    }
    p.fitted_ = true;
    return p;
  }

  // Fingerprint of the spec plus every fitted encoder; train/evaluate refuse
  // artifacts whose fingerprints disagree.
  std::uint64_t hash() const { return fnv1a64(to_json().dump()); }

 private:
  static const std::vector<std::int64_t>& key_column(const ColumnFrame& frame,
                                                     const std::string& key) {
    if (key == "user_id") return frame.user_id;
    if (key == "adgroup_id") return frame.adgroup_id;
    throw ValidationError("unknown target-encoding key: " + key);
  }

  FeatureSpec spec_;
  FittedImpute impute_;
  std::vector<VocabEncoder> cat_encoders_;
  std::vector<ZScore> num_scalers_;
  std::map<std::string, TargetEncoder> target_encoders_;
  std::map<std::string, std::unordered_map<std::size_t, double>> train_encodings_;
  std::uint64_t seed_ = 0;
  bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Built-in feature specs per model family.
// ---------------------------------------------------------------------------

// Logistic regression: compact categorical set plus CTR target encodings.
inline FeatureSpec lr_feature_spec() {
  FeatureSpec s;
  auto cat = [&](const std::string& src, VocabEncoder::Retention r, int k,
                 std::string name = "") {
    CatFeature f;
    f.name = name.empty() ? src : name;
    f.source = src;
    f.retention = r;
    f.k = k;
    s.cats.push_back(std::move(f));
  };
  using R = VocabEncoder::Retention;
  cat("final_gender_code", R::kAll, 1);
  cat("age_level", R::kAll, 1);
  cat("occupation", R::kAll, 1);
  cat("shopping_level", R::kAll, 1);
  cat("cate_id", R::kTopK, 100, "cate_id_filtered");
  cat("pid", R::kAll, 1);
  cat("hour", R::kAll, 1);
  cat("weekday", R::kAll, 1);
  s.nums.push_back({"ad_ctr_cv", "", "adgroup_id"});
  s.nums.push_back({"user_ctr_cv", "", "user_id"});
  s.nums.push_back({"price", "price", ""});
  s.impute = "minus1";
  return s;
}

// Shared static set for the deep families: broad categoricals, no CTR
// target encodings (historical-CTR-free), embeddings learn the crosses.
inline FeatureSpec deep_feature_spec() {
  FeatureSpec s;
  auto cat = [&](const std::string& src, VocabEncoder::Retention r, int k,
                 std::string name = "") {
    CatFeature f;
    f.name = name.empty() ? src : name;
    f.source = src;
    f.retention = r;
    f.k = k;
    s.cats.push_back(std::move(f));
  };
  using R = VocabEncoder::Retention;
  cat("final_gender_code", R::kAll, 1);
  cat("age_level", R::kAll, 1);
  cat("occupation", R::kAll, 1);
  cat("shopping_level", R::kAll, 1);
  cat("cms_segid", R::kAll, 1);
  cat("cms_group_id", R::kAll, 1);
  cat("pvalue_level", R::kAll, 1);
  cat("new_user_class_level", R::kAll, 1);
  cat("cate_id", R::kTopK, 100, "cate_id_filtered");
  cat("brand", R::kTopK, 300);
  cat("campaign_id", R::kTopK, 300);
  cat("customer", R::kTopK, 300);
  cat("pid", R::kAll, 1);
  cat("hour", R::kAll, 1);
  cat("weekday", R::kAll, 1);
  cat("is_weekend", R::kAll, 1);
  cat("time_bin", R::kAll, 1);
  s.nums.push_back({"price", "price", ""});
  s.impute = "mode";
  return s;
}

inline FeatureSpec default_feature_spec(const std::string& model_family) {
  if (model_family == "lr") return lr_feature_spec();
  if (model_family == "mlp" || model_family == "behavior-mlp" ||
      model_family == "transformer") {
    return deep_feature_spec();
  }
  throw ValidationError("unknown model family: " + model_family);
}

}  // namespace ctrkit
