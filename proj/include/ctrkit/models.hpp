#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrkit/features.hpp"
#include "ctrkit/graph.hpp"
#include "ctrkit/params.hpp"
#include "ctrkit/sequences.hpp"

namespace ctrkit {

// ---------------------------------------------------------------------------
// Dense minibatch view assembled from an EncodedBatch (and sequences, for
// the behavior-aware families).
// ---------------------------------------------------------------------------

template <typename T>
struct MiniBatch {
  std::size_t n = 0;
  std::vector<std::vector<std::int32_t>> cat_cols;  // per categorical feature
  Tensor<T> nums;                                   // [n, n_num]
  std::vector<int> labels;
  int seq_len = 0;
  std::vector<std::int32_t> seq_cate, seq_brand;  // [n * L]
  std::vector<std::uint8_t> seq_mask;             // [n * L]
};

template <typename T>
MiniBatch<T> make_minibatch(const EncodedBatch& batch,
                            const std::vector<std::size_t>& rows,
                            const SequenceSet* sequences = nullptr) {
  MiniBatch<T> mb;
  mb.n = rows.size();
  mb.cat_cols.resize(batch.n_cat);
  for (std::size_t c = 0; c < batch.n_cat; ++c) {
    mb.cat_cols[c].resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      mb.cat_cols[c][i] = batch.cat_at(rows[i], c);
    }
  }
  mb.nums = Tensor<T>({mb.n, std::max<std::size_t>(batch.n_num, 1)});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < batch.n_num; ++c) {
      mb.nums.at(i, c) = static_cast<T>(batch.num_at(rows[i], c));
    }
  }
  mb.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) mb.labels[i] = batch.labels[rows[i]];
  if (sequences != nullptr) {
    const int L = sequences->length;
    mb.seq_len = L;
    mb.seq_cate.assign(mb.n * static_cast<std::size_t>(L), 0);
    mb.seq_brand.assign(mb.n * static_cast<std::size_t>(L), 0);
    mb.seq_mask.assign(mb.n * static_cast<std::size_t>(L), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const BehaviorSequence& s = sequences->get(batch.user_id[rows[i]]);
      for (int j = 0; j < L; ++j) {
        mb.seq_cate[i * static_cast<std::size_t>(L) + j] = s.cate_idx[j];
        mb.seq_brand[i * static_cast<std::size_t>(L) + j] = s.brand_idx[j];
        mb.seq_mask[i * static_cast<std::size_t>(L) + j] = s.mask[j];
      }
    }
  }
  return mb;
}

// ---------------------------------------------------------------------------
// Shared data-shape metadata every model is built against.
// ---------------------------------------------------------------------------

struct DataDims {
  std::vector<int> vocab_sizes;  // per categorical feature
  std::size_t n_num = 0;
  int seq_len = 0;        // 0 when the family uses no sequences
  int cate_vocab = 0;     // sequence vocab sizes
  int brand_vocab = 0;

  static DataDims from(const EncodedBatch& batch, const SequenceSet* seq = nullptr) {
    DataDims d;
    d.vocab_sizes = batch.vocab_sizes;
    d.n_num = batch.n_num;
    if (seq != nullptr) {
      d.seq_len = seq->length;
      d.cate_vocab = seq->cate_vocab_size;
      d.brand_vocab = seq->brand_vocab_size;
    }
    return d;
  }

  json to_json() const {
    return json{{"vocab_sizes", vocab_sizes}, {"n_num", n_num},
                {"seq_len", seq_len},         {"cate_vocab", cate_vocab},
                {"brand_vocab", brand_vocab}};
  }
  static DataDims from_json(const json& j) {
    DataDims d;
    d.vocab_sizes = j.at("vocab_sizes").get<std::vector<int>>();
    d.n_num = j.at("n_num").get<std::size_t>();
    d.seq_len = j.at("seq_len").get<int>();
    d.cate_vocab = j.at("cate_vocab").get<int>();
    d.brand_vocab = j.at("brand_vocab").get<int>();
    return d;
  }
};

// ---------------------------------------------------------------------------
// Deep model interface: graph construction for training, pure scoring for
// evaluation.
// ---------------------------------------------------------------------------

template <typename T>
class DeepModel {
 public:
  virtual ~DeepModel() = default;

  // Builds the forward pass and returns the click-probability node [n, 1].
  virtual typename Graph<T>::Id build_probs(Graph<T>& g, const MiniBatch<T>& mb,
                                            RunMode mode) = 0;

  virtual std::string family() const = 0;
  virtual bool needs_sequences() const = 0;
  virtual std::size_t expected_parameter_count() const = 0;
  virtual json hyper_json() const = 0;

  ParameterSet<T>& params() { return params_; }
  const ParameterSet<T>& params() const { return params_; }
  const DataDims& dims() const { return dims_; }

  std::size_t count_parameters() const { return params_.total_elements(); }

  // Pure scoring in eval mode; repeated calls are bit-identical.
  std::vector<double> predict_rows(const EncodedBatch& batch,
                                   const SequenceSet* sequences,
                                   const std::vector<std::size_t>& row_ids,
                                   std::size_t chunk = 4096) {
    std::vector<double> out(row_ids.size());
    std::vector<std::size_t> rows;
    for (std::size_t start = 0; start < row_ids.size(); start += chunk) {
      const std::size_t end = std::min(row_ids.size(), start + chunk);
      rows.assign(row_ids.begin() + static_cast<std::ptrdiff_t>(start),
                  row_ids.begin() + static_cast<std::ptrdiff_t>(end));
      auto mb = make_minibatch<T>(batch, rows,
                                  needs_sequences() ? sequences : nullptr);
      Graph<T> g;
      const auto probs = build_probs(g, mb, RunMode::kEval);
      const Tensor<T>& p = g.value(probs);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        out[start + i] = static_cast<double>(p[i]);
      }
    }
    return out;
  }

  std::vector<double> predict(const EncodedBatch& batch,
                              const SequenceSet* sequences,
                              std::size_t chunk = 4096) {
    std::vector<std::size_t> rows(batch.n_rows);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return predict_rows(batch, sequences, rows, chunk);
  }

 protected:
  ParameterSet<T> params_;
  DataDims dims_;
};

// ---------------------------------------------------------------------------
// MLP over static features: per-categorical embeddings concatenated with a
// linear projection of the numerics, then a dense stack with batch norm,
// relu and dropout, sigmoid head.
// ---------------------------------------------------------------------------

struct MlpConfig {
  int emb_dim = 16;
  std::vector<int> hidden = {128, 64};
  double dropout = 0.2;
  bool use_batch_norm = true;

  json to_json() const {
    return json{{"emb_dim", emb_dim}, {"hidden", hidden},
                {"dropout", dropout}, {"use_batch_norm", use_batch_norm}};
  }
  static MlpConfig from_json(const json& j) {
    MlpConfig c;
    c.emb_dim = j.at("emb_dim").get<int>();
    c.hidden = j.at("hidden").get<std::vector<int>>();
    c.dropout = j.at("dropout").get<double>();
    c.use_batch_norm = j.at("use_batch_norm").get<bool>();
    return c;
  }
};

template <typename T>
class MlpModel : public DeepModel<T> {
 public:
  MlpModel(const DataDims& dims, MlpConfig config, std::uint64_t seed)
      : config_(std::move(config)) {
    this->dims_ = dims;
    std::mt19937_64 rng(seed);
    const auto e = static_cast<std::size_t>(config_.emb_dim);
    for (std::size_t i = 0; i < dims.vocab_sizes.size(); ++i) {
      this->params_.add("emb_" + std::to_string(i),
                        init_normal<T>({static_cast<std::size_t>(dims.vocab_sizes[i]), e},
                                       0.01, rng));
    }
    // With batch norm downstream, biases before the normalization are
    // structurally dead (BN removes per-column shifts); omit them.
    const bool biases = !config_.use_batch_norm;
    if (dims.n_num > 0) {
      this->params_.add("num_w", init_xavier<T>(dims.n_num, e, rng));
      if (biases) this->params_.add("num_b", init_zeros<T>({e}));
    }
    std::size_t width = dims.vocab_sizes.size() * e + (dims.n_num > 0 ? e : 0);
    input_width_ = width;
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
      const auto h = static_cast<std::size_t>(config_.hidden[l]);
      this->params_.add("h" + std::to_string(l) + "_w", init_xavier<T>(width, h, rng));
      if (biases) this->params_.add("h" + std::to_string(l) + "_b", init_zeros<T>({h}));
      if (config_.use_batch_norm) {
        this->params_.add("h" + std::to_string(l) + "_bn_g", init_ones<T>({h}));
        this->params_.add("h" + std::to_string(l) + "_bn_b", init_zeros<T>({h}));
        bn_states_.emplace_back(h);
      }
      width = h;
    }
    this->params_.add("out_w", init_xavier<T>(width, 1, rng));
    this->params_.add("out_b", init_zeros<T>({1}));
  }

  typename Graph<T>::Id build_probs(Graph<T>& g, const MiniBatch<T>& mb,
                                    RunMode mode) override {
    auto x = build_static(g, mb);
    return head(g, x, mb, mode);
  }

  std::string family() const override { return "mlp"; }
  bool needs_sequences() const override { return false; }

  std::size_t expected_parameter_count() const override {
    const auto e = static_cast<std::size_t>(config_.emb_dim);
    const bool biases = !config_.use_batch_norm;
    std::size_t n = 0;
    for (int v : this->dims_.vocab_sizes) n += static_cast<std::size_t>(v) * e;
    if (this->dims_.n_num > 0) n += this->dims_.n_num * e + (biases ? e : 0);
    std::size_t width = this->dims_.vocab_sizes.size() * e +
                        (this->dims_.n_num > 0 ? e : 0) + extra_input_width();
    for (int h : config_.hidden) {
      const auto hh = static_cast<std::size_t>(h);
      n += width * hh + (biases ? hh : 0);
      if (config_.use_batch_norm) n += 2 * hh;
      width = hh;
    }
    n += width + 1;
    n += extra_parameter_count();
    return n;
  }

  json hyper_json() const override { return config_.to_json(); }

  const MlpConfig& config() const { return config_; }

 protected:
  // Behavior extension points.
  virtual std::size_t extra_input_width() const { return 0; }
  virtual std::size_t extra_parameter_count() const { return 0; }
  virtual void append_extra_inputs(Graph<T>& g, const MiniBatch<T>& mb,
                                   std::vector<typename Graph<T>::Id>& parts) {}

  typename Graph<T>::Id build_static(Graph<T>& g, const MiniBatch<T>& mb) {
    const auto e = static_cast<std::size_t>(config_.emb_dim);
    std::vector<typename Graph<T>::Id> parts;
    for (std::size_t i = 0; i < mb.cat_cols.size(); ++i) {
      parts.push_back(g.embedding(&this->params_.by_name("emb_" + std::to_string(i)),
                                  mb.cat_cols[i], {mb.n, e}));
    }
    if (this->dims_.n_num > 0) {
      auto nums = g.input(mb.nums);
      parts.push_back(g.linear(nums, g.param(&this->params_.by_name("num_w")),
                               g.param(&this->params_.by_name("num_b"))));
    }
    append_extra_inputs(g, mb, parts);
    return g.concat_cols(parts);
  }

  typename Graph<T>::Id head(Graph<T>& g, typename Graph<T>::Id x,
                             const MiniBatch<T>& mb, RunMode mode) {
    for (std::size_t l = 0; l < config_.hidden.size(); ++l) {
      x = g.linear(x, g.param(&this->params_.by_name("h" + std::to_string(l) + "_w")),
                   g.param(&this->params_.by_name("h" + std::to_string(l) + "_b")));
      if (config_.use_batch_norm) {
        x = g.batch_norm(x,
                         g.param(&this->params_.by_name("h" + std::to_string(l) + "_bn_g")),
                         g.param(&this->params_.by_name("h" + std::to_string(l) + "_bn_b")),
                         &bn_states_[l], mode);
      }
      x = g.relu(x);
      x = g.dropout(x, config_.dropout, mode);
    }
    auto logit = g.linear(x, g.param(&this->params_.by_name("out_w")),
                          g.param(&this->params_.by_name("out_b")));
    return g.sigmoid(logit);
  }

  MlpConfig config_;
  std::vector<BatchNormState<T>> bn_states_;
  std::size_t input_width_ = 0;
};

// ---------------------------------------------------------------------------
// Behavior MLP: the static MLP plus dual sequence embeddings pooled by a
// mask-aware mean. Pooling is order-free by construction: reordering a
// user's events cannot change the output, which is the designed contrast
// with the transformer.
// ---------------------------------------------------------------------------

struct BehaviorMlpConfig {
  MlpConfig base;
  int cate_dim = 24;
  int brand_dim = 24;

  json to_json() const {
    return json{{"base", base.to_json()}, {"cate_dim", cate_dim},
                {"brand_dim", brand_dim}};
  }
  static BehaviorMlpConfig from_json(const json& j) {
    BehaviorMlpConfig c;
    c.base = MlpConfig::from_json(j.at("base"));
    c.cate_dim = j.at("cate_dim").get<int>();
    c.brand_dim = j.at("brand_dim").get<int>();
    return c;
  }
};

template <typename T>
class BehaviorMlpModel : public MlpModel<T> {
 public:
  BehaviorMlpModel(const DataDims& dims, BehaviorMlpConfig config, std::uint64_t seed)
      : MlpModel<T>(dims, config.base, seed), behavior_config_(config) {
    require(dims.seq_len > 0 && dims.cate_vocab > 0 && dims.brand_vocab > 0,
            "behavior-mlp requires sequence metadata");
    std::mt19937_64 rng(hash_combine(seed, kSeqSeedTag));
    this->params_.add("seq_cate_emb",
                      init_normal<T>({static_cast<std::size_t>(dims.cate_vocab),
                                      static_cast<std::size_t>(config.cate_dim)},
                                     0.01, rng),
                      true, /*frozen_row=*/0);
    this->params_.add("seq_brand_emb",
                      init_normal<T>({static_cast<std::size_t>(dims.brand_vocab),
                                      static_cast<std::size_t>(config.brand_dim)},
                                     0.01, rng),
                      true, /*frozen_row=*/0);
    zero_frozen_rows();
    // The dense stack was sized without the behavior slot; rebuild the first
    // hidden layer with the widened input.
    rebuild_first_hidden(rng);
  }

  std::string family() const override { return "behavior-mlp"; }
  bool needs_sequences() const override { return true; }

 protected:
  std::size_t extra_input_width() const override {
    return static_cast<std::size_t>(behavior_config_.cate_dim + behavior_config_.brand_dim);
  }
  std::size_t extra_parameter_count() const override {
    return static_cast<std::size_t>(this->dims_.cate_vocab) *
               static_cast<std::size_t>(behavior_config_.cate_dim) +
           static_cast<std::size_t>(this->dims_.brand_vocab) *
               static_cast<std::size_t>(behavior_config_.brand_dim);
  }
  void append_extra_inputs(Graph<T>& g, const MiniBatch<T>& mb,
                           std::vector<typename Graph<T>::Id>& parts) override {
    require(mb.seq_len == this->dims_.seq_len,
            "behavior-mlp: minibatch sequence length mismatch");
    parts.push_back(g.embedding_bag_mean(&this->params_.by_name("seq_cate_emb"),
                                         mb.seq_cate, mb.seq_mask, mb.n,
                                         static_cast<std::size_t>(mb.seq_len)));
    parts.push_back(g.embedding_bag_mean(&this->params_.by_name("seq_brand_emb"),
                                         mb.seq_brand, mb.seq_mask, mb.n,
                                         static_cast<std::size_t>(mb.seq_len)));
  }

 private:
  static constexpr std::uint64_t kSeqSeedTag = 0x5e91ab3cULL;

  void zero_frozen_rows() {
    for (const char* name : {"seq_cate_emb", "seq_brand_emb"}) {
      auto& p = this->params_.by_name(name);
      const std::size_t d = p.value.dim(1);
      for (std::size_t k = 0; k < d; ++k) p.value.at(0, k) = T(0);
    }
  }

  void rebuild_first_hidden(std::mt19937_64& rng) {
    if (this->config_.hidden.empty()) return;
    auto& w0 = this->params_.by_name("h0_w");
    const std::size_t new_in = this->input_width_ + extra_input_width();
    w0.value = init_xavier<T>(new_in, static_cast<std::size_t>(this->config_.hidden[0]), rng);
    w0.grad = Tensor<T>::zeros(w0.value.shape());
  }

  BehaviorMlpConfig behavior_config_;
};

// ---------------------------------------------------------------------------
// Transformer CTR model: summed dual event embeddings plus learnable
// positional embeddings, pre-norm self-attention layers, masked mean
// pooling; static features run through cross layers; concatenation feeds a
// GELU deep head.
// ---------------------------------------------------------------------------

struct TransformerConfig {
  int d_model = 48;
  int heads = 8;
  int layers = 4;
  int ff = 192;
  int static_emb = 80;
  std::vector<int> head_hidden = {1024, 512, 256, 128};
  int cross_layers = 2;
  double dropout = 0.1;

  json to_json() const {
    return json{{"d_model", d_model},       {"heads", heads},
                {"layers", layers},         {"ff", ff},
                {"static_emb", static_emb}, {"head_hidden", head_hidden},
                {"cross_layers", cross_layers}, {"dropout", dropout}};
  }
  static TransformerConfig from_json(const json& j) {
    TransformerConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.heads = j.at("heads").get<int>();
    c.layers = j.at("layers").get<int>();
    c.ff = j.at("ff").get<int>();
    c.static_emb = j.at("static_emb").get<int>();
    c.head_hidden = j.at("head_hidden").get<std::vector<int>>();
    c.cross_layers = j.at("cross_layers").get<int>();
    c.dropout = j.at("dropout").get<double>();
    return c;
  }
};

template <typename T>
class TransformerModel : public DeepModel<T> {
 public:
  TransformerModel(const DataDims& dims, TransformerConfig config, std::uint64_t seed)
      : config_(std::move(config)) {
    this->dims_ = dims;
    require(dims.seq_len > 0 && dims.cate_vocab > 0 && dims.brand_vocab > 0,
            "transformer requires sequence metadata");
    require(config_.d_model % config_.heads == 0,
            "transformer: d_model must be divisible by heads");
    std::mt19937_64 rng(seed);
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto L = static_cast<std::size_t>(dims.seq_len);
    const auto e = static_cast<std::size_t>(config_.static_emb);

    this->params_.add("seq_cate_emb",
                      init_normal<T>({static_cast<std::size_t>(dims.cate_vocab), d},
                                     0.01, rng),
                      true, 0);
    this->params_.add("seq_brand_emb",
                      init_normal<T>({static_cast<std::size_t>(dims.brand_vocab), d},
                                     0.01, rng),
                      true, 0);
    for (const char* name : {"seq_cate_emb", "seq_brand_emb"}) {
      auto& p = this->params_.by_name(name);
      for (std::size_t k = 0; k < d; ++k) p.value.at(0, k) = T(0);
    }
    this->params_.add("pe", init_normal<T>({L, d}, 0.01, rng));

    for (int l = 0; l < config_.layers; ++l) {
      const std::string pfx = "t" + std::to_string(l) + "_";
      this->params_.add(pfx + "ln1_g", init_ones<T>({d}));
      this->params_.add(pfx + "ln1_b", init_zeros<T>({d}));
      for (const char* proj : {"q", "k", "v", "o"}) {
        this->params_.add(pfx + "w" + proj, init_xavier<T>(d, d, rng));
        this->params_.add(pfx + "b" + proj, init_zeros<T>({d}));
      }
      this->params_.add(pfx + "ln2_g", init_ones<T>({d}));
      this->params_.add(pfx + "ln2_b", init_zeros<T>({d}));
      this->params_.add(pfx + "ff1_w",
                        init_xavier<T>(d, static_cast<std::size_t>(config_.ff), rng));
      this->params_.add(pfx + "ff1_b", init_zeros<T>({static_cast<std::size_t>(config_.ff)}));
      this->params_.add(pfx + "ff2_w",
                        init_xavier<T>(static_cast<std::size_t>(config_.ff), d, rng));
      this->params_.add(pfx + "ff2_b", init_zeros<T>({d}));
    }
    this->params_.add("lnf_g", init_ones<T>({d}));
    this->params_.add("lnf_b", init_zeros<T>({d}));

    for (std::size_t i = 0; i < dims.vocab_sizes.size(); ++i) {
      this->params_.add("emb_" + std::to_string(i),
                        init_normal<T>({static_cast<std::size_t>(dims.vocab_sizes[i]), e},
                                       0.01, rng));
    }
    if (dims.n_num > 0) {
      this->params_.add("num_w", init_xavier<T>(dims.n_num, e, rng));
      this->params_.add("num_b", init_zeros<T>({e}));
    }
    const std::size_t dx = dims.vocab_sizes.size() * e + (dims.n_num > 0 ? e : 0);
    static_width_ = dx;
    for (int c = 0; c < config_.cross_layers; ++c) {
      this->params_.add("cross" + std::to_string(c) + "_w",
                        init_xavier<T>(dx, dx, rng));
      this->params_.add("cross" + std::to_string(c) + "_b", init_zeros<T>({dx}));
    }

    std::size_t width = dx + d;
    for (std::size_t l = 0; l < config_.head_hidden.size(); ++l) {
      const auto h = static_cast<std::size_t>(config_.head_hidden[l]);
      this->params_.add("head" + std::to_string(l) + "_w", init_xavier<T>(width, h, rng));
      this->params_.add("head" + std::to_string(l) + "_b", init_zeros<T>({h}));
      width = h;
    }
    this->params_.add("out_w", init_xavier<T>(width, 1, rng));
    this->params_.add("out_b", init_zeros<T>({1}));
  }

  typename Graph<T>::Id build_probs(Graph<T>& g, const MiniBatch<T>& mb,
                                    RunMode mode) override {
    require(mb.seq_len == this->dims_.seq_len,
            "transformer: minibatch sequence length mismatch");
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto L = static_cast<std::size_t>(this->dims_.seq_len);
    auto P = [&](const std::string& name) {
      return g.param(&this->params_.by_name(name));
    };

    // Sequence stream.
    auto ce = g.embedding(&this->params_.by_name("seq_cate_emb"), mb.seq_cate,
                          {mb.n, L, d});
    auto be = g.embedding(&this->params_.by_name("seq_brand_emb"), mb.seq_brand,
                          {mb.n, L, d});
    auto h = g.add(ce, be);
    h = g.add_positional(h, P("pe"));
    for (int l = 0; l < config_.layers; ++l) {
      const std::string pfx = "t" + std::to_string(l) + "_";
      auto a = g.layer_norm(h, P(pfx + "ln1_g"), P(pfx + "ln1_b"));
      auto q = g.linear(a, P(pfx + "wq"), P(pfx + "bq"));
      auto k = g.linear(a, P(pfx + "wk"), P(pfx + "bk"));
      auto v = g.linear(a, P(pfx + "wv"), P(pfx + "bv"));
      auto att = g.multi_head_core(q, k, v, config_.heads, mb.seq_mask);
      att = g.linear(att, P(pfx + "wo"), P(pfx + "bo"));
      att = g.dropout(att, config_.dropout, mode);
      h = g.add(h, att);
      auto f = g.layer_norm(h, P(pfx + "ln2_g"), P(pfx + "ln2_b"));
      f = g.linear(f, P(pfx + "ff1_w"), P(pfx + "ff1_b"));
      f = g.gelu(f);
      f = g.linear(f, P(pfx + "ff2_w"), P(pfx + "ff2_b"));
      f = g.dropout(f, config_.dropout, mode);
      h = g.add(h, f);
    }
    h = g.layer_norm(h, P("lnf_g"), P("lnf_b"));
    auto s = g.masked_mean(h, mb.seq_mask);

    // Static stream with cross layers.
    const auto e = static_cast<std::size_t>(config_.static_emb);
    std::vector<typename Graph<T>::Id> parts;
    for (std::size_t i = 0; i < mb.cat_cols.size(); ++i) {
      parts.push_back(g.embedding(&this->params_.by_name("emb_" + std::to_string(i)),
                                  mb.cat_cols[i], {mb.n, e}));
    }
    if (this->dims_.n_num > 0) {
      auto nums = g.input(mb.nums);
      parts.push_back(g.linear(nums, P("num_w"), P("num_b")));
    }
    auto x0 = g.concat_cols(parts);
    auto xl = x0;
    for (int c = 0; c < config_.cross_layers; ++c) {
      xl = cross_layer(g, x0, xl, P("cross" + std::to_string(c) + "_w"),
                       P("cross" + std::to_string(c) + "_b"));
    }

    auto z = g.concat_cols({xl, s});
    for (std::size_t l = 0; l < config_.head_hidden.size(); ++l) {
      z = g.linear(z, P("head" + std::to_string(l) + "_w"),
                   P("head" + std::to_string(l) + "_b"));
      z = g.gelu(z);
      z = g.dropout(z, config_.dropout, mode);
    }
    auto logit = g.linear(z, P("out_w"), P("out_b"));
    return g.sigmoid(logit);
  }

  std::string family() const override { return "transformer"; }
  bool needs_sequences() const override { return true; }

  std::size_t expected_parameter_count() const override {
    const auto d = static_cast<std::size_t>(config_.d_model);
    const auto L = static_cast<std::size_t>(this->dims_.seq_len);
    const auto ff = static_cast<std::size_t>(config_.ff);
    const auto e = static_cast<std::size_t>(config_.static_emb);
    std::size_t n = 0;
    n += static_cast<std::size_t>(this->dims_.cate_vocab) * d;
    n += static_cast<std::size_t>(this->dims_.brand_vocab) * d;
    n += L * d;  // positional embeddings
    n += static_cast<std::size_t>(config_.layers) *
         (2 * d + 2 * d        // two layer norms
          + 4 * (d * d + d)    // q, k, v, o projections
          + d * ff + ff + ff * d + d);
    n += 2 * d;  // final layer norm
    for (int v : this->dims_.vocab_sizes) n += static_cast<std::size_t>(v) * e;
    if (this->dims_.n_num > 0) n += this->dims_.n_num * e + e;
    const std::size_t dx = this->dims_.vocab_sizes.size() * e +
                           (this->dims_.n_num > 0 ? e : 0);
    n += static_cast<std::size_t>(config_.cross_layers) * (dx * dx + dx);
    std::size_t width = dx + d;
    for (int hsz : config_.head_hidden) {
      n += width * static_cast<std::size_t>(hsz) + static_cast<std::size_t>(hsz);
      width = static_cast<std::size_t>(hsz);
    }
    n += width + 1;
    return n;
  }

  json hyper_json() const override { return config_.to_json(); }

  const TransformerConfig& config() const { return config_; }

 private:
  TransformerConfig config_;
  std::size_t static_width_ = 0;
};

}  // namespace ctrkit
