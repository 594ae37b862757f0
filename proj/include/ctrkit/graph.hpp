#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/params.hpp"
#include "ctrkit/tensor.hpp"

namespace ctrkit {

enum class RunMode { kTrain, kEval };

// Running statistics owned by a model's batch-norm layer.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  double momentum = 0.9;

  explicit BatchNormState(std::size_t width = 0, double mom = 0.9)
      : running_mean({width == 0 ? 1 : width}),
        running_var({width == 0 ? 1 : width}),
        momentum(mom) {
    running_var.fill(T(1));
  }
};

// Reverse-mode tape over dense tensors. One graph instance per forward pass,
// confined to a single thread. Parameters live outside the graph; their
// gradients accumulate into Parameter::grad during backward().
template <typename T>
class Graph {
 public:
  using Id = int;

  static constexpr double kMaskNegative = -1e9;
  static constexpr double kNormEps = 1e-5;
  static constexpr double kPoolEps = 1e-8;
  static constexpr double kProbClip = 1e-7;

  // Seeds the dropout stream; rebuild with the same seed to reproduce masks.
  void seed_dropout(std::uint64_t seed) {
    dropout_seed_ = seed;
    dropout_counter_ = 0;
  }

  // ---- leaves ----

  Id input(Tensor<T> value) {
    return push(std::move(value), {}, nullptr, /*requires=*/false);
  }

  Id param(Parameter<T>* p) {
    Node n;
    n.bound = p;
    n.needs_grad = true;
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  // ---- accessors ----

  const Tensor<T>& value(Id id) const {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    return n.bound ? n.bound->value : n.value;
  }

  Tensor<T>& grad(Id id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.bound) return n.bound->grad;
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(value(id).shape());
    return n.grad;
  }

  bool requires_grad(Id id) const {
    return nodes_[static_cast<std::size_t>(id)].needs_grad;
  }

  // ---- elementwise & shape ops ----

  Id add(Id a, Id b) {
    require(value(a).shape() == value(b).shape(), "add: shape mismatch");
    Tensor<T> out = value(a);
    const Tensor<T>& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push(std::move(out), {a, b}, [this, a, b](Id self) {
      const Tensor<T>& g = grad(self);
      if (requires_grad(a)) {
        Tensor<T>& ga = grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }

  Id mul(Id a, Id b) {
    require(value(a).shape() == value(b).shape(), "mul: shape mismatch");
    Tensor<T> out = value(a);
    const Tensor<T>& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(std::move(out), {a, b}, [this, a, b](Id self) {
      const Tensor<T>& g = grad(self);
      const Tensor<T>& va = value(a);
      const Tensor<T>& vb2 = value(b);
      if (requires_grad(a)) {
        Tensor<T>& ga = grad(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb2[i];
      }
      if (requires_grad(b)) {
        Tensor<T>& gb = grad(b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
      }
    });
  }

  // h: [n, L, d], pe: [L, d] broadcast over the batch dimension.
  Id add_positional(Id h, Id pe) {
    const Tensor<T>& vh = value(h);
    const Tensor<T>& vpe = value(pe);
    require(vh.rank() == 3 && vpe.rank() == 2 && vh.dim(1) == vpe.dim(0) &&
                vh.dim(2) == vpe.dim(1),
            "add_positional: shape mismatch");
    Tensor<T> out = vh;
    const std::size_t n = vh.dim(0), L = vh.dim(1), d = vh.dim(2);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t i = 0; i < L; ++i) {
        T* orow = out.data() + (r * L + i) * d;
        const T* prow = vpe.data() + i * d;
        for (std::size_t k = 0; k < d; ++k) orow[k] += prow[k];
      }
    }
    return push(std::move(out), {h, pe}, [this, h, pe, n, L, d](Id self) {
      const Tensor<T>& g = grad(self);
      if (requires_grad(h)) {
        Tensor<T>& gh = grad(h);
        for (std::size_t i = 0; i < g.size(); ++i) gh[i] += g[i];
      }
      if (requires_grad(pe)) {
        Tensor<T>& gp = grad(pe);
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t i = 0; i < L; ++i) {
            const T* grow = g.data() + (r * L + i) * d;
            T* prow = gp.data() + i * d;
            for (std::size_t k = 0; k < d; ++k) prow[k] += grow[k];
          }
        }
      }
    });
  }

  Id concat_cols(const std::vector<Id>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const std::size_t n = value(parts[0]).dim(0);
    std::size_t total = 0;
    for (Id p : parts) {
      require(value(p).rank() == 2 && value(p).dim(0) == n,
              "concat_cols: all inputs must be [n, *]");
      total += value(p).dim(1);
    }
    Tensor<T> out({n, total});
    std::size_t off = 0;
    for (Id p : parts) {
      const Tensor<T>& v = value(p);
      const std::size_t w = v.dim(1);
      for (std::size_t r = 0; r < n; ++r) {
        std::copy(v.data() + r * w, v.data() + (r + 1) * w,
                  out.data() + r * total + off);
      }
      off += w;
    }
    return push(std::move(out), parts,
                [this, parts, n, total](Id self) {
                  const Tensor<T>& g = grad(self);
                  std::size_t off2 = 0;
                  for (Id p : parts) {
                    const std::size_t w = value(p).dim(1);
                    if (requires_grad(p)) {
                      Tensor<T>& gp = grad(p);
                      for (std::size_t r = 0; r < n; ++r) {
                        const T* src = g.data() + r * total + off2;
                        T* dst = gp.data() + r * w;
                        for (std::size_t k = 0; k < w; ++k) dst[k] += src[k];
                      }
                    }
                    off2 += w;
                  }
                });
  }

  // ---- activations ----

  Id relu(Id x) {
    Tensor<T> out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], T(0));
    return push(std::move(out), {x}, [this, x](Id self) {
      if (!requires_grad(x)) return;
      const Tensor<T>& g = grad(self);
      const Tensor<T>& vx = value(x);
      Tensor<T>& gx = grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (vx[i] > T(0)) gx[i] += g[i];
      }
    });
  }

  // tanh approximation with the 0.044715 cubic term.
  Id gelu(Id x) {
    const T c = static_cast<T>(std::sqrt(2.0 / 3.14159265358979323846));
    const T a = static_cast<T>(0.044715);
    Tensor<T> out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const T v = out[i];
      out[i] = T(0.5) * v * (T(1) + std::tanh(c * (v + a * v * v * v)));
    }
    return push(std::move(out), {x}, [this, x, c, a](Id self) {
      if (!requires_grad(x)) return;
      const Tensor<T>& g = grad(self);
      const Tensor<T>& vx = value(x);
      Tensor<T>& gx = grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const T v = vx[i];
        const T u = c * (v + a * v * v * v);
        const T th = std::tanh(u);
        const T sech2 = T(1) - th * th;
        const T d = T(0.5) * (T(1) + th) +
                    T(0.5) * v * sech2 * c * (T(1) + T(3) * a * v * v);
        gx[i] += g[i] * d;
      }
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const T v = out[i];
      out[i] = v >= T(0) ? T(1) / (T(1) + std::exp(-v))
                         : std::exp(v) / (T(1) + std::exp(v));
    }
    return push(std::move(out), {x}, [this, x](Id self) {
      if (!requires_grad(x)) return;
      const Tensor<T>& g = grad(self);
      const Tensor<T>& s = value(self);
      Tensor<T>& gx = grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += g[i] * s[i] * (T(1) - s[i]);
      }
    });
  }

  // Numerically stable softmax over the last dimension.
  Id softmax_rows(Id x) {
    Tensor<T> out = value(x);
    const std::size_t w = out.last_dim();
    const std::size_t rows = out.rows();
    for (std::size_t r = 0; r < rows; ++r) {
      stable_softmax_row(out.data() + r * w, w);
    }
    return push(std::move(out), {x}, [this, x, rows, w](Id self) {
      if (!requires_grad(x)) return;
      const Tensor<T>& g = grad(self);
      const Tensor<T>& y = value(self);
      Tensor<T>& gx = grad(x);
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * w;
        const T* gr = g.data() + r * w;
        T dot = T(0);
        for (std::size_t j = 0; j < w; ++j) dot += gr[j] * yr[j];
        T* gxr = gx.data() + r * w;
        for (std::size_t j = 0; j < w; ++j) gxr[j] += yr[j] * (gr[j] - dot);
      }
    });
  }

  // ---- linear algebra ----

  Id matmul(Id a, Id b) {
    const Tensor<T>& va = value(a);
    const Tensor<T>& vb = value(b);
    require(va.rank() == 2 && vb.rank() == 2 && va.dim(1) == vb.dim(0),
            "matmul: shape mismatch");
    const std::size_t m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<T> out({m, n});
    mm_nn(va.data(), vb.data(), out.data(), m, k, n);
    return push(std::move(out), {a, b}, [this, a, b, m, k, n](Id self) {
      const Tensor<T>& g = grad(self);
      if (requires_grad(a)) {
        mm_nt(g.data(), value(b).data(), grad(a).data(), m, n, k);
      }
      if (requires_grad(b)) {
        mm_tn(value(a).data(), g.data(), grad(b).data(), k, m, n);
      }
    });
  }

  // x: [n, d_in] or [b, l, d_in]; W: [d_in, d_out]; b: [d_out].
  Id linear(Id x, Id w, Id b) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vw = value(w);
    const Tensor<T>& vb = value(b);
    require(vw.rank() == 2 && vx.last_dim() == vw.dim(0),
            "linear: weight shape mismatch");
    require(vb.rank() == 1 && vb.dim(0) == vw.dim(1),
            "linear: bias shape mismatch");
    const std::size_t m = vx.rows(), din = vw.dim(0), dout = vw.dim(1);
    std::vector<std::size_t> out_shape = vx.shape();
    out_shape.back() = dout;
    Tensor<T> out(out_shape);
    mm_nn(vx.data(), vw.data(), out.data(), m, din, dout);
    for (std::size_t r = 0; r < m; ++r) {
      T* row = out.data() + r * dout;
      for (std::size_t j = 0; j < dout; ++j) row[j] += vb[j];
    }
    return push(std::move(out), {x, w, b},
                [this, x, w, b, m, din, dout](Id self) {
                  const Tensor<T>& g = grad(self);
                  if (requires_grad(x)) {
                    mm_nt(g.data(), value(w).data(), grad(x).data(), m, dout, din);
                  }
                  if (requires_grad(w)) {
                    mm_tn(value(x).data(), g.data(), grad(w).data(), din, m, dout);
                  }
                  if (requires_grad(b)) {
                    Tensor<T>& gb = grad(b);
                    for (std::size_t r = 0; r < m; ++r) {
                      const T* row = g.data() + r * dout;
                      for (std::size_t j = 0; j < dout; ++j) gb[j] += row[j];
                    }
                  }
                });
  }

  // Bias-free variant for layers feeding batch norm: a bias there shifts
  // every row of a column equally, which the normalization removes, leaving
  // a parameter with an exactly-zero gradient.
  Id linear_nobias(Id x, Id w) {
    const Tensor<T>& vx = value(x);
    const Tensor<T>& vw = value(w);
    require(vw.rank() == 2 && vx.last_dim() == vw.dim(0),
            "linear_nobias: weight shape mismatch");
    const std::size_t m = vx.rows(), din = vw.dim(0), dout = vw.dim(1);
    std::vector<std::size_t> out_shape = vx.shape();
    out_shape.back() = dout;
    Tensor<T> out(out_shape);
    mm_nn(vx.data(), vw.data(), out.data(), m, din, dout);
    return push(std::move(out), {x, w}, [this, x, w, m, din, dout](Id self) {
      const Tensor<T>& g = grad(self);
      if (requires_grad(x)) {
        mm_nt(g.data(), value(w).data(), grad(x).data(), m, dout, din);
      }
      if (requires_grad(w)) {
        mm_tn(value(x).data(), g.data(), grad(w).data(), din, m, dout);
      }
    });
  }

  // ---- embeddings ----

  // Row gather; backward scatter-adds, skipping the frozen padding row.
  Id embedding(Parameter<T>* table, std::vector<std::int32_t> indices,
               std::vector<std::size_t> out_shape) {
    const std::size_t v = table->value.dim(0);
    const std::size_t d = table->value.dim(1);
    require(Tensor<T>::numel_of(out_shape) == indices.size() * d,
            "embedding: output shape mismatch");
    for (std::int32_t idx : indices) {
      require(idx >= 0 && static_cast<std::size_t>(idx) < v,
              "embedding index out of range: " + std::to_string(idx));
    }
    Tensor<T> out(out_shape);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      const T* src = table->value.data() + static_cast<std::size_t>(indices[i]) * d;
      std::copy(src, src + d, out.data() + i * d);
    }
    touched_.push_back(table);
    return push(std::move(out), {},
                [this, table, indices = std::move(indices), d](Id self) {
                  const Tensor<T>& g = grad(self);
                  for (std::size_t i = 0; i < indices.size(); ++i) {
                    const auto row = static_cast<std::size_t>(indices[i]);
                    if (table->frozen_row >= 0 &&
                        row == static_cast<std::size_t>(table->frozen_row)) {
                      continue;
                    }
                    T* dst = table->grad.data() + row * d;
                    const T* src = g.data() + i * d;
                    for (std::size_t k = 0; k < d; ++k) dst[k] += src[k];
                  }
                },
                /*requires=*/true);
  }

  // Mask-aware mean of embedding rows. Contributions are accumulated in
  // ascending index order, so any permutation of the valid events yields a
  // bit-identical result; this realizes the order-free pooling contract.
  Id embedding_bag_mean(Parameter<T>* table,
                        const std::vector<std::int32_t>& indices,
                        const std::vector<std::uint8_t>& mask, std::size_t n,
                        std::size_t L) {
    require(indices.size() == n * L && mask.size() == n * L,
            "embedding_bag_mean: index/mask shape mismatch");
    const std::size_t v = table->value.dim(0);
    const std::size_t d = table->value.dim(1);
    Tensor<T> out({n, d});
    // Sorted valid indices per row, shared with the backward pass.
    auto runs = std::make_shared<std::vector<std::vector<std::int32_t>>>(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto& sorted = (*runs)[r];
      for (std::size_t i = 0; i < L; ++i) {
        if (mask[r * L + i]) {
          const std::int32_t idx = indices[r * L + i];
          require(idx >= 0 && static_cast<std::size_t>(idx) < v,
                  "embedding_bag_mean: index out of range");
          sorted.push_back(idx);
        }
      }
      std::sort(sorted.begin(), sorted.end());
      if (sorted.empty()) continue;  // zero vector for empty sequences
      T* orow = out.data() + r * d;
      const T inv = T(1) / static_cast<T>(sorted.size());
      std::size_t i = 0;
      while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        const T w = static_cast<T>(j - i);
        const T* trow =
            table->value.data() + static_cast<std::size_t>(sorted[i]) * d;
        for (std::size_t k = 0; k < d; ++k) orow[k] += w * trow[k];
        i = j;
      }
      for (std::size_t k = 0; k < d; ++k) orow[k] *= inv;
    }
    touched_.push_back(table);
    return push(std::move(out), {},
                [this, table, runs, n, d](Id self) {
                  const Tensor<T>& g = grad(self);
                  for (std::size_t r = 0; r < n; ++r) {
                    const auto& sorted = (*runs)[r];
                    if (sorted.empty()) continue;
                    const T inv = T(1) / static_cast<T>(sorted.size());
                    const T* grow = g.data() + r * d;
                    std::size_t i = 0;
                    while (i < sorted.size()) {
                      std::size_t j = i;
                      while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
                      const auto row = static_cast<std::size_t>(sorted[i]);
                      if (!(table->frozen_row >= 0 &&
                            row == static_cast<std::size_t>(table->frozen_row))) {
                        const T w = static_cast<T>(j - i) * inv;
                        T* dst = table->grad.data() + row * d;
                        for (std::size_t k = 0; k < d; ++k) dst[k] += w * grow[k];
                      }
                      i = j;
                    }
                  }
                },
                /*requires=*/true);
  }

  // ---- normalization ----

  Id layer_norm(Id x, Id gamma, Id beta) {
    const Tensor<T>& vx = value(x);
    const std::size_t w = vx.last_dim();
    require(value(gamma).size() == w && value(beta).size() == w,
            "layer_norm: scale shape mismatch");
    const std::size_t rows = vx.rows();
    Tensor<T> out(vx.shape());
    auto xhat = std::make_shared<Tensor<T>>(vx.shape());
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<std::size_t>{rows});
    const Tensor<T>& g = value(gamma);
    const Tensor<T>& b = value(beta);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* xr = vx.data() + r * w;
      T mean = T(0);
      for (std::size_t j = 0; j < w; ++j) mean += xr[j];
      mean /= static_cast<T>(w);
      T var = T(0);
      for (std::size_t j = 0; j < w; ++j) var += (xr[j] - mean) * (xr[j] - mean);
      var /= static_cast<T>(w);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
      (*inv_std)[r] = inv;
      T* hr = xhat->data() + r * w;
      T* orow = out.data() + r * w;
      for (std::size_t j = 0; j < w; ++j) {
        hr[j] = (xr[j] - mean) * inv;
        orow[j] = g[j] * hr[j] + b[j];
      }
    }
    return push(std::move(out), {x, gamma, beta},
                [this, x, gamma, beta, xhat, inv_std, rows, w](Id self) {
                  const Tensor<T>& go = grad(self);
                  const Tensor<T>& gm = value(gamma);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const T* grow = go.data() + r * w;
                    const T* hr = xhat->data() + r * w;
                    if (requires_grad(gamma)) {
                      Tensor<T>& gg = grad(gamma);
                      for (std::size_t j = 0; j < w; ++j) gg[j] += grow[j] * hr[j];
                    }
                    if (requires_grad(beta)) {
                      Tensor<T>& gb = grad(beta);
                      for (std::size_t j = 0; j < w; ++j) gb[j] += grow[j];
                    }
                    if (requires_grad(x)) {
                      T mean_dh = T(0), mean_dh_h = T(0);
                      for (std::size_t j = 0; j < w; ++j) {
                        const T dh = grow[j] * gm[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                      }
                      mean_dh /= static_cast<T>(w);
                      mean_dh_h /= static_cast<T>(w);
                      Tensor<T>& gx = grad(x);
                      T* gxr = gx.data() + r * w;
                      const T inv = (*inv_std)[r];
                      for (std::size_t j = 0; j < w; ++j) {
                        const T dh = grow[j] * gm[j];
                        gxr[j] += inv * (dh - mean_dh - hr[j] * mean_dh_h);
                      }
                    }
                  }
                });
  }

  // x: [n, d]. Train mode normalizes by batch statistics and updates the
  // running stats; eval mode uses the running stats.
  Id batch_norm(Id x, Id gamma, Id beta, BatchNormState<T>* state, RunMode mode) {
    const Tensor<T>& vx = value(x);
    require(vx.rank() == 2, "batch_norm: input must be [n, d]");
    const std::size_t n = vx.dim(0), d = vx.dim(1);
    require(state->running_mean.size() == d, "batch_norm: state width mismatch");
    if (mode == RunMode::kTrain) {
      require(n >= 2, "batch_norm: train mode needs a batch of >= 2");
    }
    const Tensor<T>& g = value(gamma);
    const Tensor<T>& b = value(beta);
    Tensor<T> out({n, d});
    auto xhat = std::make_shared<Tensor<T>>(std::vector<std::size_t>{n, d});
    auto inv_std = std::make_shared<Tensor<T>>(std::vector<std::size_t>{d});

    if (mode == RunMode::kTrain) {
      for (std::size_t j = 0; j < d; ++j) {
        T mean = T(0);
        for (std::size_t r = 0; r < n; ++r) mean += vx.at(r, j);
        mean /= static_cast<T>(n);
        T var = T(0);
        for (std::size_t r = 0; r < n; ++r) {
          var += (vx.at(r, j) - mean) * (vx.at(r, j) - mean);
        }
        var /= static_cast<T>(n);
        const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEps));
        (*inv_std)[j] = inv;
        for (std::size_t r = 0; r < n; ++r) {
          const T h = (vx.at(r, j) - mean) * inv;
          xhat->at(r, j) = h;
          out.at(r, j) = g[j] * h + b[j];
        }
        const T mom = static_cast<T>(state->momentum);
        state->running_mean[j] = mom * state->running_mean[j] + (T(1) - mom) * mean;
        state->running_var[j] = mom * state->running_var[j] + (T(1) - mom) * var;
      }
      return push(std::move(out), {x, gamma, beta},
                  [this, x, gamma, beta, xhat, inv_std, n, d](Id self) {
                    const Tensor<T>& go = grad(self);
                    const Tensor<T>& gm = value(gamma);
                    for (std::size_t j = 0; j < d; ++j) {
                      T sum_dh = T(0), sum_dh_h = T(0), sum_g = T(0);
                      for (std::size_t r = 0; r < n; ++r) {
                        const T dh = go.at(r, j) * gm[j];
                        sum_dh += dh;
                        sum_dh_h += dh * xhat->at(r, j);
                        sum_g += go.at(r, j);
                      }
                      if (requires_grad(gamma)) {
                        T acc = T(0);
                        for (std::size_t r = 0; r < n; ++r) {
                          acc += go.at(r, j) * xhat->at(r, j);
                        }
                        grad(gamma)[j] += acc;
                      }
                      if (requires_grad(beta)) grad(beta)[j] += sum_g;
                      if (requires_grad(x)) {
                        Tensor<T>& gx = grad(x);
                        const T inv = (*inv_std)[j];
                        const T mean_dh = sum_dh / static_cast<T>(n);
                        const T mean_dh_h = sum_dh_h / static_cast<T>(n);
                        for (std::size_t r = 0; r < n; ++r) {
                          const T dh = go.at(r, j) * gm[j];
                          gx.at(r, j) +=
                              inv * (dh - mean_dh - xhat->at(r, j) * mean_dh_h);
                        }
                      }
                    }
                  });
    }

    // Eval: running statistics are constants.
    for (std::size_t j = 0; j < d; ++j) {
      (*inv_std)[j] =
          T(1) / std::sqrt(state->running_var[j] + static_cast<T>(kNormEps));
    }
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t j = 0; j < d; ++j) {
        const T h = (vx.at(r, j) - state->running_mean[j]) * (*inv_std)[j];
        xhat->at(r, j) = h;
        out.at(r, j) = g[j] * h + b[j];
      }
    }
    return push(std::move(out), {x, gamma, beta},
                [this, x, gamma, beta, xhat, inv_std, n, d](Id self) {
                  const Tensor<T>& go = grad(self);
                  const Tensor<T>& gm = value(gamma);
                  for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t j = 0; j < d; ++j) {
                      if (requires_grad(gamma)) {
                        grad(gamma)[j] += go.at(r, j) * xhat->at(r, j);
                      }
                      if (requires_grad(beta)) grad(beta)[j] += go.at(r, j);
                      if (requires_grad(x)) {
                        grad(x).at(r, j) += go.at(r, j) * gm[j] * (*inv_std)[j];
                      }
                    }
                  }
                });
  }

  // ---- regularization ----

  // Train mode zeroes with probability `rate` and scales survivors by
  // 1/(1-rate); eval mode is the identity. Masks come from the graph's
  // seeded dropout stream and are reproducible.
  Id dropout(Id x, double rate, RunMode mode) {
    require(rate >= 0.0 && rate < 1.0, "dropout rate must be in [0, 1)");
    if (mode == RunMode::kEval || rate == 0.0) {
      Tensor<T> out = value(x);
      return push(std::move(out), {x}, [this, x](Id self) {
        if (!requires_grad(x)) return;
        const Tensor<T>& g = grad(self);
        Tensor<T>& gx = grad(x);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      });
    }
    std::mt19937_64 rng(hash_combine(dropout_seed_, dropout_counter_++));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    auto keep = std::make_shared<std::vector<std::uint8_t>>(value(x).size());
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const bool k = unif(rng) >= rate;
      (*keep)[i] = k ? 1 : 0;
      out[i] = k ? out[i] * scale : T(0);
    }
    return push(std::move(out), {x}, [this, x, keep, scale](Id self) {
      if (!requires_grad(x)) return;
      const Tensor<T>& g = grad(self);
      Tensor<T>& gx = grad(x);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if ((*keep)[i]) gx[i] += g[i] * scale;
      }
    });
  }

  // ---- attention ----

  // Q, K: [n, L, d_k]; V: [n, L, d_v]; mask: [n, L] over key positions.
  // Masked keys receive -1e9 before softmax. A fully masked sequence is
  // bypassed: its output rows are zero.
  Id scaled_dot_attention(Id q, Id k, Id v,
                          const std::vector<std::uint8_t>& mask) {
    return attention_impl(q, k, v, mask, 1);
  }

  // Q, K, V: [n, L, d_model] already projected; heads parallel attentions on
  // contiguous column blocks, concatenated back into [n, L, d_model].
  // The output projection W^O is applied by the caller.
  Id multi_head_core(Id q, Id k, Id v, int heads,
                     const std::vector<std::uint8_t>& mask) {
    const Tensor<T>& vq = value(q);
    require(vq.dim(2) % static_cast<std::size_t>(heads) == 0,
            "multi_head: d_model must be divisible by heads");
    return attention_impl(q, k, v, mask, heads);
  }

  // ---- pooling ----

  // s_r = sum_i H[r,i,:] * m_i / (sum_i m_i + eps)
  Id masked_mean(Id h, const std::vector<std::uint8_t>& mask,
                 double eps = kPoolEps) {
    const Tensor<T>& vh = value(h);
    require(vh.rank() == 3, "masked_mean: input must be [n, L, d]");
    const std::size_t n = vh.dim(0), L = vh.dim(1), d = vh.dim(2);
    require(mask.size() == n * L, "masked_mean: mask shape mismatch");
    Tensor<T> out({n, d});
    auto denom = std::make_shared<std::vector<T>>(n);
    for (std::size_t r = 0; r < n; ++r) {
      T count = T(0);
      for (std::size_t i = 0; i < L; ++i) count += static_cast<T>(mask[r * L + i]);
      (*denom)[r] = count + static_cast<T>(eps);
      T* orow = out.data() + r * d;
      for (std::size_t i = 0; i < L; ++i) {
        if (!mask[r * L + i]) continue;
        const T* hrow = vh.data() + (r * L + i) * d;
        for (std::size_t j = 0; j < d; ++j) orow[j] += hrow[j];
      }
      for (std::size_t j = 0; j < d; ++j) orow[j] /= (*denom)[r];
    }
    return push(std::move(out), {h},
                [this, h, mask, denom, n, L, d](Id self) {
                  if (!requires_grad(h)) return;
                  const Tensor<T>& g = grad(self);
                  Tensor<T>& gh = grad(h);
                  for (std::size_t r = 0; r < n; ++r) {
                    const T inv = T(1) / (*denom)[r];
                    const T* grow = g.data() + r * d;
                    for (std::size_t i = 0; i < L; ++i) {
                      if (!mask[r * L + i]) continue;
                      T* hrow = gh.data() + (r * L + i) * d;
                      for (std::size_t j = 0; j < d; ++j) hrow[j] += grow[j] * inv;
                    }
                  }
                });
  }

  // ---- loss ----

  // Weighted binary cross entropy over predictions in (0,1); predictions are
  // clipped to [1e-7, 1-1e-7]. Scalar output.
  Id weighted_bce(Id preds, const std::vector<int>& labels, double w_plus,
                  double w_minus) {
    const Tensor<T>& p = value(preds);
    require(p.size() == labels.size(), "weighted_bce: label count mismatch");
    require(!labels.empty(), "weighted_bce: empty batch");
    const std::size_t n = labels.size();
    const T lo = static_cast<T>(kProbClip), hi = T(1) - static_cast<T>(kProbClip);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double pi = std::clamp(static_cast<double>(p[i]),
                                   static_cast<double>(lo), static_cast<double>(hi));
      acc += labels[i] ? w_plus * std::log(pi) : w_minus * std::log(1.0 - pi);
    }
    Tensor<T> out({1});
    out[0] = static_cast<T>(-acc / static_cast<double>(n));
    return push(std::move(out), {preds},
                [this, preds, labels, w_plus, w_minus, n, lo, hi](Id self) {
                  if (!requires_grad(preds)) return;
                  const T gl = grad(self)[0];
                  const Tensor<T>& p2 = value(preds);
                  Tensor<T>& gp = grad(preds);
                  const T invn = T(1) / static_cast<T>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    if (p2[i] < lo || p2[i] > hi) continue;  // clipped: flat
                    const T d = labels[i]
                                    ? -static_cast<T>(w_plus) / p2[i]
                                    : static_cast<T>(w_minus) / (T(1) - p2[i]);
                    gp[i] += gl * invn * d;
                  }
                });
  }

  // Contracts any tensor to a scalar with fixed coefficients; the finite
  // difference harness uses this to probe layers with non-scalar outputs.
  Id weighted_sum(Id x, const std::vector<T>& coeffs) {
    const Tensor<T>& vx = value(x);
    require(coeffs.size() == vx.size(), "weighted_sum: coefficient count mismatch");
    Tensor<T> out({1});
    T acc = T(0);
    for (std::size_t i = 0; i < vx.size(); ++i) acc += vx[i] * coeffs[i];
    out[0] = acc;
    return push(std::move(out), {x}, [this, x, coeffs](Id self) {
      if (!requires_grad(x)) return;
      const T g = grad(self)[0];
      Tensor<T>& gx = grad(x);
      for (std::size_t i = 0; i < coeffs.size(); ++i) gx[i] += g * coeffs[i];
    });
  }

  // ---- backward ----

  void backward(Id loss) {
    require(value(loss).size() == 1, "backward: loss must be scalar");
    grad(loss)[0] = T(1);
    for (Id id = static_cast<Id>(nodes_.size()) - 1; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (!n.needs_grad || !n.backward) continue;
      if (n.grad.empty() && !n.bound) continue;  // never touched by descendants
      n.backward(id);
    }
  }

  const std::vector<Parameter<T>*>& touched_tables() const { return touched_; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    Parameter<T>* bound = nullptr;
    std::function<void(Id)> backward;
    bool needs_grad = false;
  };

  Id push(Tensor<T> value, const std::vector<Id>& parents,
          std::function<void(Id)> back, std::optional<bool> requires_override =
                                              std::nullopt) {
    Node n;
    n.value = std::move(value);
    bool req = false;
    for (Id p : parents) req = req || requires_grad(p);
    n.needs_grad = requires_override.value_or(req);
    if (n.needs_grad) n.backward = std::move(back);
#ifndef NDEBUG
    assert(n.value.all_finite() && "non-finite values in forward pass");
#endif
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  static void stable_softmax_row(T* row, std::size_t w) {
    T mx = row[0];
    for (std::size_t j = 1; j < w; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (std::size_t j = 0; j < w; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < w; ++j) row[j] /= sum;
  }

  Id attention_impl(Id q, Id k, Id v, const std::vector<std::uint8_t>& mask,
                    int heads) {
    const Tensor<T>& vq = value(q);
    const Tensor<T>& vk = value(k);
    const Tensor<T>& vv = value(v);
    require(vq.rank() == 3 && vk.rank() == 3 && vv.rank() == 3,
            "attention: inputs must be [n, L, d]");
    const std::size_t n = vq.dim(0), L = vq.dim(1);
    require(vk.dim(0) == n && vk.dim(1) == L && vv.dim(0) == n && vv.dim(1) == L,
            "attention: batch/length mismatch");
    require(vq.dim(2) == vk.dim(2), "attention: query/key width mismatch");
    require(mask.size() == n * L, "attention: mask shape mismatch");
    const auto h = static_cast<std::size_t>(heads);
    require(vq.dim(2) % h == 0 && vv.dim(2) % h == 0,
            "attention: width not divisible by heads");
    const std::size_t dk = vq.dim(2) / h;
    const std::size_t dv = vv.dim(2) / h;
    const std::size_t dq_full = vq.dim(2), dv_full = vv.dim(2);
    const T scale = T(1) / std::sqrt(static_cast<T>(dk));

    Tensor<T> out({n, L, dv_full});
    // Attention probabilities per (row, head), kept for the backward pass.
    auto probs = std::make_shared<Tensor<T>>(std::vector<std::size_t>{n * h, L, L});
    auto any_valid = std::make_shared<std::vector<std::uint8_t>>(n, 0);

    for (std::size_t r = 0; r < n; ++r) {
      bool valid = false;
      for (std::size_t i = 0; i < L; ++i) valid = valid || (mask[r * L + i] != 0);
      (*any_valid)[r] = valid ? 1 : 0;
      if (!valid) continue;  // all-masked: bypass, output stays zero
      for (std::size_t head = 0; head < h; ++head) {
        T* p = probs->data() + (r * h + head) * L * L;
        const T* qb = vq.data() + r * L * dq_full + head * dk;
        const T* kb = vk.data() + r * L * dq_full + head * dk;
        const T* vb = vv.data() + r * L * dv_full + head * dv;
        // scores
        for (std::size_t i = 0; i < L; ++i) {
          const T* qrow = qb + i * dq_full;
          T* prow = p + i * L;
          for (std::size_t j = 0; j < L; ++j) {
            const T* krow = kb + j * dq_full;
            T acc = T(0);
            for (std::size_t t = 0; t < dk; ++t) acc += qrow[t] * krow[t];
            prow[j] = acc * scale;
            if (!mask[r * L + j]) prow[j] += static_cast<T>(kMaskNegative);
          }
          stable_softmax_row(prow, L);
        }
        // output
        T* ob = out.data() + r * L * dv_full + head * dv;
        for (std::size_t i = 0; i < L; ++i) {
          const T* prow = p + i * L;
          T* orow = ob + i * dv_full;
          for (std::size_t j = 0; j < L; ++j) {
            const T pij = prow[j];
            if (pij == T(0)) continue;
            const T* vrow = vb + j * dv_full;
            for (std::size_t t = 0; t < dv; ++t) orow[t] += pij * vrow[t];
          }
        }
      }
    }

    return push(
        std::move(out), {q, k, v},
        [this, q, k, v, mask, probs, any_valid, n, L, h, dk, dv, dq_full,
         dv_full, scale](Id self) {
          const Tensor<T>& go = grad(self);
          const Tensor<T>& vq2 = value(q);
          const Tensor<T>& vk2 = value(k);
          const Tensor<T>& vv2 = value(v);
          const bool need_q = requires_grad(q);
          const bool need_k = requires_grad(k);
          const bool need_v = requires_grad(v);
          std::vector<T> gp(L * L), gs(L * L);
          for (std::size_t r = 0; r < n; ++r) {
            if (!(*any_valid)[r]) continue;
            for (std::size_t head = 0; head < h; ++head) {
              const T* p = probs->data() + (r * h + head) * L * L;
              const T* qb = vq2.data() + r * L * dq_full + head * dk;
              const T* kb = vk2.data() + r * L * dq_full + head * dk;
              const T* vb = vv2.data() + r * L * dv_full + head * dv;
              const T* gob = go.data() + r * L * dv_full + head * dv;
              // gV += P^T * gO
              if (need_v) {
                Tensor<T>& gv = grad(v);
                T* gvb = gv.data() + r * L * dv_full + head * dv;
                for (std::size_t i = 0; i < L; ++i) {
                  const T* prow = p + i * L;
                  const T* grow = gob + i * dv_full;
                  for (std::size_t j = 0; j < L; ++j) {
                    const T pij = prow[j];
                    if (pij == T(0)) continue;
                    T* gvrow = gvb + j * dv_full;
                    for (std::size_t t = 0; t < dv; ++t) gvrow[t] += pij * grow[t];
                  }
                }
              }
              if (!need_q && !need_k) continue;
              // gP = gO * V^T, then softmax backward into gS
              for (std::size_t i = 0; i < L; ++i) {
                const T* grow = gob + i * dv_full;
                for (std::size_t j = 0; j < L; ++j) {
                  const T* vrow = vb + j * dv_full;
                  T acc = T(0);
                  for (std::size_t t = 0; t < dv; ++t) acc += grow[t] * vrow[t];
                  gp[i * L + j] = acc;
                }
              }
              for (std::size_t i = 0; i < L; ++i) {
                const T* prow = p + i * L;
                const T* gprow = gp.data() + i * L;
                T dot = T(0);
                for (std::size_t j = 0; j < L; ++j) dot += gprow[j] * prow[j];
                T* gsrow = gs.data() + i * L;
                for (std::size_t j = 0; j < L; ++j) {
                  gsrow[j] = prow[j] * (gprow[j] - dot);
                }
              }
              // gQ += gS * K * scale;  gK += gS^T * Q * scale
              if (need_q) {
                Tensor<T>& gq = grad(q);
                T* gqb = gq.data() + r * L * dq_full + head * dk;
                for (std::size_t i = 0; i < L; ++i) {
                  const T* gsrow = gs.data() + i * L;
                  T* gqrow = gqb + i * dq_full;
                  for (std::size_t j = 0; j < L; ++j) {
                    const T s = gsrow[j] * scale;
                    if (s == T(0)) continue;
                    const T* krow = kb + j * dq_full;
                    for (std::size_t t = 0; t < dk; ++t) gqrow[t] += s * krow[t];
                  }
                }
              }
              if (need_k) {
                Tensor<T>& gk = grad(k);
                T* gkb = gk.data() + r * L * dq_full + head * dk;
                for (std::size_t i = 0; i < L; ++i) {
                  const T* gsrow = gs.data() + i * L;
                  const T* qrow = qb + i * dq_full;
                  for (std::size_t j = 0; j < L; ++j) {
                    const T s = gsrow[j] * scale;
                    if (s == T(0)) continue;
                    T* gkrow = gkb + j * dq_full;
                    for (std::size_t t = 0; t < dk; ++t) gkrow[t] += s * qrow[t];
                  }
                }
              }
            }
          }
        });
  }

  std::vector<Node> nodes_;
  std::vector<Parameter<T>*> touched_;
  std::uint64_t dropout_seed_ = 0;
  std::uint64_t dropout_counter_ = 0;
};

// DCN-style cross layer as a composite: x_{l+1} = x0 ⊙ (W x_l + b) + x_l.
// Shapes: x0, x_l are [n, d]; W is [d, d]; b is [d].
template <typename T>
typename Graph<T>::Id cross_layer(Graph<T>& g, typename Graph<T>::Id x0,
                                  typename Graph<T>::Id xl,
                                  typename Graph<T>::Id w,
                                  typename Graph<T>::Id b) {
  auto t = g.linear(xl, w, b);
  auto u = g.mul(x0, t);
  return g.add(u, xl);
}

}  // namespace ctrkit
