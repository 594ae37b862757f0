#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/tensor.hpp"

namespace ctrkit {

// Named trainable tensor with its gradient buffer. `frozen_row` pins one
// embedding row (the padding row) at its initial value: it receives no
// gradient and no optimizer update.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  int frozen_row = -1;

  std::size_t size() const { return value.size(); }
};

template <typename T>
class ParameterSet {
 public:
  int add(const std::string& name, Tensor<T> init, bool trainable = true,
          int frozen_row = -1) {
    require(by_name_.find(name) == by_name_.end(),
            "duplicate parameter name: " + name);
    Parameter<T> p;
    p.name = name;
    p.grad = Tensor<T>::zeros(init.shape());
    p.value = std::move(init);
    p.trainable = trainable;
    p.frozen_row = frozen_row;
    params_.push_back(std::move(p));
    const int id = static_cast<int>(params_.size()) - 1;
    by_name_.emplace(name, id);
    return id;
  }

  Parameter<T>& at(int id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter<T>& at(int id) const { return params_[static_cast<std::size_t>(id)]; }
  Parameter<T>& by_name(const std::string& name) {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "unknown parameter: " + name);
    return params_[static_cast<std::size_t>(it->second)];
  }
  const Parameter<T>& by_name(const std::string& name) const {
    auto it = by_name_.find(name);
    require(it != by_name_.end(), "unknown parameter: " + name);
    return params_[static_cast<std::size_t>(it->second)];
  }

  std::size_t count() const { return params_.size(); }
  std::vector<Parameter<T>>& all() { return params_; }
  const std::vector<Parameter<T>>& all() const { return params_; }

  void zero_grads() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  std::size_t total_elements() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  // Value snapshot for early-stopping restore.
  std::vector<std::vector<T>> snapshot() const {
    std::vector<std::vector<T>> s;
    s.reserve(params_.size());
    for (const auto& p : params_) s.push_back(p.value.raw());
    return s;
  }
  void restore(const std::vector<std::vector<T>>& s) {
    require(s.size() == params_.size(), "parameter snapshot mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      require(s[i].size() == params_[i].value.size(), "snapshot shape mismatch");
      params_[i].value.raw() = s[i];
    }
  }

 private:
  std::vector<Parameter<T>> params_;
  std::unordered_map<std::string, int> by_name_;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> init_normal(std::vector<std::size_t> shape, double stddev,
                      std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

// Xavier/Glorot uniform: +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> init_xavier(std::size_t fan_in, std::size_t fan_out,
                      std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> t({fan_in, fan_out});
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> init_zeros(std::vector<std::size_t> shape) {
  return Tensor<T>::zeros(std::move(shape));
}

template <typename T>
Tensor<T> init_ones(std::vector<std::size_t> shape) {
  Tensor<T> t(std::move(shape));
  t.fill(T(1));
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoint: versioned header, then (name, shape, raw little-endian values)
// per parameter. Round-trip is value-exact.
// ---------------------------------------------------------------------------

namespace ckpt {
constexpr char kMagic[8] = {'C', 'T', 'R', 'K', 'P', 'R', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

template <typename V>
void write_pod(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  require(static_cast<bool>(in), "checkpoint: truncated file");
  return v;
}
}  // namespace ckpt

template <typename T>
void save_parameters(const ParameterSet<T>& params, std::ofstream& out) {
  out.write(ckpt::kMagic, sizeof(ckpt::kMagic));
  ckpt::write_pod(out, ckpt::kVersion);
  ckpt::write_pod(out, static_cast<std::uint32_t>(sizeof(T)));
  ckpt::write_pod(out, static_cast<std::uint32_t>(params.count()));
  for (const auto& p : params.all()) {
    ckpt::write_pod(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    ckpt::write_pod(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d = 0; d < p.value.rank(); ++d) {
      ckpt::write_pod(out, static_cast<std::uint64_t>(p.value.dim(d)));
    }
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(T)));
  }
  require(static_cast<bool>(out), "checkpoint: write failed");
}

// Loads values into an already-constructed parameter set; names and shapes
// must match exactly.
template <typename T>
void load_parameters(ParameterSet<T>& params, std::ifstream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  require(static_cast<bool>(in) && std::memcmp(magic, ckpt::kMagic, 8) == 0,
          "checkpoint: bad magic");
  const auto version = ckpt::read_pod<std::uint32_t>(in);
  require(version == ckpt::kVersion, "checkpoint: unsupported version");
  const auto elem_size = ckpt::read_pod<std::uint32_t>(in);
  require(elem_size == sizeof(T), "checkpoint: element precision mismatch");
  const auto count = ckpt::read_pod<std::uint32_t>(in);
  require(count == params.count(), "checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = ckpt::read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    auto& p = params.by_name(name);
    const auto rank = ckpt::read_pod<std::uint32_t>(in);
    require(rank == p.value.rank(), "checkpoint: rank mismatch for " + name);
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto dim = ckpt::read_pod<std::uint64_t>(in);
      require(dim == p.value.dim(d), "checkpoint: shape mismatch for " + name);
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(T)));
    require(static_cast<bool>(in), "checkpoint: truncated parameter data");
  }
}

}  // namespace ctrkit
