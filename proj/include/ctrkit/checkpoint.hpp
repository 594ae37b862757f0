#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "ctrkit/common.hpp"
#include "ctrkit/logistic.hpp"
#include "ctrkit/models.hpp"
#include "ctrkit/params.hpp"

namespace ctrkit {

// Model checkpoint = manifest (family, feature-spec hash, data dims, hyper
// parameters, precision) + raw parameter values. `evaluate` refuses
// checkpoints whose feature-spec hash disagrees with the batch artifact.
struct ModelManifest {
  std::string family;
  std::uint64_t feature_hash = 0;
  std::uint64_t config_hash = 0;
  DataDims dims;
  json hyper;
  std::string precision = "f32";

  json to_json() const {
    return json{{"family", family},       {"feature_hash", feature_hash},
                {"config_hash", config_hash}, {"dims", dims.to_json()},
                {"hyper", hyper},         {"precision", precision}};
  }
  static ModelManifest from_json(const json& j) {
    ModelManifest m;
    m.family = j.at("family").get<std::string>();
    m.feature_hash = j.at("feature_hash").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::uint64_t>();
    m.dims = DataDims::from_json(j.at("dims"));
    m.hyper = j.at("hyper");
    m.precision = j.at("precision").get<std::string>();
    return m;
  }
};

namespace ckpt_file {
constexpr char kMagic[8] = {'C', 'T', 'R', 'M', 'O', 'D', 'L', '1'};

inline void write_manifest(std::ofstream& out, const ModelManifest& m) {
  out.write(kMagic, sizeof(kMagic));
  const std::string dumped = m.to_json().dump();
  const auto len = static_cast<std::uint32_t>(dumped.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(dumped.data(), static_cast<std::streamsize>(dumped.size()));
}

inline ModelManifest read_manifest(std::ifstream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  require(static_cast<bool>(in) && std::memcmp(magic, kMagic, 8) == 0,
          "model checkpoint: bad magic");
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string buf(len, '\0');
  in.read(buf.data(), len);
  require(static_cast<bool>(in), "model checkpoint: truncated manifest");
  return ModelManifest::from_json(json::parse(buf));
}
}  // namespace ckpt_file

template <typename T>
std::unique_ptr<DeepModel<T>> build_deep_model(const std::string& family,
                                               const DataDims& dims,
                                               const json& hyper,
                                               std::uint64_t seed) {
  if (family == "mlp") {
    return std::make_unique<MlpModel<T>>(dims, MlpConfig::from_json(hyper), seed);
  }
  if (family == "behavior-mlp") {
    return std::make_unique<BehaviorMlpModel<T>>(
        dims, BehaviorMlpConfig::from_json(hyper), seed);
  }
  if (family == "transformer") {
    return std::make_unique<TransformerModel<T>>(
        dims, TransformerConfig::from_json(hyper), seed);
  }
  throw ValidationError("unknown deep model family: " + family);
}

template <typename T>
void save_deep_checkpoint(const ModelManifest& manifest, const DeepModel<T>& model,
                          const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write checkpoint: " + path);
  ckpt_file::write_manifest(out, manifest);
  save_parameters(model.params(), out);
}

struct LoadedModel {
  ModelManifest manifest;
  std::unique_ptr<DeepModel<float>> deep_f32;
  std::unique_ptr<DeepModel<double>> deep_f64;
  std::unique_ptr<LogisticModel> logistic;
};

inline LoadedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open checkpoint: " + path);
  LoadedModel loaded;
  loaded.manifest = ckpt_file::read_manifest(in);
  if (loaded.manifest.family == "lr") {
    loaded.logistic =
        std::make_unique<LogisticModel>(LogisticModel::from_json(loaded.manifest.hyper));
    return loaded;
  }
  if (loaded.manifest.precision == "f32") {
    loaded.deep_f32 = build_deep_model<float>(loaded.manifest.family,
                                              loaded.manifest.dims,
                                              loaded.manifest.hyper, /*seed=*/0);
    load_parameters(loaded.deep_f32->params(), in);
  } else if (loaded.manifest.precision == "f64") {
    loaded.deep_f64 = build_deep_model<double>(loaded.manifest.family,
                                               loaded.manifest.dims,
                                               loaded.manifest.hyper, /*seed=*/0);
    load_parameters(loaded.deep_f64->params(), in);
  } else {
    throw ValidationError("model checkpoint: unknown precision " +
                          loaded.manifest.precision);
  }
  return loaded;
}

// Logistic models serialize their weights inside the manifest itself.
inline void save_logistic_checkpoint(ModelManifest manifest,
                                     const LogisticModel& model,
                                     const std::string& path) {
  manifest.family = "lr";
  manifest.hyper = model.to_json();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write checkpoint: " + path);
  ckpt_file::write_manifest(out, manifest);
}

}  // namespace ctrkit
