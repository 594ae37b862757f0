#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrkit/common.hpp"
#include "ctrkit/features.hpp"
#include "ctrkit/sequences.hpp"

namespace ctrkit {

// Versioned binary artifacts handed between pipeline stages. Layout:
// magic(8) | u32 version | u64 config_hash | u32 json_len | json | blocks.

namespace artifact {

template <typename V>
void write_pod(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <typename V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  require(static_cast<bool>(in), "artifact: truncated file");
  return v;
}

template <typename V>
void write_vec(std::ofstream& out, const std::vector<V>& v) {
  write_pod(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(V)));
}
template <typename V>
std::vector<V> read_vec(std::ifstream& in) {
  const auto n = read_pod<std::uint64_t>(in);
  std::vector<V> v(n);
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(n * sizeof(V)));
  require(static_cast<bool>(in), "artifact: truncated vector");
  return v;
}

inline void write_header(std::ofstream& out, const char magic[8],
                         std::uint32_t version, std::uint64_t config_hash,
                         const json& meta) {
  out.write(magic, 8);
  write_pod(out, version);
  write_pod(out, config_hash);
  const std::string dumped = meta.dump();
  write_pod(out, static_cast<std::uint32_t>(dumped.size()));
  out.write(dumped.data(), static_cast<std::streamsize>(dumped.size()));
}

struct Header {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  json meta;
};

inline Header read_header(std::ifstream& in, const char magic[8],
                          std::uint32_t expect_version, const std::string& what) {
  char got[8];
  in.read(got, 8);
  require(static_cast<bool>(in) && std::memcmp(got, magic, 8) == 0,
          what + ": bad magic (wrong or corrupt artifact file)");
  Header h;
  h.version = read_pod<std::uint32_t>(in);
  require(h.version == expect_version, what + ": unsupported artifact version");
  h.config_hash = read_pod<std::uint64_t>(in);
  const auto len = read_pod<std::uint32_t>(in);
  std::string buf(len, '\0');
  in.read(buf.data(), len);
  require(static_cast<bool>(in), what + ": truncated metadata");
  h.meta = json::parse(buf);
  return h;
}

}  // namespace artifact

// ---------------------------------------------------------------------------
// Joined-frame artifact: the ingest stage's output. Categorical columns are
// dictionary-encoded; UINT32_MAX marks an absent value.
// ---------------------------------------------------------------------------

namespace artifact {

constexpr std::uint32_t kAbsent = 0xffffffffu;

inline void write_string(std::ofstream& out, const std::string& s) {
  write_pod(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_string(std::ifstream& in) {
  const auto len = read_pod<std::uint32_t>(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  require(static_cast<bool>(in), "artifact: truncated string");
  return s;
}

}  // namespace artifact

inline void save_frame_artifact(const ColumnFrame& frame, std::uint64_t config_hash,
                                const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'J', 'O', 'I', 'N', '1'};
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write frame artifact: " + path);
  json meta;
  meta["n_rows"] = frame.n_rows;
  std::vector<std::string> cat_names, num_names;
  for (const auto& [name, col] : frame.cats) cat_names.push_back(name);
  for (const auto& [name, col] : frame.nums) num_names.push_back(name);
  meta["cat_names"] = cat_names;
  meta["num_names"] = num_names;
  artifact::write_header(out, magic, 1, config_hash, meta);
  artifact::write_vec(out, frame.user_id);
  artifact::write_vec(out, frame.adgroup_id);
  artifact::write_vec(out, frame.time_stamp);
  artifact::write_vec(out, frame.labels);
  for (const auto& name : cat_names) {
    const auto& col = frame.cats.at(name);
    std::map<std::string, std::uint32_t> dict;
    std::vector<std::uint32_t> codes(col.size(), artifact::kAbsent);
    for (std::size_t i = 0; i < col.size(); ++i) {
      if (!col[i]) continue;
      auto [it, inserted] =
          dict.emplace(*col[i], static_cast<std::uint32_t>(dict.size()));
      codes[i] = it->second;
    }
    std::vector<std::string> values(dict.size());
    for (const auto& [v, code] : dict) values[code] = v;
    artifact::write_pod(out, static_cast<std::uint32_t>(values.size()));
    for (const auto& v : values) artifact::write_string(out, v);
    artifact::write_vec(out, codes);
  }
  for (const auto& name : num_names) {
    const auto& col = frame.nums.at(name);
    std::vector<std::uint8_t> present(col.size());
    std::vector<double> values(col.size(), 0.0);
    for (std::size_t i = 0; i < col.size(); ++i) {
      present[i] = col[i] ? 1 : 0;
      if (col[i]) values[i] = *col[i];
    }
    artifact::write_vec(out, present);
    artifact::write_vec(out, values);
  }
  require(static_cast<bool>(out), "frame artifact write failed");
}

struct FrameArtifact {
  std::uint64_t config_hash = 0;
  ColumnFrame frame;
};

inline FrameArtifact load_frame_artifact(const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'J', 'O', 'I', 'N', '1'};
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open frame artifact: " + path);
  const auto h = artifact::read_header(in, magic, 1, "frame artifact");
  FrameArtifact a;
  a.config_hash = h.config_hash;
  a.frame.n_rows = h.meta.at("n_rows").get<std::size_t>();
  const auto cat_names = h.meta.at("cat_names").get<std::vector<std::string>>();
  const auto num_names = h.meta.at("num_names").get<std::vector<std::string>>();
  a.frame.user_id = artifact::read_vec<std::int64_t>(in);
  a.frame.adgroup_id = artifact::read_vec<std::int64_t>(in);
  a.frame.time_stamp = artifact::read_vec<std::int64_t>(in);
  a.frame.labels = artifact::read_vec<int>(in);
  for (const auto& name : cat_names) {
    const auto dict_size = artifact::read_pod<std::uint32_t>(in);
    std::vector<std::string> values(dict_size);
    for (auto& v : values) v = artifact::read_string(in);
    const auto codes = artifact::read_vec<std::uint32_t>(in);
    auto& col = a.frame.cats[name];
    col.resize(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      if (codes[i] != artifact::kAbsent) col[i] = values[codes[i]];
    }
  }
  for (const auto& name : num_names) {
    const auto present = artifact::read_vec<std::uint8_t>(in);
    const auto values = artifact::read_vec<double>(in);
    auto& col = a.frame.nums[name];
    col.resize(present.size());
    for (std::size_t i = 0; i < present.size(); ++i) {
      if (present[i]) col[i] = values[i];
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Feature artifact: fitted pipeline + encoded batch + split mask.
// ---------------------------------------------------------------------------

struct FeatureArtifact {
  std::uint64_t config_hash = 0;
  std::uint64_t feature_hash = 0;
  FeaturePipeline pipeline;
  EncodedBatch batch;
  std::vector<bool> train_mask;
};

inline void save_feature_artifact(const FeatureArtifact& a, const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'F', 'E', 'A', 'T', '1'};
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write feature artifact: " + path);
  json meta;
  meta["feature_hash"] = a.feature_hash;
  meta["pipeline"] = a.pipeline.to_json();
  meta["n_rows"] = a.batch.n_rows;
  meta["n_cat"] = a.batch.n_cat;
  meta["n_num"] = a.batch.n_num;
  meta["cat_names"] = a.batch.cat_names;
  meta["vocab_sizes"] = a.batch.vocab_sizes;
  meta["num_names"] = a.batch.num_names;
  artifact::write_header(out, magic, 1, a.config_hash, meta);
  artifact::write_vec(out, a.batch.cat);
  artifact::write_vec(out, a.batch.num);
  artifact::write_vec(out, a.batch.labels);
  artifact::write_vec(out, a.batch.user_id);
  artifact::write_vec(out, a.batch.time_stamp);
  std::vector<std::uint8_t> mask(a.train_mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = a.train_mask[i] ? 1 : 0;
  artifact::write_vec(out, mask);
  require(static_cast<bool>(out), "feature artifact write failed");
}

inline FeatureArtifact load_feature_artifact(const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'F', 'E', 'A', 'T', '1'};
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open feature artifact: " + path);
  const auto h = artifact::read_header(in, magic, 1, "feature artifact");
  FeatureArtifact a;
  a.config_hash = h.config_hash;
  a.feature_hash = h.meta.at("feature_hash").get<std::uint64_t>();
  a.pipeline = FeaturePipeline::from_json(h.meta.at("pipeline"));
  a.batch.n_rows = h.meta.at("n_rows").get<std::size_t>();
  a.batch.n_cat = h.meta.at("n_cat").get<std::size_t>();
  a.batch.n_num = h.meta.at("n_num").get<std::size_t>();
  a.batch.cat_names = h.meta.at("cat_names").get<std::vector<std::string>>();
  a.batch.vocab_sizes = h.meta.at("vocab_sizes").get<std::vector<int>>();
  a.batch.num_names = h.meta.at("num_names").get<std::vector<std::string>>();
  a.batch.cat = artifact::read_vec<std::int32_t>(in);
  a.batch.num = artifact::read_vec<double>(in);
  a.batch.labels = artifact::read_vec<int>(in);
  a.batch.user_id = artifact::read_vec<std::int64_t>(in);
  a.batch.time_stamp = artifact::read_vec<std::int64_t>(in);
  const auto mask = artifact::read_vec<std::uint8_t>(in);
  a.train_mask.assign(mask.size(), false);
  for (std::size_t i = 0; i < mask.size(); ++i) a.train_mask[i] = mask[i] != 0;
  return a;
}

// ---------------------------------------------------------------------------
// Sequence artifact: per user, id + valid length + L (cate, brand) pairs of
// 32-bit indices.
// ---------------------------------------------------------------------------

struct SequenceArtifact {
  std::uint64_t config_hash = 0;
  SequenceSet sequences;
};

inline void save_sequence_artifact(const SequenceArtifact& a, const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'S', 'E', 'Q', 'S', '1'};
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), "cannot write sequence artifact: " + path);
  json meta;
  meta["length"] = a.sequences.length;
  meta["cate_vocab"] = a.sequences.cate_vocab_size;
  meta["brand_vocab"] = a.sequences.brand_vocab_size;
  meta["n_users"] = a.sequences.by_user.size();
  meta["btag_counts"] = a.sequences.btag_counts;
  artifact::write_header(out, magic, 1, a.config_hash, meta);
  // Deterministic order: sorted by user id.
  std::vector<std::int64_t> user_ids;
  user_ids.reserve(a.sequences.by_user.size());
  for (const auto& [uid, seq] : a.sequences.by_user) user_ids.push_back(uid);
  std::sort(user_ids.begin(), user_ids.end());
  for (std::int64_t uid : user_ids) {
    const auto& seq = a.sequences.by_user.at(uid);
    artifact::write_pod(out, uid);
    artifact::write_pod(out, static_cast<std::uint32_t>(seq.valid_len));
    for (int i = 0; i < a.sequences.length; ++i) {
      artifact::write_pod(out, static_cast<std::uint32_t>(seq.cate_idx[i]));
      artifact::write_pod(out, static_cast<std::uint32_t>(seq.brand_idx[i]));
    }
  }
  require(static_cast<bool>(out), "sequence artifact write failed");
}

inline SequenceArtifact load_sequence_artifact(const std::string& path) {
  static const char magic[8] = {'C', 'T', 'R', 'S', 'E', 'Q', 'S', '1'};
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), "cannot open sequence artifact: " + path);
  const auto h = artifact::read_header(in, magic, 1, "sequence artifact");
  SequenceArtifact a;
  a.config_hash = h.config_hash;
  a.sequences.length = h.meta.at("length").get<int>();
  a.sequences.cate_vocab_size = h.meta.at("cate_vocab").get<int>();
  a.sequences.brand_vocab_size = h.meta.at("brand_vocab").get<int>();
  a.sequences.btag_counts = h.meta.at("btag_counts").get<std::array<std::size_t, 4>>();
  a.sequences.empty_sequence = BehaviorSequence(a.sequences.length);
  const auto n_users = h.meta.at("n_users").get<std::size_t>();
  const int L = a.sequences.length;
  for (std::size_t u = 0; u < n_users; ++u) {
    const auto uid = artifact::read_pod<std::int64_t>(in);
    BehaviorSequence seq(L);
    seq.valid_len = static_cast<int>(artifact::read_pod<std::uint32_t>(in));
    for (int i = 0; i < L; ++i) {
      seq.cate_idx[i] = static_cast<std::int32_t>(artifact::read_pod<std::uint32_t>(in));
      seq.brand_idx[i] = static_cast<std::int32_t>(artifact::read_pod<std::uint32_t>(in));
      seq.mask[i] = i < seq.valid_len ? 1 : 0;
    }
    a.sequences.by_user.emplace(uid, std::move(seq));
  }
  return a;
}

}  // namespace ctrkit
