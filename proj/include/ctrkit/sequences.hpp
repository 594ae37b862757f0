#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/features.hpp"
#include "ctrkit/tables.hpp"

namespace ctrkit {

// Fixed-length (category, brand) event sequence with validity mask.
// Valid events sit in positions [0, valid_len), oldest first; padding fills
// the tail with index 0 and mask 0.
struct BehaviorSequence {
  int valid_len = 0;
  std::vector<std::int32_t> cate_idx;
  std::vector<std::int32_t> brand_idx;
  std::vector<std::uint8_t> mask;

  explicit BehaviorSequence(int length = 0)
      : cate_idx(static_cast<std::size_t>(length), 0),
        brand_idx(static_cast<std::size_t>(length), 0),
        mask(static_cast<std::size_t>(length), 0) {}

  bool operator==(const BehaviorSequence&) const = default;
};

struct SequenceSet {
  int length = 0;
  int cate_vocab_size = 0;
  int brand_vocab_size = 0;
  std::unordered_map<std::int64_t, BehaviorSequence> by_user;
  std::array<std::size_t, 4> btag_counts{};  // pv, cart, fav, buy (pre-cutoff)
  BehaviorSequence empty_sequence;

  // Users absent from the behavior log get an all-padding sequence.
  const BehaviorSequence& get(std::int64_t user) const {
    auto it = by_user.find(user);
    return it == by_user.end() ? empty_sequence : it->second;
  }
};

// Builds per-user sequences from the behavior log. Only events strictly
// before `cutoff_time` participate; the most recent L survive. Ties on
// identical timestamps keep file order.
inline SequenceSet build_sequences(const std::vector<BehaviorEvent>& events,
                                   std::int64_t cutoff_time, int length,
                                   const VocabEncoder& cate_vocab,
                                   const VocabEncoder& brand_vocab,
                                   std::optional<BehaviorTag> btag_filter =
                                       std::nullopt) {
  require(length >= 1, "sequence length must be >= 1");
  require(cate_vocab.fitted() && brand_vocab.fitted(),
          "sequence vocabularies must be fitted");

  SequenceSet set;
  set.length = length;
  set.cate_vocab_size = cate_vocab.size();
  set.brand_vocab_size = brand_vocab.size();
  set.empty_sequence = BehaviorSequence(length);

  // Bucket in file order so stable_sort keeps ties in file order.
  std::unordered_map<std::int64_t, std::vector<const BehaviorEvent*>> by_user;
  for (const auto& e : events) {
    if (e.time_stamp >= cutoff_time) continue;
    if (btag_filter && e.btag != *btag_filter) continue;
    by_user[e.user].push_back(&e);
    ++set.btag_counts[static_cast<std::size_t>(e.btag)];
  }

  for (auto& [user, list] : by_user) {
    std::stable_sort(list.begin(), list.end(),
                     [](const BehaviorEvent* a, const BehaviorEvent* b) {
                       return a->time_stamp < b->time_stamp;
                     });
    const std::size_t keep = std::min<std::size_t>(list.size(),
                                                   static_cast<std::size_t>(length));
    const std::size_t start = list.size() - keep;
    BehaviorSequence seq(length);
    seq.valid_len = static_cast<int>(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      const BehaviorEvent& e = *list[start + i];
      seq.cate_idx[i] =
          static_cast<std::int32_t>(cate_vocab.transform(std::to_string(e.cate)));
      seq.brand_idx[i] =
          static_cast<std::int32_t>(brand_vocab.transform(std::to_string(e.brand)));
      seq.mask[i] = 1;
    }
    set.by_user.emplace(user, std::move(seq));
  }
  return set;
}

// Fits the two sequence vocabularies on pre-cutoff events.
struct SequenceVocabs {
  VocabEncoder cate;
  VocabEncoder brand;
};

inline SequenceVocabs fit_sequence_vocabs(const std::vector<BehaviorEvent>& events,
                                          std::int64_t cutoff_time,
                                          int min_count = 1) {
  std::vector<std::optional<std::string>> cates, brands;
  for (const auto& e : events) {
    if (e.time_stamp >= cutoff_time) continue;
    cates.emplace_back(std::to_string(e.cate));
    brands.emplace_back(std::to_string(e.brand));
  }
  require(!cates.empty(), "no behavior events before cutoff");
  SequenceVocabs v;
  v.cate = VocabEncoder::fit(cates, VocabEncoder::Retention::kMinCount, min_count);
  v.brand = VocabEncoder::fit(brands, VocabEncoder::Retention::kMinCount, min_count);
  return v;
}

// Deterministic summary: valid-length distribution and btag mix.
struct SequenceReport {
  std::map<int, std::size_t> length_histogram;
  std::array<std::size_t, 4> btag_counts{};
  std::size_t n_users = 0;
  int max_length = 0;
  double median_length = 0.0;

  std::string to_table() const {
    std::ostringstream os;
    os << "users\t" << n_users << "\n";
    os << "median_valid_len\t" << median_length << "\n";
    os << "max_valid_len\t" << max_length << "\n";
    for (std::size_t t = 0; t < btag_counts.size(); ++t) {
      os << "btag_" << btag_name(static_cast<BehaviorTag>(t)) << "\t"
         << btag_counts[t] << "\n";
    }
    for (const auto& [len, count] : length_histogram) {
      os << "len_" << len << "\t" << count << "\n";
    }
    return os.str();
  }
};

inline SequenceReport sequence_report(const SequenceSet& set) {
  require(!set.by_user.empty(), "sequence_report: empty sequence map");
  SequenceReport rep;
  rep.n_users = set.by_user.size();
  rep.btag_counts = set.btag_counts;
  std::vector<int> lengths;
  lengths.reserve(set.by_user.size());
  for (const auto& [user, seq] : set.by_user) {
    ++rep.length_histogram[seq.valid_len];
    lengths.push_back(seq.valid_len);
    rep.max_length = std::max(rep.max_length, seq.valid_len);
  }
  std::sort(lengths.begin(), lengths.end());
  const std::size_t n = lengths.size();
  rep.median_length = (n % 2 == 1)
                          ? lengths[n / 2]
                          : 0.5 * (lengths[n / 2 - 1] + lengths[n / 2]);
  return rep;
}

}  // namespace ctrkit
