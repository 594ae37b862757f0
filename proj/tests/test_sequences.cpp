#include <random>

#include <gtest/gtest.h>

#include "ctrkit/sequences.hpp"

namespace {

using namespace ctrkit;

std::vector<BehaviorEvent> make_events(
    const std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>>& ucb_t) {
  std::vector<BehaviorEvent> events;
  for (const auto& [user, cate, ts] : ucb_t) {
    BehaviorEvent e;
    e.user = user;
    e.time_stamp = ts;
    e.btag = BehaviorTag::kPv;
    e.cate = cate;
    e.brand = cate * 10;
    events.push_back(e);
  }
  return events;
}

SequenceVocabs vocabs_for(const std::vector<BehaviorEvent>& events,
                          std::int64_t cutoff) {
  return fit_sequence_vocabs(events, cutoff);
}

// ---------------------------------------------------------------------------

TEST(Sequences, PadsShortHistories) {
  const auto events = make_events({{1, 5, 100}, {1, 6, 200}, {1, 7, 300}});
  const auto v = vocabs_for(events, 1000);
  const auto set = build_sequences(events, 1000, 20, v.cate, v.brand);
  const auto& s = set.get(1);
  EXPECT_EQ(s.valid_len, 3);
  int mask_sum = 0;
  for (auto m : s.mask) mask_sum += m;
  EXPECT_EQ(mask_sum, 3);
  for (int i = 3; i < 20; ++i) {
    EXPECT_EQ(s.cate_idx[i], 0);
    EXPECT_EQ(s.brand_idx[i], 0);
    EXPECT_EQ(s.mask[i], 0);
  }
  // oldest first in the valid prefix
  EXPECT_NE(s.cate_idx[0], s.cate_idx[1]);
}

TEST(Sequences, KeepsMostRecentL) {
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> spec;
  for (int i = 0; i < 200; ++i) spec.push_back({1, i % 9, 1000 + i});
  const auto events = make_events(spec);
  const auto v = vocabs_for(events, 1000000);
  const auto set = build_sequences(events, 1000000, 50, v.cate, v.brand);
  const auto& s = set.get(1);
  EXPECT_EQ(s.valid_len, 50);
  // position 49 holds the newest event (cate 199 % 9 = 1)
  EXPECT_EQ(s.cate_idx[49], v.cate.transform(std::optional<std::string>("1")));
  // position 0 holds event 150 (cate 150 % 9 = 6)
  EXPECT_EQ(s.cate_idx[0], v.cate.transform(std::optional<std::string>("6")));
}

TEST(Sequences, UserWithoutEventsGetsAllPadding) {
  const auto events = make_events({{1, 5, 100}});
  const auto v = vocabs_for(events, 1000);
  const auto set = build_sequences(events, 1000, 10, v.cate, v.brand);
  const auto& s = set.get(42);  // never seen
  EXPECT_EQ(s.valid_len, 0);
  for (int i = 0; i < 10; ++i) {
    EXPECT_EQ(s.mask[i], 0);
    EXPECT_EQ(s.cate_idx[i], 0);
  }
}

TEST(Sequences, CutoffExcludesLaterEventsExactly) {
  const auto events =
      make_events({{1, 5, 100}, {1, 6, 200}, {1, 7, 300}, {1, 8, 400}});
  const auto v = vocabs_for(events, 1000);
  const auto set = build_sequences(events, 300, 20, v.cate, v.brand);
  // cutoff is strict: the event AT 300 is excluded
  EXPECT_EQ(set.get(1).valid_len, 2);
}

TEST(Sequences, TemporalCausality) {
  // Perturbing any event at time >= cutoff changes nothing.
  auto base = make_events({{1, 5, 100}, {1, 6, 200}, {1, 7, 999}, {2, 3, 150}});
  const auto v = vocabs_for(base, 500);
  const auto before = build_sequences(base, 500, 8, v.cate, v.brand);
  auto perturbed = base;
  perturbed[2].cate = 1234;       // event past the cutoff
  perturbed[2].time_stamp = 777;  // still past the cutoff
  const auto after = build_sequences(perturbed, 500, 8, v.cate, v.brand);
  EXPECT_EQ(before.get(1), after.get(1));
  EXPECT_EQ(before.get(2), after.get(2));
  EXPECT_EQ(before.by_user.size(), after.by_user.size());
}

TEST(Sequences, MaskSumMatchesBruteForceRecount) {
  std::mt19937_64 rng(7);
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> spec;
  for (int i = 0; i < 2000; ++i) {
    spec.push_back({static_cast<std::int64_t>(rng() % 40),
                    static_cast<std::int64_t>(rng() % 12),
                    static_cast<std::int64_t>(rng() % 5000)});
  }
  const auto events = make_events(spec);
  const std::int64_t cutoff = 2500;
  const int L = 15;
  const auto v = vocabs_for(events, cutoff);
  const auto set = build_sequences(events, cutoff, L, v.cate, v.brand);
  for (std::int64_t user = 0; user < 40; ++user) {
    std::size_t count = 0;
    for (const auto& e : events) {
      if (e.user == user && e.time_stamp < cutoff) ++count;
    }
    int mask_sum = 0;
    for (auto m : set.get(user).mask) mask_sum += m;
    EXPECT_EQ(static_cast<std::size_t>(mask_sum),
              std::min<std::size_t>(count, L));
  }
}

TEST(Sequences, ChronologicalWithinValidPositionsAndFileOrderTies) {
  // Two events share a timestamp; file order breaks the tie.
  const auto events =
      make_events({{1, 11, 100}, {1, 22, 100}, {1, 33, 50}});
  const auto v = vocabs_for(events, 1000);
  const auto set = build_sequences(events, 1000, 5, v.cate, v.brand);
  const auto& s = set.get(1);
  ASSERT_EQ(s.valid_len, 3);
  EXPECT_EQ(s.cate_idx[0], v.cate.transform(std::optional<std::string>("33")));
  EXPECT_EQ(s.cate_idx[1], v.cate.transform(std::optional<std::string>("11")));
  EXPECT_EQ(s.cate_idx[2], v.cate.transform(std::optional<std::string>("22")));
}

TEST(Sequences, BtagFilterOption) {
  auto events = make_events({{1, 5, 100}, {1, 6, 200}});
  events[0].btag = BehaviorTag::kBuy;
  const auto v = vocabs_for(events, 1000);
  const auto set =
      build_sequences(events, 1000, 5, v.cate, v.brand, BehaviorTag::kBuy);
  EXPECT_EQ(set.get(1).valid_len, 1);
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

TEST(SequenceReportTest, PointMassHistogram) {
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> spec;
  for (std::int64_t u = 0; u < 10; ++u) {
    for (int k = 0; k < 4; ++k) spec.push_back({u, k, 100 + k});
  }
  const auto events = make_events(spec);
  const auto v = vocabs_for(events, 1000);
  const auto set = build_sequences(events, 1000, 20, v.cate, v.brand);
  const auto rep = sequence_report(set);
  ASSERT_EQ(rep.length_histogram.size(), 1u);
  EXPECT_EQ(rep.length_histogram.at(4), 10u);
  EXPECT_EQ(rep.n_users, 10u);
  EXPECT_DOUBLE_EQ(rep.median_length, 4.0);
}

TEST(SequenceReportTest, DeterministicBytes) {
  std::mt19937_64 rng(9);
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> spec;
  for (int i = 0; i < 500; ++i) {
    spec.push_back({static_cast<std::int64_t>(rng() % 20),
                    static_cast<std::int64_t>(rng() % 5),
                    static_cast<std::int64_t>(rng() % 1000)});
  }
  const auto events = make_events(spec);
  const auto v = vocabs_for(events, 2000);
  const auto set = build_sequences(events, 2000, 10, v.cate, v.brand);
  EXPECT_EQ(sequence_report(set).to_table(), sequence_report(set).to_table());
}

TEST(SequenceReportTest, EmptyMapThrows) {
  SequenceSet set;
  EXPECT_THROW(sequence_report(set), ValidationError);
}

TEST(SequenceReportTest, HeavyTailMaxOverMedian) {
  // One hyperactive user, many light users: max >= 10x median.
  std::vector<std::tuple<std::int64_t, std::int64_t, std::int64_t>> spec;
  for (std::int64_t u = 0; u < 30; ++u) {
    spec.push_back({u, 1, 100});
    spec.push_back({u, 2, 101});
  }
  for (int i = 0; i < 80; ++i) spec.push_back({99, i % 7, 200 + i});
  const auto events = make_events(spec);
  const auto v = vocabs_for(events, 10000);
  const auto set = build_sequences(events, 10000, 100, v.cate, v.brand);
  const auto rep = sequence_report(set);
  EXPECT_GE(rep.max_length, 10 * rep.median_length);
}

}  // namespace
