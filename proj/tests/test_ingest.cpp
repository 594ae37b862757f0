#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "ctrkit/ingest.hpp"
#include "ctrkit/tables.hpp"

namespace {

using namespace ctrkit;
namespace fs = std::filesystem;

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = fs::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

// ---------------------------------------------------------------------------
// parse_table
// ---------------------------------------------------------------------------

TEST(ParseTable, AdFeatureRowMapsFields) {
  const auto path = write_temp(
      "ads_ok.csv",
      "adgroup_id,cate_id,campaign_id,customer,brand,price\n"
      "63133,6406,83237,1,95471,170.0\n");
  const auto result = parse_table<AdFeature>(path);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.records[0].adgroup_id, 63133);
  EXPECT_EQ(result.records[0].cate_id, 6406);
  EXPECT_EQ(result.records[0].campaign_id, 83237);
  ASSERT_TRUE(result.records[0].brand.has_value());
  EXPECT_EQ(*result.records[0].brand, 95471);
  EXPECT_DOUBLE_EQ(result.records[0].price, 170.0);
  EXPECT_EQ(result.malformed, 0u);
}

TEST(ParseTable, EmptyBrandBecomesAbsent) {
  const auto path = write_temp(
      "ads_brand.csv",
      "adgroup_id,cate_id,campaign_id,customer,brand,price\n"
      "1,2,3,4,,9.5\n");
  const auto result = parse_table<AdFeature>(path);
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_FALSE(result.records[0].brand.has_value());
}

TEST(ParseTable, WrongColumnCountYieldsErrorRecordAndContinues) {
  const auto path = write_temp(
      "ads_bad.csv",
      "adgroup_id,cate_id,campaign_id,customer,brand,price\n"
      "1,2,3\n"
      "5,6,7,8,9,10.0\n");
  const auto result = parse_table<AdFeature>(path);
  EXPECT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.malformed, 1u);
  ASSERT_EQ(result.error_sample.size(), 1u);
  EXPECT_EQ(result.error_sample[0].line_no, 2u);
  EXPECT_EQ(result.rows_seen, 2u);
}

TEST(ParseTable, HeaderMismatchThrows) {
  const auto path = write_temp("ads_hdr.csv", "a,b,c\n1,2,3\n");
  EXPECT_THROW(parse_table<AdFeature>(path), ValidationError);
}

TEST(ParseTable, MissingFileThrows) {
  EXPECT_THROW(parse_table<AdFeature>("/nonexistent/xyz.csv"), ValidationError);
}

TEST(ParseTable, BtagOutsideClosedSetIsMalformed) {
  const auto path = write_temp(
      "bl.csv",
      "user,time_stamp,btag,cate,brand\n"
      "1,100,pv,5,6\n"
      "1,101,click,5,6\n");
  const auto result = parse_table<BehaviorEvent>(path);
  EXPECT_EQ(result.records.size(), 1u);
  EXPECT_EQ(result.malformed, 1u);
}

// ---------------------------------------------------------------------------
// to_local_time
// ---------------------------------------------------------------------------

TEST(LocalTime, WorkedExample) {
  const auto p = to_local_time(1494028800);  // 2017-05-06 00:00 UTC
  EXPECT_EQ(p.local_date, "2017-05-06");
  EXPECT_EQ(p.hour, 8);
  EXPECT_EQ(p.weekday, 5);  // Saturday
  EXPECT_TRUE(p.is_weekend);
  EXPECT_EQ(p.time_bin, "morning");
}

TEST(LocalTime, EpochZero) {
  const auto p = to_local_time(0);
  EXPECT_EQ(p.local_date, "1970-01-01");
  EXPECT_EQ(p.hour, 8);
  EXPECT_EQ(p.weekday, 3);  // Thursday
  EXPECT_FALSE(p.is_weekend);
  EXPECT_EQ(p.time_bin, "morning");
}

TEST(LocalTime, DayPeriodicity) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> dist(0, 2000000000);
  for (int i = 0; i < 200; ++i) {
    const std::int64_t e = dist(rng);
    const auto a = to_local_time(e);
    const auto b = to_local_time(e + 86400);
    EXPECT_EQ(a.hour, b.hour);
    EXPECT_EQ((a.weekday + 1) % 7, b.weekday);
  }
}

TEST(LocalTime, HourFormulaInvariant) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int64_t> dist(0, 4000000000LL);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t e = dist(rng);
    const int expected = static_cast<int>((((e % 86400) + 28800) / 3600) % 24);
    EXPECT_EQ(to_local_time(e).hour, expected);
  }
}

// Cross-check date and weekday against the standard chrono calendar.
TEST(LocalTime, CalendarOracle) {
  using namespace std::chrono;
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<std::int64_t> dist(0, 2000000000);
  for (int i = 0; i < 300; ++i) {
    const std::int64_t e = dist(rng);
    const auto p = to_local_time(e);
    const auto local_days = sys_days{} + days{(e + 28800) / 86400};
    const year_month_day ymd{local_days};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()));
    EXPECT_EQ(p.local_date, buf);
    const weekday wd{local_days};
    // iso_encoding: Monday = 1 .. Sunday = 7.
    EXPECT_EQ(static_cast<int>(wd.iso_encoding()) - 1, p.weekday);
  }
}

TEST(LocalTime, TimeBinBoundaries) {
  auto bin_of_hour = [](int hour) {
    // pick a day starting at UTC 16:00 so local hour = (hour)
    const std::int64_t base = 86400 * 100 - 28800;  // local midnight
    return to_local_time(base + hour * 3600).time_bin;
  };
  EXPECT_EQ(bin_of_hour(0), "night");
  EXPECT_EQ(bin_of_hour(5), "night");
  EXPECT_EQ(bin_of_hour(6), "morning");
  EXPECT_EQ(bin_of_hour(11), "morning");
  EXPECT_EQ(bin_of_hour(12), "afternoon");
  EXPECT_EQ(bin_of_hour(17), "afternoon");
  EXPECT_EQ(bin_of_hour(18), "evening");
  EXPECT_EQ(bin_of_hour(23), "evening");
}

// ---------------------------------------------------------------------------
// join
// ---------------------------------------------------------------------------

std::vector<ImpressionRecord> sample_impressions() {
  return {
      {10, 100, 1494028800, "x", 1},
      {11, 101, 1494028860, "x", 0},
      {12, 100, 1494028920, "y", 0},  // user 12 has no profile
  };
}
std::vector<AdFeature> sample_ads() {
  return {{100, 5, 7, 9, 42, 19.9}, {101, 6, 8, 9, std::nullopt, 5.0}};
}
std::vector<UserProfile> sample_profiles() {
  return {{10, 1, 2, 1, 3, 2, 3, 0, 1}, {11, 1, 2, 2, 4, std::nullopt, 2, 1, 2}};
}

TEST(Join, LeftJoinKeepsEveryImpression) {
  const auto joined =
      join_impressions(sample_impressions(), sample_ads(), sample_profiles());
  ASSERT_EQ(joined.size(), 3u);
  EXPECT_TRUE(joined[0].ad_matched);
  EXPECT_TRUE(joined[0].profile_matched);
  EXPECT_EQ(*joined[0].cate_id, 5);
  EXPECT_FALSE(joined[1].brand.has_value());  // matched ad with absent brand
  EXPECT_FALSE(joined[2].profile_matched);
  EXPECT_FALSE(joined[2].final_gender_code.has_value());
}

TEST(Join, MatchedAdPopulatesAllSixFields) {
  const auto joined =
      join_impressions(sample_impressions(), sample_ads(), sample_profiles());
  const auto& j = joined[0];
  EXPECT_EQ(j.adgroup_id, 100);
  EXPECT_EQ(*j.cate_id, 5);
  EXPECT_EQ(*j.campaign_id, 7);
  EXPECT_EQ(*j.customer, 9);
  EXPECT_EQ(*j.brand, 42);
  EXPECT_DOUBLE_EQ(*j.price, 19.9);
}

TEST(Join, DuplicateAdKeyThrows) {
  auto ads = sample_ads();
  ads.push_back(ads[0]);
  EXPECT_THROW(join_impressions(sample_impressions(), ads, sample_profiles()),
               ValidationError);
}

TEST(Join, DuplicateProfileKeyThrows) {
  auto profiles = sample_profiles();
  profiles.push_back(profiles[0]);
  EXPECT_THROW(join_impressions(sample_impressions(), sample_ads(), profiles),
               ValidationError);
}

TEST(Join, Idempotent) {
  const auto once =
      join_impressions(sample_impressions(), sample_ads(), sample_profiles());
  // Project the impression fields back out and join again.
  std::vector<ImpressionRecord> projected;
  for (const auto& j : once) {
    projected.push_back({j.user_id, j.adgroup_id, j.time_stamp, j.pid, j.clk});
  }
  const auto twice = join_impressions(projected, sample_ads(), sample_profiles());
  EXPECT_EQ(once, twice);
}

// ---------------------------------------------------------------------------
// class stats
// ---------------------------------------------------------------------------

TEST(ClassStats, SmallExample) {
  const auto s = class_stats(std::vector<int>{1, 0, 0, 0});
  EXPECT_EQ(s.n_pos, 1u);
  EXPECT_EQ(s.n_neg, 3u);
  EXPECT_DOUBLE_EQ(s.positive_rate, 0.25);
}

TEST(ClassStats, EmptyStreamThrows) {
  EXPECT_THROW(class_stats(std::vector<int>{}), ValidationError);
}

// ---------------------------------------------------------------------------
// imputation
// ---------------------------------------------------------------------------

ColumnFrame frame_with_gaps() {
  const auto joined =
      join_impressions(sample_impressions(), sample_ads(), sample_profiles());
  return to_column_frame(joined);
}

TEST(Impute, SentinelAndMedianPolicy) {
  auto frame = frame_with_gaps();
  // knock out a price to exercise the median rule
  frame.nums["price"][1] = std::nullopt;
  ImputePolicy policy;
  policy["pvalue_level"] = SentinelRule{"-1"};
  policy["price"] = MedianRule{};
  const auto fit = fit_impute(frame, policy);
  fit.apply(frame);
  EXPECT_EQ(*frame.cat("pvalue_level")[1], "-1");  // was absent
  // remaining prices: 19.9 (row 0), 19.9 (row 2) -> median 19.9
  EXPECT_DOUBLE_EQ(*frame.num("price")[1], 19.9);
}

TEST(Impute, ModePolicyUsesTrainingSplitOnly) {
  auto frame = frame_with_gaps();
  ImputePolicy policy;
  policy["brand"] = ModeRule{};
  // Train mask covers only row 0, so the mode is row 0's brand (42), not
  // anything from later rows.
  std::vector<bool> train = {true, false, false};
  const auto fit = fit_impute(frame, policy, train);
  fit.apply(frame);
  EXPECT_EQ(*frame.cat("brand")[1], "42");
}

TEST(Impute, TransformingValidationNeverAltersTrainingStatistics) {
  auto frame = frame_with_gaps();
  ImputePolicy policy;
  policy["price"] = MedianRule{};
  std::vector<bool> train = {true, true, false};
  const auto fit1 = fit_impute(frame, policy, train);
  auto frame2 = frame;
  frame2.nums["price"][2] = 1e9;  // perturb a validation row
  const auto fit2 = fit_impute(frame2, policy, train);
  EXPECT_EQ(fit1.num_fill.at("price"), fit2.num_fill.at("price"));
}

TEST(Impute, UnknownFieldThrows) {
  auto frame = frame_with_gaps();
  ImputePolicy policy;
  policy["no_such_column"] = SentinelRule{"-1"};
  EXPECT_THROW(fit_impute(frame, policy), ValidationError);
}

TEST(Impute, NoAbsentValuesAfterApply) {
  auto frame = frame_with_gaps();
  const auto fit = fit_impute(frame, impute_policy_sentinel_minus1());
  fit.apply(frame);
  for (const auto& [name, col] : frame.cats) {
    for (const auto& v : col) EXPECT_TRUE(v.has_value()) << name;
  }
  for (const auto& v : frame.num("price")) EXPECT_TRUE(v.has_value());
}

TEST(Impute, StreamWithoutGapsUnchanged) {
  auto frame = frame_with_gaps();
  const auto fit = fit_impute(frame, impute_policy_sentinel_minus1());
  fit.apply(frame);
  auto copy = frame;
  fit.apply(copy);  // idempotent on a gap-free frame
  EXPECT_EQ(copy.cats, frame.cats);
  EXPECT_EQ(copy.nums, frame.nums);
}

// ---------------------------------------------------------------------------
// missingness is computed, not assumed
// ---------------------------------------------------------------------------

TEST(Missingness, ReportsFractions) {
  const auto frame = frame_with_gaps();
  const auto rep = missingness(frame);
  // user 12 has no profile -> 1/3 absent in profile fields
  EXPECT_NEAR(rep.fraction_absent.at("final_gender_code"), 1.0 / 3.0, 1e-12);
  // brand absent for ad 101 (row 1) only
  EXPECT_NEAR(rep.fraction_absent.at("brand"), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(rep.fraction_absent.at("hour"), 0.0, 1e-12);
}

}  // namespace
