#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/tables.hpp"

namespace ctrkit {

// ---------------------------------------------------------------------------
// Local time derivation. Fixed UTC+8, no DST.
// ---------------------------------------------------------------------------

struct LocalTimeParts {
  std::string local_date;  // YYYY-MM-DD
  int hour = 0;            // 0..23
  int weekday = 0;         // 0 = Monday
  bool is_weekend = false;
  std::string time_bin;    // night | morning | afternoon | evening

  bool operator==(const LocalTimeParts&) const = default;
};

namespace detail {
// Days-since-epoch to civil date (Gregorian), Hinnant's algorithm.
inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned dd = doy - (153 * mp + 2) / 5 + 1;
  const unsigned mm = mp < 10 ? mp + 3 : mp - 9;
  y = static_cast<int>(yy + (mm <= 2));
  m = static_cast<int>(mm);
  d = static_cast<int>(dd);
}
}  // namespace detail

constexpr std::int64_t kLocalUtcOffsetSeconds = 8 * 3600;

inline LocalTimeParts to_local_time(std::int64_t epoch_utc) {
  const std::int64_t local = epoch_utc + kLocalUtcOffsetSeconds;
  std::int64_t days = local / 86400;
  std::int64_t sec = local % 86400;
  if (sec < 0) {
    sec += 86400;
    --days;
  }
  LocalTimeParts p;
  p.hour = static_cast<int>(sec / 3600);
  p.weekday = static_cast<int>(((days % 7) + 7 + 3) % 7);  // 1970-01-01 = Thursday
  p.is_weekend = (p.weekday == 5 || p.weekday == 6);
  if (p.hour < 6) {
    p.time_bin = "night";
  } else if (p.hour < 12) {
    p.time_bin = "morning";
  } else if (p.hour < 18) {
    p.time_bin = "afternoon";
  } else {
    p.time_bin = "evening";
  }
  int y, m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
  p.local_date = buf;
  return p;
}

// ---------------------------------------------------------------------------
// Join
// ---------------------------------------------------------------------------

struct JoinedImpression {
  // impression fields
  std::int64_t user_id = 0;
  std::int64_t adgroup_id = 0;
  std::int64_t time_stamp = 0;
  std::string pid;
  int clk = 0;
  // ad fields (absent when the adgroup has no feature row)
  bool ad_matched = false;
  std::optional<std::int64_t> cate_id, campaign_id, customer, brand;
  std::optional<double> price;
  // profile fields (absent when the user has no profile row)
  bool profile_matched = false;
  std::optional<std::int64_t> cms_segid, cms_group_id, final_gender_code,
      age_level, pvalue_level, shopping_level, occupation, new_user_class_level;
  // derived local-time fields
  LocalTimeParts when;

  bool operator==(const JoinedImpression&) const = default;
};

// Left join: every impression survives; assignment is deterministic.
// Duplicate keys in the ad or profile table are a hard error.
inline std::vector<JoinedImpression> join_impressions(
    const std::vector<ImpressionRecord>& impressions,
    const std::vector<AdFeature>& ads,
    const std::vector<UserProfile>& profiles) {
  std::unordered_map<std::int64_t, const AdFeature*> ad_by_id;
  ad_by_id.reserve(ads.size());
  for (const auto& a : ads) {
    if (!ad_by_id.emplace(a.adgroup_id, &a).second) {
      throw ValidationError("duplicate adgroup_id in ad table: " +
                            std::to_string(a.adgroup_id));
    }
  }
  std::unordered_map<std::int64_t, const UserProfile*> profile_by_id;
  profile_by_id.reserve(profiles.size());
  for (const auto& p : profiles) {
    if (!profile_by_id.emplace(p.userid, &p).second) {
      throw ValidationError("duplicate userid in profile table: " +
                            std::to_string(p.userid));
    }
  }

  std::vector<JoinedImpression> out;
  out.reserve(impressions.size());
  for (const auto& imp : impressions) {
    JoinedImpression j;
    j.user_id = imp.user_id;
    j.adgroup_id = imp.adgroup_id;
    j.time_stamp = imp.time_stamp;
    j.pid = imp.pid;
    j.clk = imp.clk;
    if (auto it = ad_by_id.find(imp.adgroup_id); it != ad_by_id.end()) {
      const AdFeature& a = *it->second;
      j.ad_matched = true;
      j.cate_id = a.cate_id;
      j.campaign_id = a.campaign_id;
      j.customer = a.customer;
      j.brand = a.brand;
      j.price = a.price;
    }
    if (auto it = profile_by_id.find(imp.user_id); it != profile_by_id.end()) {
      const UserProfile& p = *it->second;
      j.profile_matched = true;
      j.cms_segid = p.cms_segid;
      j.cms_group_id = p.cms_group_id;
      j.final_gender_code = p.final_gender_code;
      j.age_level = p.age_level;
      j.pvalue_level = p.pvalue_level;
      j.shopping_level = p.shopping_level;
      j.occupation = p.occupation;
      j.new_user_class_level = p.new_user_class_level;
    }
    j.when = to_local_time(imp.time_stamp);
    out.push_back(std::move(j));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Class statistics
// ---------------------------------------------------------------------------

struct ClassStats {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double positive_rate = 0.0;
};

template <typename LabelRange>
ClassStats class_stats(const LabelRange& labels) {
  ClassStats s;
  for (auto y : labels) {
    if (y) ++s.n_pos; else ++s.n_neg;
  }
  if (s.n_pos + s.n_neg == 0) throw ValidationError("class_stats: empty stream");
  s.positive_rate = static_cast<double>(s.n_pos) / static_cast<double>(s.n_pos + s.n_neg);
  return s;
}

inline ClassStats class_stats(const std::vector<JoinedImpression>& rows) {
  std::vector<int> labels;
  labels.reserve(rows.size());
  for (const auto& r : rows) labels.push_back(r.clk);
  return class_stats(labels);
}

// ---------------------------------------------------------------------------
// Columnar view over joined impressions. Categorical values are kept as
// string tokens so that sentinel imputation ("-1", "missing") and vocabulary
// encoding share one representation.
// ---------------------------------------------------------------------------

struct ColumnFrame {
  std::size_t n_rows = 0;
  std::vector<std::int64_t> user_id;
  std::vector<std::int64_t> adgroup_id;
  std::vector<std::int64_t> time_stamp;
  std::vector<int> labels;
  std::map<std::string, std::vector<std::optional<std::string>>> cats;
  std::map<std::string, std::vector<std::optional<double>>> nums;

  bool has_cat(const std::string& name) const { return cats.count(name) > 0; }
  bool has_num(const std::string& name) const { return nums.count(name) > 0; }

  const std::vector<std::optional<std::string>>& cat(const std::string& name) const {
    auto it = cats.find(name);
    require(it != cats.end(), "unknown categorical column: " + name);
    return it->second;
  }
  const std::vector<std::optional<double>>& num(const std::string& name) const {
    auto it = nums.find(name);
    require(it != nums.end(), "unknown numeric column: " + name);
    return it->second;
  }
};

namespace detail {
inline std::optional<std::string> tok(const std::optional<std::int64_t>& v) {
  if (!v) return std::nullopt;
  return std::to_string(*v);
}
}  // namespace detail

inline ColumnFrame to_column_frame(const std::vector<JoinedImpression>& rows) {
  ColumnFrame f;
  f.n_rows = rows.size();
  f.user_id.reserve(rows.size());
  f.adgroup_id.reserve(rows.size());
  f.time_stamp.reserve(rows.size());
  f.labels.reserve(rows.size());
  const char* cat_names[] = {"pid",        "cate_id",     "campaign_id",
                             "customer",   "brand",       "cms_segid",
                             "cms_group_id", "final_gender_code", "age_level",
                             "pvalue_level", "shopping_level", "occupation",
                             "new_user_class_level", "hour", "weekday",
                             "is_weekend", "time_bin"};
  for (const char* n : cat_names) f.cats[n].reserve(rows.size());
  f.nums["price"].reserve(rows.size());

  for (const auto& r : rows) {
    f.user_id.push_back(r.user_id);
    f.adgroup_id.push_back(r.adgroup_id);
    f.time_stamp.push_back(r.time_stamp);
    f.labels.push_back(r.clk);
    f.cats["pid"].push_back(r.pid.empty() ? std::nullopt
                                          : std::optional<std::string>(r.pid));
    f.cats["cate_id"].push_back(detail::tok(r.cate_id));
    f.cats["campaign_id"].push_back(detail::tok(r.campaign_id));
    f.cats["customer"].push_back(detail::tok(r.customer));
    f.cats["brand"].push_back(detail::tok(r.brand));
    f.cats["cms_segid"].push_back(detail::tok(r.cms_segid));
    f.cats["cms_group_id"].push_back(detail::tok(r.cms_group_id));
    f.cats["final_gender_code"].push_back(detail::tok(r.final_gender_code));
    f.cats["age_level"].push_back(detail::tok(r.age_level));
    f.cats["pvalue_level"].push_back(detail::tok(r.pvalue_level));
    f.cats["shopping_level"].push_back(detail::tok(r.shopping_level));
    f.cats["occupation"].push_back(detail::tok(r.occupation));
    f.cats["new_user_class_level"].push_back(detail::tok(r.new_user_class_level));
    f.cats["hour"].push_back(std::to_string(r.when.hour));
    f.cats["weekday"].push_back(std::to_string(r.when.weekday));
    f.cats["is_weekend"].push_back(std::string(r.when.is_weekend ? "1" : "0"));
    f.cats["time_bin"].push_back(r.when.time_bin);
    f.nums["price"].push_back(r.price);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Imputation. Statistics (mode, median) are fit on the training split only.
// ---------------------------------------------------------------------------

struct SentinelRule {
  std::string value;
};
struct ModeRule {};
struct MedianRule {};
using ImputeRule = std::variant<SentinelRule, ModeRule, MedianRule>;

using ImputePolicy = std::map<std::string, ImputeRule>;

// Fill values resolved against the training split; applying them never
// touches training statistics again.
struct FittedImpute {
  std::map<std::string, std::string> cat_fill;
  std::map<std::string, double> num_fill;

  void apply(ColumnFrame& frame) const {
    for (const auto& [col, fill] : cat_fill) {
      auto it = frame.cats.find(col);
      require(it != frame.cats.end(), "impute: unknown categorical column " + col);
      for (auto& v : it->second) {
        if (!v) v = fill;
      }
    }
    for (const auto& [col, fill] : num_fill) {
      auto it = frame.nums.find(col);
      require(it != frame.nums.end(), "impute: unknown numeric column " + col);
      for (auto& v : it->second) {
        if (!v) v = fill;
      }
    }
  }
};

// `train_mask` selects the rows used for mode/median statistics; empty mask
// means all rows are training rows.
inline FittedImpute fit_impute(const ColumnFrame& frame, const ImputePolicy& policy,
                               const std::vector<bool>& train_mask = {}) {
  require(train_mask.empty() || train_mask.size() == frame.n_rows,
          "impute: train mask size mismatch");
  auto in_train = [&](std::size_t i) { return train_mask.empty() || train_mask[i]; };

  FittedImpute fit;
  for (const auto& [col, rule] : policy) {
    const bool is_cat = frame.has_cat(col);
    const bool is_num = frame.has_num(col);
    require(is_cat || is_num, "impute policy references unknown field: " + col);

    if (std::holds_alternative<SentinelRule>(rule)) {
      require(is_cat, "sentinel imputation requires a categorical column: " + col);
      fit.cat_fill[col] = std::get<SentinelRule>(rule).value;
    } else if (std::holds_alternative<ModeRule>(rule)) {
      require(is_cat, "mode imputation requires a categorical column: " + col);
      std::map<std::string, std::size_t> counts;
      const auto& values = frame.cat(col);
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (in_train(i) && values[i]) ++counts[*values[i]];
      }
      require(!counts.empty(), "mode imputation: no observed training values in " + col);
      // Most frequent; ties break toward the lexicographically smaller value
      // (std::map iteration order makes the first maximum the smallest).
      std::string best;
      std::size_t best_count = 0;
      for (const auto& [v, c] : counts) {
        if (c > best_count) {
          best = v;
          best_count = c;
        }
      }
      fit.cat_fill[col] = best;
    } else {
      require(is_num, "median imputation requires a numeric column: " + col);
      std::vector<double> seen;
      const auto& values = frame.num(col);
      for (std::size_t i = 0; i < values.size(); ++i) {
        if (in_train(i) && values[i]) seen.push_back(*values[i]);
      }
      require(!seen.empty(), "median imputation: no observed training values in " + col);
      std::sort(seen.begin(), seen.end());
      const std::size_t n = seen.size();
      fit.num_fill[col] =
          (n % 2 == 1) ? seen[n / 2] : 0.5 * (seen[n / 2 - 1] + seen[n / 2]);
    }
  }
  return fit;
}

// Built-in per-model policies.
inline ImputePolicy impute_policy_sentinel_minus1() {
  ImputePolicy p;
  for (const char* c : {"pid", "cate_id", "campaign_id", "customer", "brand",
                        "cms_segid", "cms_group_id", "final_gender_code",
                        "age_level", "pvalue_level", "shopping_level",
                        "occupation", "new_user_class_level"}) {
    p[c] = SentinelRule{"-1"};
  }
  p["price"] = MedianRule{};
  return p;
}

inline ImputePolicy impute_policy_sentinel_missing() {
  ImputePolicy p = impute_policy_sentinel_minus1();
  for (auto& [col, rule] : p) {
    if (std::holds_alternative<SentinelRule>(rule)) rule = SentinelRule{"missing"};
  }
  return p;
}

inline ImputePolicy impute_policy_mode() {
  ImputePolicy p;
  for (const char* c : {"pid", "cate_id", "campaign_id", "customer", "brand",
                        "cms_segid", "cms_group_id", "final_gender_code",
                        "age_level", "pvalue_level", "shopping_level",
                        "occupation", "new_user_class_level"}) {
    p[c] = ModeRule{};
  }
  p["price"] = MedianRule{};
  return p;
}

// ---------------------------------------------------------------------------
// Missingness report (computed, never assumed)
// ---------------------------------------------------------------------------

struct MissingnessReport {
  std::map<std::string, double> fraction_absent;
};

inline MissingnessReport missingness(const ColumnFrame& frame) {
  MissingnessReport rep;
  if (frame.n_rows == 0) return rep;
  for (const auto& [name, col] : frame.cats) {
    std::size_t absent = 0;
    for (const auto& v : col) absent += v ? 0 : 1;
    rep.fraction_absent[name] = static_cast<double>(absent) / frame.n_rows;
  }
  for (const auto& [name, col] : frame.nums) {
    std::size_t absent = 0;
    for (const auto& v : col) absent += v ? 0 : 1;
    rep.fraction_absent[name] = static_cast<double>(absent) / frame.n_rows;
  }
  return rep;
}

}  // namespace ctrkit
