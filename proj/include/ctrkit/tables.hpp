#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ctrkit/common.hpp"
#include "ctrkit/csv.hpp"

namespace ctrkit {

// The four input tables. Column names and order are fixed; empty string
// means an absent value.

struct ImpressionRecord {
  std::int64_t user_id = 0;
  std::int64_t adgroup_id = 0;
  std::int64_t time_stamp = 0;  // epoch seconds UTC
  std::string pid;
  int clk = 0;

  bool operator==(const ImpressionRecord&) const = default;
};

struct AdFeature {
  std::int64_t adgroup_id = 0;
  std::int64_t cate_id = 0;
  std::int64_t campaign_id = 0;
  std::int64_t customer = 0;
  std::optional<std::int64_t> brand;
  double price = 0.0;

  bool operator==(const AdFeature&) const = default;
};

struct UserProfile {
  std::int64_t userid = 0;
  std::int64_t cms_segid = 0;
  std::int64_t cms_group_id = 0;
  std::int64_t final_gender_code = 0;
  std::int64_t age_level = 0;
  std::optional<std::int64_t> pvalue_level;
  std::int64_t shopping_level = 0;
  std::int64_t occupation = 0;
  std::optional<std::int64_t> new_user_class_level;

  bool operator==(const UserProfile&) const = default;
};

enum class BehaviorTag { kPv, kCart, kFav, kBuy };

inline std::optional<BehaviorTag> parse_btag(const std::string& s) {
  if (s == "pv") return BehaviorTag::kPv;
  if (s == "cart") return BehaviorTag::kCart;
  if (s == "fav") return BehaviorTag::kFav;
  if (s == "buy") return BehaviorTag::kBuy;
  return std::nullopt;
}

inline const char* btag_name(BehaviorTag t) {
  switch (t) {
    case BehaviorTag::kPv: return "pv";
    case BehaviorTag::kCart: return "cart";
    case BehaviorTag::kFav: return "fav";
    case BehaviorTag::kBuy: return "buy";
  }
  return "?";
}

struct BehaviorEvent {
  std::int64_t user = 0;
  std::int64_t time_stamp = 0;
  BehaviorTag btag = BehaviorTag::kPv;
  std::int64_t cate = 0;
  std::int64_t brand = 0;

  bool operator==(const BehaviorEvent&) const = default;
};

// Per-record-type schema + field mapping.
template <typename Record>
struct TableSchema;

template <>
struct TableSchema<ImpressionRecord> {
  static std::vector<std::string> header() {
    return {"user", "time_stamp", "adgroup_id", "pid", "nonclk", "clk"};
  }
  static std::optional<ImpressionRecord> parse(const std::vector<std::string>& f,
                                               std::string& why) {
    ImpressionRecord r;
    auto user = parse_int(f[0]);
    auto ts = parse_int(f[1]);
    auto ad = parse_int(f[2]);
    auto clk = parse_int(f[5]);
    if (!user || !ts || !ad || !clk) {
      why = "non-numeric key field";
      return std::nullopt;
    }
    if (*clk != 0 && *clk != 1) {
      why = "clk not in {0,1}";
      return std::nullopt;
    }
    if (*ts <= 0) {
      why = "time_stamp must be positive";
      return std::nullopt;
    }
    r.user_id = *user;
    r.time_stamp = *ts;
    r.adgroup_id = *ad;
    r.pid = strip(f[3]);
    r.clk = static_cast<int>(*clk);
    return r;
  }
};

template <>
struct TableSchema<AdFeature> {
  static std::vector<std::string> header() {
    return {"adgroup_id", "cate_id", "campaign_id", "customer", "brand", "price"};
  }
  static std::optional<AdFeature> parse(const std::vector<std::string>& f,
                                        std::string& why) {
    AdFeature r;
    auto ad = parse_int(f[0]);
    auto cate = parse_int(f[1]);
    auto camp = parse_int(f[2]);
    auto cust = parse_int(f[3]);
    auto price = parse_double(f[5]);
    if (!ad || !cate || !camp || !cust || !price) {
      why = "non-numeric required field";
      return std::nullopt;
    }
    if (*price < 0) {
      why = "negative price";
      return std::nullopt;
    }
    r.adgroup_id = *ad;
    r.cate_id = *cate;
    r.campaign_id = *camp;
    r.customer = *cust;
    r.brand = parse_int(f[4]);  // absent stays absent
    r.price = *price;
    return r;
  }
};

template <>
struct TableSchema<UserProfile> {
  static std::vector<std::string> header() {
    return {"userid", "cms_segid", "cms_group_id", "final_gender_code",
            "age_level", "pvalue_level", "shopping_level", "occupation",
            "new_user_class_level"};
  }
  static std::optional<UserProfile> parse(const std::vector<std::string>& f,
                                          std::string& why) {
    UserProfile r;
    auto uid = parse_int(f[0]);
    auto seg = parse_int(f[1]);
    auto grp = parse_int(f[2]);
    auto gender = parse_int(f[3]);
    auto age = parse_int(f[4]);
    auto shop = parse_int(f[6]);
    auto occ = parse_int(f[7]);
    if (!uid || !seg || !grp || !gender || !age || !shop || !occ) {
      why = "non-numeric required field";
      return std::nullopt;
    }
    r.userid = *uid;
    r.cms_segid = *seg;
    r.cms_group_id = *grp;
    r.final_gender_code = *gender;
    r.age_level = *age;
    r.pvalue_level = parse_int(f[5]);
    r.shopping_level = *shop;
    r.occupation = *occ;
    r.new_user_class_level = parse_int(f[8]);
    return r;
  }
};

template <>
struct TableSchema<BehaviorEvent> {
  static std::vector<std::string> header() {
    return {"user", "time_stamp", "btag", "cate", "brand"};
  }
  static std::optional<BehaviorEvent> parse(const std::vector<std::string>& f,
                                            std::string& why) {
    BehaviorEvent r;
    auto user = parse_int(f[0]);
    auto ts = parse_int(f[1]);
    auto btag = parse_btag(strip(f[2]));
    auto cate = parse_int(f[3]);
    auto brand = parse_int(f[4]);
    if (!user || !ts || !cate || !brand) {
      why = "non-numeric required field";
      return std::nullopt;
    }
    if (!btag) {
      why = "btag not in {pv,cart,fav,buy}";
      return std::nullopt;
    }
    r.user = *user;
    r.time_stamp = *ts;
    r.btag = *btag;
    r.cate = *cate;
    r.brand = *brand;
    return r;
  }
};

template <typename Record>
struct ParseResult {
  std::vector<Record> records;
  std::size_t rows_seen = 0;       // data rows, well-formed or not
  std::size_t malformed = 0;       // counted, never silently dropped
  std::vector<CsvError> error_sample;  // first few diagnostics
};

// Streams a CSV table into typed records. The header must match the schema
// exactly; malformed rows become error records and the stream continues.
template <typename Record>
ParseResult<Record> parse_table(const std::string& path,
                                std::size_t max_error_sample = 20) {
  CsvReader reader(path);
  const auto expected = TableSchema<Record>::header();
  if (reader.header() != expected) {
    std::string want, got;
    for (const auto& c : expected) want += c + ",";
    for (const auto& c : reader.header()) got += c + ",";
    throw ValidationError("header mismatch in " + path + ": expected [" + want +
                          "] got [" + got + "]");
  }
  ParseResult<Record> result;
  std::vector<std::string> fields;
  auto on_error = [&](const CsvError& e) {
    ++result.rows_seen;
    ++result.malformed;
    if (result.error_sample.size() < max_error_sample) result.error_sample.push_back(e);
  };
  while (reader.next(fields, on_error)) {
    ++result.rows_seen;
    std::string why;
    auto rec = TableSchema<Record>::parse(fields, why);
    if (!rec) {
      ++result.malformed;
      if (result.error_sample.size() < max_error_sample) {
        result.error_sample.push_back({reader.line_no(), why});
      }
      continue;
    }
    result.records.push_back(std::move(*rec));
  }
  return result;
}

}  // namespace ctrkit
