#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctrkit/common.hpp"
#include "ctrkit/csv.hpp"
#include "ctrkit/tables.hpp"

namespace ctrkit {

// Deterministic generator of the four tables with planted signals.
//
// Click probability per impression:
//   sigmoid(b0 + beta_static * (gender x cate effect + price-bucket effect)
//              + beta_seq * sum_j gamma^age_j * [event_j.cate == ad.cate])
// where age counts back from the user's most recent pre-window event. The
// recency weighting (gamma < 1) is what mean pooling cannot express, so the
// signal separates order-aware models from order-free ones. The intercept
// b0 is solved so the mean click probability matches the configured base
// CTR.
struct SynthConfig {
  int n_users = 5000;
  int n_ads = 2000;
  int n_cates = 100;
  int n_brands = 500;
  int n_impressions = 100000;
  double base_ctr = 0.05;
  // Shipped calibration for the planted signals.
  double beta_static = 0.6;
  double beta_seq = 1.0;
  double gamma = 0.7;
  // Heavy-tailed behavior volume: floor(exp(N(mu, sigma))), capped.
  double events_mu = 2.6;
  double events_sigma = 1.2;
  int events_cap = 400;
  double zero_event_fraction = 0.03;
  double missing_profile_fraction = 0.058;
  std::uint64_t seed = 1;
  // Behavior window strictly precedes the impression window.
  std::int64_t behavior_start = 1492300800;    // 2017-04-16 00:00 UTC
  std::int64_t behavior_end = 1494028800;      // 2017-05-06 00:00 UTC
  std::int64_t impression_start = 1494028800;  // 2017-05-06 00:00 UTC
  std::int64_t impression_end = 1494720000;    // 2017-05-14 00:00 UTC

  void validate() const {
    require(n_users >= 1 && n_ads >= 1 && n_cates >= 1 && n_brands >= 1 &&
                n_impressions >= 1,
            "synth: all counts must be >= 1");
    require(base_ctr > 0.0 && base_ctr < 1.0, "synth: base_ctr in (0,1)");
    require(gamma >= 0.0 && gamma < 1.0, "synth: gamma in [0,1)");
    require(behavior_end <= impression_start,
            "synth: behavior window must precede impressions");
  }

  json to_json() const {
    return json{{"n_users", n_users},
                {"n_ads", n_ads},
                {"n_cates", n_cates},
                {"n_brands", n_brands},
                {"n_impressions", n_impressions},
                {"base_ctr", base_ctr},
                {"beta_static", beta_static},
                {"beta_seq", beta_seq},
                {"gamma", gamma},
                {"events_mu", events_mu},
                {"events_sigma", events_sigma},
                {"events_cap", events_cap},
                {"seed", seed}};
  }
};

struct SynthOutput {
  std::vector<ImpressionRecord> impressions;
  std::vector<AdFeature> ads;
  std::vector<UserProfile> profiles;  // users with a withheld profile are absent
  std::vector<BehaviorEvent> events;
  json ground_truth;
  double realized_rate = 0.0;
};

namespace synth_detail {

// Skewed category popularity: low ids are popular.
inline int popular_cate(std::mt19937_64& rng, int n_cates) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  return std::min(n_cates - 1, static_cast<int>(u * u * n_cates));
}

inline std::int64_t brand_for_cate(int cate, int slot, int n_brands) {
  return (static_cast<std::int64_t>(cate) * 5 + slot) % n_brands;
}

inline int price_bucket(double price, const std::vector<double>& thresholds) {
  int level = 0;
  for (double t : thresholds) {
    if (price >= t) ++level;
  }
  return level;
}

}  // namespace synth_detail

inline SynthOutput generate(const SynthConfig& config) {
  config.validate();
  SynthOutput out;

  // --- users ---
  struct LatentUser {
    int gender = 1;  // 1 or 2
    int cate_early = 0, cate_late = 0;
    std::vector<int> event_cates;  // oldest -> newest
  };
  std::vector<LatentUser> users(static_cast<std::size_t>(config.n_users));
  {
    std::mt19937_64 rng(hash_combine(config.seed, 1));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> seg(0, 19), grp(0, 12), age(0, 6),
        pval(1, 3), shop(1, 3), occ(0, 1), nucl(1, 4);
    for (int u = 0; u < config.n_users; ++u) {
      auto& lu = users[static_cast<std::size_t>(u)];
      lu.gender = unif(rng) < 0.5 ? 1 : 2;
      lu.cate_early = synth_detail::popular_cate(rng, config.n_cates);
      lu.cate_late = synth_detail::popular_cate(rng, config.n_cates);
      // The withhold draw happens before the field draws so that withheld
      // users do not shift the stream for everyone after them.
      const bool withhold = unif(rng) < config.missing_profile_fraction;
      UserProfile p;
      p.userid = u;
      p.cms_segid = seg(rng);
      p.cms_group_id = grp(rng);
      p.final_gender_code = lu.gender;
      p.age_level = age(rng);
      p.pvalue_level = unif(rng) < 0.35 ? std::nullopt
                                        : std::optional<std::int64_t>(pval(rng));
      p.shopping_level = shop(rng);
      p.occupation = occ(rng);
      p.new_user_class_level = unif(rng) < 0.25
                                   ? std::nullopt
                                   : std::optional<std::int64_t>(nucl(rng));
      if (!withhold) out.profiles.push_back(p);
    }
  }

  // --- ads ---
  {
    std::mt19937_64 rng(hash_combine(config.seed, 2));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> logprice(4.5, 1.0);
    std::uniform_int_distribution<int> slot(0, 4);
    out.ads.reserve(static_cast<std::size_t>(config.n_ads));
    for (int a = 0; a < config.n_ads; ++a) {
      AdFeature ad;
      ad.adgroup_id = a;
      ad.cate_id = synth_detail::popular_cate(rng, config.n_cates);
      ad.campaign_id = 10000 + a / 2;
      ad.customer = 20000 + a / 4;
      ad.brand = unif(rng) < 0.15
                     ? std::nullopt
                     : std::optional<std::int64_t>(synth_detail::brand_for_cate(
                           static_cast<int>(ad.cate_id), slot(rng), config.n_brands));
      ad.price = std::round(std::exp(logprice(rng)) * 100.0) / 100.0;
      out.ads.push_back(ad);
    }
  }

  // Price-bucket thresholds for the planted price effect (1/7..6/7 quantiles
  // of the generated ad prices).
  std::vector<double> price_thresholds;
  {
    std::vector<double> prices;
    prices.reserve(out.ads.size());
    for (const auto& a : out.ads) prices.push_back(a.price);
    std::sort(prices.begin(), prices.end());
    for (int level = 1; level < 7; ++level) {
      const double pos = (level / 7.0) * static_cast<double>(prices.size() - 1);
      const auto lo = static_cast<std::size_t>(pos);
      const std::size_t hi = std::min(lo + 1, prices.size() - 1);
      price_thresholds.push_back(prices[lo] +
                                 (pos - static_cast<double>(lo)) * (prices[hi] - prices[lo]));
    }
  }

  // --- planted static effects ---
  std::vector<std::vector<double>> gender_cate_effect(
      2, std::vector<double>(static_cast<std::size_t>(config.n_cates)));
  std::vector<double> price_effect(7);
  {
    std::mt19937_64 rng(hash_combine(config.seed, 3));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& row : gender_cate_effect) {
      for (double& v : row) v = normal(rng);
    }
    for (double& v : price_effect) v = normal(rng);
  }

  // --- behavior log with interest drift ---
  {
    std::mt19937_64 rng(hash_combine(config.seed, 4));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> logn(config.events_mu, config.events_sigma);
    std::uniform_int_distribution<std::int64_t> when(config.behavior_start,
                                                     config.behavior_end - 1);
    std::uniform_int_distribution<int> slot(0, 4);
    for (int u = 0; u < config.n_users; ++u) {
      auto& lu = users[static_cast<std::size_t>(u)];
      int n_events = 0;
      if (unif(rng) >= config.zero_event_fraction) {
        n_events = std::min(config.events_cap,
                            static_cast<int>(std::floor(std::exp(logn(rng)))));
      }
      if (n_events <= 0) continue;
      std::vector<std::int64_t> times(static_cast<std::size_t>(n_events));
      for (auto& t : times) t = when(rng);
      std::sort(times.begin(), times.end());
      for (int i = 0; i < n_events; ++i) {
        // Interest drifts from cate_early toward cate_late over the history.
        const double ramp =
            n_events > 1 ? static_cast<double>(i) / static_cast<double>(n_events - 1)
                         : 1.0;
        int cate;
        const double pick = unif(rng);
        if (pick < 0.75) {
          cate = unif(rng) < ramp ? lu.cate_late : lu.cate_early;
        } else {
          cate = synth_detail::popular_cate(rng, config.n_cates);
        }
        BehaviorEvent e;
        e.user = u;
        e.time_stamp = times[static_cast<std::size_t>(i)];
        const double tag = unif(rng);
        e.btag = tag < 0.85   ? BehaviorTag::kPv
                 : tag < 0.91 ? BehaviorTag::kCart
                 : tag < 0.96 ? BehaviorTag::kFav
                              : BehaviorTag::kBuy;
        e.cate = cate;
        e.brand = synth_detail::brand_for_cate(cate, slot(rng), config.n_brands);
        out.events.push_back(e);
        lu.event_cates.push_back(cate);
      }
    }
  }

  // --- impressions ---
  struct PendingImpression {
    int user, ad;
    std::int64_t when;
    int pid;
    double offset;  // planted logit offset without intercept
  };
  std::vector<PendingImpression> pending;
  pending.reserve(static_cast<std::size_t>(config.n_impressions));
  {
    std::mt19937_64 rng(hash_combine(config.seed, 5));
    std::uniform_int_distribution<int> pick_user(0, config.n_users - 1);
    std::uniform_int_distribution<int> pick_ad(0, config.n_ads - 1);
    std::uniform_int_distribution<std::int64_t> when(config.impression_start,
                                                     config.impression_end - 1);
    std::uniform_int_distribution<int> pick_pid(0, 1);
    for (int i = 0; i < config.n_impressions; ++i) {
      PendingImpression imp;
      imp.user = pick_user(rng);
      imp.ad = pick_ad(rng);
      imp.when = when(rng);
      imp.pid = pick_pid(rng);

      const auto& lu = users[static_cast<std::size_t>(imp.user)];
      const auto& ad = out.ads[static_cast<std::size_t>(imp.ad)];
      double off = 0.0;
      off += config.beta_static *
             (gender_cate_effect[static_cast<std::size_t>(lu.gender - 1)]
                                [static_cast<std::size_t>(ad.cate_id)] +
              price_effect[static_cast<std::size_t>(
                  synth_detail::price_bucket(ad.price, price_thresholds))]);
      // Recency-weighted category match over the user's full history.
      double match = 0.0;
      double w = 1.0;
      for (auto it = lu.event_cates.rbegin(); it != lu.event_cates.rend(); ++it) {
        if (w < 1e-6) break;
        if (*it == ad.cate_id) match += w;
        w *= config.gamma;
      }
      off += config.beta_seq * match;
      imp.offset = off;
      pending.push_back(imp);
    }
  }

  // --- solve the intercept so mean probability equals base_ctr ---
  double b0;
  {
    auto mean_prob = [&](double b) {
      double acc = 0.0;
      for (const auto& imp : pending) {
        acc += 1.0 / (1.0 + std::exp(-(b + imp.offset)));
      }
      return acc / static_cast<double>(pending.size());
    };
    double lo = -30.0, hi = 10.0;
    for (int iter = 0; iter < 200; ++iter) {
      const double mid = 0.5 * (lo + hi);
      if (mean_prob(mid) < config.base_ctr) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    b0 = 0.5 * (lo + hi);
  }

  // --- labels ---
  {
    std::mt19937_64 rng(hash_combine(config.seed, 6));
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const char* pids[2] = {"430539_1007", "430548_1007"};
    std::size_t clicks = 0;
    out.impressions.reserve(pending.size());
    for (const auto& imp : pending) {
      const double p = 1.0 / (1.0 + std::exp(-(b0 + imp.offset)));
      ImpressionRecord r;
      r.user_id = imp.user;
      r.adgroup_id = imp.ad;
      r.time_stamp = imp.when;
      r.pid = pids[imp.pid];
      r.clk = unif(rng) < p ? 1 : 0;
      clicks += static_cast<std::size_t>(r.clk);
      out.impressions.push_back(std::move(r));
    }
    out.realized_rate = static_cast<double>(clicks) / static_cast<double>(pending.size());
  }

  out.ground_truth = json{{"config", config.to_json()},
                          {"intercept", b0},
                          {"realized_rate", out.realized_rate},
                          {"price_thresholds", price_thresholds},
                          {"price_effect", price_effect},
                          {"gender_cate_effect", gender_cate_effect}};
  return out;
}

// Writes the exact CSV schemas consumed by the ingest module, plus the
// ground-truth sidecar.
inline void write_synth_csvs(const SynthOutput& out, const std::string& dir) {
  {
    CsvWriter w(dir + "/raw_sample.csv", TableSchema<ImpressionRecord>::header());
    for (const auto& r : out.impressions) {
      w.write_row({std::to_string(r.user_id), std::to_string(r.time_stamp),
                   std::to_string(r.adgroup_id), r.pid,
                   std::to_string(1 - r.clk), std::to_string(r.clk)});
    }
  }
  {
    CsvWriter w(dir + "/ad_feature.csv", TableSchema<AdFeature>::header());
    char price[32];
    for (const auto& a : out.ads) {
      std::snprintf(price, sizeof(price), "%.2f", a.price);
      w.write_row({std::to_string(a.adgroup_id), std::to_string(a.cate_id),
                   std::to_string(a.campaign_id), std::to_string(a.customer),
                   a.brand ? std::to_string(*a.brand) : "", price});
    }
  }
  {
    CsvWriter w(dir + "/user_profile.csv", TableSchema<UserProfile>::header());
    for (const auto& p : out.profiles) {
      w.write_row({std::to_string(p.userid), std::to_string(p.cms_segid),
                   std::to_string(p.cms_group_id),
                   std::to_string(p.final_gender_code),
                   std::to_string(p.age_level),
                   p.pvalue_level ? std::to_string(*p.pvalue_level) : "",
                   std::to_string(p.shopping_level), std::to_string(p.occupation),
                   p.new_user_class_level ? std::to_string(*p.new_user_class_level)
                                          : ""});
    }
  }
  {
    CsvWriter w(dir + "/behavior_log.csv", TableSchema<BehaviorEvent>::header());
    for (const auto& e : out.events) {
      w.write_row({std::to_string(e.user), std::to_string(e.time_stamp),
                   btag_name(e.btag), std::to_string(e.cate),
                   std::to_string(e.brand)});
    }
  }
  {
    std::ofstream gt(dir + "/ground_truth.json");
    require(static_cast<bool>(gt), "cannot write ground truth file");
    gt << out.ground_truth.dump(2) << "\n";
  }
}

}  // namespace ctrkit
