#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ctrkit/common.hpp"

namespace ctrkit {

// ---------------------------------------------------------------------------
// Normal distribution helpers. The quantile uses Acklam's rational
// approximation refined by one Halley step against the erfc-based CDF,
// which is accurate to well below 1e-9.
// ---------------------------------------------------------------------------

inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double normal_quantile(double p) {
  require(p > 0.0 && p < 1.0, "normal_quantile: p must be in (0, 1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double p_low = 0.02425, p_high = 1.0 - p_low;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= p_high) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // One Halley refinement.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

// ---------------------------------------------------------------------------
// Design & sample size
// ---------------------------------------------------------------------------

struct ExperimentDesign {
  double p_control = 0.03;
  double mde = 0.005;  // absolute difference
  double alpha = 0.05;  // two-sided
  double power = 0.8;
  std::int64_t daily_users = 5000;
  std::int64_t n_per_group = 0;    // computed
  std::int64_t duration_days = 0;  // computed

  void validate() const {
    require(p_control > 0.0 && p_control < 1.0, "design: p_control in (0,1)");
    require(mde > 0.0 && p_control + mde < 1.0, "design: mde in (0, 1-p_control)");
    require(alpha > 0.0 && alpha < 1.0, "design: alpha in (0,1)");
    require(power > 0.0 && power < 1.0, "design: power in (0,1)");
    require(daily_users > 0, "design: daily_users must be positive");
  }
};

// Normal-approximation two-proportion sample size with unpooled variance:
//   n = ceil((z_{1-a/2} + z_power)^2 (p1 q1 + p2 q2) / mde^2),  p2 = p1 + mde
inline std::int64_t sample_size(double p1, double mde, double alpha, double power) {
  ExperimentDesign d;
  d.p_control = p1;
  d.mde = mde;
  d.alpha = alpha;
  d.power = power;
  d.validate();
  const double p2 = p1 + mde;
  const double z_a = normal_quantile(1.0 - alpha / 2.0);
  const double z_b = normal_quantile(power);
  const double var = p1 * (1.0 - p1) + p2 * (1.0 - p2);
  const double n = (z_a + z_b) * (z_a + z_b) * var / (mde * mde);
  return static_cast<std::int64_t>(std::ceil(n));
}

inline std::int64_t duration_days(std::int64_t n_per_group, std::int64_t daily_users) {
  require(daily_users > 0, "duration: daily_users must be positive");
  return (2 * n_per_group + daily_users - 1) / daily_users;
}

// ---------------------------------------------------------------------------
// Two-proportion z-test. Pooled proportion for the statistic, unpooled
// standard error for the confidence interval. diff = p_b - p_a.
// ---------------------------------------------------------------------------

struct ZTestResult {
  double p_a = 0.0, p_b = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // two-sided
  double diff = 0.0;
  double ci_low = 0.0, ci_high = 0.0;
};

inline ZTestResult ztest(std::int64_t c_a, std::int64_t n_a, std::int64_t c_b,
                         std::int64_t n_b, double alpha = 0.05) {
  require(n_a > 0 && n_b > 0, "ztest: zero exposures");
  require(c_a >= 0 && c_a <= n_a && c_b >= 0 && c_b <= n_b,
          "ztest: clicks must be within [0, exposures]");
  ZTestResult r;
  r.p_a = static_cast<double>(c_a) / static_cast<double>(n_a);
  r.p_b = static_cast<double>(c_b) / static_cast<double>(n_b);
  r.diff = r.p_b - r.p_a;
  const double pooled = static_cast<double>(c_a + c_b) / static_cast<double>(n_a + n_b);
  const double se_pooled = std::sqrt(pooled * (1.0 - pooled) *
                                     (1.0 / static_cast<double>(n_a) +
                                      1.0 / static_cast<double>(n_b)));
  r.z = se_pooled > 0.0 ? r.diff / se_pooled : 0.0;
  r.p_value = se_pooled > 0.0 ? 2.0 * (1.0 - normal_cdf(std::fabs(r.z))) : 1.0;
  const double se_unpooled =
      std::sqrt(r.p_a * (1.0 - r.p_a) / static_cast<double>(n_a) +
                r.p_b * (1.0 - r.p_b) / static_cast<double>(n_b));
  const double z_crit = normal_quantile(1.0 - alpha / 2.0);
  r.ci_low = r.diff - z_crit * se_unpooled;
  r.ci_high = r.diff + z_crit * se_unpooled;
  return r;
}

// ---------------------------------------------------------------------------
// Monte-Carlo power: rejection fraction over seeded binomial draws.
// Per-trial seeds derive from (seed, trial), so aggregation is order
// independent.
// ---------------------------------------------------------------------------

inline double simulate_power(double p1, double p2, std::int64_t n, double alpha,
                             int trials, std::uint64_t seed) {
  require(p1 > 0.0 && p1 < 1.0 && p2 > 0.0 && p2 < 1.0, "power: bad proportions");
  require(n > 0 && trials > 0, "power: n and trials must be positive");
  int rejected = 0;
  for (int t = 0; t < trials; ++t) {
    std::mt19937_64 rng(hash_combine(seed, static_cast<std::uint64_t>(t)));
    std::binomial_distribution<std::int64_t> draw_a(n, p1);
    std::binomial_distribution<std::int64_t> draw_b(n, p2);
    const std::int64_t c_a = draw_a(rng);
    const std::int64_t c_b = draw_b(rng);
    if (ztest(c_a, n, c_b, n, alpha).p_value < alpha) ++rejected;
  }
  return static_cast<double>(rejected) / static_cast<double>(trials);
}

// ---------------------------------------------------------------------------
// Assignment: persistent 50/50 bucketing by seeded hash of the user id. The
// hash ignores the stratum and every other user, which is what makes the
// assignment persistent across calls and call orders; strata are recorded
// for the balance report.
// ---------------------------------------------------------------------------

enum class Group : std::uint8_t { kA = 0, kB = 1 };

struct Assignment {
  std::map<std::int64_t, Group> group_of;
  std::vector<std::string> strata_keys;
  std::uint64_t seed = 0;
};

inline Group assign_one(std::int64_t user_id, std::uint64_t seed) {
  const std::uint64_t h = hash_combine(seed, static_cast<std::uint64_t>(user_id));
  return (h & 1ULL) ? Group::kB : Group::kA;
}

inline Assignment assign(const std::vector<std::int64_t>& user_ids,
                         const std::vector<std::string>& strata_keys,
                         std::uint64_t seed) {
  Assignment a;
  a.seed = seed;
  a.strata_keys = strata_keys;
  for (std::int64_t uid : user_ids) {
    a.group_of[uid] = assign_one(uid, seed);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Balance check: per covariate level, the standardized difference of group
// shares; |share_A - share_B| / SE(pooled). Flag above 3.
// ---------------------------------------------------------------------------

struct BalanceEntry {
  std::string covariate;
  std::string level;
  double share_a = 0.0, share_b = 0.0;
  double stat = 0.0;
  bool flagged = false;
};

inline std::vector<BalanceEntry> balance_check(
    const std::vector<Group>& groups,
    const std::map<std::string, std::vector<std::string>>& covariates,
    double flag_threshold = 3.0) {
  std::size_t n_a = 0, n_b = 0;
  for (Group g : groups) (g == Group::kA ? n_a : n_b) += 1;
  require(n_a > 0 && n_b > 0, "balance_check: both groups must be non-empty");

  std::vector<BalanceEntry> report;
  for (const auto& [name, values] : covariates) {
    require(values.size() == groups.size(), "balance_check: covariate size mismatch");
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;  // level -> (A, B)
    for (std::size_t i = 0; i < groups.size(); ++i) {
      auto& c = counts[values[i]];
      (groups[i] == Group::kA ? c.first : c.second) += 1;
    }
    for (const auto& [level, c] : counts) {
      BalanceEntry e;
      e.covariate = name;
      e.level = level;
      e.share_a = static_cast<double>(c.first) / static_cast<double>(n_a);
      e.share_b = static_cast<double>(c.second) / static_cast<double>(n_b);
      const double pooled = static_cast<double>(c.first + c.second) /
                            static_cast<double>(n_a + n_b);
      const double se = std::sqrt(pooled * (1.0 - pooled) *
                                  (1.0 / static_cast<double>(n_a) +
                                   1.0 / static_cast<double>(n_b)));
      e.stat = se > 0.0 ? std::fabs(e.share_a - e.share_b) / se : 0.0;
      e.flagged = e.stat > flag_threshold;
      report.push_back(std::move(e));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Observed outcome per group.
// ---------------------------------------------------------------------------

struct ExperimentResult {
  std::int64_t exposures_a = 0, clicks_a = 0;
  std::int64_t exposures_b = 0, clicks_b = 0;

  double ctr_a() const {
    require(exposures_a > 0, "result: zero exposures in group A");
    return static_cast<double>(clicks_a) / static_cast<double>(exposures_a);
  }
  double ctr_b() const {
    require(exposures_b > 0, "result: zero exposures in group B");
    return static_cast<double>(clicks_b) / static_cast<double>(exposures_b);
  }
};

// Fills in the computed fields of a design.
inline ExperimentDesign plan_experiment(ExperimentDesign d) {
  d.validate();
  d.n_per_group = sample_size(d.p_control, d.mde, d.alpha, d.power);
  d.duration_days = duration_days(d.n_per_group, d.daily_users);
  return d;
}

}  // namespace ctrkit
