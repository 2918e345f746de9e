#include "scenesynth/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>
#include <string_view>

namespace scenesynth::stats {
namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) /
         static_cast<double>(xs.size());
}

void require_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw StatsError(StatsErrc::LengthMismatch,
                     "paired lists differ in length: " + std::to_string(a) +
                         " vs " + std::to_string(b));
  }
}

// Null distribution of 2 W+ with doubled (integer) ranks: counts[s] is the
// number of sign assignments whose positive doubled ranks sum to s.
std::vector<std::uint64_t> doubled_rank_sum_counts(
    std::span<const std::uint64_t> doubled_ranks) {
  const std::uint64_t total =
      std::accumulate(doubled_ranks.begin(), doubled_ranks.end(),
                      std::uint64_t{0});
  std::vector<std::uint64_t> counts(total + 1, 0);
  counts[0] = 1;
  std::uint64_t reach = 0;
  for (std::uint64_t r : doubled_ranks) {
    reach += r;
    for (std::uint64_t s = reach; s >= r; --s) {
      counts[s] += counts[s - r];
      if (s == r) break;
    }
  }
  return counts;
}

}  // namespace

void PairedScores::validate() const {
  require_same_length(system_a.size(), system_b.size());
  if (!unit_ids.empty()) require_same_length(unit_ids.size(), system_a.size());
  if (system_a.size() < 2) {
    throw StatsError(StatsErrc::TooFewSamples, "need at least two units");
  }
  std::set<std::string_view> seen;
  for (const std::string& id : unit_ids) {
    if (!seen.insert(id).second) {
      throw StatsError(StatsErrc::InvalidArgument, "duplicate unit id: " + id);
    }
  }
}

std::vector<double> PairedScores::differences() const {
  validate();
  std::vector<double> d(system_a.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = system_a[i] - system_b[i];
  return d;
}

double cohens_dz(std::span<const double> diffs) {
  if (diffs.size() < 2) {
    throw StatsError(StatsErrc::TooFewSamples,
                     "d_z needs at least two differences");
  }
  const double m = mean_of(diffs);
  double ss = 0.0;
  for (double d : diffs) ss += (d - m) * (d - m);
  const double sd = std::sqrt(ss / static_cast<double>(diffs.size() - 1));
  if (sd == 0.0) {
    throw StatsError(StatsErrc::ZeroVariance, "differences have no spread");
  }
  return m / sd;
}

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::abs(values[i]) < std::abs(values[j]);
  });
  std::vector<double> ranks(n);
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start + 1;
    while (end < n &&
           std::abs(values[order[end]]) == std::abs(values[order[start]])) {
      ++end;
    }
    // Ranks start+1 .. end share their mean.
    const double rank = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) ranks[order[k]] = rank;
    start = end;
  }
  return ranks;
}

TestResult wilcoxon_signed_rank(std::span<const double> a,
                                std::span<const double> b, WilcoxonMode mode,
                                std::size_t exact_max) {
  require_same_length(a.size(), b.size());
  std::vector<double> all_diffs(a.size());
  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    all_diffs[i] = a[i] - b[i];
    if (all_diffs[i] != 0.0) diffs.push_back(all_diffs[i]);
  }
  if (diffs.empty()) {
    throw StatsError(StatsErrc::AllZeroDifferences,
                     "every paired difference is zero");
  }
  const std::size_t n = diffs.size();
  if (n < 2) {
    throw StatsError(StatsErrc::TooFewSamples,
                     "need at least two non-zero differences");
  }

  TestResult result;
  result.n_effective = n;
  try {
    result.effect_size_dz = cohens_dz(all_diffs);
  } catch (const StatsError&) {
    result.effect_size_dz = std::numeric_limits<double>::quiet_NaN();
  }

  const std::vector<double> ranks = average_ranks(diffs);
  std::vector<std::uint64_t> doubled(n);
  std::uint64_t observed2 = 0;  // 2 W+
  std::uint64_t total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    doubled[i] = static_cast<std::uint64_t>(std::llround(2.0 * ranks[i]));
    total2 += doubled[i];
    if (diffs[i] > 0) observed2 += doubled[i];
  }
  result.statistic = static_cast<double>(observed2) / 2.0;

  const bool exact = mode == WilcoxonMode::Exact ||
                     (mode == WilcoxonMode::Auto && n <= exact_max);
  result.exact = exact;
  if (exact) {
    if (n > 63) {
      throw StatsError(StatsErrc::InvalidArgument,
                       "exact mode supports at most 63 non-zero differences");
    }
    // |2 s - total| >= |2 observed - total| in doubled units.
    const auto far = [total2](std::uint64_t s) {
      const auto v = static_cast<std::int64_t>(2 * s) -
                     static_cast<std::int64_t>(total2);
      return v < 0 ? -v : v;
    };
    const std::int64_t threshold = far(observed2);
    const auto counts = doubled_rank_sum_counts(doubled);
    std::uint64_t extreme = 0;
    for (std::uint64_t s = 0; s < counts.size(); ++s) {
      if (counts[s] != 0 && far(s) >= threshold) extreme += counts[s];
    }
    result.p_value =
        static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(n));
    return result;
  }

  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  std::vector<double> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end < n && sorted[end] == sorted[start]) ++end;
    const double t = static_cast<double>(end - start);
    tie_term += t * t * t - t;
    start = end;
  }
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  const double dev = std::abs(result.statistic - mean);
  const double z = std::max(0.0, dev - 0.5) / std::sqrt(var);
  result.p_value = std::min(1.0, 2.0 * normal_upper_tail(z));
  return result;
}

TestResult wilcoxon_signed_rank(const PairedScores& scores, WilcoxonMode mode,
                                std::size_t exact_max) {
  scores.validate();
  return wilcoxon_signed_rank(scores.system_a, scores.system_b, mode,
                              exact_max);
}

std::vector<double> holm_correct(std::span<const double> p_values) {
  const std::size_t m = p_values.size();
  for (double p : p_values) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw StatsError(StatsErrc::InvalidArgument,
                       "p-values must lie in [0, 1]");
    }
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return p_values[i] < p_values[j];
  });
  std::vector<double> adjusted(m);
  double running = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const double scaled = static_cast<double>(m - k) * p_values[order[k]];
    running = std::max(running, std::min(1.0, scaled));
    adjusted[order[k]] = running;
  }
  return adjusted;
}

Interval bootstrap_ci_mean(std::span<const double> xs, std::size_t iters,
                           double level, std::mt19937_64& rng) {
  if (xs.size() < 2) {
    throw StatsError(StatsErrc::TooFewSamples,
                     "bootstrap needs at least two values");
  }
  if (!(level > 0.0 && level < 1.0) || iters == 0) {
    throw StatsError(StatsErrc::InvalidArgument,
                     "level must lie in (0, 1) and iters must be positive");
  }
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  std::vector<double> means(iters);
  for (double& m : means) {
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) total += xs[pick(rng)];
    m = total / static_cast<double>(xs.size());
  }
  std::sort(means.begin(), means.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(iters - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, iters - 1);
    const double frac = pos - static_cast<double>(lo);
    return means[lo] + frac * (means[hi] - means[lo]);
  };
  const double tail = 0.5 * (1.0 - level);
  return Interval{quantile(tail), quantile(1.0 - tail)};
}

SignAgreement sign_agreement(std::span<const EffectPair> pairs) {
  if (pairs.empty()) {
    throw StatsError(StatsErrc::TooFewSamples, "no effect pairs");
  }
  auto sign = [](double v) { return (v > 0.0) - (v < 0.0); };
  SignAgreement out;
  out.total = pairs.size();
  for (const EffectPair& p : pairs) {
    if (sign(p.dz_human) == sign(p.dz_pafi)) ++out.agreeing;
  }
  out.ratio = static_cast<double>(out.agreeing) / static_cast<double>(out.total);
  return out;
}

std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * ratio);
  return buf;
}

Correlation pearson_r(std::span<const double> xs, std::span<const double> ys) {
  require_same_length(xs.size(), ys.size());
  const std::size_t n = xs.size();
  if (n < 3) {
    throw StatsError(StatsErrc::TooFewSamples, "pearson_r needs n >= 3");
  }
  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw StatsError(StatsErrc::ZeroVariance, "a variable is constant");
  }
  Correlation out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double dof = static_cast<double>(n - 2);
  if (std::abs(out.r) >= 1.0) {
    out.p_value = 0.0;
    return out;
  }
  const double t = out.r * std::sqrt(dof / (1.0 - out.r * out.r));
  boost::math::students_t dist(dof);
  out.p_value = std::min(
      1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
  return out;
}

double normal_upper_tail(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace scenesynth::stats
