#pragma once

// Independent reference implementations used as test oracles. They favour
// the most literal formulation over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace scenesynth::testing {

/// Ranks of |d| for the non-zero entries, ties averaged, by counting.
inline std::vector<double> oracle_ranks(const std::vector<double>& d) {
  std::vector<double> ranks;
  for (double x : d) {
    double below = 0, equal = 0;
    for (double y : d) {
      if (std::abs(y) < std::abs(x)) below += 1;
      if (std::abs(y) == std::abs(x)) equal += 1;
    }
    ranks.push_back(below + (equal + 1) / 2);
  }
  return ranks;
}

struct EnumerationResult {
  double w_plus = 0;
  double p = 1;
  std::size_t n = 0;
};

/// Two-sided exact Wilcoxon p by visiting all 2^n sign vectors.
inline EnumerationResult wilcoxon_by_enumeration(const std::vector<double>& a,
                                                 const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] - b[i] != 0.0) d.push_back(a[i] - b[i]);
  }
  const std::vector<double> r = oracle_ranks(d);
  const std::size_t n = d.size();
  double total = 0, observed = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += r[i];
    if (d[i] > 0) observed += r[i];
  }
  const double obs_dev = std::abs(2 * observed - total);
  std::uint64_t extreme = 0;
  const std::uint64_t count = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) w += r[i];
    }
    if (std::abs(2 * w - total) >= obs_dev) ++extreme;
  }
  return {observed, static_cast<double>(extreme) / static_cast<double>(count), n};
}

/// Holm adjusted p straight from the definition: for each i, the largest
/// (m - j + 1) p_(j) over sorted positions j up to i's sorted position.
inline std::vector<double> holm_by_definition(const std::vector<double>& p) {
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  for (std::size_t i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return p[x] < p[y]; });
  std::vector<double> out(m);
  for (std::size_t k = 0; k < m; ++k) {
    double best = 0;
    for (std::size_t j = 0; j <= k; ++j) {
      best = std::max(best, static_cast<double>(m - j) * p[order[j]]);
    }
    out[order[k]] = std::min(1.0, best);
  }
  return out;
}

/// Product-moment correlation by the raw-sums formula.
inline double pearson_by_sums(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double num = n * sxy - sx * sy;
  const long double den = std::sqrt(n * sxx - sx * sx) * std::sqrt(n * syy - sy * sy);
  return static_cast<double>(num / den);
}

struct WilcoxonFixture {
  std::vector<double> a;
  std::vector<double> b;
};

/// Frozen fixture set: the all-positive n = 5 case plus three seeded draws
/// for each n in 7..12, rounded to one decimal so tied magnitudes occur.
/// Differences are non-zero, so n is also the effective size. Below n = 7
/// the continuity-corrected normal approximation can miss the exact p by
/// more than 0.03 (0.036 at n = 6), so seeded draws start at 7.
inline std::vector<WilcoxonFixture> small_wilcoxon_fixtures() {
  std::vector<WilcoxonFixture> out;
  out.push_back({{1.1, 2.2, 3.3, 4.4, 5.5}, {0, 0, 0, 0, 0}});
  for (std::size_t n = 7; n <= 12; ++n) {
    for (std::uint64_t k = 0; k < 3; ++k) {
      std::mt19937_64 rng(1000 * n + k);
      std::normal_distribution<double> noise(0.0, 1.0);
      WilcoxonFixture f;
      while (f.a.size() < n) {
        const double base = std::round(noise(rng) * 10) / 10;
        const double diff = std::round((0.4 * static_cast<double>(k) + noise(rng)) * 10) / 10;
        if (diff == 0.0) continue;
        f.a.push_back(base + diff);
        f.b.push_back(base);
      }
      out.push_back(std::move(f));
    }
  }
  return out;
}

}  // namespace scenesynth::testing
