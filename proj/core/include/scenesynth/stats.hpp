#pragma once

// Paired significance testing: Wilcoxon signed-rank, Holm step-down
// correction, Cohen's d_z, percentile bootstrap, and the effect-size
// agreement analysis (sign agreement plus Pearson correlation).

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::stats {

enum class StatsErrc {
  TooFewSamples,
  ZeroVariance,
  AllZeroDifferences,
  LengthMismatch,
  InvalidArgument,
};

using StatsError = CodedError<StatsErrc>;

/// Per-unit aligned scores of two systems.
struct PairedScores {
  std::vector<std::string> unit_ids;
  std::vector<double> system_a;
  std::vector<double> system_b;

  void validate() const;
  /// a - b per unit.
  std::vector<double> differences() const;
};

struct TestResult {
  double statistic = 0.0;  // W+, sum of ranks of positive differences
  double p_value = 1.0;
  double effect_size_dz = 0.0;  // NaN when the differences have no spread
  std::size_t n_effective = 0;  // after dropping zero differences
  bool exact = false;
};

/// mean(d) / sd(d), sd with Bessel's correction.
double cohens_dz(std::span<const double> diffs);

enum class WilcoxonMode {
  Exact,   // exact null distribution of W+
  Approx,  // normal approximation, tie-corrected, continuity 0.5
  Auto,    // Exact when n_effective <= exact_max, else Approx
};

inline constexpr std::size_t kDefaultExactMax = 12;

/// Two-sided paired test on a - b. Zero differences are discarded and tied
/// magnitudes share their average rank. The exact p is the share of the 2^n
/// equally likely sign assignments whose W+ lies at least as far from its
/// mean as the observed one.
TestResult wilcoxon_signed_rank(std::span<const double> a,
                                std::span<const double> b,
                                WilcoxonMode mode = WilcoxonMode::Auto,
                                std::size_t exact_max = kDefaultExactMax);
TestResult wilcoxon_signed_rank(const PairedScores& scores,
                                WilcoxonMode mode = WilcoxonMode::Auto,
                                std::size_t exact_max = kDefaultExactMax);

/// Average ranks (1-based) of |values|, ties sharing their mean rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Holm step-down adjusted p-values in the input order.
std::vector<double> holm_correct(std::span<const double> p_values);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap of the mean, linear interpolation between order
/// statistics. Deterministic for a given rng state.
Interval bootstrap_ci_mean(std::span<const double> xs, std::size_t iters,
                           double level, std::mt19937_64& rng);

struct EffectPair {
  std::string label;  // e.g. "GT-DA/SMA"
  double dz_human = 0.0;
  double dz_pafi = 0.0;
};

struct SignAgreement {
  double ratio = 0.0;
  std::size_t agreeing = 0;
  std::size_t total = 0;
};

/// Counts pairs whose effect sizes share a sign. A zero only agrees with
/// another zero.
SignAgreement sign_agreement(std::span<const EffectPair> pairs);

/// Ratio as a percentage string with one decimal, e.g. "81.0%".
std::string format_percent(double ratio);

struct Correlation {
  double r = 0.0;
  double p_value = 1.0;  // two-sided, Student t with n - 2 dof
};

Correlation pearson_r(std::span<const double> xs, std::span<const double> ys);

/// Standard normal upper tail P(Z > z).
double normal_upper_tail(double z);

}  // namespace scenesynth::stats
