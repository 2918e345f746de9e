#pragma once

// Metric and significance report documents, and their aggregation into one
// per-category results table.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scenesynth/error.hpp"
#include "scenesynth/stats.hpp"

namespace scenesynth::report {

enum class ReportErrc { SchemaError };

using ReportError = CodedError<ReportErrc>;

inline constexpr std::string_view kMetricSchema = "scenesynth.metric-report.v1";
inline constexpr std::string_view kStatsSchema = "scenesynth.stats-report.v1";
inline constexpr std::string_view kEvalSchema = "scenesynth.eval-report.v1";
inline constexpr std::string_view kOverallCategory = "overall";

enum class Direction { Lower, Higher };

std::string_view to_string(Direction d) noexcept;
/// fad, fd, kl and wer are lower-is-better; everything else higher.
Direction default_direction(std::string_view metric);

struct MetricResult {
  std::string system;
  std::string category;
  double value = 0.0;
  std::size_t n = 0;
  /// value * 100, filled for cosine relevance.
  std::optional<double> value_x100;
};

struct MetricReport {
  std::string metric;
  Direction direction = Direction::Lower;
  std::vector<MetricResult> results;
};

std::string to_json(const MetricReport& report);
MetricReport metric_report_from_json(std::string_view text);

struct Comparison {
  std::string system_a;
  std::string system_b;
  double statistic = 0.0;
  double p_value = 1.0;
  double p_adjusted = 1.0;
  std::optional<double> effect_size_dz;
  std::size_t n_effective = 0;
  bool exact = false;
};

struct StatsBlock {
  std::string category;
  std::vector<Comparison> comparisons;
};

struct StatsReport {
  std::string metric;
  std::string correction = "holm";
  std::size_t exact_max = stats::kDefaultExactMax;
  std::vector<StatsBlock> blocks;
};

std::string to_json(const StatsReport& report);
StatsReport stats_report_from_json(std::string_view text);

/// One row of a scores CSV: unit_id,system,metric,score[,category].
struct ScoreRow {
  std::string unit_id;
  std::string system;
  std::string metric;
  double score = 0.0;
  std::string category{kOverallCategory};
};

std::vector<ScoreRow> parse_scores_csv(std::string_view text);
std::string format_scores_csv(const std::vector<ScoreRow>& rows);

struct StatsTestOptions {
  std::string metric;
  /// Empty compares every pair of systems, in sorted order.
  std::vector<std::pair<std::string, std::string>> pairs;
  std::size_t exact_max = stats::kDefaultExactMax;
  bool holm = true;
};

/// Paired Wilcoxon tests per (category, system pair), aligned by unit_id,
/// with Holm correction applied within each category block. A pair with
/// fewer than two non-zero differences is reported with p = 1 and
/// n_effective = 0.
StatsReport run_stats_test(const std::vector<ScoreRow>& rows,
                           const StatsTestOptions& options);

struct Column {
  std::string metric;
  Direction direction = Direction::Lower;
};

struct TableRow {
  std::string category;
  std::string system;
  std::map<std::string, double> values;  // metric -> value
  std::set<std::string> best;
  std::set<std::string> second_best;
};

struct StatisticRow {
  std::string metric;
  std::string category;
  Comparison comparison;
};

struct ReportMetadata {
  std::string tool_version;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::string generated_at;
  std::vector<std::string> inputs;
};

struct EvalReport {
  ReportMetadata metadata;
  std::vector<Column> columns;
  std::vector<TableRow> rows;
  std::vector<StatisticRow> statistics;
};

/// Merges metric values into one row per (category, system) and flags, per
/// category and column, the best value and the next distinct one. Fewer than
/// two systems in a cell group means no flags. Throws SchemaError on
/// conflicting duplicates, mixed directions or adjusted p below raw p.
EvalReport aggregate_report(const std::vector<MetricReport>& metrics,
                            const std::vector<StatsReport>& statistics,
                            ReportMetadata metadata);

std::string to_json(const EvalReport& report);
EvalReport eval_report_from_json(std::string_view text);
std::string to_csv(const EvalReport& report);
std::string to_text(const EvalReport& report);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a64_hex(std::string_view bytes);

/// SOURCE_DATE_EPOCH as ISO-8601 UTC when set, else the current time.
std::string report_timestamp();

}  // namespace scenesynth::report
