#include "scenesynth/report.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <json.hpp>

#include "property.hpp"

namespace scenesynth::report {
namespace {

using scenesynth::testing::for_all;
using scenesynth::testing::pick;

MetricReport fad_report(std::vector<std::pair<std::string, double>> values,
                        const std::string& category = "SMA") {
  MetricReport r{"FAD", Direction::Lower, {}};
  for (auto& [system, v] : values) r.results.push_back({system, category, v, 10, std::nullopt});
  return r;
}

TEST(DirectionTest, Defaults) {
  EXPECT_EQ(default_direction("FAD"), Direction::Lower);
  EXPECT_EQ(default_direction("wer"), Direction::Lower);
  EXPECT_EQ(default_direction("Fd"), Direction::Lower);
  EXPECT_EQ(default_direction("KL"), Direction::Lower);
  EXPECT_EQ(default_direction("COS"), Direction::Higher);
  EXPECT_EQ(default_direction("PAFI"), Direction::Higher);
}

TEST(MetricReportTest, JsonRoundTrip) {
  MetricReport r = fad_report({{"ours", 2.17}, {"pipe", 6.38}});
  r.results[0].value_x100 = 217;
  const MetricReport back = metric_report_from_json(to_json(r));
  EXPECT_EQ(back.metric, "FAD");
  ASSERT_EQ(back.results.size(), 2u);
  EXPECT_EQ(back.results[0].value_x100, 217);
  EXPECT_EQ(back.results[1].value, 6.38);
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(nlohmann::json::parse(to_json(r))["schema"], kMetricSchema);
  EXPECT_THROW(metric_report_from_json(R"({"schema":"nope"})"), ReportError);
}

TEST(StatsReportTest, RejectsAdjustedBelowRaw) {
  StatsReport s{"COS", "holm", 12, {{"SMA", {{"a", "b", 3, 0.04, 0.02, 0.5, 6, true}}}}};
  EXPECT_THROW(stats_report_from_json(to_json(s)), ReportError);
  s.blocks[0].comparisons[0].p_adjusted = 0.08;
  EXPECT_EQ(to_json(stats_report_from_json(to_json(s))), to_json(s));
}

TEST(ScoresCsvTest, ParseAndFormat) {
  const auto rows = parse_scores_csv("system,unit_id,score,metric\nA,u1,0.5,COS\nB,u1,0.25,COS\n");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].unit_id, "u1");
  EXPECT_EQ(rows[1].score, 0.25);
  EXPECT_EQ(rows[0].category, kOverallCategory);
  EXPECT_EQ(parse_scores_csv(format_scores_csv(rows)).size(), 2u);
  EXPECT_THROW(parse_scores_csv("unit_id,system,score\nu,A,1\n"), ReportError);
  EXPECT_THROW(parse_scores_csv("unit_id,system,metric,score\nu,A,COS,abc\n"), ReportError);
}

std::vector<ScoreRow> paired_rows(const std::string& category, std::size_t n,
                                  std::vector<std::pair<std::string, double>> systems) {
  std::vector<ScoreRow> rows;
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& [s, shift] : systems) {
      rows.push_back({"u" + std::to_string(i), s, "COS", static_cast<double>(i % 3) + shift +
                                                           0.01 * static_cast<double>(i),
                      category});
    }
  }
  return rows;
}

TEST(RunStatsTestTest, HolmWithinEachCategoryBlock) {
  auto rows = paired_rows("SMA", 8, {{"A", 0}, {"B", 0.5}, {"C", 1.0}});
  auto more = paired_rows("S00", 8, {{"A", 0}, {"B", -0.5}, {"C", 0}});
  rows.insert(rows.end(), more.begin(), more.end());
  const StatsReport r = run_stats_test(rows, {.metric = "COS"});
  ASSERT_EQ(r.blocks.size(), 2u);
  EXPECT_EQ(r.blocks[0].category, "S00");
  EXPECT_EQ(r.blocks[1].category, "SMA");
  for (const StatsBlock& b : r.blocks) {
    ASSERT_EQ(b.comparisons.size(), 3u);
    std::vector<double> raw;
    for (const Comparison& c : b.comparisons) raw.push_back(c.p_value);
    const auto adj = stats::holm_correct(raw);
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_EQ(b.comparisons[i].p_adjusted, adj[i]);
      EXPECT_GE(b.comparisons[i].p_adjusted, b.comparisons[i].p_value);
    }
  }
  // A vs C in S00 has only zero differences.
  const Comparison& ac = r.blocks[0].comparisons[1];
  EXPECT_EQ(ac.system_a, "A");
  EXPECT_EQ(ac.system_b, "C");
  EXPECT_EQ(ac.p_value, 1.0);
  EXPECT_EQ(ac.n_effective, 0u);
  // A vs B in SMA: all 8 differences are -0.5, exact two-sided p = 2/256.
  const Comparison& ab = r.blocks[1].comparisons[0];
  EXPECT_EQ(ab.p_value, 2.0 / 256.0);
  EXPECT_TRUE(ab.exact);
}

TEST(RunStatsTestTest, ExplicitPairsAndNoCorrection) {
  const auto rows = paired_rows("overall", 6, {{"A", 0}, {"B", 0.5}, {"C", 1.0}});
  const StatsReport r = run_stats_test(rows, {.metric = "COS", .pairs = {{"C", "A"}}, .holm = false});
  ASSERT_EQ(r.blocks.size(), 1u);
  ASSERT_EQ(r.blocks[0].comparisons.size(), 1u);
  const Comparison& c = r.blocks[0].comparisons[0];
  EXPECT_EQ(c.system_a, "C");
  EXPECT_EQ(c.p_value, c.p_adjusted);
  EXPECT_EQ(c.statistic, 21.0);
  EXPECT_EQ(r.correction, "none");
}

TEST(AggregateTest, SingleSystemHasNoFlags) {
  const EvalReport r = aggregate_report({fad_report({{"ours", 2.17}})}, {}, {});
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_TRUE(r.rows[0].best.empty());
  EXPECT_TRUE(r.rows[0].second_best.empty());
}

TEST(AggregateTest, LowerFadIsBestAndHigherCosineIsBest) {
  MetricReport cos{"COS", Direction::Higher, {}};
  cos.results = {{"ours", "SMA", 0.31, 10, 31.0}, {"pipe", "SMA", 0.27, 10, 27.0}};
  const EvalReport r =
      aggregate_report({fad_report({{"ours", 2.17}, {"pipe", 6.38}}), cos}, {}, {});
  ASSERT_EQ(r.rows.size(), 2u);
  const TableRow& ours = r.rows[0].system == "ours" ? r.rows[0] : r.rows[1];
  const TableRow& pipe = r.rows[0].system == "ours" ? r.rows[1] : r.rows[0];
  EXPECT_TRUE(ours.best.contains("FAD"));
  EXPECT_TRUE(ours.best.contains("COS"));
  EXPECT_TRUE(pipe.second_best.contains("FAD"));
  EXPECT_FALSE(pipe.best.contains("FAD"));
  const std::string text = to_text(r);
  EXPECT_NE(text.find("2.17"), std::string::npos);
  const std::string csv = to_csv(r);
  EXPECT_NE(csv.find("best"), std::string::npos);
}

TEST(AggregateTest, SchemaErrors) {
  EXPECT_THROW(aggregate_report({fad_report({{"a", 1}, {"a", 2}})}, {}, {}), ReportError);
  MetricReport up = fad_report({{"b", 1}});
  up.direction = Direction::Higher;
  EXPECT_THROW(aggregate_report({fad_report({{"a", 1}}), up}, {}, {}), ReportError);
  StatsReport bad{"FAD", "holm", 12, {{"SMA", {{"a", "b", 3, 0.04, 0.02, 0.5, 6, true}}}}};
  EXPECT_THROW(aggregate_report({}, {bad}, {}), ReportError);
}

TEST(AggregateTest, FlagsMatchNaiveScanOracle) {
  for_all(300, 2024, [](std::mt19937_64& rng, std::size_t) {
    const std::size_t systems = 1 + pick(rng, 5);
    const bool lower = pick(rng, 2) == 0;
    MetricReport m{"M", lower ? Direction::Lower : Direction::Higher, {}};
    std::map<std::string, double> values;
    for (std::size_t s = 0; s < systems; ++s) {
      const double v = static_cast<double>(pick(rng, 6));
      values["s" + std::to_string(s)] = v;
      m.results.push_back({"s" + std::to_string(s), "SMA", v, 5, std::nullopt});
    }
    // Oracle: best value, then the next distinct value.
    std::set<double> distinct;
    for (auto& [_, v] : values) distinct.insert(v);
    std::vector<double> ranked(distinct.begin(), distinct.end());
    if (!lower) std::reverse(ranked.begin(), ranked.end());
    const EvalReport r = aggregate_report({m}, {}, {});
    for (const TableRow& row : r.rows) {
      const double v = values.at(row.system);
      const bool want_best = systems >= 2 && v == ranked[0];
      const bool want_second = systems >= 2 && ranked.size() > 1 && v == ranked[1];
      EXPECT_EQ(row.best.contains("M"), want_best) << row.system;
      EXPECT_EQ(row.second_best.contains("M"), want_second) << row.system;
      if (row.best.contains("M")) {
        for (auto& [_, other] : values) EXPECT_FALSE(lower ? other < v : other > v);
      }
    }
  });
}

TEST(EvalReportTest, JsonRoundTripAndMetadata) {
  ReportMetadata meta{"0.1.0", fnv1a64_hex("abc"), {7, 8}, "2023-11-14T22:13:20Z", {"a.json"}};
  StatsReport s{"FAD", "holm", 12, {{"SMA", {{"ours", "pipe", 3, 0.04, 0.08, -0.5, 6, true}}}}};
  const EvalReport r =
      aggregate_report({fad_report({{"ours", 2.17}, {"pipe", 6.38}})}, {s}, meta);
  ASSERT_EQ(r.statistics.size(), 1u);
  const std::string json = to_json(r);
  EXPECT_EQ(nlohmann::json::parse(json)["schema"], kEvalSchema);
  const EvalReport back = eval_report_from_json(json);
  EXPECT_EQ(to_json(back), json);
  EXPECT_EQ(back.metadata.seeds, (std::vector<std::uint64_t>{7, 8}));
}

TEST(HashTest, FnvKnownVectors) {
  EXPECT_EQ(fnv1a64_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a64_hex("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(fnv1a64_hex("foobar"), "85944171f73967e8");
}

TEST(TimestampTest, HonoursSourceDateEpoch) {
  ::setenv("SOURCE_DATE_EPOCH", "1700000000", 1);
  EXPECT_EQ(report_timestamp(), "2023-11-14T22:13:20Z");
  ::unsetenv("SOURCE_DATE_EPOCH");
  EXPECT_EQ(report_timestamp().size(), 20u);
}

}  // namespace
}  // namespace scenesynth::report
