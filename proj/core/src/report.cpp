#include "scenesynth/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <json.hpp>
#include <sstream>

#include "scenesynth/caption.hpp"

namespace scenesynth::report {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& what) {
  throw ReportError(ReportErrc::SchemaError, what);
}

json parse_json(std::string_view text, std::string_view schema) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    schema_error(std::string("malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema") || doc["schema"] != schema) {
    schema_error("expected schema " + std::string(schema));
  }
  return doc;
}

Direction direction_from_string(const std::string& s) {
  if (s == "lower") return Direction::Lower;
  if (s == "higher") return Direction::Higher;
  schema_error("unknown direction " + s);
}

void check_probability(double p, const char* field) {
  if (!(p >= 0.0 && p <= 1.0)) {
    schema_error(std::string(field) + " outside [0, 1]");
  }
}

// MECAT codes in their usual order, then "overall", then anything else.
std::pair<int, std::string> category_key(const std::string& category) {
  if (auto c = caption::category_from_code(category)) {
    return {static_cast<int>(*c), category};
  }
  if (category == kOverallCategory) return {100, category};
  return {200, category};
}

bool category_less(const std::string& a, const std::string& b) {
  return category_key(a) < category_key(b);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return fields;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string format_full(double v) {
  char buf[64];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, end) : std::string("nan");
}

json comparison_json(const Comparison& c) {
  return {{"system_a", c.system_a},
          {"system_b", c.system_b},
          {"statistic", c.statistic},
          {"p_value", c.p_value},
          {"p_adjusted", c.p_adjusted},
          {"effect_size_dz", c.effect_size_dz ? json(*c.effect_size_dz) : json(nullptr)},
          {"n_effective", c.n_effective},
          {"exact", c.exact}};
}

Comparison comparison_from(const json& j) {
  Comparison c;
  c.system_a = j.at("system_a").get<std::string>();
  c.system_b = j.at("system_b").get<std::string>();
  c.statistic = j.at("statistic").get<double>();
  c.p_value = j.at("p_value").get<double>();
  c.p_adjusted = j.at("p_adjusted").get<double>();
  if (!j.at("effect_size_dz").is_null()) c.effect_size_dz = j["effect_size_dz"].get<double>();
  c.n_effective = j.at("n_effective").get<std::size_t>();
  c.exact = j.at("exact").get<bool>();
  check_probability(c.p_value, "p_value");
  check_probability(c.p_adjusted, "p_adjusted");
  if (c.p_adjusted < c.p_value) {
    schema_error("adjusted p below raw p for " + c.system_a + " vs " + c.system_b);
  }
  return c;
}

template <typename Fn>
auto guarded(Fn fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const json::exception& e) {
    schema_error(std::string("schema violation: ") + e.what());
  }
}

}  // namespace

std::string_view to_string(Direction d) noexcept {
  return d == Direction::Lower ? "lower" : "higher";
}

Direction default_direction(std::string_view metric) {
  std::string lower(metric);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (std::string_view m : {"fad", "fd", "kl", "wer"}) {
    if (lower == m) return Direction::Lower;
  }
  return Direction::Higher;
}

std::string to_json(const MetricReport& report) {
  json doc{{"schema", kMetricSchema},
           {"metric", report.metric},
           {"direction", to_string(report.direction)},
           {"results", json::array()}};
  for (const MetricResult& r : report.results) {
    json entry{{"system", r.system}, {"category", r.category}, {"value", r.value}, {"n", r.n}};
    if (r.value_x100) entry["value_x100"] = *r.value_x100;
    doc["results"].push_back(std::move(entry));
  }
  return doc.dump(2) + "\n";
}

MetricReport metric_report_from_json(std::string_view text) {
  const json doc = parse_json(text, kMetricSchema);
  return guarded([&] {
    MetricReport report;
    report.metric = doc.at("metric").get<std::string>();
    report.direction = direction_from_string(doc.at("direction").get<std::string>());
    for (const json& r : doc.at("results")) {
      if (!r.at("value").is_number()) schema_error("metric value is not a number");
      MetricResult result{r.at("system").get<std::string>(), r.at("category").get<std::string>(),
                          r.at("value").get<double>(), r.value("n", std::size_t{0}),
                          std::nullopt};
      if (r.contains("value_x100")) result.value_x100 = r["value_x100"].get<double>();
      report.results.push_back(std::move(result));
    }
    return report;
  });
}

std::string to_json(const StatsReport& report) {
  json doc{{"schema", kStatsSchema},
           {"metric", report.metric},
           {"correction", report.correction},
           {"exact_max", report.exact_max},
           {"blocks", json::array()}};
  for (const StatsBlock& b : report.blocks) {
    json block{{"category", b.category}, {"comparisons", json::array()}};
    for (const Comparison& c : b.comparisons) block["comparisons"].push_back(comparison_json(c));
    doc["blocks"].push_back(std::move(block));
  }
  return doc.dump(2) + "\n";
}

StatsReport stats_report_from_json(std::string_view text) {
  const json doc = parse_json(text, kStatsSchema);
  return guarded([&] {
    StatsReport report;
    report.metric = doc.at("metric").get<std::string>();
    report.correction = doc.at("correction").get<std::string>();
    report.exact_max = doc.at("exact_max").get<std::size_t>();
    for (const json& b : doc.at("blocks")) {
      StatsBlock block{b.at("category").get<std::string>(), {}};
      for (const json& c : b.at("comparisons")) block.comparisons.push_back(comparison_from(c));
      report.blocks.push_back(std::move(block));
    }
    return report;
  });
}

std::vector<ScoreRow> parse_scores_csv(std::string_view text) {
  std::vector<ScoreRow> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::string> header;
  std::size_t line_no = 0;
  int col_unit = -1, col_system = -1, col_metric = -1, col_score = -1, col_category = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (header.empty()) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        header.emplace_back(fields[i]);
        const int idx = static_cast<int>(i);
        if (fields[i] == "unit_id") col_unit = idx;
        if (fields[i] == "system") col_system = idx;
        if (fields[i] == "metric") col_metric = idx;
        if (fields[i] == "score") col_score = idx;
        if (fields[i] == "category") col_category = idx;
      }
      if (col_unit < 0 || col_system < 0 || col_metric < 0 || col_score < 0) {
        schema_error("scores header must name unit_id, system, metric and score");
      }
      continue;
    }
    if (fields.size() != header.size()) {
      schema_error("line " + std::to_string(line_no) + ": expected " +
                   std::to_string(header.size()) + " fields");
    }
    ScoreRow row;
    row.unit_id = fields[col_unit];
    row.system = fields[col_system];
    row.metric = fields[col_metric];
    const std::string_view score = fields[col_score];
    const auto [end, ec] = std::from_chars(score.data(), score.data() + score.size(), row.score);
    if (ec != std::errc{} || end != score.data() + score.size() || !std::isfinite(row.score)) {
      schema_error("line " + std::to_string(line_no) + ": bad score");
    }
    if (col_category >= 0 && !fields[col_category].empty()) {
      row.category = fields[col_category];
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_scores_csv(const std::vector<ScoreRow>& rows) {
  std::string out = "unit_id,system,metric,score,category\n";
  for (const ScoreRow& r : rows) {
    out += r.unit_id + "," + r.system + "," + r.metric + "," + format_full(r.score) + "," +
           r.category + "\n";
  }
  return out;
}

StatsReport run_stats_test(const std::vector<ScoreRow>& rows, const StatsTestOptions& options) {
  // category -> system -> unit -> score
  std::map<std::string, std::map<std::string, std::map<std::string, double>>> table;
  for (const ScoreRow& r : rows) {
    if (r.metric != options.metric) continue;
    auto [it, inserted] = table[r.category][r.system].emplace(r.unit_id, r.score);
    if (!inserted) {
      schema_error("duplicate score for unit " + r.unit_id + " of " + r.system);
    }
  }
  if (table.empty()) schema_error("no scores for metric " + options.metric);

  StatsReport report;
  report.metric = options.metric;
  report.correction = options.holm ? "holm" : "none";
  report.exact_max = options.exact_max;

  std::vector<std::string> categories;
  for (const auto& [category, systems] : table) categories.push_back(category);
  std::sort(categories.begin(), categories.end(), category_less);

  for (const std::string& category : categories) {
    const auto& systems = table[category];
    std::vector<std::pair<std::string, std::string>> pairs = options.pairs;
    if (pairs.empty()) {
      for (auto a = systems.begin(); a != systems.end(); ++a) {
        for (auto b = std::next(a); b != systems.end(); ++b) pairs.emplace_back(a->first, b->first);
      }
    }
    StatsBlock block{category, {}};
    for (const auto& [name_a, name_b] : pairs) {
      auto ia = systems.find(name_a);
      auto ib = systems.find(name_b);
      if (ia == systems.end() || ib == systems.end()) continue;
      std::vector<double> a, b;
      for (const auto& [unit, score] : ia->second) {
        auto other = ib->second.find(unit);
        if (other == ib->second.end()) continue;
        a.push_back(score);
        b.push_back(other->second);
      }
      Comparison c{name_a, name_b, 0.0, 1.0, 1.0, std::nullopt, 0, false};
      try {
        const stats::TestResult t =
            stats::wilcoxon_signed_rank(a, b, stats::WilcoxonMode::Auto, options.exact_max);
        c.statistic = t.statistic;
        c.p_value = t.p_value;
        if (std::isfinite(t.effect_size_dz)) c.effect_size_dz = t.effect_size_dz;
        c.n_effective = t.n_effective;
        c.exact = t.exact;
      } catch (const stats::StatsError& e) {
        if (e.code() != stats::StatsErrc::AllZeroDifferences &&
            e.code() != stats::StatsErrc::TooFewSamples) {
          throw;
        }
      }
      block.comparisons.push_back(std::move(c));
    }
    if (block.comparisons.empty()) continue;
    std::vector<double> raw;
    for (const Comparison& c : block.comparisons) raw.push_back(c.p_value);
    const std::vector<double> adjusted = options.holm ? stats::holm_correct(raw) : raw;
    for (std::size_t i = 0; i < raw.size(); ++i) block.comparisons[i].p_adjusted = adjusted[i];
    report.blocks.push_back(std::move(block));
  }
  return report;
}

EvalReport aggregate_report(const std::vector<MetricReport>& metrics,
                            const std::vector<StatsReport>& statistics,
                            ReportMetadata metadata) {
  EvalReport report;
  report.metadata = std::move(metadata);

  std::map<std::string, Direction> directions;
  std::map<std::pair<std::string, std::string>, TableRow> rows;  // (category, system)
  for (const MetricReport& m : metrics) {
    auto [it, inserted] = directions.emplace(m.metric, m.direction);
    if (!inserted && it->second != m.direction) {
      schema_error("metric " + m.metric + " reported with two directions");
    }
    if (inserted) report.columns.push_back({m.metric, m.direction});
    for (const MetricResult& r : m.results) {
      if (!std::isfinite(r.value)) schema_error("non-finite value for " + m.metric);
      TableRow& row = rows[{r.category, r.system}];
      row.category = r.category;
      row.system = r.system;
      if (!row.values.emplace(m.metric, r.value).second) {
        schema_error("duplicate " + m.metric + " value for " + r.system + " in " + r.category);
      }
    }
  }

  for (const auto& [key, row] : rows) report.rows.push_back(row);
  std::stable_sort(report.rows.begin(), report.rows.end(),
                   [](const TableRow& a, const TableRow& b) {
                     if (a.category != b.category) return category_less(a.category, b.category);
                     return a.system < b.system;
                   });

  for (const Column& column : report.columns) {
    std::map<std::string, std::vector<TableRow*>> groups;
    for (TableRow& row : report.rows) {
      if (row.values.count(column.metric)) groups[row.category].push_back(&row);
    }
    for (auto& [category, group] : groups) {
      if (group.size() < 2) continue;
      std::vector<double> distinct;
      for (TableRow* row : group) distinct.push_back(row->values.at(column.metric));
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      if (column.direction == Direction::Higher) std::reverse(distinct.begin(), distinct.end());
      for (TableRow* row : group) {
        const double v = row->values.at(column.metric);
        if (v == distinct[0]) row->best.insert(column.metric);
        else if (distinct.size() > 1 && v == distinct[1]) row->second_best.insert(column.metric);
      }
    }
  }

  for (const StatsReport& s : statistics) {
    for (const StatsBlock& block : s.blocks) {
      for (const Comparison& c : block.comparisons) {
        check_probability(c.p_value, "p_value");
        check_probability(c.p_adjusted, "p_adjusted");
        if (c.p_adjusted < c.p_value) {
          schema_error("adjusted p below raw p for " + c.system_a + " vs " + c.system_b);
        }
        report.statistics.push_back({s.metric, block.category, c});
      }
    }
  }
  return report;
}

std::string to_json(const EvalReport& report) {
  const ReportMetadata& m = report.metadata;
  json doc;
  doc["schema"] = kEvalSchema;
  doc["metadata"] = {{"tool_version", m.tool_version},
                     {"config_hash", m.config_hash},
                     {"seeds", m.seeds},
                     {"generated_at", m.generated_at},
                     {"inputs", m.inputs}};
  doc["columns"] = json::array();
  for (const Column& c : report.columns) {
    doc["columns"].push_back({{"metric", c.metric}, {"direction", to_string(c.direction)}});
  }
  doc["rows"] = json::array();
  for (const TableRow& r : report.rows) {
    doc["rows"].push_back({{"category", r.category},
                           {"system", r.system},
                           {"values", r.values},
                           {"best", r.best},
                           {"second_best", r.second_best}});
  }
  doc["statistics"] = json::array();
  for (const StatisticRow& s : report.statistics) {
    json entry = comparison_json(s.comparison);
    entry["metric"] = s.metric;
    entry["category"] = s.category;
    doc["statistics"].push_back(std::move(entry));
  }
  return doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

EvalReport eval_report_from_json(std::string_view text) {
  const json doc = parse_json(text, kEvalSchema);
  return guarded([&] {
    EvalReport report;
    const json& m = doc.at("metadata");
    report.metadata.tool_version = m.at("tool_version").get<std::string>();
    report.metadata.config_hash = m.at("config_hash").get<std::string>();
    report.metadata.seeds = m.at("seeds").get<std::vector<std::uint64_t>>();
    report.metadata.generated_at = m.at("generated_at").get<std::string>();
    report.metadata.inputs = m.at("inputs").get<std::vector<std::string>>();
    std::set<std::string> known;
    for (const json& c : doc.at("columns")) {
      report.columns.push_back({c.at("metric").get<std::string>(),
                                direction_from_string(c.at("direction").get<std::string>())});
      known.insert(report.columns.back().metric);
    }
    for (const json& r : doc.at("rows")) {
      TableRow row;
      row.category = r.at("category").get<std::string>();
      row.system = r.at("system").get<std::string>();
      row.values = r.at("values").get<std::map<std::string, double>>();
      row.best = r.at("best").get<std::set<std::string>>();
      row.second_best = r.at("second_best").get<std::set<std::string>>();
      for (const auto& [metric, value] : row.values) {
        if (!known.count(metric)) schema_error("value for undeclared column " + metric);
      }
      report.rows.push_back(std::move(row));
    }
    for (const json& s : doc.at("statistics")) {
      report.statistics.push_back(
          {s.at("metric").get<std::string>(), s.at("category").get<std::string>(),
           comparison_from(s)});
    }
    return report;
  });
}

std::string to_csv(const EvalReport& report) {
  std::string out = "category,system";
  for (const Column& c : report.columns) out += "," + c.metric + "," + c.metric + "_rank";
  out += "\n";
  for (const TableRow& r : report.rows) {
    out += r.category + "," + r.system;
    for (const Column& c : report.columns) {
      auto it = r.values.find(c.metric);
      out += ",";
      if (it != r.values.end()) out += format_full(it->second);
      out += ",";
      if (r.best.count(c.metric)) out += "best";
      else if (r.second_best.count(c.metric)) out += "second";
    }
    out += "\n";
  }
  return out;
}

std::string to_text(const EvalReport& report) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> head{"category", "system"};
  for (const Column& c : report.columns) {
    head.push_back(c.metric + (c.direction == Direction::Lower ? " (lower)" : " (higher)"));
  }
  cells.push_back(head);
  for (const TableRow& r : report.rows) {
    std::vector<std::string> line{r.category, r.system};
    for (const Column& c : report.columns) {
      auto it = r.values.find(c.metric);
      std::string cell = it == r.values.end() ? "-" : format_value(it->second);
      if (r.best.count(c.metric)) cell += " *";
      else if (r.second_best.count(c.metric)) cell += " +";
      line.push_back(cell);
    }
    cells.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  }
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t i = 0; i < cells[r].size(); ++i) {
      if (i > 0) out += "  ";
      out += cells[r][i];
      if (i + 1 < cells[r].size()) out.append(width[i] - cells[r][i].size(), ' ');
    }
    out += "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out.append(total - 2, '-');
      out += "\n";
    }
  }
  out += "* best, + second best\n";
  if (!report.statistics.empty()) {
    out += "\nmetric  category  comparison  p  p_adj  d_z  n\n";
    for (const StatisticRow& s : report.statistics) {
      const Comparison& c = s.comparison;
      out += s.metric + "  " + s.category + "  " + c.system_a + " vs " + c.system_b + "  " +
             format_value(c.p_value) + "  " + format_value(c.p_adjusted) + "  " +
             (c.effect_size_dz ? format_value(*c.effect_size_dz) : std::string("-")) + "  " +
             std::to_string(c.n_effective) + "\n";
    }
  }
  return out;
}

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string report_timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    long long v = 0;
    const std::string_view s(epoch);
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec == std::errc{} && end == s.data() + s.size()) t = static_cast<std::time_t>(v);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace scenesynth::report
