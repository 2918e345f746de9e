#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "scenesynth/caption.hpp"
#include "scenesynth/checkpoint.hpp"
#include "scenesynth/corpus.hpp"
#include "scenesynth/embedding_io.hpp"
#include "scenesynth/flowmatch.hpp"
#include "scenesynth/metrics.hpp"
#include "scenesynth/pipeline.hpp"
#include "scenesynth/refiner.hpp"
#include "scenesynth/report.hpp"
#include "scenesynth/wav.hpp"

#ifndef SCENESYNTH_VERSION
#define SCENESYNTH_VERSION "0.0.0"
#endif

namespace scenesynth::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

std::string version_text() {
  std::string text = "scenesynth " SCENESYNTH_VERSION "\n";
  text += "checkpoint " + std::string(diffcore::kCheckpointVersion) + "\n";
  text += "manifest scenesynth.manifest.v1\n";
  text += "metric-report " + std::string(report::kMetricSchema) + "\n";
  text += "stats-report " + std::string(report::kStatsSchema) + "\n";
  text += "eval-report " + std::string(report::kEvalSchema) + "\n";
  text += "embedding emb-v1 (EMB1), csv";
  return text;
}

std::string read_file(const fs::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw UsageError("cannot open " + path.string());
  std::ostringstream buf;
  buf << file.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary);
  if (!file) throw UsageError("cannot write " + path.string());
  file << text;
}

struct Io {
  std::istream& in;
  std::ostream& out;
  std::ostream& err;

  std::string read(const std::string& path) const {
    if (path.empty() || path == "-") {
      std::ostringstream buf;
      buf << in.rdbuf();
      return buf.str();
    }
    return read_file(path);
  }
  void write(const std::string& path, std::string_view text) const {
    if (path.empty() || path == "-") {
      out << text;
    } else {
      write_file(path, text);
    }
  }
};

// Shared settings from --config.
struct Settings {
  std::optional<std::uint64_t> seed;
  std::size_t steps = 25;
  double cfg_scale = 5.0;
  std::size_t threads = 1;
  std::optional<refiner::EndpointConfig> endpoint;
  std::map<std::string, std::string> paths;
  std::string raw;
};

Settings load_settings(const std::string& path) {
  Settings s;
  if (path.empty()) return s;
  s.raw = read_file(path);
  try {
    const json doc = json::parse(s.raw);
    if (doc.contains("seed")) s.seed = doc["seed"].get<std::uint64_t>();
    if (doc.contains("threads")) s.threads = doc["threads"].get<std::size_t>();
    if (doc.contains("sampler")) {
      const json& sampler = doc["sampler"];
      s.steps = sampler.value("steps", s.steps);
      s.cfg_scale = sampler.value("cfg_scale", sampler.value("cfg", s.cfg_scale));
    }
    if (doc.contains("paths")) {
      for (const auto& [k, v] : doc["paths"].items()) s.paths[k] = v.get<std::string>();
    }
    if (doc.contains("endpoint")) {
      const json& e = doc["endpoint"];
      refiner::EndpointConfig c;
      c.base_url = e.at("base_url").get<std::string>();
      c.api_key_env_var = e.value("api_key_env_var", std::string());
      c.model_name = e.value("model", std::string());
      c.timeout_seconds = e.value("timeout_seconds", c.timeout_seconds);
      c.max_retries = e.value("max_retries", c.max_retries);
      c.max_in_flight = e.value("max_in_flight", c.max_in_flight);
      c.validate();
      s.endpoint = c;
    }
  } catch (const json::exception& e) {
    throw UsageError("bad config " + path + ": " + e.what());
  }
  return s;
}

std::string fallback(const std::string& value, const Settings& s, const std::string& key) {
  if (!value.empty()) return value;
  auto it = s.paths.find(key);
  return it == s.paths.end() ? std::string() : it->second;
}

std::vector<caption::StructuredCaption> read_captions(const Io& io, const std::string& path) {
  std::istringstream stream(io.read(path));
  std::vector<caption::StructuredCaption> captions;
  for (auto& record : caption::read_corpus(stream)) captions.push_back(std::move(record.caption));
  return captions;
}

std::string category_label(const caption::StructuredCaption& c) {
  try {
    return std::string(caption::to_code(caption::classify_category(c)));
  } catch (const caption::CaptionError&) {
    return "unclassified";
  }
}

// ---------------------------------------------------------------- caption

struct ParseArgs {
  std::string in;
  std::string text;
};

int cmd_parse(const ParseArgs& a, const Io& io) {
  if (!a.text.empty()) {
    io.out << caption::format_record(caption::parse_caption(a.text)) << "\n";
    return 0;
  }
  for (const auto& c : read_captions(io, a.in)) io.out << caption::format_record(c) << "\n";
  return 0;
}

int cmd_categorize(const std::string& in, const Io& io) {
  io.out << "index,category\n";
  const auto captions = read_captions(io, in);
  for (std::size_t i = 0; i < captions.size(); ++i) {
    io.out << i << "," << category_label(captions[i]) << "\n";
  }
  return 0;
}

struct AugmentArgs {
  std::string in;
  double p = 0.2;
  std::optional<std::uint64_t> seed;
};

int cmd_augment(const AugmentArgs& a, const Settings& s, const Io& io) {
  caption::AugmentConfig cfg{a.p, a.seed.value_or(s.seed.value_or(0))};
  std::mt19937_64 rng(cfg.rng_seed);
  for (const auto& c : read_captions(io, a.in)) {
    io.out << caption::format_record(caption::augment_dropout(c, cfg, rng)) << "\n";
  }
  return 0;
}

int cmd_word_stats(const std::string& in, const Io& io) {
  const auto stats = caption::word_count_stats(read_captions(io, in));
  io.out << "category,captions,structured_avg_words,unstructured_avg_words\n";
  char buf[128];
  for (const auto& [key, w] : stats) {
    const std::string label = key ? std::string(caption::to_code(*key)) : "unclassified";
    std::snprintf(buf, sizeof buf, "%s,%zu,%.2f,%.2f\n", label.c_str(), w.captions,
                  w.structured_avg_words, w.unstructured_avg_words);
    io.out << buf;
  }
  return 0;
}

// ------------------------------------------------------------- flowmatch

struct TrainArgs {
  std::string task;
  std::size_t epochs = 2000;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t batch_size = 16;
  double lr = 3e-3;
  std::string loss_csv;
};

int cmd_train(const TrainArgs& a, const Settings& s, const Io& io) {
  const std::string task_path = fallback(a.task, s, "task");
  const flowmatch::SyntheticTask task = task_path.empty()
                                            ? flowmatch::SyntheticTask::three_cluster()
                                            : flowmatch::task_from_json(read_file(task_path));
  flowmatch::TrainConfig cfg;
  cfg.model.latent = task.latent;
  cfg.steps = a.epochs;
  cfg.batch_size = a.batch_size;
  cfg.optimizer.lr = a.lr;
  cfg.seed = a.seed.value_or(s.seed.value_or(0));
  cfg.dropout.rng_seed = cfg.seed;
  flowmatch::TrainResult result = flowmatch::train(task, cfg);
  const std::string out = fallback(a.out, s, "model");
  if (out.empty()) throw UsageError("train needs --out");
  write_file(out, result.model.to_checkpoint(&result.optimizer_state));
  if (!a.loss_csv.empty()) {
    std::string csv = "step,loss\n";
    for (std::size_t i = 0; i < result.loss_curve.size(); ++i) {
      csv += std::to_string(i) + "," + std::to_string(result.loss_curve[i]) + "\n";
    }
    write_file(a.loss_csv, csv);
  }
  io.err << "trained " << result.loss_curve.size() << " steps, final loss "
         << (result.loss_curve.empty() ? 0.0 : result.loss_curve.back()) << "\n";
  return 0;
}

struct GenerateArgs {
  std::string model;
  std::string caption;
  std::string corpus;
  std::string out;
  std::string out_dir;
  std::optional<std::size_t> steps;
  std::optional<double> cfg;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

int cmd_generate(const GenerateArgs& a, const Settings& s, const Io& io) {
  const std::string model_path = fallback(a.model, s, "model");
  if (model_path.empty()) throw UsageError("generate needs --model");
  const auto model = flowmatch::VectorFieldModel::from_checkpoint(read_file(model_path));
  flowmatch::SamplerConfig sampler{a.steps.value_or(s.steps), a.cfg.value_or(s.cfg_scale),
                                   a.seed.value_or(s.seed.value_or(0))};
  if (!a.caption.empty()) {
    std::mt19937_64 rng(sampler.rng_seed);
    const auto z =
        flowmatch::sample(model, model.latent(), caption::parse_caption(a.caption), sampler, rng);
    io.write(a.out, flowmatch::latent_to_csv(z));
    return 0;
  }
  if (a.corpus.empty()) throw UsageError("generate needs --caption or --corpus");
  const std::string out_dir = fallback(a.out_dir, s, "out_dir");
  if (out_dir.empty()) throw UsageError("generate --corpus needs --out-dir");
  const auto manifest =
      pipeline::run_generation(model, model.latent(), read_captions(io, a.corpus), sampler,
                               out_dir, {a.threads.value_or(s.threads)});
  io.err << "generated " << manifest.entries.size() << " latents, " << manifest.failures.size()
         << " failures\n";
  return 0;
}

// ---------------------------------------------------------------- mix

int cmd_mix(const std::vector<std::string>& specs, const std::string& out, const Io& io) {
  std::vector<pipeline::Track> tracks;
  for (const std::string& spec : specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw UsageError("--track expects role=path, got " + spec);
    const auto role = pipeline::role_from_string(spec.substr(0, eq));
    if (!role) throw UsageError("unknown role " + spec.substr(0, eq));
    wav::PcmAudio audio = wav::read_wav(spec.substr(eq + 1));
    tracks.push_back({std::move(audio.samples), audio.sample_rate_hz, *role});
  }
  const pipeline::Track mixed = pipeline::mix_tracks(tracks);
  wav::write_wav(out, {mixed.sample_rate_hz, mixed.samples});
  io.err << "mixed " << tracks.size() << " tracks, " << mixed.samples.size() << " samples\n";
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string metric;
  std::string ref_emb;
  std::string gen_emb;
  std::string gen_manifest;
  std::string ref_txt;
  std::string hyp_txt;
  std::string system = "system";
  std::string category{report::kOverallCategory};
  bool by_category = false;
  std::string out;
  std::string scores_out;
};

struct Unit {
  std::string id;
  std::string category;
  std::vector<double> gen;
  std::vector<double> ref;
};

std::string metric_label(const std::string& metric) {
  if (metric == "fad") return "FAD";
  if (metric == "fd") return "FD";
  if (metric == "kl") return "KL";
  if (metric == "cosine") return "COS";
  if (metric == "wer") return "WER";
  throw UsageError("unknown metric " + metric + " (fad, fd, kl, cosine, wer)");
}

std::vector<Unit> load_embedding_units(const EvalArgs& a, bool paired) {
  const metrics::EmbeddingTable ref = metrics::read_embeddings(a.ref_emb);
  std::vector<Unit> units;
  if (!a.gen_manifest.empty()) {
    const fs::path manifest_path(a.gen_manifest);
    const auto manifest = pipeline::manifest_from_json(read_file(manifest_path));
    for (const auto& entry : manifest.entries) {
      const auto z = flowmatch::latent_from_csv(
          read_file(manifest_path.parent_path() / entry.output));
      if (entry.index >= ref.rows()) {
        throw UsageError("reference has no row for record " + std::to_string(entry.index));
      }
      const auto r = ref.row(entry.index);
      units.push_back({std::to_string(entry.index),
                       entry.category ? std::string(caption::to_code(*entry.category))
                                      : std::string("unclassified"),
                       {z.data().begin(), z.data().end()},
                       {r.begin(), r.end()}});
    }
    return units;
  }
  if (a.gen_emb.empty()) throw UsageError("eval needs --gen-emb or --gen-manifest");
  const metrics::EmbeddingTable gen = metrics::read_embeddings(a.gen_emb);
  if (paired && gen.rows() != ref.rows()) {
    throw UsageError("paired metrics need equal row counts");
  }
  for (std::size_t i = 0; i < std::max(gen.rows(), ref.rows()); ++i) {
    Unit u{std::to_string(i), a.category, {}, {}};
    if (i < gen.rows()) u.gen.assign(gen.row(i).begin(), gen.row(i).end());
    if (i < ref.rows()) u.ref.assign(ref.row(i).begin(), ref.row(i).end());
    units.push_back(std::move(u));
  }
  return units;
}

std::vector<std::pair<std::string, std::string>> load_transcripts(const std::string& path) {
  std::vector<std::pair<std::string, std::string>> rows;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      if (j.is_string()) {
        rows.emplace_back(std::to_string(rows.size()), j.get<std::string>());
      } else {
        std::string id = std::to_string(rows.size());
        if (j.contains("id")) id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
        rows.emplace_back(id, j.at("text").get<std::string>());
      }
    } catch (const json::exception& e) {
      throw UsageError("bad transcript line in " + path + ": " + e.what());
    }
  }
  return rows;
}

int cmd_eval(const EvalArgs& a, const Io& io) {
  const std::string label = metric_label(a.metric);
  const bool distributional = a.metric == "fad" || a.metric == "fd";

  std::vector<Unit> units;
  std::vector<std::pair<metrics::Transcript, metrics::Transcript>> texts;
  if (a.metric == "wer") {
    if (a.ref_txt.empty() || a.hyp_txt.empty()) throw UsageError("wer needs --ref-txt and --hyp-txt");
    const auto refs = load_transcripts(a.ref_txt);
    const auto hyps = load_transcripts(a.hyp_txt);
    if (refs.size() != hyps.size()) throw UsageError("reference and hypothesis counts differ");
    for (std::size_t i = 0; i < refs.size(); ++i) {
      if (refs[i].first != hyps[i].first) throw UsageError("transcript ids are not aligned");
      units.push_back({refs[i].first, a.category, {}, {}});
      texts.emplace_back(metrics::normalize_transcript(refs[i].second),
                         metrics::normalize_transcript(hyps[i].second));
    }
  } else {
    if (a.ref_emb.empty()) throw UsageError(a.metric + " needs --ref-emb");
    units = load_embedding_units(a, !distributional);
  }

  // Per-unit scores for the paired metrics.
  std::vector<double> unit_scores(units.size(), 0.0);
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (a.metric == "cosine") {
      unit_scores[i] = metrics::relevance_cosine(units[i].gen, units[i].ref);
    } else if (a.metric == "kl") {
      unit_scores[i] = metrics::kl_divergence(units[i].ref, units[i].gen);
    } else if (a.metric == "wer") {
      unit_scores[i] = metrics::wer(texts[i].first, texts[i].second);
    }
  }

  std::vector<std::string> groups{std::string(report::kOverallCategory)};
  if (units.size() && !a.gen_manifest.empty() && a.by_category) {
    std::vector<std::string> cats;
    for (const Unit& u : units) cats.push_back(u.category);
    std::sort(cats.begin(), cats.end());
    cats.erase(std::unique(cats.begin(), cats.end()), cats.end());
    groups.insert(groups.end(), cats.begin(), cats.end());
  } else if (a.gen_manifest.empty()) {
    groups = {a.category};
  }

  report::MetricReport rep{label, report::default_direction(label), {}};
  for (const std::string& group : groups) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < units.size(); ++i) {
      if (group == report::kOverallCategory || group == units[i].category || groups.size() == 1) {
        members.push_back(i);
      }
    }
    report::MetricResult result{a.system, group, 0.0, members.size(), std::nullopt};
    if (distributional) {
      std::vector<std::vector<double>> gen_rows, ref_rows;
      for (std::size_t i : members) {
        if (!units[i].gen.empty()) gen_rows.push_back(units[i].gen);
        if (!units[i].ref.empty()) ref_rows.push_back(units[i].ref);
      }
      if (gen_rows.size() < 2 || ref_rows.size() < 2) {
        if (group == report::kOverallCategory || groups.size() == 1) {
          throw UsageError("Frechet distance needs at least two rows per side");
        }
        continue;
      }
      result.value = metrics::frechet_distance(metrics::accumulate_stats(ref_rows),
                                               metrics::accumulate_stats(gen_rows));
      result.n = gen_rows.size();
    } else if (a.metric == "wer") {
      std::size_t edits = 0, words = 0;
      for (std::size_t i : members) {
        if (texts[i].first.words.empty()) {
          throw metrics::MetricError(metrics::MetricErrc::EmptyReference,
                                     "empty reference transcript " + units[i].id);
        }
        edits += metrics::word_edit_distance(texts[i].first.words, texts[i].second.words);
        words += texts[i].first.words.size();
      }
      result.value = words ? static_cast<double>(edits) / static_cast<double>(words) : 0.0;
    } else {
      double total = 0.0;
      for (std::size_t i : members) total += unit_scores[i];
      result.value = members.empty() ? 0.0 : total / static_cast<double>(members.size());
      if (a.metric == "cosine") result.value_x100 = 100.0 * result.value;
    }
    rep.results.push_back(std::move(result));
  }
  io.write(a.out, report::to_json(rep));

  if (!a.scores_out.empty()) {
    if (distributional) throw UsageError("per-unit scores are not defined for " + a.metric);
    std::vector<report::ScoreRow> rows;
    for (std::size_t i = 0; i < units.size(); ++i) {
      rows.push_back({units[i].id, a.system, label, unit_scores[i], units[i].category});
    }
    write_file(a.scores_out, report::format_scores_csv(rows));
  }
  return 0;
}

// ---------------------------------------------------------------- stats

struct StatsTestArgs {
  std::vector<std::string> scores;
  std::string metric;
  std::vector<std::string> pairs;
  std::size_t exact_max = stats::kDefaultExactMax;
  std::string correct = "holm";
  std::string out;
};

int cmd_stats_test(const StatsTestArgs& a, const Io& io) {
  report::StatsTestOptions options;
  options.metric = a.metric;
  options.exact_max = a.exact_max;
  if (a.correct != "holm" && a.correct != "none") {
    throw UsageError("--correct must be holm or none");
  }
  options.holm = a.correct == "holm";
  for (const std::string& pair : a.pairs) {
    const auto comma = pair.find(',');
    if (comma == std::string::npos || comma == 0 || comma + 1 == pair.size()) {
      throw UsageError("--pairs expects a,b");
    }
    options.pairs.emplace_back(pair.substr(0, comma), pair.substr(comma + 1));
  }
  std::vector<report::ScoreRow> rows;
  for (const std::string& path : a.scores) {
    auto part = report::parse_scores_csv(io.read(path));
    rows.insert(rows.end(), part.begin(), part.end());
  }
  io.write(a.out, report::to_json(report::run_stats_test(rows, options)));
  return 0;
}

struct ReportArgs {
  std::vector<std::string> metrics;
  std::vector<std::string> stats;
  std::vector<std::uint64_t> seeds;
  std::string out_json;
  std::string out_csv;
  std::string out_text;
};

int cmd_report(const ReportArgs& a, const Settings& s, const Io& io) {
  std::vector<report::MetricReport> metric_reports;
  std::vector<report::StatsReport> stats_reports;
  report::ReportMetadata meta;
  meta.tool_version = SCENESYNTH_VERSION;
  meta.generated_at = report::report_timestamp();
  meta.seeds = a.seeds;
  if (meta.seeds.empty() && s.seed) meta.seeds.push_back(*s.seed);
  std::string hashed = s.raw;
  for (const std::string& path : a.metrics) {
    const std::string text = read_file(path);
    hashed += text;
    metric_reports.push_back(report::metric_report_from_json(text));
    meta.inputs.push_back(fs::path(path).filename().string());
  }
  for (const std::string& path : a.stats) {
    const std::string text = read_file(path);
    hashed += text;
    stats_reports.push_back(report::stats_report_from_json(text));
    meta.inputs.push_back(fs::path(path).filename().string());
  }
  meta.config_hash = report::fnv1a64_hex(hashed);
  const report::EvalReport rep =
      report::aggregate_report(metric_reports, stats_reports, std::move(meta));
  if (!a.out_json.empty()) write_file(a.out_json, report::to_json(rep));
  if (!a.out_csv.empty()) write_file(a.out_csv, report::to_csv(rep));
  if (!a.out_text.empty()) write_file(a.out_text, report::to_text(rep));
  if (a.out_json.empty() && a.out_csv.empty() && a.out_text.empty()) io.out << report::to_text(rep);
  return 0;
}

// ------------------------------------------------------------- refiner

struct LlmArgs {
  std::string mock;
  std::string model;
  bool strict_asr = false;
};

template <typename Fn>
int with_endpoint(const LlmArgs& a, const Settings& s, Fn fn) {
  refiner::ClientOptions options{a.model, a.strict_asr};
  if (!a.mock.empty()) {
    auto mock = refiner::MockEndpoint::from_script_json(read_file(a.mock));
    return fn(mock, options);
  }
  if (!s.endpoint) throw UsageError("no --mock script and no endpoint in --config");
  if (options.model.empty()) options.model = s.endpoint->model_name;
  refiner::HttpEndpoint http(*s.endpoint);
  refiner::RetryPolicy policy;
  policy.max_retries = s.endpoint->max_retries;
  policy.jitter_seed = s.seed.value_or(0);
  refiner::RetryingEndpoint retrying(http, policy);
  return fn(retrying, options);
}

int cmd_refine(const std::string& text, const LlmArgs& a, const Settings& s, const Io& io) {
  return with_endpoint(a, s, [&](refiner::ChatEndpoint& endpoint, const auto& options) {
    const auto output = refiner::refine(text, endpoint, options);
    io.out << caption::format_record(output.to_structured_caption()) << "\n";
    return 0;
  });
}

int cmd_pafi(const std::string& descriptions, const std::string& out, const LlmArgs& a,
             const Settings& s, const Io& io) {
  std::vector<report::ScoreRow> rows;
  return with_endpoint(a, s, [&](refiner::ChatEndpoint& endpoint, const auto& options) {
    std::istringstream in(io.read(descriptions));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::exception& e) {
        throw UsageError("line " + std::to_string(line_no) + ": " + e.what());
      }
      const std::string unit = j.value("unit_id", std::to_string(line_no - 1));
      const std::string system = j.value("system", std::string("system"));
      const std::string category =
          j.value("category", std::string(report::kOverallCategory));
      const auto judgment =
          refiner::judge_pafi(j.at("description").get<std::string>(), endpoint, options);
      rows.push_back({unit, system, "PAFI", static_cast<double>(judgment.score), category});
    }
    io.write(out, report::format_scores_csv(rows));
    return 0;
  });
}

}  // namespace

int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
        std::ostream& err) {
  CLI::App app{"Structured-caption audio scene toolkit"};
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Shared settings JSON")->check(CLI::ExistingFile);

  ParseArgs parse_args;
  auto* parse = app.add_subcommand("parse", "Validate and normalize caption records");
  parse->add_option("--in", parse_args.in, "Corpus JSONL (default stdin)");
  parse->add_option("--text", parse_args.text, "Parse one token-delimited caption");

  std::string categorize_in;
  auto* categorize = app.add_subcommand("categorize", "Scene category per record");
  categorize->add_option("--in", categorize_in, "Corpus JSONL (default stdin)");

  AugmentArgs augment_args;
  auto* augment = app.add_subcommand("augment", "Per-view dropout augmentation");
  augment->add_option("--in", augment_args.in, "Corpus JSONL (default stdin)");
  augment->add_option("--p", augment_args.p, "Drop probability")->check(CLI::Range(0.0, 1.0));
  augment->add_option("--seed", augment_args.seed, "RNG seed");

  std::string stats_in;
  auto* word_stats = app.add_subcommand("stats", "Word-count statistics per category");
  word_stats->add_option("--in", stats_in, "Corpus JSONL (default stdin)");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train the toy flow-matching model");
  train->add_option("--task", train_args.task, "Synthetic task JSON");
  train->add_option("--epochs", train_args.epochs, "Optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--seed", train_args.seed, "Training seed");
  train->add_option("--out", train_args.out, "Checkpoint path");
  train->add_option("--batch-size", train_args.batch_size)->check(CLI::PositiveNumber);
  train->add_option("--lr", train_args.lr)->check(CLI::PositiveNumber);
  train->add_option("--loss-csv", train_args.loss_csv, "Write the loss curve");

  GenerateArgs gen_args;
  auto* generate = app.add_subcommand("generate", "Sample latents from a checkpoint");
  generate->add_option("--model", gen_args.model, "Checkpoint path");
  auto* gen_caption = generate->add_option("--caption", gen_args.caption, "Structured caption");
  auto* gen_corpus = generate->add_option("--corpus", gen_args.corpus, "Corpus JSONL");
  gen_caption->excludes(gen_corpus);
  generate->add_option("--out", gen_args.out, "Latent CSV (default stdout)");
  generate->add_option("--out-dir", gen_args.out_dir, "Output directory for --corpus");
  generate->add_option("--steps", gen_args.steps, "Euler steps")->check(CLI::PositiveNumber);
  generate->add_option("--cfg", gen_args.cfg, "Guidance scale");
  generate->add_option("--seed", gen_args.seed, "Sampling seed");
  generate->add_option("--threads", gen_args.threads, "Worker threads");

  std::vector<std::string> mix_tracks;
  std::string mix_out;
  auto* mix = app.add_subcommand("mix", "Start-aligned mix of WAV tracks");
  mix->add_option("--track", mix_tracks, "role=path, role in speech|music|sfx")->required();
  mix->add_option("--out", mix_out, "Output WAV")->required();

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Objective metric report");
  eval->add_option("--metric", eval_args.metric, "fad|fd|kl|cosine|wer")->required();
  eval->add_option("--ref-emb", eval_args.ref_emb, "Reference embeddings (CSV or EMB1)");
  eval->add_option("--gen-emb", eval_args.gen_emb, "Generated embeddings (CSV or EMB1)");
  eval->add_option("--gen-manifest", eval_args.gen_manifest,
                   "Generation manifest; reference row i pairs with record i");
  eval->add_option("--ref-txt", eval_args.ref_txt, "Reference transcripts JSONL");
  eval->add_option("--hyp-txt", eval_args.hyp_txt, "Hypothesis transcripts JSONL");
  eval->add_option("--system", eval_args.system, "System name");
  eval->add_option("--category", eval_args.category, "Category label");
  eval->add_flag("--by-category", eval_args.by_category, "Split manifest records by category");
  eval->add_option("--out", eval_args.out, "Metric report JSON (default stdout)");
  eval->add_option("--scores-out", eval_args.scores_out, "Per-unit scores CSV");

  StatsTestArgs st_args;
  auto* stats_test = app.add_subcommand("stats-test", "Paired Wilcoxon tests with Holm correction");
  stats_test->add_option("--scores", st_args.scores, "Scores CSV (repeatable)")->required();
  stats_test->add_option("--metric", st_args.metric, "Metric column value")->required();
  stats_test->add_option("--pairs", st_args.pairs, "System pair a,b (repeatable)");
  stats_test->add_option("--exact-max", st_args.exact_max, "Largest n for exact p");
  stats_test->add_option("--correct", st_args.correct, "holm|none");
  stats_test->add_option("--out", st_args.out, "Stats report JSON (default stdout)");

  ReportArgs rep_args;
  auto* rep = app.add_subcommand("report", "Aggregate metric and stats reports");
  rep->add_option("--metrics", rep_args.metrics, "Metric report JSON (repeatable)");
  rep->add_option("--stats", rep_args.stats, "Stats report JSON (repeatable)");
  rep->add_option("--seed", rep_args.seeds, "Seeds to record (repeatable)");
  rep->add_option("--out-json", rep_args.out_json);
  rep->add_option("--out-csv", rep_args.out_csv);
  rep->add_option("--out-text", rep_args.out_text);

  LlmArgs refine_llm;
  std::string refine_text;
  auto* refine = app.add_subcommand("refine", "Free text to a structured caption record");
  refine->add_option("--text", refine_text, "User description")->required();
  refine->add_option("--mock", refine_llm.mock, "Scripted responses JSON");
  refine->add_option("--model", refine_llm.model, "Model name");
  refine->add_flag("--strict-asr", refine_llm.strict_asr, "Reject any word followed by a colon");

  LlmArgs pafi_llm;
  std::string pafi_in;
  std::string pafi_out;
  auto* pafi = app.add_subcommand("pafi", "Acoustic-fidelity scores for descriptions");
  pafi->add_option("--descriptions", pafi_in, "JSONL with description, unit_id, system")
      ->required();
  pafi->add_option("--mock", pafi_llm.mock, "Scripted responses JSON");
  pafi->add_option("--model", pafi_llm.model, "Model name");
  pafi->add_option("--out", pafi_out, "Scores CSV (default stdout)");

  std::vector<const char*> argv{"scenesynth"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const Io io{in, out, err};
  try {
    const Settings settings = load_settings(config_path);
    if (parse->parsed()) return cmd_parse(parse_args, io);
    if (categorize->parsed()) return cmd_categorize(categorize_in, io);
    if (augment->parsed()) return cmd_augment(augment_args, settings, io);
    if (word_stats->parsed()) return cmd_word_stats(stats_in, io);
    if (train->parsed()) return cmd_train(train_args, settings, io);
    if (generate->parsed()) return cmd_generate(gen_args, settings, io);
    if (mix->parsed()) return cmd_mix(mix_tracks, mix_out, io);
    if (eval->parsed()) return cmd_eval(eval_args, io);
    if (stats_test->parsed()) return cmd_stats_test(st_args, io);
    if (rep->parsed()) return cmd_report(rep_args, settings, io);
    if (refine->parsed()) return cmd_refine(refine_text, refine_llm, settings, io);
    if (pafi->parsed()) return cmd_pafi(pafi_in, pafi_out, pafi_llm, settings, io);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace scenesynth::cli
