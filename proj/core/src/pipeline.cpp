#include "scenesynth/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <random>
#include <thread>

namespace scenesynth::pipeline {

using caption::StructuredCaption;
using caption::ViewKind;
using nlohmann::json;

namespace {

void append_text(std::string& out, std::string_view text) {
  if (!out.empty()) out.push_back(' ');
  out.append(text);
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw PipelineError(PipelineErrc::Io, "cannot write " + path.string());
  file << text;
  if (!file) throw PipelineError(PipelineErrc::Io, "write failed for " + path.string());
}

struct Outcome {
  bool ok = false;
  std::string csv;
  std::string error;
};

}  // namespace

PromptBundle build_prompts(const StructuredCaption& c) {
  PromptBundle bundle;
  bundle.unified_structured = caption::serialize_caption(c);
  bundle.unified_unstructured = caption::unstructured_view(c);

  const bool speech = c.has(ViewKind::Speech) || c.has(ViewKind::Asr);
  for (ViewKind kind : caption::kAllViewKinds) {
    auto text = c.text(kind);
    if (!text) continue;
    append_text(bundle.tta_full, *text);
    if (speech && kind != ViewKind::Asr) append_text(bundle.tts_instruction, *text);
  }
  if (auto asr = c.text(ViewKind::Asr)) bundle.tts_transcript = *asr;
  if (auto music = c.text(ViewKind::Music)) bundle.music_prompt = *music;
  if (auto sfx = c.text(ViewKind::Sfx)) bundle.sfx_prompt = *sfx;
  return bundle;
}

std::string_view to_string(SourceRole role) noexcept {
  switch (role) {
    case SourceRole::Speech: return "speech";
    case SourceRole::Music: return "music";
    case SourceRole::Sfx: return "sfx";
  }
  return "sfx";
}

std::optional<SourceRole> role_from_string(std::string_view name) noexcept {
  for (SourceRole role : {SourceRole::Speech, SourceRole::Music, SourceRole::Sfx}) {
    if (to_string(role) == name) return role;
  }
  return std::nullopt;
}

Track mix_tracks(const std::vector<Track>& tracks) {
  if (tracks.empty()) throw PipelineError(PipelineErrc::EmptyInput, "no tracks to mix");
  const std::uint32_t rate = tracks.front().sample_rate_hz;
  std::size_t length = 0;
  for (const Track& t : tracks) {
    if (t.sample_rate_hz == 0 || t.sample_rate_hz != rate) {
      throw PipelineError(PipelineErrc::SampleRateMismatch,
                          "tracks must share one positive sample rate");
    }
    for (double s : t.samples) {
      if (!std::isfinite(s)) {
        throw PipelineError(PipelineErrc::NonFiniteSample, "non-finite sample in track");
      }
    }
    length = std::max(length, t.samples.size());
  }
  if (tracks.size() == 1) return tracks.front();

  std::vector<const Track*> order;
  for (const Track& t : tracks) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](const Track* a, const Track* b) {
    if (a->source_role != b->source_role) return a->source_role < b->source_role;
    return a->samples < b->samples;
  });

  Track mix;
  mix.sample_rate_hz = rate;
  mix.source_role = order.front()->source_role;
  mix.samples.assign(length, 0.0);
  for (const Track* t : order) {
    for (std::size_t i = 0; i < t->samples.size(); ++i) mix.samples[i] += t->samples[i];
  }
  double peak = 0.0;
  for (double s : mix.samples) peak = std::max(peak, std::abs(s));
  if (peak > 1.0) {
    for (double& s : mix.samples) s /= peak;
  }
  return mix;
}

std::string latent_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "latent_%05zu.csv", index);
  return buf;
}

Manifest run_generation(const flowmatch::VelocityField& model,
                        const flowmatch::LatentSpec& latent,
                        const std::vector<StructuredCaption>& corpus,
                        const flowmatch::SamplerConfig& sampler,
                        const std::filesystem::path& out_dir,
                        const GenerationOptions& options) {
  sampler.validate();
  latent.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    throw PipelineError(PipelineErrc::Io,
                        "cannot create " + out_dir.string() + ": " + ec.message());
  }

  std::vector<Outcome> outcomes(corpus.size());
  auto run_one = [&](std::size_t i) {
    flowmatch::SamplerConfig cfg = sampler;
    cfg.rng_seed = sampler.rng_seed + i;
    std::mt19937_64 rng(cfg.rng_seed);
    try {
      flowmatch::Matrix z = flowmatch::sample(model, latent, corpus[i], cfg, rng);
      outcomes[i] = {true, flowmatch::latent_to_csv(z), {}};
    } catch (const flowmatch::FlowError& e) {
      if (e.code() != flowmatch::FlowErrc::NonFiniteState) throw;
      outcomes[i] = {false, {}, e.what()};
    }
  };

  const std::size_t threads = std::min(std::max<std::size_t>(options.threads, 1),
                                       std::max<std::size_t>(corpus.size(), 1));
  if (threads == 1) {
    for (std::size_t i = 0; i < corpus.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < corpus.size(); i = next++) run_one(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (std::thread& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  Manifest manifest;
  manifest.sampler = sampler;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::string text = caption::serialize_caption(corpus[i]);
    const std::uint64_t seed = sampler.rng_seed + i;
    if (!outcomes[i].ok) {
      std::fprintf(stderr, "record %zu skipped: %s\n", i, outcomes[i].error.c_str());
      manifest.failures.push_back({i, text, seed, outcomes[i].error});
      continue;
    }
    GenerationEntry entry{i, text, std::nullopt, latent_file_name(i), seed};
    try {
      entry.category = caption::classify_category(corpus[i]);
    } catch (const caption::CaptionError&) {
    }
    write_text_file(out_dir / entry.output, outcomes[i].csv);
    manifest.entries.push_back(std::move(entry));
  }
  write_text_file(out_dir / "manifest.json", manifest_to_json(manifest));
  return manifest;
}

std::string manifest_to_json(const Manifest& manifest) {
  json doc;
  doc["schema"] = "scenesynth.manifest.v1";
  doc["sampler"] = {{"steps", manifest.sampler.steps},
                    {"cfg_scale", manifest.sampler.cfg_scale},
                    {"seed", manifest.sampler.rng_seed}};
  doc["entries"] = json::array();
  for (const GenerationEntry& e : manifest.entries) {
    doc["entries"].push_back(
        {{"index", e.index},
         {"caption", e.caption},
         {"category", e.category ? json(std::string(caption::to_code(*e.category)))
                                 : json(nullptr)},
         {"output", e.output},
         {"seed", e.seed}});
  }
  doc["failures"] = json::array();
  for (const GenerationFailure& f : manifest.failures) {
    doc["failures"].push_back(
        {{"index", f.index}, {"caption", f.caption}, {"seed", f.seed}, {"error", f.error}});
  }
  return doc.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

Manifest manifest_from_json(std::string_view text) {
  Manifest manifest;
  try {
    const json doc = json::parse(text);
    if (doc.at("schema") != "scenesynth.manifest.v1") {
      throw PipelineError(PipelineErrc::Io, "not a generation manifest");
    }
    manifest.sampler.steps = doc.at("sampler").at("steps").get<std::size_t>();
    manifest.sampler.cfg_scale = doc.at("sampler").at("cfg_scale").get<double>();
    manifest.sampler.rng_seed = doc.at("sampler").at("seed").get<std::uint64_t>();
    for (const json& e : doc.at("entries")) {
      GenerationEntry entry;
      entry.index = e.at("index").get<std::size_t>();
      entry.caption = e.at("caption").get<std::string>();
      if (!e.at("category").is_null()) {
        entry.category = caption::category_from_code(e.at("category").get<std::string>());
      }
      entry.output = e.at("output").get<std::string>();
      entry.seed = e.at("seed").get<std::uint64_t>();
      manifest.entries.push_back(std::move(entry));
    }
    for (const json& f : doc.at("failures")) {
      manifest.failures.push_back({f.at("index").get<std::size_t>(),
                                   f.at("caption").get<std::string>(),
                                   f.at("seed").get<std::uint64_t>(),
                                   f.at("error").get<std::string>()});
    }
  } catch (const json::exception& e) {
    throw PipelineError(PipelineErrc::Io, std::string("malformed manifest: ") + e.what());
  }
  return manifest;
}

}  // namespace scenesynth::pipeline
