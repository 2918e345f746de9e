#include "scenesynth/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "property.hpp"

namespace scenesynth::pipeline {
namespace {

using caption::parse_caption;
using caption::ViewKind;
using scenesynth::testing::for_all;
using scenesynth::testing::pick;
using scenesynth::testing::uniform;

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("scenesynth_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TEST(BuildPromptsTest, MusicAndSfxWithoutSpeech) {
  const auto c = parse_caption("<|caption|> band and fireworks <|sfx|> pops <|music|> brass <|env|> park");
  const PromptBundle b = build_prompts(c);
  EXPECT_EQ(b.music_prompt, "brass");
  EXPECT_EQ(b.sfx_prompt, "pops");
  EXPECT_TRUE(b.tts_transcript.empty());
  EXPECT_TRUE(b.tts_instruction.empty());
  EXPECT_EQ(b.tta_full, "band and fireworks pops brass park");
}

TEST(BuildPromptsTest, CaptionOnly) {
  const PromptBundle b = build_prompts(parse_caption("<|caption|> quiet hum"));
  EXPECT_EQ(b.unified_structured, "<|caption|> quiet hum");
  EXPECT_EQ(b.unified_unstructured, "quiet hum");
  EXPECT_EQ(b.tta_full, "quiet hum");
  EXPECT_TRUE(b.tts_transcript.empty() && b.tts_instruction.empty() && b.music_prompt.empty() &&
              b.sfx_prompt.empty());
}

TEST(BuildPromptsTest, FullCaptionFillsEveryField) {
  const auto c = parse_caption(
      "<|caption|> c <|speech|> calm voice <|asr|> hello there <|sfx|> door <|music|> piano "
      "<|env|> hall");
  const PromptBundle b = build_prompts(c);
  for (const std::string* f : {&b.unified_structured, &b.unified_unstructured, &b.tta_full,
                               &b.tts_transcript, &b.tts_instruction, &b.music_prompt,
                               &b.sfx_prompt}) {
    EXPECT_FALSE(f->empty());
  }
  EXPECT_EQ(b.tts_transcript, "hello there");
  EXPECT_EQ(b.tts_instruction, "c calm voice door piano hall");
  EXPECT_EQ(b.tta_full, "c calm voice hello there door piano hall");
}

TEST(BuildPromptsTest, StructuredPromptRoundTrips) {
  for_all(300, 77, [](std::mt19937_64& rng, std::size_t) {
    const auto c = scenesynth::testing::random_caption(rng);
    EXPECT_EQ(parse_caption(build_prompts(c).unified_structured), c.canonical());
  });
}

Track constant(double v, std::size_t n, SourceRole role = SourceRole::Sfx) {
  return Track{std::vector<double>(n, v), 16000, role};
}

TEST(MixTracksTest, GoldenConstantCases) {
  const Track one = constant(0.3, 5, SourceRole::Music);
  const Track same = mix_tracks({one});
  EXPECT_EQ(same.samples, one.samples);
  EXPECT_EQ(same.source_role, SourceRole::Music);
  EXPECT_EQ(mix_tracks({constant(0.4, 4), constant(0.5, 4)}).samples,
            std::vector<double>(4, 0.4 + 0.5));
  EXPECT_EQ(mix_tracks({constant(0.8, 4), constant(0.6, 4)}).samples, std::vector<double>(4, 1.0));
}

TEST(MixTracksTest, Errors) {
  EXPECT_THROW(mix_tracks({}), PipelineError);
  Track other = constant(0.1, 3);
  other.sample_rate_hz = 8000;
  try {
    mix_tracks({constant(0.1, 3), other});
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_EQ(e.code(), PipelineErrc::SampleRateMismatch);
  }
  Track bad = constant(0.1, 3);
  bad.samples[1] = std::nan("");
  EXPECT_THROW(mix_tracks({bad, constant(0.1, 3)}), PipelineError);
}

TEST(MixTracksTest, RandomizedInvariants) {
  for_all(200, 1000, [](std::mt19937_64& rng, std::size_t) {
    std::vector<Track> tracks(2 + pick(rng, 4));
    std::size_t longest = 0;
    for (Track& t : tracks) {
      t.sample_rate_hz = 16000;
      t.source_role = static_cast<SourceRole>(pick(rng, 3));
      t.samples.resize(1 + pick(rng, 300));
      for (double& x : t.samples) x = uniform(rng, -1, 1);
      longest = std::max(longest, t.samples.size());
    }
    const Track mixed = mix_tracks(tracks);
    EXPECT_EQ(mixed.samples.size(), longest);
    for (double x : mixed.samples) EXPECT_LE(std::abs(x), 1.0);
    std::vector<Track> shuffled = tracks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(mix_tracks(shuffled).samples, mixed.samples);
  });
}

TEST(MixTracksTest, ShortTracksAreZeroPadded) {
  const Track m = mix_tracks({constant(0.25, 2), constant(0.5, 4)});
  EXPECT_EQ(m.samples, (std::vector<double>{0.75, 0.75, 0.5, 0.5}));
}

TEST(SourceRoleTest, NamesRoundTrip) {
  for (SourceRole r : {SourceRole::Speech, SourceRole::Music, SourceRole::Sfx}) {
    EXPECT_EQ(role_from_string(to_string(r)), r);
  }
  EXPECT_FALSE(role_from_string("drums").has_value());
}

// Constant drift toward +1, or an overflow for captions mentioning "boom".
class ScriptedField : public flowmatch::VelocityField {
 public:
  flowmatch::Var forward(flowmatch::Tape& tape, flowmatch::Var zt, double t,
                         const flowmatch::Condition& c) override {
    return tape.constant(velocity(zt.value(), t, c));
  }
  flowmatch::Matrix velocity(const flowmatch::Matrix& z, double, const flowmatch::Condition& c) const override {
    const bool boom = c && c->text(ViewKind::Caption)->find("boom") != std::string_view::npos;
    return flowmatch::Matrix(z.rows(), z.cols(), boom ? 1e308 : 1.0);
  }
};

std::vector<caption::StructuredCaption> corpus_of(std::size_t n) {
  std::vector<caption::StructuredCaption> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(parse_caption("<|caption|> clip " + std::to_string(i) + " <|sfx|> tick"));
  }
  return out;
}

TEST(RunGenerationTest, EmptyCorpus) {
  const auto dir = fresh_dir("gen_empty");
  const Manifest m = run_generation(ScriptedField(), {2, 25, 1}, {}, {.steps = 3}, dir);
  EXPECT_TRUE(m.entries.empty());
  EXPECT_TRUE(std::filesystem::exists(dir / "manifest.json"));
}

TEST(RunGenerationTest, WritesOneLatentPerCaptionDeterministically) {
  const auto dir = fresh_dir("gen_ten");
  const ScriptedField field;
  const flowmatch::SamplerConfig cfg{.steps = 4, .cfg_scale = 5.0, .rng_seed = 40};
  const Manifest m = run_generation(field, {2, 25, 3}, corpus_of(10), cfg, dir);
  ASSERT_EQ(m.entries.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(m.entries[i].index, i);
    EXPECT_EQ(m.entries[i].seed, 40 + i);
    EXPECT_EQ(m.entries[i].output, latent_file_name(i));
    EXPECT_EQ(m.entries[i].category, caption::SceneCategory::SfxOnly);
    EXPECT_TRUE(std::filesystem::exists(dir / latent_file_name(i)));
  }
  const std::string first = slurp(dir / latent_file_name(3));
  const auto dir2 = fresh_dir("gen_ten_threads");
  run_generation(field, {2, 25, 3}, corpus_of(10), cfg, dir2, {.threads = 4});
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(slurp(dir / latent_file_name(i)), slurp(dir2 / latent_file_name(i)));
  }
  EXPECT_EQ(slurp(dir / "manifest.json"), slurp(dir2 / "manifest.json"));
  run_generation(field, {2, 25, 3}, corpus_of(10), cfg, dir);
  EXPECT_EQ(slurp(dir / latent_file_name(3)), first);
}

TEST(RunGenerationTest, NonFiniteRecordsAreSkipped) {
  const auto dir = fresh_dir("gen_boom");
  auto corpus = corpus_of(5);
  corpus[2] = parse_caption("<|caption|> boom");
  const Manifest m = run_generation(ScriptedField(), {2, 25, 1}, corpus, {.steps = 3}, dir);
  EXPECT_EQ(m.entries.size() + m.failures.size(), corpus.size());
  ASSERT_EQ(m.failures.size(), 1u);
  EXPECT_EQ(m.failures[0].index, 2u);
  EXPECT_FALSE(std::filesystem::exists(dir / latent_file_name(2)));
  const Manifest back = manifest_from_json(slurp(dir / "manifest.json"));
  EXPECT_EQ(back.entries.size(), 4u);
  EXPECT_EQ(back.failures.size(), 1u);
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
}

TEST(ManifestTest, RejectsWrongSchema) {
  EXPECT_THROW(manifest_from_json(R"({"schema":"other"})"), Error);
  EXPECT_THROW(manifest_from_json("[]"), Error);
}

}  // namespace
}  // namespace scenesynth::pipeline
