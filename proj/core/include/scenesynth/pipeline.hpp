#pragma once

// Expert-pipeline prompt construction, start-aligned track mixing and batch
// latent generation over a caption corpus.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scenesynth/caption.hpp"
#include "scenesynth/error.hpp"
#include "scenesynth/flowmatch.hpp"

namespace scenesynth::pipeline {

enum class PipelineErrc { EmptyInput, SampleRateMismatch, NonFiniteSample, Io };

using PipelineError = CodedError<PipelineErrc>;

/// Per-system prompts derived from one structured caption. An empty string
/// means the target system is not invoked for this caption.
struct PromptBundle {
  std::string unified_structured;
  std::string unified_unstructured;
  std::string tta_full;
  std::string tts_transcript;
  std::string tts_instruction;
  std::string music_prompt;
  std::string sfx_prompt;
};

/// The TTS fields are filled only for captions with a speech component
/// (Speech or Asr view).
PromptBundle build_prompts(const caption::StructuredCaption& c);

enum class SourceRole { Speech, Music, Sfx };

std::string_view to_string(SourceRole role) noexcept;
std::optional<SourceRole> role_from_string(std::string_view name) noexcept;

struct Track {
  std::vector<double> samples;
  std::uint32_t sample_rate_hz = 0;
  SourceRole source_role = SourceRole::Sfx;
};

/// Start-aligned sum, zero-padded to the longest track, then divided by the
/// peak magnitude when it exceeds 1. Tracks are summed in (role, samples)
/// order so the result does not depend on the input order.
Track mix_tracks(const std::vector<Track>& tracks);

struct GenerationEntry {
  std::size_t index = 0;
  std::string caption;  // serialized structured caption
  std::optional<caption::SceneCategory> category;
  std::string output;  // file name relative to the output directory
  std::uint64_t seed = 0;
};

struct GenerationFailure {
  std::size_t index = 0;
  std::string caption;
  std::uint64_t seed = 0;
  std::string error;
};

struct Manifest {
  flowmatch::SamplerConfig sampler;
  std::vector<GenerationEntry> entries;
  std::vector<GenerationFailure> failures;
};

struct GenerationOptions {
  /// 0 or 1 runs inline; more uses a worker pool. Output is identical.
  std::size_t threads = 1;
};

/// Record i is sampled with seed sampler.rng_seed + i and written to
/// latent_<i>.csv under out_dir, together with manifest.json. Records whose
/// sampler state becomes non-finite are listed as failures.
Manifest run_generation(const flowmatch::VelocityField& model,
                        const flowmatch::LatentSpec& latent,
                        const std::vector<caption::StructuredCaption>& corpus,
                        const flowmatch::SamplerConfig& sampler,
                        const std::filesystem::path& out_dir,
                        const GenerationOptions& options = {});

std::string manifest_to_json(const Manifest& manifest);
Manifest manifest_from_json(std::string_view json);

std::string latent_file_name(std::size_t index);

}  // namespace scenesynth::pipeline
