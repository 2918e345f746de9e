#pragma once

// 16-bit PCM mono WAV reading and writing.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::wav {

enum class WavErrc { Io, Malformed, Unsupported };

using WavError = CodedError<WavErrc>;

struct PcmAudio {
  std::uint32_t sample_rate_hz = 0;
  std::vector<double> samples;  // in [-1, 1]
};

/// Samples are clamped to [-1, 1] and scaled by 32767 with rounding.
std::vector<std::uint8_t> encode_wav(const PcmAudio& audio);
/// Accepts RIFF/WAVE with a 16-bit PCM mono fmt chunk; unknown chunks are
/// skipped. Samples are divided by 32768.
PcmAudio decode_wav(const std::vector<std::uint8_t>& bytes);

PcmAudio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const PcmAudio& audio);

}  // namespace scenesynth::wav
