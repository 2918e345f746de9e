#include "scenesynth/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string_view>

namespace scenesynth::wav {
namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) {
    out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xff));
  }
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t pos() const { return pos_; }

  void need(std::size_t n) const {
    if (!has(n)) throw WavError(WavErrc::Malformed, "truncated WAV data");
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | bytes_[pos_ + 1] << 8);
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::string_view tag() {
    need(4);
    std::string_view t(reinterpret_cast<const char*>(bytes_.data()) + pos_, 4);
    pos_ += 4;
    return t;
  }
  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_wav(const PcmAudio& audio) {
  if (audio.sample_rate_hz == 0) {
    throw WavError(WavErrc::Unsupported, "sample rate must be positive");
  }
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, audio.sample_rate_hz);
  put_u32(out, audio.sample_rate_hz * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : audio.samples) {
    if (!std::isfinite(s)) {
      throw WavError(WavErrc::Unsupported, "non-finite sample");
    }
    const double clamped = std::clamp(s, -1.0, 1.0);
    const auto q = static_cast<std::int16_t>(std::lround(clamped * 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  return out;
}

PcmAudio decode_wav(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.tag() != "RIFF") throw WavError(WavErrc::Malformed, "missing RIFF");
  in.u32();
  if (in.tag() != "WAVE") throw WavError(WavErrc::Malformed, "missing WAVE");

  PcmAudio audio;
  bool have_fmt = false;
  while (in.has(8)) {
    const std::string_view id = in.tag();
    const std::uint32_t size = in.u32();
    if (id == "fmt ") {
      if (size < 16) throw WavError(WavErrc::Malformed, "short fmt chunk");
      const std::uint16_t format = in.u16();
      const std::uint16_t channels = in.u16();
      audio.sample_rate_hz = in.u32();
      in.u32();
      in.u16();
      const std::uint16_t bits = in.u16();
      if (format != 1 || channels != 1 || bits != 16) {
        throw WavError(WavErrc::Unsupported,
                       "only 16-bit PCM mono WAV is supported");
      }
      if (audio.sample_rate_hz == 0) {
        throw WavError(WavErrc::Malformed, "zero sample rate");
      }
      in.skip(size - 16 + (size & 1));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw WavError(WavErrc::Malformed, "data before fmt");
      in.need(size);
      audio.samples.resize(size / 2);
      for (double& s : audio.samples) {
        s = static_cast<std::int16_t>(in.u16()) / 32768.0;
      }
      return audio;
    } else {
      in.skip(size + (size & 1));
    }
  }
  throw WavError(WavErrc::Malformed, "missing data chunk");
}

PcmAudio read_wav(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw WavError(WavErrc::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                  std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

void write_wav(const std::filesystem::path& path, const PcmAudio& audio) {
  const auto bytes = encode_wav(audio);
  std::ofstream file(path, std::ios::binary);
  if (!file) throw WavError(WavErrc::Io, "cannot write " + path.string());
  file.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!file) throw WavError(WavErrc::Io, "write failed for " + path.string());
}

}  // namespace scenesynth::wav
