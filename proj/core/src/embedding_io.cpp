#include "scenesynth/embedding_io.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace scenesynth::metrics {
namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

std::uint32_t load_u32_le(const std::byte* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void store_u32_le(std::vector<std::byte>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
  }
}

}  // namespace

EmbeddingTable parse_embedding_csv(std::string_view text) {
  EmbeddingTable table;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::size_t count = 0;
    std::istringstream cells(line);
    for (std::string cell; std::getline(cells, cell, ',');) {
      const auto first = cell.find_first_not_of(" \t\r");
      const auto last = cell.find_last_not_of(" \t\r");
      double v = 0.0;
      const char* begin = first == std::string::npos ? cell.data()
                                                     : cell.data() + first;
      const char* end = first == std::string::npos ? cell.data()
                                                   : cell.data() + last + 1;
      auto [ptr, ec] = std::from_chars(begin, end, v);
      if (ec != std::errc() || ptr != end) {
        throw EmbeddingIoError(EmbeddingIoErrc::Malformed,
                               "line " + std::to_string(line_no) +
                                   ": bad number '" + cell + "'");
      }
      table.values.push_back(v);
      ++count;
    }
    if (table.dim == 0) table.dim = count;
    if (count != table.dim) {
      throw EmbeddingIoError(EmbeddingIoErrc::Malformed,
                             "line " + std::to_string(line_no) + " has " +
                                 std::to_string(count) + " values, expected " +
                                 std::to_string(table.dim));
    }
  }
  return table;
}

EmbeddingTable parse_embedding_binary(std::span<const std::byte> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw EmbeddingIoError(EmbeddingIoErrc::Malformed, "missing EMB1 header");
  }
  EmbeddingTable table;
  table.dim = load_u32_le(bytes.data() + 4);
  const std::size_t payload = bytes.size() - 8;
  if (table.dim == 0 || payload % (4 * table.dim) != 0) {
    throw EmbeddingIoError(EmbeddingIoErrc::Malformed,
                           "payload is not a whole number of rows");
  }
  table.values.reserve(payload / 4);
  for (std::size_t off = 8; off < bytes.size(); off += 4) {
    const std::uint32_t raw = load_u32_le(bytes.data() + off);
    table.values.push_back(static_cast<double>(std::bit_cast<float>(raw)));
  }
  return table;
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw EmbeddingIoError(EmbeddingIoErrc::Io,
                           "cannot open " + path.string());
  }
  std::string raw((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (raw.size() >= 4 && std::memcmp(raw.data(), kMagic, 4) == 0) {
    return parse_embedding_binary(std::as_bytes(std::span(raw)));
  }
  return parse_embedding_csv(raw);
}

std::string format_embedding_csv(const EmbeddingTable& table) {
  std::string out;
  char buf[32];
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out.push_back(',');
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, row[c]);
      out.append(buf, end);
    }
    out.push_back('\n');
  }
  return out;
}

std::vector<std::byte> encode_embedding_binary(const EmbeddingTable& table) {
  std::vector<std::byte> out;
  out.reserve(8 + 4 * table.values.size());
  for (char c : kMagic) out.push_back(static_cast<std::byte>(c));
  store_u32_le(out, static_cast<std::uint32_t>(table.dim));
  for (double v : table.values) {
    store_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  return out;
}

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingTable& table, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw EmbeddingIoError(EmbeddingIoErrc::Io,
                           "cannot write " + path.string());
  }
  if (binary) {
    auto bytes = encode_embedding_binary(table);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  } else {
    out << format_embedding_csv(table);
  }
}

}  // namespace scenesynth::metrics
