#pragma once

// Embedding files come in two encodings:
//  * CSV: one vector per line, comma separated decimals.
//  * emb-v1: magic "EMB1", little-endian u32 dim, then float32 rows
//    (row count implied by the file size).

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::metrics {

enum class EmbeddingIoErrc { Io, Malformed };

using EmbeddingIoError = CodedError<EmbeddingIoErrc>;

struct EmbeddingTable {
  std::size_t dim = 0;
  std::vector<double> values;  // rows() x dim, row-major

  std::size_t rows() const noexcept { return dim ? values.size() / dim : 0; }
  std::span<const double> row(std::size_t r) const noexcept {
    return std::span<const double>(values).subspan(r * dim, dim);
  }
};

EmbeddingTable parse_embedding_csv(std::string_view text);
EmbeddingTable parse_embedding_binary(std::span<const std::byte> bytes);

/// Picks the decoder from the leading magic bytes.
EmbeddingTable read_embeddings(const std::filesystem::path& path);

std::string format_embedding_csv(const EmbeddingTable& table);
std::vector<std::byte> encode_embedding_binary(const EmbeddingTable& table);

void write_embeddings(const std::filesystem::path& path,
                      const EmbeddingTable& table, bool binary);

}  // namespace scenesynth::metrics
