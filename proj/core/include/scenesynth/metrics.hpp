#pragma once

// Objective metrics over embedding streams and transcripts. Feature
// extraction happens elsewhere; everything here works on plain vectors.

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scenesynth/error.hpp"

namespace scenesynth::metrics {

enum class MetricErrc {
  DimensionMismatch,
  TooFewSamples,
  NonPSD,
  EmptyReference,
  ZeroVector,
  NotAProbability,
};

using MetricError = CodedError<MetricErrc>;

/// Gaussian summary of an embedding set: mean, unbiased covariance
/// (row-major dim x dim) and sample count.
struct EmbeddingStats {
  std::vector<double> mean;
  std::vector<double> cov;
  std::size_t n = 0;

  std::size_t dim() const noexcept { return mean.size(); }
  double cov_at(std::size_t i, std::size_t j) const noexcept {
    return cov[i * mean.size() + j];
  }
};

/// Streaming Welford accumulator. Two accumulators over disjoint row sets
/// can be merged, which allows parallel ingestion.
class StatsAccumulator {
 public:
  StatsAccumulator() = default;
  explicit StatsAccumulator(std::size_t dim);

  void add(std::span<const double> row);
  void merge(const StatsAccumulator& other);

  std::size_t count() const noexcept { return n_; }
  std::size_t dim() const noexcept { return mean_.size(); }

  /// Throws TooFewSamples below two rows.
  EmbeddingStats finalize() const;

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_;
  std::vector<double> comoment_;  // Σ (x - mean)(x - mean)ᵀ
};

/// `rows` holds consecutive vectors of length `dim`.
EmbeddingStats accumulate_stats(std::span<const double> rows, std::size_t dim);
EmbeddingStats accumulate_stats(const std::vector<std::vector<double>>& rows);

/// ||μa - μb||² + Tr(Σa + Σb - 2 (Σa Σb)^{1/2}).
///
/// The cross term is evaluated as Tr((Σa^{1/2} Σb Σa^{1/2})^{1/2}) through
/// symmetric eigendecompositions, clamping small negative eigenvalues at 0.
/// Eigenvalues of either covariance below -1e-6 ||Σ|| raise NonPSD.
double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b);

struct ProbPair {
  std::vector<double> p;
  std::vector<double> q;
};

inline constexpr double kKlSmoothing = 1e-10;

/// Mean over pairs of Σ p ln(p / q), after adding kKlSmoothing to every
/// entry of p and q and renormalizing.
double kl_divergence(std::span<const ProbPair> pairs);
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Lowercased word tokens with ASCII punctuation removed.
struct Transcript {
  std::vector<std::string> words;
};

/// Lowercase ASCII, drop ASCII punctuation, split on whitespace.
Transcript normalize_transcript(std::string_view text);

std::size_t word_edit_distance(std::span<const std::string> ref,
                               std::span<const std::string> hyp);

/// Word-level Levenshtein distance over reference length.
double wer(const Transcript& ref, const Transcript& hyp);
double wer(std::string_view ref, std::string_view hyp);

/// Cosine similarity in [-1, 1].
double relevance_cosine(std::span<const double> audio_embedding,
                        std::span<const double> text_embedding);

}  // namespace scenesynth::metrics
