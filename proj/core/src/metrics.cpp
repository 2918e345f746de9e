#include "scenesynth/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

namespace scenesynth::metrics {
namespace {

using MatrixXd = Eigen::MatrixXd;

[[noreturn]] void dim_error(std::size_t a, std::size_t b) {
  throw MetricError(MetricErrc::DimensionMismatch,
                    "dimension " + std::to_string(a) + " vs " +
                        std::to_string(b));
}

MatrixXd to_eigen(const EmbeddingStats& s) {
  const auto d = static_cast<Eigen::Index>(s.dim());
  MatrixXd m(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const auto ui = static_cast<std::size_t>(i);
      const auto uj = static_cast<std::size_t>(j);
      m(i, j) = 0.5 * (s.cov_at(ui, uj) + s.cov_at(uj, ui));
    }
  }
  return m;
}

// Eigenvalues of a symmetric PSD matrix, validated and clamped at zero.
Eigen::SelfAdjointEigenSolver<MatrixXd> psd_eigen(const MatrixXd& m,
                                                  const char* which) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(m);
  const auto& values = solver.eigenvalues();
  const double scale = values.size() ? values.cwiseAbs().maxCoeff() : 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (values(i) < -1e-6 * scale) {
      throw MetricError(MetricErrc::NonPSD,
                        std::string(which) +
                            " covariance is not positive semidefinite");
    }
  }
  return solver;
}

MatrixXd psd_sqrt(const Eigen::SelfAdjointEigenSolver<MatrixXd>& solver) {
  Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() *
         solver.eigenvectors().transpose();
}

std::vector<double> smooth(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  double total = 0.0;
  for (double& x : out) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw MetricError(MetricErrc::NotAProbability,
                        "probabilities must be finite and non-negative");
    }
    x += kKlSmoothing;
    total += x;
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

StatsAccumulator::StatsAccumulator(std::size_t dim)
    : mean_(dim, 0.0), comoment_(dim * dim, 0.0) {}

void StatsAccumulator::add(std::span<const double> row) {
  if (n_ == 0 && mean_.empty()) {
    mean_.assign(row.size(), 0.0);
    comoment_.assign(row.size() * row.size(), 0.0);
  }
  if (row.size() != mean_.size()) dim_error(mean_.size(), row.size());
  const std::size_t d = mean_.size();
  ++n_;
  std::vector<double> before(d);
  for (std::size_t i = 0; i < d; ++i) {
    before[i] = row[i] - mean_[i];
    mean_[i] += before[i] / static_cast<double>(n_);
  }
  for (std::size_t i = 0; i < d; ++i) {
    const double after_i = row[i] - mean_[i];
    for (std::size_t j = 0; j < d; ++j) {
      comoment_[i * d + j] += after_i * before[j];
    }
  }
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  if (other.dim() != dim()) dim_error(dim(), other.dim());
  const std::size_t d = dim();
  const double na = static_cast<double>(n_);
  const double nb = static_cast<double>(other.n_);
  const double n = na + nb;
  std::vector<double> delta(d);
  for (std::size_t i = 0; i < d; ++i) delta[i] = other.mean_[i] - mean_[i];
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      comoment_[i * d + j] +=
          other.comoment_[i * d + j] + delta[i] * delta[j] * na * nb / n;
    }
  }
  for (std::size_t i = 0; i < d; ++i) mean_[i] += delta[i] * nb / n;
  n_ += other.n_;
}

EmbeddingStats StatsAccumulator::finalize() const {
  if (n_ < 2) {
    throw MetricError(MetricErrc::TooFewSamples,
                      "need at least 2 rows, have " + std::to_string(n_));
  }
  const std::size_t d = dim();
  EmbeddingStats out{mean_, std::vector<double>(d * d), n_};
  const double denom = static_cast<double>(n_ - 1);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      // The Welford update is asymmetric in rounding; average the halves.
      const double c =
          0.5 * (comoment_[i * d + j] + comoment_[j * d + i]) / denom;
      out.cov[i * d + j] = c;
      out.cov[j * d + i] = c;
    }
  }
  return out;
}

EmbeddingStats accumulate_stats(std::span<const double> rows,
                                std::size_t dim) {
  if (dim == 0 || rows.size() % dim != 0) {
    throw MetricError(MetricErrc::DimensionMismatch,
                      "row buffer is not a multiple of the dimension");
  }
  StatsAccumulator acc(dim);
  for (std::size_t off = 0; off < rows.size(); off += dim) {
    acc.add(rows.subspan(off, dim));
  }
  return acc.finalize();
}

EmbeddingStats accumulate_stats(const std::vector<std::vector<double>>& rows) {
  StatsAccumulator acc;
  for (const auto& row : rows) acc.add(row);
  return acc.finalize();
}

double frechet_distance(const EmbeddingStats& a, const EmbeddingStats& b) {
  if (a.dim() != b.dim()) dim_error(a.dim(), b.dim());
  if (a.cov.size() != a.dim() * a.dim() || b.cov.size() != b.dim() * b.dim()) {
    throw MetricError(MetricErrc::DimensionMismatch,
                      "covariance size does not match the mean");
  }
  if (a.mean == b.mean && a.cov == b.cov) return 0.0;

  double mean_term = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    const double d = a.mean[i] - b.mean[i];
    mean_term += d * d;
  }

  const MatrixXd sa = to_eigen(a);
  const MatrixXd sb = to_eigen(b);
  const auto eig_a = psd_eigen(sa, "first");
  psd_eigen(sb, "second");
  const MatrixXd root_a = psd_sqrt(eig_a);
  MatrixXd inner = root_a * sb * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> inner_eig(inner,
                                                    Eigen::EigenvaluesOnly);
  const double cross =
      inner_eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();

  const double value = mean_term + sa.trace() + sb.trace() - 2.0 * cross;
  return std::max(0.0, value);
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) dim_error(p.size(), q.size());
  if (p.empty()) {
    throw MetricError(MetricErrc::DimensionMismatch, "empty distribution");
  }
  const std::vector<double> ps = smooth(p);
  const std::vector<double> qs = smooth(q);
  double kl = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    kl += ps[i] * std::log(ps[i] / qs[i]);
  }
  return std::max(0.0, kl);
}

double kl_divergence(std::span<const ProbPair> pairs) {
  if (pairs.empty()) {
    throw MetricError(MetricErrc::TooFewSamples, "no distribution pairs");
  }
  double total = 0.0;
  for (const ProbPair& pair : pairs) total += kl_divergence(pair.p, pair.q);
  return total / static_cast<double>(pairs.size());
}

Transcript normalize_transcript(std::string_view text) {
  Transcript out;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) out.words.push_back(std::move(word));
    word.clear();
  };
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u < 0x80 && std::isspace(u)) {
      flush();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      word.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  flush();
  return out;
}

std::size_t word_edit_distance(std::span<const std::string> ref,
                               std::span<const std::string> hyp) {
  std::vector<std::size_t> prev(hyp.size() + 1);
  std::vector<std::size_t> cur(hyp.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= ref.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= hyp.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[hyp.size()];
}

double wer(const Transcript& ref, const Transcript& hyp) {
  if (ref.words.empty()) {
    throw MetricError(MetricErrc::EmptyReference,
                      "reference transcript has no words");
  }
  return static_cast<double>(word_edit_distance(ref.words, hyp.words)) /
         static_cast<double>(ref.words.size());
}

double wer(std::string_view ref, std::string_view hyp) {
  return wer(normalize_transcript(ref), normalize_transcript(hyp));
}

double relevance_cosine(std::span<const double> audio_embedding,
                        std::span<const double> text_embedding) {
  if (audio_embedding.size() != text_embedding.size()) {
    dim_error(audio_embedding.size(), text_embedding.size());
  }
  double dot = 0.0;
  double na = 0.0;
  double nt = 0.0;
  for (std::size_t i = 0; i < audio_embedding.size(); ++i) {
    dot += audio_embedding[i] * text_embedding[i];
    na += audio_embedding[i] * audio_embedding[i];
    nt += text_embedding[i] * text_embedding[i];
  }
  if (na == 0.0 || nt == 0.0) {
    throw MetricError(MetricErrc::ZeroVector, "cosine of a zero vector");
  }
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nt)), -1.0, 1.0);
}

}  // namespace scenesynth::metrics
