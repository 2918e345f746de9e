#include "scenesynth/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "property.hpp"

namespace scenesynth::metrics {
namespace {

using scenesynth::testing::for_all;
using scenesynth::testing::pick;
using scenesynth::testing::uniform;

EmbeddingStats diagonal(std::vector<double> mean, std::vector<double> var, std::size_t n = 10) {
  EmbeddingStats s;
  const std::size_t d = mean.size();
  s.mean = std::move(mean);
  s.cov.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) s.cov[i * d + i] = var[i];
  s.n = n;
  return s;
}

// Random PSD covariance as A Aᵀ for a random square A.
EmbeddingStats random_stats(std::mt19937_64& rng, std::size_t d) {
  std::vector<double> a(d * d);
  for (double& x : a) x = uniform(rng, -1, 1);
  EmbeddingStats s;
  s.mean.resize(d);
  for (double& m : s.mean) m = uniform(rng, -2, 2);
  s.cov.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t k = 0; k < d; ++k) s.cov[i * d + j] += a[i * d + k] * a[j * d + k];
  s.n = 50;
  return s;
}

TEST(AccumulateStatsTest, TwoPointAndConstantRows) {
  const EmbeddingStats s = accumulate_stats({{0, 0}, {2, 2}});
  EXPECT_EQ(s.mean, (std::vector<double>{1, 1}));
  EXPECT_EQ(s.cov, (std::vector<double>{2, 2, 2, 2}));
  EXPECT_EQ(s.n, 2u);
  const EmbeddingStats c = accumulate_stats({{3, -1}, {3, -1}, {3, -1}});
  EXPECT_EQ(c.cov, (std::vector<double>{0, 0, 0, 0}));
}

TEST(AccumulateStatsTest, Errors) {
  try {
    accumulate_stats({{1, 2}});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.code(), MetricErrc::TooFewSamples);
  }
  try {
    accumulate_stats({{1, 2}, {1, 2, 3}});
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.code(), MetricErrc::DimensionMismatch);
  }
}

TEST(AccumulateStatsTest, MatchesTwoPassOracle) {
  std::mt19937_64 rng(1234);
  const std::size_t d = 5, n = 1000;
  std::vector<std::vector<double>> rows(n, std::vector<double>(d));
  for (auto& r : rows)
    for (double& x : r) x = 100.0 + uniform(rng, -3, 3);
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i) mean[i] += r[i];
  for (double& m : mean) m /= n;
  std::vector<double> cov(d * d, 0.0);
  for (const auto& r : rows)
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] += (r[i] - mean[i]) * (r[j] - mean[j]);
  for (double& c : cov) c /= (n - 1);
  const EmbeddingStats s = accumulate_stats(rows);
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(s.mean[i], mean[i], 1e-10);
  for (std::size_t i = 0; i < d * d; ++i) EXPECT_NEAR(s.cov[i], cov[i], 1e-10);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(s.cov_at(i, j), s.cov_at(j, i), 1e-9);
}

TEST(AccumulateStatsTest, MergeEqualsSequential) {
  for_all(20, 40, [](std::mt19937_64& rng, std::size_t) {
    const std::size_t d = 3;
    StatsAccumulator all(d), left(d), right(d);
    const std::size_t n = 4 + pick(rng, 60);
    const std::size_t split = pick(rng, n);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row{uniform(rng, -5, 5), uniform(rng, -5, 5), uniform(rng, -5, 5)};
      all.add(row);
      (i < split ? left : right).add(row);
    }
    left.merge(right);
    const EmbeddingStats a = all.finalize(), b = left.finalize();
    EXPECT_EQ(a.n, b.n);
    for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(a.mean[i], b.mean[i], 1e-12);
    for (std::size_t i = 0; i < d * d; ++i) EXPECT_NEAR(a.cov[i], b.cov[i], 1e-11);
  });
}

TEST(FrechetTest, GoldenValues) {
  EXPECT_NEAR(frechet_distance(diagonal({0}, {1}), diagonal({1}, {1})), 1.0, 1e-9);
  EXPECT_NEAR(frechet_distance(diagonal({0, 0}, {1, 4}), diagonal({0, 0}, {4, 1})), 2.0, 1e-9);
  std::mt19937_64 rng(2);
  const EmbeddingStats s = random_stats(rng, 4);
  EXPECT_NEAR(frechet_distance(s, s), 0.0, 1e-9);
}

TEST(FrechetTest, SymmetricOnRandomPsdPairs) {
  for_all(100, 700, [](std::mt19937_64& rng, std::size_t) {
    const std::size_t d = 1 + pick(rng, 6);
    const EmbeddingStats a = random_stats(rng, d), b = random_stats(rng, d);
    const double ab = frechet_distance(a, b), ba = frechet_distance(b, a);
    EXPECT_NEAR(ab, ba, 1e-9);
    EXPECT_GE(ab, 0.0);
  });
}

TEST(FrechetTest, DiagonalClosedFormOracle) {
  for_all(100, 900, [](std::mt19937_64& rng, std::size_t) {
    const std::size_t d = 1 + pick(rng, 3);
    std::vector<double> ma(d), mb(d), va(d), vb(d);
    double oracle = 0;
    for (std::size_t i = 0; i < d; ++i) {
      ma[i] = uniform(rng, -3, 3);
      mb[i] = uniform(rng, -3, 3);
      va[i] = uniform(rng, 0, 4);
      vb[i] = uniform(rng, 0, 4);
      const double sd = std::sqrt(va[i]) - std::sqrt(vb[i]);
      oracle += (ma[i] - mb[i]) * (ma[i] - mb[i]) + sd * sd;
    }
    EXPECT_NEAR(frechet_distance(diagonal(ma, va), diagonal(mb, vb)), oracle, 1e-8);
  });
}

TEST(FrechetTest, Errors) {
  try {
    frechet_distance(diagonal({0}, {1}), diagonal({0, 0}, {1, 1}));
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.code(), MetricErrc::DimensionMismatch);
  }
  try {
    frechet_distance(diagonal({0, 0}, {1, -1}), diagonal({0, 0}, {1, 1}));
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.code(), MetricErrc::NonPSD);
  }
}

TEST(KlTest, GoldenValues) {
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75}),
              0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-9);
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75}),
              0.14384, 1e-5);
  EXPECT_NEAR(kl_divergence(std::vector<double>{0.2, 0.8}, std::vector<double>{0.2, 0.8}), 0.0,
              1e-15);
}

TEST(KlTest, MeanOverPairsAndErrors) {
  std::vector<ProbPair> pairs = {{{0.5, 0.5}, {0.25, 0.75}}, {{1, 0}, {1, 0}}};
  EXPECT_NEAR(kl_divergence(pairs),
              kl_divergence(pairs[0].p, pairs[0].q) / 2 + kl_divergence(pairs[1].p, pairs[1].q) / 2,
              1e-15);
  EXPECT_THROW(kl_divergence(std::vector<double>{1}, std::vector<double>{0.5, 0.5}), MetricError);
  EXPECT_THROW(kl_divergence(std::vector<double>{-0.1, 1.1}, std::vector<double>{0.5, 0.5}),
               MetricError);
}

TEST(KlTest, NonNegativeProperty) {
  for_all(1000, 1300, [](std::mt19937_64& rng, std::size_t) {
    const std::size_t d = 2 + pick(rng, 5);
    std::vector<double> p(d), q(d);
    double sp = 0, sq = 0;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] = pick(rng, 4) == 0 ? 0.0 : uniform(rng, 0, 1);
      q[i] = uniform(rng, 1e-3, 1);
      sp += p[i];
      sq += q[i];
    }
    if (sp == 0) p[0] = sp = 1;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] /= sp;
      q[i] /= sq;
    }
    EXPECT_GE(kl_divergence(p, q), 0.0);
    EXPECT_NEAR(kl_divergence(p, p), 0.0, 1e-12);
  });
}

TEST(WerTest, GoldenValues) {
  EXPECT_EQ(wer("a b c", "a x c"), 1.0 / 3.0);
  EXPECT_EQ(wer("a b c", "a b c"), 0.0);
  EXPECT_EQ(wer("a b c", ""), 1.0);
  EXPECT_EQ(wer("Hello, World!", "hello world"), 0.0);
  try {
    wer(" ... ", "a");
    FAIL();
  } catch (const MetricError& e) {
    EXPECT_EQ(e.code(), MetricErrc::EmptyReference);
  }
}

TEST(WerTest, NormalizationRules) {
  EXPECT_EQ(normalize_transcript("  It's  A\tTEST.\n").words,
            (std::vector<std::string>{"its", "a", "test"}));
  EXPECT_TRUE(normalize_transcript("?! ,").words.empty());
}

// Textbook O(nm) dynamic program, written independently.
std::size_t oracle_distance(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

TEST(WerTest, EditDistanceOracleAndAppendMonotonicity) {
  static const char* vocab[] = {"a", "b", "c", "d"};
  for_all(300, 1700, [](std::mt19937_64& rng, std::size_t) {
    auto words = [&] {
      std::vector<std::string> w(pick(rng, 8));
      for (auto& x : w) x = vocab[pick(rng, 4)];
      return w;
    };
    auto ref = words(), hyp = words();
    const std::size_t d = word_edit_distance(ref, hyp);
    EXPECT_EQ(d, oracle_distance(ref, hyp));
    const std::string w = vocab[pick(rng, 4)];
    ref.push_back(w);
    hyp.push_back(w);
    EXPECT_LE(word_edit_distance(ref, hyp), d);
  });
}

TEST(CosineTest, GoldenValuesAndErrors) {
  EXPECT_NEAR(relevance_cosine(std::vector<double>{1, 1}, std::vector<double>{1, 0}), 0.70711,
              1e-5);
  EXPECT_NEAR(relevance_cosine(std::vector<double>{3, -2}, std::vector<double>{3, -2}), 1.0,
              1e-15);
  EXPECT_EQ(relevance_cosine(std::vector<double>{0, 2}, std::vector<double>{5, 0}), 0.0);
  EXPECT_THROW(relevance_cosine(std::vector<double>{0, 0}, std::vector<double>{1, 0}),
               MetricError);
  EXPECT_THROW(relevance_cosine(std::vector<double>{1}, std::vector<double>{1, 0}), MetricError);
}

TEST(PurityTest, RepeatedCallsAreBitIdentical) {
  std::mt19937_64 rng(3);
  const EmbeddingStats a = random_stats(rng, 5), b = random_stats(rng, 5);
  EXPECT_EQ(frechet_distance(a, b), frechet_distance(a, b));
  const std::vector<double> x{0.1, 0.2, 0.7}, y{0.3, 0.3, 0.4};
  EXPECT_EQ(kl_divergence(x, y), kl_divergence(x, y));
  EXPECT_EQ(relevance_cosine(x, y), relevance_cosine(x, y));
}

}  // namespace
}  // namespace scenesynth::metrics
