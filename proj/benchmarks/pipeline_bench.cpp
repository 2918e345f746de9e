#include <benchmark/benchmark.h>

#include <random>

#include "scenesynth/pipeline.hpp"

namespace {

using namespace scenesynth::pipeline;

void BM_MixTracks(benchmark::State& state) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  std::vector<Track> tracks;
  const SourceRole roles[] = {SourceRole::Speech, SourceRole::Music, SourceRole::Sfx};
  for (const SourceRole role : roles) {
    Track t;
    t.sample_rate_hz = 16000;
    t.source_role = role;
    t.samples.resize(static_cast<std::size_t>(state.range(0)));
    for (double& x : t.samples) x = u(rng);
    tracks.push_back(std::move(t));
  }
  for (auto _ : state) benchmark::DoNotOptimize(mix_tracks(tracks));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MixTracks)->Arg(16000)->Arg(160000);

}  // namespace
