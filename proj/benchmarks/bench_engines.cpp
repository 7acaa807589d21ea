#include <benchmark/benchmark.h>

#include <map>
#include <random>

#include "w1a8/coe_rom.hpp"
#include "w1a8/deploy.hpp"
#include "w1a8/fixedpoint.hpp"
#include "w1a8/fixture.hpp"
#include "w1a8/reference_engine.hpp"
#include "w1a8/stream_engine.hpp"

using namespace w1a8;

namespace {

// Default model at a reduced input size keeps one iteration short; the
// argument is the input edge in pixels.
ModelSpec scaled_default(int edge) {
  ModelSpec m = build_default_model();
  m.input = Shape{3, edge, edge};
  return m;
}

struct Setup {
  ParamManifest manifest;
  DeployedModel model;
  ActTensor image;
};

const Setup& setup(int edge) {
  static std::map<int, Setup> cache;
  auto it = cache.find(edge);
  if (it == cache.end()) {
    Setup s;
    s.manifest = random_manifest(scaled_default(edge), 7);
    s.model = deploy(s.manifest);
    s.image = synthetic_image(Shape{3, edge, edge}, 7);
    it = cache.emplace(edge, std::move(s)).first;
  }
  return it->second;
}

void BM_DirectEngine(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_fixed_direct(s.model, s.image));
}
BENCHMARK(BM_DirectEngine)->Arg(64)->Arg(320)->Unit(benchmark::kMillisecond);

void BM_FloatEngine(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(forward_float(s.manifest, s.image));
}
BENCHMARK(BM_FloatEngine)->Arg(64)->Arg(320)->Unit(benchmark::kMillisecond);

void BM_StreamEngine(benchmark::State& state) {
  const Setup& s = setup(static_cast<int>(state.range(0)));
  stream::StreamConfig cfg;
  cfg.queue_capacity = static_cast<size_t>(state.range(1));
  uint64_t cycles = 0;
  for (auto _ : state) {
    const auto r = stream::run_stream(s.model, s.image, cfg);
    cycles = r.cycles;
    benchmark::DoNotOptimize(r.head_words.data());
  }
  state.counters["cycles"] = static_cast<double>(cycles);
}
BENCHMARK(BM_StreamEngine)->Args({64, 2})->Args({320, 2})->Args({320, 8})->Unit(benchmark::kMillisecond);

void BM_PeW1A8(benchmark::State& state) {
  const int cin = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  stream::WindowToken win;
  for (int t = 0; t < 9; ++t) {
    stream::PixelVector pv;
    for (int c = 0; c < cin; ++c) pv.ch.push_back(static_cast<int32_t>(rng() % 256));
    win.taps.push_back(pv);
  }
  BinaryWeight s(cin, cin, 3);
  for (auto& b : s.bits) b = rng() & 1;
  std::vector<int64_t> mul(cin, 16384);
  for (auto _ : state) benchmark::DoNotOptimize(stream::pe_w1a8(win, s, mul));
  state.SetItemsProcessed(state.iterations() * 9 * cin * cin);
}
BENCHMARK(BM_PeW1A8)->Arg(16)->Arg(64);

void BM_ToFixed(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-4, 4);
  std::vector<double> xs(4096);
  for (auto& x : xs) x = u(rng);
  for (auto _ : state) {
    int64_t sum = 0;
    for (double x : xs) sum += to_fixed(x, kQ2_14).raw;
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * xs.size());
}
BENCHMARK(BM_ToFixed);

void BM_BuildRomSet(benchmark::State& state) {
  const Setup& s = setup(320);
  for (auto _ : state) benchmark::DoNotOptimize(build_rom_set(s.model, 16, 16));
}
BENCHMARK(BM_BuildRomSet)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
