// Serial reference kernels against the OpenMP ones. Run with OMP_NUM_THREADS
// set to compare thread counts.
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "pcw/tensor.hpp"

namespace {

pcw::Matrix random_matrix(std::size_t rows, std::size_t cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  pcw::Matrix m(rows, cols);
  for (auto& v : m.values()) v = dist(rng);
  return m;
}

template <bool Parallel>
void bm_matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_matrix(n, n, 1);
  const auto b = random_matrix(n, n, 2);
  for (auto _ : state) {
    auto c = Parallel ? pcw::kernels::matmul(a, b) : pcw::kernels::serial::matmul(a, b);
    benchmark::DoNotOptimize(c.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

// Task queries over B cached windows of 64 tokens.
template <bool Parallel>
void bm_attention(benchmark::State& state) {
  const auto windows = static_cast<std::size_t>(state.range(0));
  const std::size_t d = 256, heads = 8, c = 64, t = 16;
  std::vector<pcw::Matrix> keys, values;
  for (std::size_t b = 0; b < windows; ++b) {
    keys.push_back(random_matrix(c, d, 10 + static_cast<unsigned>(b)));
    values.push_back(random_matrix(c, d, 100 + static_cast<unsigned>(b)));
  }
  std::vector<pcw::KvView> ctx;
  for (std::size_t b = 0; b < windows; ++b) ctx.push_back({&keys[b], &values[b]});
  const auto q = random_matrix(t, d, 3);
  const auto sk = random_matrix(t, d, 4);
  const auto sv = random_matrix(t, d, 5);
  pcw::AttentionArgs args{&q, ctx, &sk, &sv, {}, heads};
  for (auto _ : state) {
    auto out = Parallel ? pcw::kernels::attention(args) : pcw::kernels::serial::attention(args);
    benchmark::DoNotOptimize(out.values().data());
  }
}

}  // namespace

BENCHMARK(bm_matmul<false>)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_matmul<true>)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(bm_attention<false>)->Arg(1)->Arg(4)->Arg(8);
BENCHMARK(bm_attention<true>)->Arg(1)->Arg(4)->Arg(8);

BENCHMARK_MAIN();
