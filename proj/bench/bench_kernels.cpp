#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "padst/kernels.hpp"

using namespace padst::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(-1, 1);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_vec(n * n, 1);
  auto b = random_vec(n * n, 2);
  std::vector<float> c(n * n);
  GemmShape s{n, n, n, Trans::no, Trans::no};
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::gemm<float>(s, a.data(), b.data(), c.data(), false);
    } else {
      serial::gemm<float>(s, a.data(), b.data(), c.data(), false);
    }
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  AttentionDims d{32, len, len, 2, 32, true};
  const std::size_t rows = d.batch * len, width = d.heads * d.head_dim;
  auto q = random_vec(rows * width, 3);
  auto k = random_vec(rows * width, 4);
  auto v = random_vec(rows * width, 5);
  std::vector<int> lengths(d.batch, static_cast<int>(len));
  std::vector<float> p(d.batch * d.heads * len * len), o(rows * width);
  for (auto _ : state) {
    if constexpr (Parallel) {
      parallel::attention_forward<float>(d, lengths, q.data(), k.data(), v.data(), p.data(),
                                         o.data());
    } else {
      serial::attention_forward<float>(d, lengths, q.data(), k.data(), v.data(), p.data(),
                                       o.data());
    }
    benchmark::DoNotOptimize(o.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false>)->Name("gemm/serial")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_Attention<false>)->Name("attention/serial")->Arg(16)->Arg(32)->Arg(64);
BENCHMARK(BM_Attention<true>)->Name("attention/parallel")->Arg(16)->Arg(32)->Arg(64);

BENCHMARK_MAIN();
