#include <cmath>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>
#include <fmt/format.h>

#include "xlp/mips_index.hpp"
#include "xlp/random.hpp"
#include "xlp/vector_store.hpp"

namespace {

std::vector<float> unit_vector(xlp::SeededRng& rng, size_t dim) {
  std::vector<float> v(dim);
  double norm = 0;
  for (auto& x : v) {
    x = static_cast<float>(rng.normal());
    norm += double(x) * x;
  }
  for (auto& x : v) x = static_cast<float>(x / std::sqrt(norm));
  return v;
}

xlp::VectorStore random_store(size_t n, size_t dim, uint64_t seed) {
  xlp::SeededRng rng(seed);
  xlp::VectorStore store(dim, {"bench", true, {}});
  for (size_t i = 0; i < n; ++i) store.add(fmt::format("v{:07}", i), unit_vector(rng, dim));
  return store;
}

void search(benchmark::State& state, xlp::IndexMode mode) {
  const auto n = static_cast<size_t>(state.range(0));
  const size_t dim = 256;
  const auto store = random_store(n, dim, 42);
  const auto index = xlp::Index::build(store, mode);
  xlp::SeededRng rng(7);
  std::vector<std::vector<float>> queries;
  for (int i = 0; i < 64; ++i) queries.push_back(unit_vector(rng, dim));
  size_t q = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(index.search(queries[q++ % queries.size()], 10));
  }
  state.SetItemsProcessed(state.iterations());
}

void BM_SearchExact(benchmark::State& state) { search(state, xlp::IndexMode::exact); }
void BM_SearchApproximate(benchmark::State& state) { search(state, xlp::IndexMode::approximate); }

void BM_BuildApproximate(benchmark::State& state) {
  const auto store = random_store(static_cast<size_t>(state.range(0)), 256, 42);
  for (auto _ : state) benchmark::DoNotOptimize(xlp::Index::build(store, xlp::IndexMode::approximate));
}

}  // namespace

BENCHMARK(BM_SearchExact)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(BM_SearchApproximate)->Arg(1000)->Arg(10000)->Arg(100000);
BENCHMARK(BM_BuildApproximate)->Arg(10000)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
