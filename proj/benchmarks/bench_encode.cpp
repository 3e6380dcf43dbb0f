#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "xlp/embedding.hpp"

namespace {

const std::vector<std::string> kTexts = {
    "who wrote the origin of species",
    "cuál es la capital de francia",
    "種の起源を書いたのは誰",
    "berapa banyak kaki yang dimiliki oleh labah-labah",
};

void BM_HashEncode(benchmark::State& state) {
  const xlp::HashNgramEncoder encoder(static_cast<size_t>(state.range(0)));
  size_t i = 0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(encoder.encode(kTexts[i++ % kTexts.size()], "xx"));
  }
  state.SetItemsProcessed(state.iterations());
}

}  // namespace

BENCHMARK(BM_HashEncode)->Arg(256)->Arg(768)->Arg(1024);
