#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"
#include "xlp/error.hpp"
#include "xlp/mips_index.hpp"
#include "xlp/random.hpp"

using namespace xlp;

namespace {

VectorStore random_store(size_t n, size_t dim, uint64_t seed, size_t distinct = 0) {
  SeededRng rng(seed);
  VectorStore s(dim, {"rand", true, {}});
  std::vector<std::vector<float>> pool;
  for (size_t i = 0; i < n; ++i) {
    std::vector<float> v(dim);
    if (distinct != 0 && pool.size() == distinct) {
      v = pool[rng.below(distinct)];
    } else {
      for (auto& x : v) x = static_cast<float>(rng.normal());
      v = l2_normalize({v}).values;
      if (distinct != 0) pool.push_back(v);
    }
    s.add("id" + std::to_string(rng.next() % 1000000) + "_" + std::to_string(i), v);
  }
  return s;
}

std::vector<CandidateMatch> brute(const VectorStore& s, std::span<const float> q, size_t k) {
  std::vector<CandidateMatch> all;
  for (size_t i = 0; i < s.size(); ++i) all.push_back({s.ids()[i], dot(q, s.row(i))});
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.similarity > b.similarity || (a.similarity == b.similarity && a.hrl_id < b.hrl_id);
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<float> random_unit(SeededRng& rng, size_t dim) {
  std::vector<float> q(dim);
  for (auto& x : q) x = static_cast<float>(rng.normal());
  return l2_normalize({q}).values;
}

}  // namespace

TEST(MipsIndex, ExactMatchesBruteForce) {
  SeededRng rng(12);
  for (int t = 0; t < 20; ++t) {
    const size_t n = 1 + rng.below(2000), dim = 1 + rng.below(64), k = 1 + rng.below(20);
    const auto s = random_store(n, dim, rng.next());
    const auto idx = build_index(s);
    for (int q = 0; q < 5; ++q) {
      const auto v = random_unit(rng, dim);
      EXPECT_EQ(idx.search(v, k), brute(s, v, k)) << "n=" << n << " dim=" << dim;
    }
  }
}

TEST(MipsIndex, TiesBreakByAscendingId) {
  const auto s = random_store(300, 8, 4, 5);  // heavy duplication
  const auto idx = build_index(s);
  SeededRng rng(1);
  for (int q = 0; q < 20; ++q) {
    const auto v = random_unit(rng, 8);
    EXPECT_EQ(idx.search(v, 20), brute(s, v, 20));
  }
}

TEST(MipsIndex, SelfMatchAndSmallK) {
  const auto s = random_store(50, 16, 9);
  const auto idx = build_index(s);
  const auto hits = idx.search(s.row(7), 3);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(hits[0].hrl_id, s.ids()[7]);
  EXPECT_NEAR(hits[0].similarity, 1.0, 1e-5);
  EXPECT_EQ(idx.search(s.row(0), 500).size(), 50u);
}

TEST(MipsIndex, DimMismatchAndEmpty) {
  const auto idx = build_index(random_store(10, 4, 1));
  EXPECT_THROW(idx.search(std::vector<float>{1.0f, 0.0f}, 1), Error);
  EXPECT_THROW(build_index(VectorStore(4, {"e", true, {}})), Error);
  EXPECT_THROW(idx.search(std::vector<float>{1, 0, 0, 0}, 0), Error);
}

TEST(MipsIndex, SnapshotRoundTrip) {
  xlp::test::TempDir tmp;
  const auto s = random_store(500, 16, 2);
  for (auto mode : {IndexMode::exact, IndexMode::approximate}) {
    const auto idx = build_index(s, mode);
    idx.save(tmp / "i.xlpi");
    const auto back = Index::load(tmp / "i.xlpi");
    EXPECT_EQ(back.mode(), mode);
    EXPECT_EQ(back.encoder_name(), "rand");
    SeededRng rng(5);
    for (int q = 0; q < 10; ++q) {
      const auto v = random_unit(rng, 16);
      EXPECT_EQ(back.search(v, 10), idx.search(v, 10));
    }
  }
  auto raw = xlp::test::read_file(tmp / "i.xlpi");
  raw[raw.size() / 2] ^= 0x10;
  xlp::test::write_file(tmp / "bad.xlpi", raw);
  EXPECT_THROW(Index::load(tmp / "bad.xlpi"), Error);
}

// Clustered data, default parameters: top-1 agreement with exact search.
TEST(MipsIndex, ApproximateRecallOnClusteredData) {
  const size_t n = 10000, dim = 32, clusters = 100;
  SeededRng rng(77);
  std::vector<std::vector<float>> centers;
  for (size_t c = 0; c < clusters; ++c) centers.push_back(random_unit(rng, dim));
  VectorStore s(dim, {"clustered", true, {}});
  for (size_t i = 0; i < n; ++i) {
    const auto& c = centers[rng.below(clusters)];
    std::vector<float> v(dim);
    for (size_t d = 0; d < dim; ++d) v[d] = c[d] + 0.15f * static_cast<float>(rng.normal());
    s.add("v" + std::to_string(i), l2_normalize({v}).values);
  }
  const auto exact = build_index(s, IndexMode::exact);
  const auto approx = build_index(s, IndexMode::approximate);
  size_t agree = 0;
  const size_t probes = 1000;
  for (size_t q = 0; q < probes; ++q) {
    const auto& c = centers[rng.below(clusters)];
    std::vector<float> v(dim);
    for (size_t d = 0; d < dim; ++d) v[d] = c[d] + 0.15f * static_cast<float>(rng.normal());
    const auto u = l2_normalize({v}).values;
    agree += exact.search(u, 1)[0].hrl_id == approx.search(u, 1)[0].hrl_id;
  }
  EXPECT_GE(static_cast<double>(agree) / probes, 0.95);
}
