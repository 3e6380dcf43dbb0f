#include <gtest/gtest.h>

#include <cmath>

#include "xlp/embedding.hpp"
#include "xlp/mips_index.hpp"
#include "xlp/error.hpp"
#include "xlp/random.hpp"

using namespace xlp;

TEST(Embedding, NormalizeAndCosine) {
  const EmbeddingVector v{{3.0f, 4.0f}};
  const auto u = l2_normalize(v);
  EXPECT_NEAR(l2_norm(u.values), 1.0, 1e-6);
  EXPECT_NEAR(u.values[0], 0.6, 1e-6);
  EXPECT_EQ(l2_normalize(u), u);
  EXPECT_THROW(l2_normalize(EmbeddingVector{{0.0f, 0.0f}}), Error);
  EXPECT_THROW(l2_normalize(EmbeddingVector{{NAN, 1.0f}}), Error);

  SeededRng rng(3);
  for (int t = 0; t < 50; ++t) {
    std::vector<float> a(16), b(16);
    for (auto& x : a) x = static_cast<float>(rng.normal());
    for (auto& x : b) x = static_cast<float>(rng.normal());
    EXPECT_NEAR(cosine(a, a), 1.0, 1e-6);
    EXPECT_NEAR(cosine(a, b), cosine(b, a), 1e-6);
    EXPECT_LE(std::abs(cosine(a, b)), 1.0 + 1e-6);
  }
}

TEST(Embedding, DotIsLeftToRightDouble) {
  const std::vector<float> a{1e8f, 1.0f, -1e8f}, b{1.0f, 1.0f, 1.0f};
  double ref = 0.0;
  for (size_t i = 0; i < a.size(); ++i) ref += static_cast<double>(a[i]) * b[i];
  EXPECT_EQ(dot(a, b), ref);
}

TEST(Embedding, FastDotCloseToExact) {
  SeededRng rng(8);
  for (size_t dim : {1u, 7u, 8u, 9u, 64u, 768u}) {
    std::vector<float> a(dim), b(dim);
    for (auto& x : a) x = static_cast<float>(rng.normal());
    for (auto& x : b) x = static_cast<float>(rng.normal());
    EXPECT_NEAR(dot_fast(a.data(), b.data(), dim), dot(a, b), 1e-3) << dim;
  }
}

TEST(HashEncoder, DeterministicUnitAndLanguageBlind) {
  HashNgramEncoder enc(64);
  const auto a = enc.encode("Who wrote Hamlet?", "en");
  EXPECT_EQ(a.dim(), 64u);
  EXPECT_TRUE(is_unit_norm(a.values));
  EXPECT_EQ(a, enc.encode("Who wrote Hamlet?", "en"));
  EXPECT_EQ(a, enc.encode("who  WROTE hamlet?", "de"));
  EXPECT_NE(a, enc.encode("who wrote macbeth?", "en"));
  EXPECT_EQ(hash_ngram_encode("abc", "en", 64), enc.encode("abc", "en"));
  EXPECT_THROW(HashNgramEncoder(4), Error);
  EXPECT_NE(enc.name(), HashNgramEncoder(128).name());
}

TEST(HashEncoder, Trigrams) {
  const auto grams = char_trigrams("Ab");
  ASSERT_EQ(grams.size(), 2u);
  EXPECT_EQ(grams[0], U" ab");
  EXPECT_EQ(grams[1], U"ab ");
}

TEST(HashEncoder, SimilarTextsAreCloser) {
  HashNgramEncoder enc(256);
  const auto q = enc.encode("what is the capital of france", "en");
  const auto near = enc.encode("what is the capital of frances", "en");
  const auto far = enc.encode("how many legs does a spider have", "en");
  EXPECT_GT(dot(q.values, near.values), dot(q.values, far.values));
}
