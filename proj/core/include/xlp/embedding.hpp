#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlp/corpus_store.hpp"

namespace xlp {

struct EmbeddingVector {
  std::vector<float> values;

  size_t dim() const noexcept { return values.size(); }
  std::span<const float> view() const noexcept { return values; }
  bool operator==(const EmbeddingVector&) const = default;
};

// Inner product accumulated in double, strictly left to right. Every exact
// similarity in the engine goes through this so that scores are reproducible.
double dot(std::span<const float> a, std::span<const float> b);
double l2_norm(std::span<const float> v);
double cosine(std::span<const float> a, std::span<const float> b);

// Throws Errc::invalid_argument for a zero (or non-finite) vector.
EmbeddingVector l2_normalize(const EmbeddingVector& v);

bool is_unit_norm(std::span<const float> v, double tolerance = 1e-5);

// Sentence encoder contract: the same (text, lang) always yields a
// bitwise-identical vector of dim() values.
class Encoder {
 public:
  virtual ~Encoder() = default;

  virtual std::string name() const = 0;
  virtual size_t dim() const = 0;
  virtual EmbeddingVector encode(std::string_view text, std::string_view lang) const = 0;

  // Record-level entry point; precomputed-store encoders key on the id.
  virtual EmbeddingVector encode(const QueryRecord& q) const { return encode(q.text, q.lang); }
};

// Signed feature hashing of character 3-grams over canonical text (NFKC,
// lowercase, collapsed whitespace), padded with one space on each side.
// The language tag does not enter the hash.
class HashNgramEncoder final : public Encoder {
 public:
  explicit HashNgramEncoder(size_t dim);

  std::string name() const override;
  size_t dim() const override { return dim_; }
  EmbeddingVector encode(std::string_view text, std::string_view lang) const override;
  using Encoder::encode;

 private:
  size_t dim_;
};

// Free-function form of HashNgramEncoder::encode.
EmbeddingVector hash_ngram_encode(std::string_view text, std::string_view lang, size_t dim);

// The padded 3-gram multiset the hash encoder consumes (exposed for tests).
std::vector<std::u32string> char_trigrams(std::string_view text);

}  // namespace xlp
