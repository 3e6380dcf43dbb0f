#include "xlp/embedding.hpp"

#include <cmath>

#include <fmt/format.h>

#include "xlp/error.hpp"
#include "xlp/unicode.hpp"

namespace xlp {

double dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw Error(Errc::dim_mismatch, fmt::format("dot: dim {} vs {}", a.size(), b.size()));
  }
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return s;
}

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

double cosine(std::span<const float> a, std::span<const float> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(Errc::invalid_argument, "cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

EmbeddingVector l2_normalize(const EmbeddingVector& v) {
  const double n = l2_norm(v.values);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw Error(Errc::invalid_argument, "cannot normalize a zero or non-finite vector");
  }
  EmbeddingVector out;
  out.values.resize(v.values.size());
  for (size_t i = 0; i < v.values.size(); ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(v.values[i]) / n);
  }
  return out;
}

bool is_unit_norm(std::span<const float> v, double tolerance) {
  return std::abs(l2_norm(v) - 1.0) <= tolerance;
}

std::vector<std::u32string> char_trigrams(std::string_view text) {
  std::u32string cps = unicode::decode(unicode::canonical_text(text));
  cps.insert(cps.begin(), U' ');
  cps.push_back(U' ');
  std::vector<std::u32string> grams;
  if (cps.size() < 3) return grams;
  grams.reserve(cps.size() - 2);
  for (size_t i = 0; i + 3 <= cps.size(); ++i) grams.push_back(cps.substr(i, 3));
  return grams;
}

namespace {

// FNV-1a over the UTF-32LE bytes of the gram; stable across platforms.
uint64_t fnv1a(std::u32string_view gram) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (char32_t cp : gram) {
    for (int b = 0; b < 4; ++b) {
      h ^= static_cast<uint64_t>((cp >> (8 * b)) & 0xFF);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

}  // namespace

HashNgramEncoder::HashNgramEncoder(size_t dim) : dim_(dim) {
  if (dim < 8) throw Error(Errc::invalid_argument, fmt::format("hash encoder dim {} < 8", dim));
}

std::string HashNgramEncoder::name() const { return fmt::format("hash-ngram3-d{}", dim_); }

EmbeddingVector HashNgramEncoder::encode(std::string_view text, std::string_view /*lang*/) const {
  if (unicode::is_blank(text)) throw Error(Errc::invalid_argument, "cannot encode empty text");
  std::vector<double> acc(dim_, 0.0);
  for (const auto& gram : char_trigrams(text)) {
    const uint64_t h = fnv1a(gram);
    const size_t bucket = static_cast<size_t>((h & 0x7FFFFFFFFFFFFFFFULL) % dim_);
    acc[bucket] += (h >> 63) != 0 ? -1.0 : 1.0;
  }
  double norm = 0.0;
  for (double x : acc) norm += x * x;
  EmbeddingVector out;
  out.values.resize(dim_);
  if (norm == 0.0) {
    // Every gram cancelled out; fall back to a fixed axis so the output stays unit-norm.
    out.values[fnv1a(U"\x01") % dim_] = 1.0f;
    return out;
  }
  norm = std::sqrt(norm);
  for (size_t i = 0; i < dim_; ++i) out.values[i] = static_cast<float>(acc[i] / norm);
  return out;
}

EmbeddingVector hash_ngram_encode(std::string_view text, std::string_view lang, size_t dim) {
  return HashNgramEncoder(dim).encode(text, lang);
}

}  // namespace xlp
