#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlp/corpus_store.hpp"
#include "xlp/embedding.hpp"

namespace xlp {

struct VectorStoreMeta {
  std::string encoder;
  bool normalized = true;
  nlohmann::json extra = nlohmann::json::object();  // free-form, round-tripped

  bool operator==(const VectorStoreMeta&) const = default;
};

// Id-keyed dense vectors in insertion order, stored row-major.
class VectorStore {
 public:
  VectorStore(size_t dim, VectorStoreMeta meta);

  // Throws on duplicate id, wrong dim, or (when meta.normalized) a vector
  // whose norm is off by more than 1e-5.
  void add(std::string id, std::span<const float> values);

  size_t dim() const noexcept { return dim_; }
  size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const VectorStoreMeta& meta() const noexcept { return meta_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const std::vector<float>& data() const noexcept { return data_; }

  std::span<const float> row(size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::optional<std::span<const float>> find(std::string_view id) const;

  bool operator==(const VectorStore& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_ && meta_ == other.meta_;
  }

 private:
  size_t dim_;
  VectorStoreMeta meta_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, size_t> index_;
};

// XLPV1 little-endian layout:
//   "XLPV1\0" | u32 dim | u64 count | count x (u16 id_len, id bytes, dim x f32)
//   | u32 CRC-32 of all preceding bytes | u32 meta_len | meta JSON (UTF-8)
inline constexpr std::string_view kVectorStoreMagic{"XLPV1\0", 6};

std::vector<uint8_t> serialize_vector_store(const VectorStore& store);
VectorStore parse_vector_store(std::span<const uint8_t> bytes,
                               std::optional<std::string_view> expected_encoder = std::nullopt);

// Written to a temporary sibling and renamed into place.
void save_vector_store(const VectorStore& store, const std::filesystem::path& path);
VectorStore load_vector_store(const std::filesystem::path& path,
                              std::optional<std::string_view> expected_encoder = std::nullopt);

// Encodes every database query (id order) into a normalized store.
VectorStore embed_database(const Database& db, const Encoder& encoder, unsigned jobs = 1);
VectorStore embed_queries(std::span<const QueryRecord> queries, const Encoder& encoder,
                          unsigned jobs = 1);

// Rows whose id is in `db`, in store order.
VectorStore restrict_to(const VectorStore& store, const Database& db);

// Encoder backed by precomputed vectors, looked up by QueryRecord id.
class StoreEncoder final : public Encoder {
 public:
  explicit StoreEncoder(const VectorStore& store) : store_(&store) {}

  std::string name() const override { return store_->meta().encoder; }
  size_t dim() const override { return store_->dim(); }
  // Free text has no precomputed vector: throws Errc::not_found.
  EmbeddingVector encode(std::string_view text, std::string_view lang) const override;
  EmbeddingVector encode(const QueryRecord& q) const override;

 private:
  const VectorStore* store_;
};

}  // namespace xlp
