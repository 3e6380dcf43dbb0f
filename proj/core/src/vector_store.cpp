#include "xlp/vector_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <fmt/format.h>
#include <zlib.h>

#include "xlp/error.hpp"
#include "xlp/parallel.hpp"

namespace xlp {

VectorStore::VectorStore(size_t dim, VectorStoreMeta meta) : dim_(dim), meta_(std::move(meta)) {
  if (dim == 0) throw Error(Errc::invalid_argument, "vector store dim must be positive");
}

void VectorStore::add(std::string id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw Error(Errc::dim_mismatch,
                fmt::format("vector \"{}\" has dim {}, store dim {}", id, values.size(), dim_));
  }
  if (id.size() > UINT16_MAX) throw Error(Errc::invalid_argument, "id longer than 65535 bytes");
  if (meta_.normalized && !is_unit_norm(values, 1e-5)) {
    throw Error(Errc::not_normalized, fmt::format("vector \"{}\" is not unit-norm", id));
  }
  if (index_.contains(id)) throw Error(Errc::duplicate_id, fmt::format("duplicate id \"{}\"", id));
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  data_.insert(data_.end(), values.begin(), values.end());
}

std::optional<std::span<const float>> VectorStore::find(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

namespace {

class Writer {
 public:
  explicit Writer(std::vector<uint8_t>& out) : out_(out) {}

  template <typename T>
  void put(T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<uint8_t>(u >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<uint32_t>(f)); }
  void bytes(std::string_view s) { out_.insert(out_.end(), s.begin(), s.end()); }

 private:
  std::vector<uint8_t>& out_;
};

class Reader {
 public:
  explicit Reader(std::span<const uint8_t> in) : in_(in) {}

  template <typename T>
  T get(std::string_view what) {
    need(sizeof(T), what);
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  float get_f32(std::string_view what) { return std::bit_cast<float>(get<uint32_t>(what)); }
  std::string_view bytes(size_t n, std::string_view what) {
    need(n, what);
    std::string_view s(reinterpret_cast<const char*>(in_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(size_t n, std::string_view what) const {
    if (in_.size() - pos_ < n) {
      throw Error(Errc::truncated,
                  fmt::format("vector store truncated while reading {} at byte {}", what, pos_));
    }
  }
  std::span<const uint8_t> in_;
  size_t pos_ = 0;
};

uint32_t crc32_of(std::span<const uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  size_t off = 0;
  while (off < bytes.size()) {
    const auto n = static_cast<uInt>(std::min<size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, n);
    off += n;
  }
  return static_cast<uint32_t>(crc);
}

nlohmann::json meta_to_json(const VectorStore& store) {
  nlohmann::json j = store.meta().extra.is_object() ? store.meta().extra : nlohmann::json::object();
  j["encoder"] = store.meta().encoder;
  j["normalized"] = store.meta().normalized;
  j["dim"] = store.dim();
  return j;
}

}  // namespace

std::vector<uint8_t> serialize_vector_store(const VectorStore& store) {
  std::vector<uint8_t> out;
  out.reserve(22 + store.size() * (2 + 16 + 4 * store.dim()));
  Writer w(out);
  w.bytes(kVectorStoreMagic);
  w.put(static_cast<uint32_t>(store.dim()));
  w.put(static_cast<uint64_t>(store.size()));
  for (size_t i = 0; i < store.size(); ++i) {
    const auto& id = store.ids()[i];
    w.put(static_cast<uint16_t>(id.size()));
    w.bytes(id);
    for (float f : store.row(i)) w.put_f32(f);
  }
  w.put(crc32_of(out));
  const std::string meta = meta_to_json(store).dump();
  w.put(static_cast<uint32_t>(meta.size()));
  w.bytes(meta);
  return out;
}

VectorStore parse_vector_store(std::span<const uint8_t> bytes,
                               std::optional<std::string_view> expected_encoder) {
  const size_t magic_len = std::min(bytes.size(), kVectorStoreMagic.size());
  if (std::memcmp(bytes.data(), kVectorStoreMagic.data(), magic_len) != 0) {
    throw Error(Errc::bad_magic, "not an XLPV1 vector store (bad magic)");
  }
  Reader r(bytes);
  r.bytes(kVectorStoreMagic.size(), "magic");
  const auto dim = r.get<uint32_t>("dim");
  const auto count = r.get<uint64_t>("count");
  if (dim == 0) throw Error(Errc::dim_mismatch, "vector store header declares dim 0");

  std::vector<std::string> ids;
  std::vector<float> data;
  // Guard against absurd counts before reserving.
  const uint64_t min_row = 2 + 4ULL * dim;
  if (count > r.remaining() / min_row) {
    throw Error(Errc::truncated, fmt::format("vector store truncated: header count {} exceeds file", count));
  }
  ids.reserve(count);
  data.reserve(count * dim);
  for (uint64_t i = 0; i < count; ++i) {
    const auto len = r.get<uint16_t>("id length");
    ids.emplace_back(r.bytes(len, "id"));
    for (uint32_t d = 0; d < dim; ++d) data.push_back(r.get_f32("vector"));
  }
  const size_t body_end = r.pos();
  const auto stored_crc = r.get<uint32_t>("checksum");
  if (stored_crc != crc32_of(bytes.first(body_end))) {
    throw Error(Errc::checksum_mismatch, "vector store checksum mismatch");
  }
  const auto meta_len = r.get<uint32_t>("meta length");
  const std::string_view meta_text = r.bytes(meta_len, "meta");
  if (r.remaining() != 0) {
    throw Error(Errc::parse_error, fmt::format("{} trailing bytes after vector store meta", r.remaining()));
  }

  nlohmann::json meta_json;
  try {
    meta_json = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::parse_error, fmt::format("vector store meta is not JSON ({})", e.what()));
  }
  if (!meta_json.is_object()) throw Error(Errc::parse_error, "vector store meta must be an object");
  if (meta_json.contains("dim") && meta_json["dim"] != dim) {
    throw Error(Errc::dim_mismatch, fmt::format("vector store meta dim {} != header dim {}",
                                                meta_json["dim"].dump(), dim));
  }
  VectorStoreMeta meta;
  meta.encoder = meta_json.value("encoder", std::string{});
  meta.normalized = meta_json.value("normalized", false);
  meta_json.erase("encoder");
  meta_json.erase("normalized");
  meta_json.erase("dim");
  meta.extra = std::move(meta_json);

  if (expected_encoder && *expected_encoder != meta.encoder) {
    throw Error(Errc::encoder_mismatch,
                fmt::format("vector store encoder \"{}\" != configured \"{}\"", meta.encoder,
                            *expected_encoder));
  }

  VectorStore store(dim, std::move(meta));
  for (size_t i = 0; i < ids.size(); ++i) {
    store.add(std::move(ids[i]), std::span<const float>(data.data() + i * dim, dim));
  }
  return store;
}

void save_vector_store(const VectorStore& store, const std::filesystem::path& path) {
  const auto bytes = serialize_vector_store(store);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io_error, fmt::format("write failed: {}", tmp.string()));
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io_error, fmt::format("rename to {} failed: {}", path.string(), ec.message()));
}

VectorStore load_vector_store(const std::filesystem::path& path,
                              std::optional<std::string_view> expected_encoder) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open {}", path.string()));
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_vector_store(bytes, expected_encoder);
}

VectorStore embed_queries(std::span<const QueryRecord> queries, const Encoder& encoder,
                          unsigned jobs) {
  std::vector<EmbeddingVector> vecs(queries.size());
  parallel_for(queries.size(), jobs, [&](size_t i) { vecs[i] = l2_normalize(encoder.encode(queries[i])); });
  VectorStore store(encoder.dim(), VectorStoreMeta{encoder.name(), true, nlohmann::json::object()});
  for (size_t i = 0; i < queries.size(); ++i) store.add(queries[i].id, vecs[i].values);
  return store;
}

VectorStore embed_database(const Database& db, const Encoder& encoder, unsigned jobs) {
  std::vector<QueryRecord> queries;
  queries.reserve(db.size());
  for (const auto& [_, e] : db.entries()) queries.push_back(e.query);
  return embed_queries(queries, encoder, jobs);
}

VectorStore restrict_to(const VectorStore& store, const Database& db) {
  VectorStore out(store.dim(), store.meta());
  for (size_t i = 0; i < store.size(); ++i) {
    if (db.contains(store.ids()[i])) out.add(store.ids()[i], store.row(i));
  }
  return out;
}

EmbeddingVector StoreEncoder::encode(std::string_view text, std::string_view /*lang*/) const {
  throw Error(Errc::not_found,
              fmt::format("encoder \"{}\" has no vector for free text \"{}\"", name(), text));
}

EmbeddingVector StoreEncoder::encode(const QueryRecord& q) const {
  const auto row = store_->find(q.id);
  if (!row) {
    throw Error(Errc::not_found, fmt::format("encoder \"{}\" has no vector for id \"{}\"", name(), q.id));
  }
  return EmbeddingVector{{row->begin(), row->end()}};
}

}  // namespace xlp
