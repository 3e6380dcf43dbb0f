#include "xlp/mips_index.hpp"

#include <algorithm>
#include <bit>
#include <cfloat>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <zlib.h>

#include "xlp/error.hpp"
#include "xlp/random.hpp"

namespace xlp {

std::optional<IndexMode> parse_index_mode(std::string_view name) {
  if (name == "exact") return IndexMode::exact;
  if (name == "approximate") return IndexMode::approximate;
  return std::nullopt;
}

std::string_view to_string(IndexMode mode) {
  return mode == IndexMode::exact ? "exact" : "approximate";
}

float dot_fast(const float* a, const float* b, size_t dim) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  size_t i = 0;
  for (; i + 8 <= dim; i += 8) {
    for (size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  }
  for (size_t l = 0; i < dim; ++i, ++l) acc[l] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

namespace {

// Bound on |dot_fast(q, v) - dot(q, v)| for ||v|| <= 1 + 1e-5: each lane sums
// about dim/8 products, then three pairwise adds; doubled for slack.
double fast_error_bound(size_t dim, double query_norm) {
  const double terms = static_cast<double>(dim / 8 + 8);
  return 2.0 * terms * static_cast<double>(FLT_EPSILON) * query_norm * 1.0001 + 1e-12;
}

void check_query(std::span<const float> query, size_t dim) {
  if (query.size() != dim) {
    throw Error(Errc::dim_mismatch, fmt::format("query dim {} != index dim {}", query.size(), dim));
  }
  for (float f : query) {
    if (!std::isfinite(f)) throw Error(Errc::invalid_argument, "query has a non-finite component");
  }
}

}  // namespace

Index Index::build(const VectorStore& store, IndexMode mode, const ApproximateParams& params) {
  if (store.empty()) throw Error(Errc::empty_input, "cannot build an index over an empty store");
  if (!store.meta().normalized) {
    throw Error(Errc::not_normalized, "vector store is not flagged as L2-normalized");
  }
  if (store.size() > UINT32_MAX) throw Error(Errc::invalid_argument, "index limited to 2^32 rows");
  for (size_t i = 0; i < store.size(); ++i) {
    if (!is_unit_norm(store.row(i), 1e-5)) {
      throw Error(Errc::not_normalized, fmt::format("vector \"{}\" is not unit-norm", store.ids()[i]));
    }
  }
  Index index;
  index.dim_ = store.dim();
  index.mode_ = mode;
  index.encoder_ = store.meta().encoder;
  index.ids_ = store.ids();
  index.data_ = store.data();
  index.params_ = params;
  index.rank_ids();
  if (mode == IndexMode::approximate) index.train_partitions();
  return index;
}

void Index::rank_ids() {
  std::vector<uint32_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) { return ids_[a] < ids_[b]; });
  id_rank_.assign(ids_.size(), 0);
  for (uint32_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = r;
}

void Index::train_partitions() {
  const size_t n = ids_.size();
  size_t lists = params_.lists != 0 ? params_.lists
                                    : static_cast<size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  lists = std::clamp<size_t>(lists, 1, n);
  params_.lists = lists;
  if (params_.probes == 0) params_.probes = std::max<size_t>(4, lists / 8);
  params_.probes = std::min(params_.probes, lists);

  // Seeds: distinct rows drawn without replacement.
  std::vector<uint32_t> pick(n);
  std::iota(pick.begin(), pick.end(), 0u);
  SeededRng rng(params_.seed);
  for (size_t i = 0; i < lists; ++i) {
    const auto j = i + static_cast<size_t>(rng.below(n - i));
    std::swap(pick[i], pick[j]);
  }
  centroids_.assign(lists * dim_, 0.0f);
  for (size_t c = 0; c < lists; ++c) {
    std::copy_n(data_.begin() + static_cast<ptrdiff_t>(pick[c] * dim_), dim_,
                centroids_.begin() + static_cast<ptrdiff_t>(c * dim_));
  }

  std::vector<uint32_t> assign(n, 0);
  auto assign_all = [&] {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      uint32_t best = 0;
      float best_score = -FLT_MAX;
      for (size_t c = 0; c < lists; ++c) {
        const float s = dot_fast(&data_[i * dim_], &centroids_[c * dim_], dim_);
        if (s > best_score) {
          best_score = s;
          best = static_cast<uint32_t>(c);
        }
      }
      changed |= assign[i] != best;
      assign[i] = best;
    }
    return changed;
  };

  assign_all();
  for (size_t it = 0; it < params_.iterations; ++it) {
    std::vector<double> sums(lists * dim_, 0.0);
    for (size_t i = 0; i < n; ++i) {
      for (size_t d = 0; d < dim_; ++d) sums[assign[i] * dim_ + d] += data_[i * dim_ + d];
    }
    for (size_t c = 0; c < lists; ++c) {
      double norm = 0.0;
      for (size_t d = 0; d < dim_; ++d) norm += sums[c * dim_ + d] * sums[c * dim_ + d];
      if (norm == 0.0) continue;  // empty list keeps its previous centroid
      norm = std::sqrt(norm);
      for (size_t d = 0; d < dim_; ++d) {
        centroids_[c * dim_ + d] = static_cast<float>(sums[c * dim_ + d] / norm);
      }
    }
    if (!assign_all()) break;
  }

  list_offsets_.assign(lists + 1, 0);
  for (uint32_t a : assign) ++list_offsets_[a + 1];
  std::partial_sum(list_offsets_.begin(), list_offsets_.end(), list_offsets_.begin());
  list_rows_.assign(n, 0);
  std::vector<uint32_t> fill(list_offsets_.begin(), list_offsets_.end() - 1);
  for (uint32_t i = 0; i < n; ++i) list_rows_[fill[assign[i]]++] = i;
}

std::vector<CandidateMatch> Index::finish(std::vector<Scored>& scored, size_t k) const {
  const size_t take = std::min(k, scored.size());
  auto cmp = [this](const Scored& a, const Scored& b) { return before(a, b); };
  std::partial_sort(scored.begin(), scored.begin() + static_cast<ptrdiff_t>(take), scored.end(), cmp);
  std::vector<CandidateMatch> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back({ids_[scored[i].row], scored[i].score});
  return out;
}

std::vector<CandidateMatch> Index::search_exact(std::span<const float> query, size_t k) const {
  const size_t n = ids_.size();
  std::vector<float> fast(n);
  for (size_t i = 0; i < n; ++i) fast[i] = dot_fast(query.data(), &data_[i * dim_], dim_);

  std::vector<Scored> survivors;
  if (k >= n) {
    survivors.reserve(n);
    for (uint32_t i = 0; i < n; ++i) survivors.push_back({0.0, i});
  } else {
    std::vector<float> tmp(fast);
    std::nth_element(tmp.begin(), tmp.begin() + static_cast<ptrdiff_t>(k - 1), tmp.end(), std::greater<>());
    const double cutoff = static_cast<double>(tmp[k - 1]) - 2.0 * fast_error_bound(dim_, l2_norm(query));
    for (uint32_t i = 0; i < n; ++i) {
      if (static_cast<double>(fast[i]) >= cutoff) survivors.push_back({0.0, i});
    }
  }
  for (auto& s : survivors) s.score = dot(query, row(s.row));
  return finish(survivors, k);
}

std::vector<CandidateMatch> Index::search_approximate(std::span<const float> query, size_t k) const {
  const size_t lists = list_offsets_.size() - 1;
  std::vector<std::pair<double, uint32_t>> cs(lists);
  for (uint32_t c = 0; c < lists; ++c) {
    cs[c] = {dot(query, std::span<const float>(&centroids_[c * dim_], dim_)), c};
  }
  const size_t probes = std::min(params_.probes, lists);
  std::partial_sort(cs.begin(), cs.begin() + static_cast<ptrdiff_t>(probes), cs.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<Scored> scored;
  for (size_t p = 0; p < probes; ++p) {
    const uint32_t c = cs[p].second;
    for (uint32_t j = list_offsets_[c]; j < list_offsets_[c + 1]; ++j) {
      const uint32_t r = list_rows_[j];
      scored.push_back({dot(query, row(r)), r});
    }
  }
  return finish(scored, k);
}

std::vector<CandidateMatch> Index::search(std::span<const float> query, size_t k) const {
  if (k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
  check_query(query, dim_);
  return mode_ == IndexMode::exact ? search_exact(query, k) : search_approximate(query, k);
}

// --- snapshot -------------------------------------------------------------
//
// "XLPI1\0" | u32 version | u8 mode | u32 dim | u64 n | u64 lists | u64 probes
// | u64 iterations | u64 seed | u16 encoder_len, encoder | n x (u16 id_len, id)
// | n*dim f32 | [approximate: lists*dim f32 centroids | (lists+1) u32 offsets
// | n u32 rows] | u32 CRC-32 of everything before it

namespace {

constexpr std::string_view kIndexMagic{"XLPI1\0", 6};
constexpr uint32_t kIndexVersion = 1;

struct ByteSink {
  std::vector<uint8_t> out;
  template <typename T>
  void put(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<uint8_t>(u >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<uint32_t>(f)); }
  void str(std::string_view s) {
    put(static_cast<uint16_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
};

struct ByteSource {
  std::span<const uint8_t> in;
  size_t pos = 0;
  void need(size_t n) const {
    if (in.size() - pos < n) throw Error(Errc::truncated, fmt::format("index snapshot truncated at byte {}", pos));
  }
  template <typename T>
  T get() {
    need(sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in[pos + i]) << (8 * i));
    pos += sizeof(T);
    return v;
  }
  float get_f32() { return std::bit_cast<float>(get<uint32_t>()); }
  std::string str() {
    const auto n = get<uint16_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(in.data() + pos), n);
    pos += n;
    return s;
  }
};

}  // namespace

void Index::save(const std::filesystem::path& path) const {
  ByteSink w;
  w.out.insert(w.out.end(), kIndexMagic.begin(), kIndexMagic.end());
  w.put(kIndexVersion);
  w.put(static_cast<uint8_t>(mode_ == IndexMode::exact ? 0 : 1));
  w.put(static_cast<uint32_t>(dim_));
  w.put(static_cast<uint64_t>(ids_.size()));
  w.put(static_cast<uint64_t>(params_.lists));
  w.put(static_cast<uint64_t>(params_.probes));
  w.put(static_cast<uint64_t>(params_.iterations));
  w.put(static_cast<uint64_t>(params_.seed));
  w.str(encoder_);
  for (const auto& id : ids_) w.str(id);
  for (float f : data_) w.put_f32(f);
  if (mode_ == IndexMode::approximate) {
    for (float f : centroids_) w.put_f32(f);
    for (uint32_t o : list_offsets_) w.put(o);
    for (uint32_t r : list_rows_) w.put(r);
  }
  w.put(static_cast<uint32_t>(crc32(crc32(0L, Z_NULL, 0), w.out.data(), static_cast<uInt>(w.out.size()))));

  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", tmp.string()));
    out.write(reinterpret_cast<const char*>(w.out.data()), static_cast<std::streamsize>(w.out.size()));
    if (!out) throw Error(Errc::io_error, fmt::format("write failed: {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

Index Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open {}", path.string()));
  const std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kIndexMagic.size() ||
      std::memcmp(bytes.data(), kIndexMagic.data(), kIndexMagic.size()) != 0) {
    throw Error(Errc::bad_magic, "not an XLPI1 index snapshot");
  }
  if (bytes.size() < kIndexMagic.size() + 8) throw Error(Errc::truncated, "index snapshot truncated");
  const size_t body = bytes.size() - 4;
  ByteSource tail{std::span<const uint8_t>(bytes).subspan(body), 0};
  const auto crc = tail.get<uint32_t>();
  if (crc != static_cast<uint32_t>(crc32(crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(body)))) {
    throw Error(Errc::checksum_mismatch, "index snapshot checksum mismatch");
  }

  ByteSource r{std::span<const uint8_t>(bytes).first(body), kIndexMagic.size()};
  if (r.get<uint32_t>() != kIndexVersion) throw Error(Errc::parse_error, "unsupported index snapshot version");
  Index index;
  index.mode_ = r.get<uint8_t>() == 0 ? IndexMode::exact : IndexMode::approximate;
  index.dim_ = r.get<uint32_t>();
  const auto n = r.get<uint64_t>();
  index.params_.lists = r.get<uint64_t>();
  index.params_.probes = r.get<uint64_t>();
  index.params_.iterations = r.get<uint64_t>();
  index.params_.seed = r.get<uint64_t>();
  index.encoder_ = r.str();
  if (index.dim_ == 0 || n == 0 || n > (r.in.size() - r.pos) / 2) {
    throw Error(Errc::parse_error, "index snapshot header is inconsistent");
  }
  index.ids_.reserve(n);
  for (uint64_t i = 0; i < n; ++i) index.ids_.push_back(r.str());
  r.need(n * index.dim_ * 4);
  index.data_.resize(n * index.dim_);
  for (auto& f : index.data_) f = r.get_f32();
  if (index.mode_ == IndexMode::approximate) {
    const size_t lists = index.params_.lists;
    r.need(lists * index.dim_ * 4 + (lists + 1 + n) * 4);
    index.centroids_.resize(lists * index.dim_);
    for (auto& f : index.centroids_) f = r.get_f32();
    index.list_offsets_.resize(lists + 1);
    for (auto& o : index.list_offsets_) o = r.get<uint32_t>();
    index.list_rows_.resize(n);
    for (auto& x : index.list_rows_) x = r.get<uint32_t>();
    const bool sane = index.list_offsets_.front() == 0 && index.list_offsets_.back() == n &&
                      std::is_sorted(index.list_offsets_.begin(), index.list_offsets_.end()) &&
                      std::all_of(index.list_rows_.begin(), index.list_rows_.end(),
                                  [n](uint32_t x) { return x < n; });
    if (!sane) throw Error(Errc::parse_error, "index snapshot partition table is inconsistent");
  }
  if (r.pos != r.in.size()) throw Error(Errc::parse_error, "trailing bytes in index snapshot");
  index.rank_ids();
  return index;
}

Index build_index(const VectorStore& store, IndexMode mode, const ApproximateParams& params) {
  return Index::build(store, mode, params);
}

std::vector<CandidateMatch> search_topk(const Index& index, const EmbeddingVector& query, size_t k) {
  return index.search(query.values, k);
}

}  // namespace xlp
