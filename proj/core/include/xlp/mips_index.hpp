#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xlp/embedding.hpp"
#include "xlp/vector_store.hpp"

namespace xlp {

enum class IndexMode { exact, approximate };

std::optional<IndexMode> parse_index_mode(std::string_view name);
std::string_view to_string(IndexMode mode);

struct CandidateMatch {
  std::string hrl_id;
  double similarity = 0.0;

  bool operator==(const CandidateMatch&) const = default;
};

// Inverted-file (k-means partition) parameters for approximate mode.
// Zero means "derive from the index size".
struct ApproximateParams {
  size_t lists = 0;   // default: round(sqrt(n))
  size_t probes = 0;  // default: max(4, lists / 8)
  size_t iterations = 12;
  uint64_t seed = 0x5EEDULL;
};

// Top-k maximal inner product search over unit vectors.
//
// Exact mode scans every row with an 8-lane float kernel, keeps everything
// within the kernel's rounding bound of the k-th best, and rescores those
// survivors with xlp::dot. Returned similarities are therefore the exact
// double inner products and ties resolve by ascending id.
class Index {
 public:
  static Index build(const VectorStore& store, IndexMode mode = IndexMode::exact,
                     const ApproximateParams& params = {});

  size_t dim() const noexcept { return dim_; }
  size_t size() const noexcept { return ids_.size(); }
  IndexMode mode() const noexcept { return mode_; }
  const std::string& encoder_name() const noexcept { return encoder_; }
  const std::vector<std::string>& ids() const noexcept { return ids_; }
  const ApproximateParams& params() const noexcept { return params_; }
  std::span<const float> row(size_t i) const { return {data_.data() + i * dim_, dim_}; }

  // min(k, size()) candidates, similarity descending, ties by ascending id.
  std::vector<CandidateMatch> search(std::span<const float> query, size_t k) const;

  void save(const std::filesystem::path& path) const;
  static Index load(const std::filesystem::path& path);

 private:
  Index() = default;

  struct Scored {
    double score;
    uint32_t row;
  };
  bool before(const Scored& a, const Scored& b) const {
    return a.score > b.score || (a.score == b.score && id_rank_[a.row] < id_rank_[b.row]);
  }
  std::vector<CandidateMatch> finish(std::vector<Scored>& scored, size_t k) const;
  std::vector<CandidateMatch> search_exact(std::span<const float> query, size_t k) const;
  std::vector<CandidateMatch> search_approximate(std::span<const float> query, size_t k) const;
  void train_partitions();
  void rank_ids();

  size_t dim_ = 0;
  IndexMode mode_ = IndexMode::exact;
  std::string encoder_;
  std::vector<std::string> ids_;
  std::vector<uint32_t> id_rank_;
  std::vector<float> data_;
  ApproximateParams params_;
  // approximate mode
  std::vector<float> centroids_;
  std::vector<uint32_t> list_offsets_;  // lists + 1 entries into list_rows_
  std::vector<uint32_t> list_rows_;
};

Index build_index(const VectorStore& store, IndexMode mode = IndexMode::exact,
                  const ApproximateParams& params = {});
std::vector<CandidateMatch> search_topk(const Index& index, const EmbeddingVector& query, size_t k);

// Eight-lane float inner product; fast but not the reference score.
float dot_fast(const float* a, const float* b, size_t dim);

}  // namespace xlp
