#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xlp/corpus_store.hpp"
#include "xlp/embedding.hpp"
#include "xlp/mips_index.hpp"

namespace xlp {

enum class Strategy { mips, nmt_mips, rm_mips };

std::optional<Strategy> parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);

// Pair scorer (cross-encoder contract): higher means more likely paraphrase.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string name() const = 0;
  virtual double score(std::string_view lrl_text, std::string_view hrl_text) const = 0;
};

class Translator {
 public:
  virtual ~Translator() = default;
  virtual std::string name() const = 0;
  virtual std::string translate(std::string_view text, std::string_view source_lang,
                                std::string_view target_lang) const = 0;
};

// Validates inputs and output: both texts non-blank, result finite.
double score_pair(const Scorer& scorer, std::string_view lrl_text, std::string_view hrl_text);

// Multiset token F1 over canonical, punctuation-stripped whitespace tokens.
double token_overlap(std::string_view a, std::string_view b);

// TEST ORACLE. Returns 1.0 for pairs listed in its truth table and the
// token overlap (pushed strictly below 1.0) for everything else. Stands in
// for a perfect cross-encoder in desk-scale experiments.
class OracleScorer final : public Scorer {
 public:
  OracleScorer() = default;
  explicit OracleScorer(std::set<std::pair<std::string, std::string>> gold_pairs)
      : gold_(gold_pairs.begin(), gold_pairs.end()) {}

  // Gold pairs: every eval query text paired with its gold record's text.
  static OracleScorer from_gold(const Database& db, std::span<const EvalSet> evals);

  void add_pair(std::string lrl_text, std::string hrl_text);
  std::string name() const override { return "oracle"; }
  double score(std::string_view lrl_text, std::string_view hrl_text) const override;

 private:
  std::set<std::pair<std::string, std::string>, std::less<>> gold_;
};

// Reranks by the encoder's own cosine; rm_mips with this scorer reproduces
// plain mips.
class EncoderScorer final : public Scorer {
 public:
  EncoderScorer(const Encoder& encoder, std::string lrl_lang, std::string hrl_lang = "en")
      : encoder_(&encoder), lrl_lang_(std::move(lrl_lang)), hrl_lang_(std::move(hrl_lang)) {}

  std::string name() const override { return "cosine:" + encoder_->name(); }
  double score(std::string_view lrl_text, std::string_view hrl_text) const override;

 private:
  const Encoder* encoder_;
  std::string lrl_lang_;
  std::string hrl_lang_;
};

class IdentityTranslator final : public Translator {
 public:
  std::string name() const override { return "identity"; }
  std::string translate(std::string_view text, std::string_view, std::string_view) const override {
    return std::string(text);
  }
};

struct RankedCandidate {
  std::string hrl_id;
  double similarity = 0.0;
  std::optional<double> rerank_score;

  bool operator==(const RankedCandidate&) const = default;
};

struct MatchResult {
  std::optional<std::string> hrl_id;  // empty = No Answer
  double confidence = 0.0;
  Strategy strategy = Strategy::mips;
  std::vector<RankedCandidate> candidates;

  bool operator==(const MatchResult&) const = default;
};

inline constexpr size_t kDefaultTopK = 10;

struct MatchOptions {
  Strategy strategy = Strategy::rm_mips;
  size_t k = kDefaultTopK;
  double threshold = -std::numeric_limits<double>::infinity();
};

// Collaborators for the matching stage. The encoder must have produced the
// index's vectors (names are compared). `scorer` is required for rm_mips and
// `translator` for nmt_mips.
struct PivotContext {
  const Index* index = nullptr;
  const Database* db = nullptr;
  const Encoder* encoder = nullptr;
  const Scorer* scorer = nullptr;
  const Translator* translator = nullptr;
  std::string hrl_lang = "en";
};

MatchResult match_query(const QueryRecord& query, const PivotContext& ctx, const MatchOptions& options);

// Order-preserving batch over a worker pool; the first failure is rethrown.
std::vector<MatchResult> match_batch(std::span<const QueryRecord> queries, const PivotContext& ctx,
                                     const MatchOptions& options, unsigned jobs = 1);

// Fraction of examples with a gold id whose match equals it; abstentions
// count as wrong, examples without a gold id are excluded. Returns 0 when no
// example has a gold id.
double matching_accuracy(std::span<const MatchResult> results, const EvalSet& eval);

// Re-applies a threshold to an existing result (monotone abstention).
MatchResult apply_threshold(MatchResult result, double threshold);

}  // namespace xlp
