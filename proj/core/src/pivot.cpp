#include "xlp/pivot.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "xlp/error.hpp"
#include "xlp/parallel.hpp"
#include "xlp/unicode.hpp"

namespace xlp {

std::optional<Strategy> parse_strategy(std::string_view name) {
  if (name == "mips") return Strategy::mips;
  if (name == "nmt_mips") return Strategy::nmt_mips;
  if (name == "rm_mips") return Strategy::rm_mips;
  return std::nullopt;
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::mips: return "mips";
    case Strategy::nmt_mips: return "nmt_mips";
    case Strategy::rm_mips: return "rm_mips";
  }
  return "?";
}

double score_pair(const Scorer& scorer, std::string_view lrl_text, std::string_view hrl_text) {
  if (unicode::is_blank(lrl_text) || unicode::is_blank(hrl_text)) {
    throw Error(Errc::invalid_argument, "score_pair: empty text");
  }
  const double s = scorer.score(lrl_text, hrl_text);
  if (!std::isfinite(s)) {
    throw Error(Errc::adapter_error, fmt::format("scorer \"{}\" returned a non-finite score", scorer.name()));
  }
  return s;
}

namespace {

std::map<std::string, int> token_counts(std::string_view text) {
  std::map<std::string, int> counts;
  std::string current;
  for (char32_t cp : unicode::decode(unicode::canonical_text(text))) {
    if (unicode::is_punct(cp)) continue;
    if (cp == U' ') {
      if (!current.empty()) ++counts[std::exchange(current, {})];
      continue;
    }
    unicode::append_utf8(current, cp);
  }
  if (!current.empty()) ++counts[current];
  return counts;
}

}  // namespace

double token_overlap(std::string_view a, std::string_view b) {
  const auto ca = token_counts(a);
  const auto cb = token_counts(b);
  int na = 0, nb = 0, common = 0;
  for (const auto& [_, n] : ca) na += n;
  for (const auto& [t, n] : cb) {
    nb += n;
    if (const auto it = ca.find(t); it != ca.end()) common += std::min(n, it->second);
  }
  if (common == 0) return 0.0;
  const double p = static_cast<double>(common) / na;
  const double r = static_cast<double>(common) / nb;
  return 2.0 * p * r / (p + r);
}

OracleScorer OracleScorer::from_gold(const Database& db, std::span<const EvalSet> evals) {
  OracleScorer scorer;
  for (const auto& eval : evals) {
    for (const auto& ex : eval.examples) {
      if (!ex.gold_hrl_id) continue;
      if (const auto* e = db.find(*ex.gold_hrl_id)) scorer.add_pair(ex.lrl_query.text, e->query.text);
    }
  }
  return scorer;
}

void OracleScorer::add_pair(std::string lrl_text, std::string hrl_text) {
  gold_.emplace(std::move(lrl_text), std::move(hrl_text));
}

double OracleScorer::score(std::string_view lrl_text, std::string_view hrl_text) const {
  if (gold_.contains(std::pair<std::string, std::string>(std::string(lrl_text), std::string(hrl_text)))) return 1.0;
  const double overlap = token_overlap(lrl_text, hrl_text);
  return overlap >= 1.0 ? std::nextafter(1.0, 0.0) : overlap;
}

double EncoderScorer::score(std::string_view lrl_text, std::string_view hrl_text) const {
  const auto a = l2_normalize(encoder_->encode(lrl_text, lrl_lang_));
  const auto b = l2_normalize(encoder_->encode(hrl_text, hrl_lang_));
  return dot(a.values, b.values);
}

namespace {

void check_context(const PivotContext& ctx, Strategy strategy) {
  if (ctx.index == nullptr || ctx.db == nullptr || ctx.encoder == nullptr) {
    throw Error(Errc::invalid_argument, "pivot context needs an index, a database and an encoder");
  }
  if (strategy == Strategy::rm_mips && ctx.scorer == nullptr) {
    throw Error(Errc::invalid_argument, "rm_mips needs a scorer");
  }
  if (strategy == Strategy::nmt_mips && ctx.translator == nullptr) {
    throw Error(Errc::invalid_argument, "nmt_mips needs a translator");
  }
  if (!ctx.index->encoder_name().empty() && ctx.encoder->name() != ctx.index->encoder_name()) {
    throw Error(Errc::encoder_mismatch, fmt::format("encoder \"{}\" does not match index encoder \"{}\"",
                                                    ctx.encoder->name(), ctx.index->encoder_name()));
  }
}

std::vector<RankedCandidate> ranked(const std::vector<CandidateMatch>& hits) {
  std::vector<RankedCandidate> out;
  out.reserve(hits.size());
  for (const auto& h : hits) out.push_back({h.hrl_id, h.similarity, std::nullopt});
  return out;
}

MatchResult match_unchecked(const QueryRecord& query, const PivotContext& ctx, const MatchOptions& options) {
  MatchResult result;
  result.strategy = options.strategy;
  switch (options.strategy) {
    case Strategy::mips: {
      const auto q = l2_normalize(ctx.encoder->encode(query));
      result.candidates = ranked(ctx.index->search(q.values, 1));
      result.confidence = result.candidates.front().similarity;
      result.hrl_id = result.candidates.front().hrl_id;
      break;
    }
    case Strategy::nmt_mips: {
      std::string translated;
      try {
        translated = ctx.translator->translate(query.text, query.lang, ctx.hrl_lang);
      } catch (const Error& e) {
        rethrow_with_context(e, "translator");
      }
      if (unicode::is_blank(translated)) {
        throw Error(Errc::adapter_error, fmt::format("translator \"{}\" returned empty text", ctx.translator->name()));
      }
      const auto q = l2_normalize(ctx.encoder->encode(translated, ctx.hrl_lang));
      result.candidates = ranked(ctx.index->search(q.values, 1));
      result.confidence = result.candidates.front().similarity;
      result.hrl_id = result.candidates.front().hrl_id;
      break;
    }
    case Strategy::rm_mips: {
      const auto q = l2_normalize(ctx.encoder->encode(query));
      result.candidates = ranked(ctx.index->search(q.values, options.k));
      const RankedCandidate* best = nullptr;
      for (auto& c : result.candidates) {
        const auto* entry = ctx.db->find(c.hrl_id);
        if (entry == nullptr) {
          throw Error(Errc::not_found, fmt::format("index id \"{}\" missing from database", c.hrl_id));
        }
        try {
          c.rerank_score = score_pair(*ctx.scorer, query.text, entry->query.text);
        } catch (const Error& e) {
          rethrow_with_context(e, "scorer");
        }
        if (best == nullptr || *c.rerank_score > *best->rerank_score ||
            (*c.rerank_score == *best->rerank_score && c.hrl_id < best->hrl_id)) {
          best = &c;
        }
      }
      result.confidence = *best->rerank_score;
      result.hrl_id = best->hrl_id;
      break;
    }
  }
  if (result.confidence < options.threshold) result.hrl_id.reset();
  return result;
}

}  // namespace

MatchResult match_query(const QueryRecord& query, const PivotContext& ctx, const MatchOptions& options) {
  check_context(ctx, options.strategy);
  if (options.k == 0) throw Error(Errc::invalid_argument, "k must be at least 1");
  try {
    return match_unchecked(query, ctx, options);
  } catch (const Error& e) {
    rethrow_with_context(e, to_string(options.strategy));
  }
}

std::vector<MatchResult> match_batch(std::span<const QueryRecord> queries, const PivotContext& ctx,
                                     const MatchOptions& options, unsigned jobs) {
  std::vector<MatchResult> out(queries.size());
  parallel_for(queries.size(), jobs, [&](size_t i) { out[i] = match_query(queries[i], ctx, options); });
  return out;
}

double matching_accuracy(std::span<const MatchResult> results, const EvalSet& eval) {
  if (results.size() != eval.examples.size()) {
    throw Error(Errc::invalid_argument, fmt::format("matching_accuracy: {} results for {} examples",
                                                    results.size(), eval.examples.size()));
  }
  size_t total = 0, correct = 0;
  for (size_t i = 0; i < results.size(); ++i) {
    const auto& gold = eval.examples[i].gold_hrl_id;
    if (!gold) continue;
    ++total;
    if (results[i].hrl_id && *results[i].hrl_id == *gold) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

MatchResult apply_threshold(MatchResult result, double threshold) {
  if (result.confidence < threshold) {
    result.hrl_id.reset();
  } else if (!result.hrl_id && !result.candidates.empty()) {
    // Restore the winning candidate.
    const RankedCandidate* best = &result.candidates.front();
    if (result.strategy == Strategy::rm_mips) {
      for (const auto& c : result.candidates) {
        if (c.rerank_score && (*c.rerank_score > *best->rerank_score ||
                               (*c.rerank_score == *best->rerank_score && c.hrl_id < best->hrl_id))) {
          best = &c;
        }
      }
    }
    result.hrl_id = best->hrl_id;
  }
  return result;
}

}  // namespace xlp
