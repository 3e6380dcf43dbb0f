#include "xlp/answer_xlate.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "xlp/error.hpp"
#include "xlp/unicode.hpp"

namespace xlp {

namespace {

size_t token_count(std::string_view canonical) {
  if (canonical.empty()) return 0;
  return static_cast<size_t>(std::count(canonical.begin(), canonical.end(), ' ')) + 1;
}

const std::vector<std::string> kNoCandidates;

}  // namespace

void KnowledgeGraph::index_surface(std::string_view entity_id, std::string_view text) {
  std::string key = unicode::canonical_text(text);
  if (key.empty()) return;
  max_tokens_ = std::max(max_tokens_, token_count(key));
  auto& ids = surfaces_[key];
  const auto it = std::lower_bound(ids.begin(), ids.end(), entity_id);
  if (it == ids.end() || *it != entity_id) ids.insert(it, std::string(entity_id));
}

void KnowledgeGraph::add_label(std::string_view entity_id, std::string_view lang,
                               std::string_view label) {
  if (entity_id.empty()) throw Error(Errc::invalid_argument, "empty entity id");
  if (lang.empty()) throw Error(Errc::invalid_argument, fmt::format("entity {}: empty language", entity_id));
  if (unicode::is_blank(label)) {
    throw Error(Errc::invalid_argument, fmt::format("entity {}: empty {} label", entity_id, lang));
  }
  auto it = entities_.find(entity_id);
  if (it == entities_.end()) {
    it = entities_.emplace(std::string(entity_id), KgEntity{std::string(entity_id), {}, {}}).first;
  }
  auto& labels = it->second.labels;
  if (const auto existing = labels.find(lang); existing != labels.end()) {
    if (existing->second == label) return;
    throw Error(Errc::duplicate_id, fmt::format("entity {}: conflicting {} labels \"{}\" and \"{}\"",
                                                entity_id, lang, existing->second, label));
  }
  labels.emplace(std::string(lang), std::string(label));
  index_surface(entity_id, label);
}

void KnowledgeGraph::add_alias(std::string_view entity_id, std::string_view surface) {
  if (entity_id.empty()) throw Error(Errc::invalid_argument, "empty entity id");
  if (unicode::is_blank(surface)) return;
  auto it = entities_.find(entity_id);
  if (it == entities_.end()) {
    it = entities_.emplace(std::string(entity_id), KgEntity{std::string(entity_id), {}, {}}).first;
  }
  auto& aliases = it->second.aliases;
  if (std::find(aliases.begin(), aliases.end(), surface) == aliases.end()) aliases.emplace_back(surface);
  index_surface(entity_id, surface);
}

const KgEntity* KnowledgeGraph::find(std::string_view entity_id) const {
  const auto it = entities_.find(entity_id);
  return it == entities_.end() ? nullptr : &it->second;
}

const std::vector<std::string>& KnowledgeGraph::candidates(std::string_view surface) const {
  const auto it = surfaces_.find(surface);
  return it == surfaces_.end() ? kNoCandidates : it->second;
}

std::optional<std::string> KnowledgeGraph::resolve(std::string_view surface) const {
  const auto& ids = candidates(surface);
  const std::string* best = nullptr;
  size_t best_labels = 0;
  for (const auto& id : ids) {  // ids are sorted, so strict > keeps the smallest on ties
    const size_t n = entities_.at(id).labels.size();
    if (best == nullptr || n > best_labels) {
      best = &id;
      best_labels = n;
    }
  }
  if (best == nullptr) return std::nullopt;
  return *best;
}

KnowledgeGraph parse_knowledge_graph(std::istream& in, std::string_view source) {
  KnowledgeGraph kg;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (unicode::is_blank(line) || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos) {
      throw Error(Errc::parse_error, fmt::format("{}: line {}: expected 3 tab-separated fields", source, line_no));
    }
    const std::string_view row(line);
    const auto id = row.substr(0, t1);
    const auto kind = row.substr(t1 + 1, t2 - t1 - 1);
    const auto text = row.substr(t2 + 1);
    try {
      if (kind == "alias") {
        kg.add_alias(id, text);
      } else {
        kg.add_label(id, kind, text);
      }
    } catch (const Error& e) {
      rethrow_with_context(e, fmt::format("{}: line {}", source, line_no));
    }
  }
  return kg;
}

KnowledgeGraph load_knowledge_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open {}", path.string()));
  return parse_knowledge_graph(in, path.string());
}

std::vector<EntitySpan> link_entities(std::string_view text, const KnowledgeGraph& kg) {
  std::vector<EntitySpan> spans;
  const std::string canon = unicode::canonical_text(text);
  if (canon.empty() || kg.max_surface_tokens() == 0) return spans;

  // Token boundaries: canonical text has single ASCII spaces between tokens.
  std::vector<std::pair<size_t, size_t>> tokens;
  for (size_t pos = 0; pos < canon.size();) {
    const size_t end = std::min(canon.find(' ', pos), canon.size());
    tokens.emplace_back(pos, end);
    pos = end + 1;
  }

  const std::string_view view(canon);
  for (size_t i = 0; i < tokens.size();) {
    size_t matched = 0;
    const size_t widest = std::min(kg.max_surface_tokens(), tokens.size() - i);
    for (size_t w = widest; w >= 1; --w) {
      const size_t b = tokens[i].first;
      const size_t e = tokens[i + w - 1].second;
      if (auto id = kg.resolve(view.substr(b, e - b))) {
        spans.push_back({b, e, std::move(*id)});
        matched = w;
        break;
      }
    }
    i += matched == 0 ? 1 : matched;
  }
  return spans;
}

std::string_view to_string(TranslationMethod m) {
  switch (m) {
    case TranslationMethod::kg: return "kg";
    case TranslationMethod::mt: return "mt";
    case TranslationMethod::english_fallback: return "english_fallback";
  }
  return "unknown";
}

TranslatedAnswer kg_translate_answer(std::string_view answer, std::string_view target_lang,
                                     const KnowledgeGraph& kg) {
  TranslatedAnswer fallback{std::string(answer), TranslationMethod::english_fallback, std::nullopt, std::nullopt};
  const auto spans = link_entities(answer, kg);
  if (spans.size() != 1) return fallback;
  const auto canon_size = unicode::canonical_text(answer).size();
  if (spans.front().begin != 0 || spans.front().end != canon_size) return fallback;
  const KgEntity* entity = kg.find(spans.front().entity_id);
  const auto label = entity->labels.find(target_lang);
  if (label == entity->labels.end()) return fallback;
  return {label->second, TranslationMethod::kg, entity->entity_id, std::nullopt};
}

std::optional<AnswerStrategy> parse_answer_strategy(std::string_view name) {
  if (name == "kg_first") return AnswerStrategy::kg_first;
  if (name == "mt_only") return AnswerStrategy::mt_only;
  if (name == "kg_only") return AnswerStrategy::kg_only;
  return std::nullopt;
}

std::string_view to_string(AnswerStrategy s) {
  switch (s) {
    case AnswerStrategy::kg_first: return "kg_first";
    case AnswerStrategy::mt_only: return "mt_only";
    case AnswerStrategy::kg_only: return "kg_only";
  }
  return "unknown";
}

namespace {

std::string run_translator(const Translator& translator, std::string_view answer,
                           std::string_view source_lang, std::string_view target_lang) {
  std::string out = translator.translate(answer, source_lang, target_lang);
  if (unicode::is_blank(out)) {
    throw Error(Errc::adapter_error, fmt::format("translator {} returned empty text", translator.name()));
  }
  return out;
}

}  // namespace

TranslatedAnswer translate_answer(std::string_view answer, std::string_view target_lang,
                                  AnswerStrategy strategy, const KnowledgeGraph& kg,
                                  const Translator* translator, std::string_view source_lang) {
  if (strategy == AnswerStrategy::kg_only) return kg_translate_answer(answer, target_lang, kg);
  if (translator == nullptr) {
    throw Error(Errc::invalid_argument, fmt::format("answer strategy {} needs a translator", to_string(strategy)));
  }
  if (strategy == AnswerStrategy::mt_only) {
    try {
      return {run_translator(*translator, answer, source_lang, target_lang), TranslationMethod::mt,
              std::nullopt, std::nullopt};
    } catch (const Error& e) {
      rethrow_with_context(e, "answer translation");
    }
  }
  auto kg_result = kg_translate_answer(answer, target_lang, kg);
  if (kg_result.method == TranslationMethod::kg) return kg_result;
  try {
    return {run_translator(*translator, answer, source_lang, target_lang), TranslationMethod::mt,
            std::nullopt, std::nullopt};
  } catch (const std::exception& e) {
    kg_result.warning = fmt::format("translator failed, kept English answer: {}", e.what());
    return kg_result;
  }
}

}  // namespace xlp
