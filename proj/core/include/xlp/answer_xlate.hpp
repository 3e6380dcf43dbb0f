#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "xlp/pivot.hpp"

namespace xlp {

struct KgEntity {
  std::string entity_id;
  std::map<std::string, std::string, std::less<>> labels;  // lang -> label
  std::vector<std::string> aliases;

  bool operator==(const KgEntity&) const = default;
};

// Entities plus a surface index keyed by canonical text (NFKC, lowercase,
// collapsed whitespace). Every label and alias is indexed.
class KnowledgeGraph {
 public:
  // Merges labels/aliases into an existing entity of the same id. Throws
  // Errc::invalid_argument for an empty id or label and Errc::duplicate_id
  // when a (entity, lang) label is given twice with different text.
  void add_label(std::string_view entity_id, std::string_view lang, std::string_view label);
  void add_alias(std::string_view entity_id, std::string_view surface);

  size_t size() const noexcept { return entities_.size(); }
  bool empty() const noexcept { return entities_.empty(); }
  const KgEntity* find(std::string_view entity_id) const;
  const std::map<std::string, KgEntity, std::less<>>& entities() const noexcept { return entities_; }

  // Candidate ids for a canonical surface, sorted; empty if unknown.
  const std::vector<std::string>& candidates(std::string_view surface) const;
  // Picks the candidate with most labels, then the smallest id.
  std::optional<std::string> resolve(std::string_view surface) const;

  // Longest surface in whitespace tokens; bounds the linker's window.
  size_t max_surface_tokens() const noexcept { return max_tokens_; }

 private:
  void index_surface(std::string_view entity_id, std::string_view text);

  std::map<std::string, KgEntity, std::less<>> entities_;
  std::map<std::string, std::vector<std::string>, std::less<>> surfaces_;
  size_t max_tokens_ = 0;
};

// TSV rows: `entity_id \t lang \t label` or `entity_id \t alias \t surface`.
// Blank lines and lines starting with '#' are skipped.
KnowledgeGraph load_knowledge_graph(const std::filesystem::path& path);
KnowledgeGraph parse_knowledge_graph(std::istream& in, std::string_view source);

struct EntitySpan {
  size_t begin = 0;  // byte offsets into canonical_text(text)
  size_t end = 0;
  std::string entity_id;

  bool operator==(const EntitySpan&) const = default;
};

// Greedy left-to-right, longest token window first. Spans never overlap and
// are sorted by begin.
std::vector<EntitySpan> link_entities(std::string_view text, const KnowledgeGraph& kg);

enum class TranslationMethod { kg, mt, english_fallback };
std::string_view to_string(TranslationMethod m);

struct TranslatedAnswer {
  std::string text;
  TranslationMethod method = TranslationMethod::english_fallback;
  std::optional<std::string> linked_entity;
  std::optional<std::string> warning;

  bool operator==(const TranslatedAnswer&) const = default;
};

// Label of the single entity spanning the whole canonical answer, if that
// entity has one for target_lang; the answer verbatim otherwise.
TranslatedAnswer kg_translate_answer(std::string_view answer, std::string_view target_lang,
                                     const KnowledgeGraph& kg);

enum class AnswerStrategy { kg_first, mt_only, kg_only };
std::optional<AnswerStrategy> parse_answer_strategy(std::string_view name);
std::string_view to_string(AnswerStrategy s);

// mt_only needs a translator and rethrows its failures; kg_first degrades a
// failing (or empty) translation to english_fallback with a warning.
TranslatedAnswer translate_answer(std::string_view answer, std::string_view target_lang,
                                  AnswerStrategy strategy, const KnowledgeGraph& kg,
                                  const Translator* translator, std::string_view source_lang = "en");

}  // namespace xlp
