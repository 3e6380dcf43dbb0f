#include "xlp/corpus_store.hpp"

#include <algorithm>
#include <bit>
#include <iterator>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "xlp/error.hpp"
#include "xlp/random.hpp"
#include "xlp/unicode.hpp"

namespace xlp {

using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::chrono::system_clock::to_time_t(now)));
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(Errc::io_error, fmt::format("cannot open {}", path.string()));
  }
  return in;
}

json parse_json_line(const std::string& line, size_t line_no) {
  try {
    return json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, fmt::format("line {}: invalid JSON ({})", line_no, e.what()));
  }
}

[[noreturn]] void field_error(std::string_view where, std::string_view field,
                              std::string_view problem) {
  throw Error(Errc::parse_error, fmt::format("{}: field \"{}\" {}", where, field, problem));
}

std::string required_string(const json& row, std::string_view field, std::string_view where) {
  const auto it = row.find(std::string(field));
  if (it == row.end()) field_error(where, field, "is missing");
  if (!it->is_string()) field_error(where, field, "must be a string");
  std::string value = it->get<std::string>();
  if (unicode::is_blank(value)) field_error(where, field, "is empty");
  return value;
}

std::optional<std::string> optional_id(const json& row, std::string_view field,
                                       std::string_view where) {
  const auto it = row.find(std::string(field));
  if (it == row.end() || it->is_null()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<long long>());
  field_error(where, field, "must be a string or integer");
}

std::vector<std::string> string_list(const json& value, std::string_view field,
                                     std::string_view where) {
  if (!value.is_array()) field_error(where, field, "must be an array of strings");
  std::vector<std::string> out;
  for (const auto& item : value) {
    if (!item.is_string()) field_error(where, field, "must be an array of strings");
    std::string s = item.get<std::string>();
    if (unicode::is_blank(s)) field_error(where, field, "contains an empty answer");
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  }
  return out;
}

template <typename Fn>
size_t for_each_json_line(std::istream& in, Fn&& fn) {
  std::string line;
  size_t line_no = 0;
  size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (unicode::is_blank(line)) continue;
    fn(parse_json_line(line, line_no), line_no);
    ++rows;
  }
  return rows;
}

std::string source_stem(std::string_view source) {
  return std::filesystem::path(source).stem().string();
}

// MKQA answers: {"type", "text", "aliases"}; unanswerable entries carry null text.
std::vector<std::string> mkqa_answers(const json& answers, std::string_view where) {
  std::vector<std::string> out;
  if (!answers.is_array()) field_error(where, "answers", "must be an array");
  for (const auto& a : answers) {
    if (!a.is_object()) continue;
    if (a.value("type", std::string{}) == "unanswerable") continue;
    auto add = [&](const json& v) {
      if (!v.is_string()) return;
      std::string s = v.get<std::string>();
      if (unicode::is_blank(s)) return;
      if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    };
    if (auto it = a.find("text"); it != a.end()) add(*it);
    if (auto it = a.find("aliases"); it != a.end() && it->is_array()) {
      for (const auto& alias : *it) add(alias);
    }
  }
  return out;
}

void ingest_jsonl_rows(std::istream& in, DatabaseFormat format, std::string_view source,
                       const IngestOptions& options, DatabaseBuilder& builder) {
  const std::string stem = source_stem(source);
  for_each_json_line(in, [&](const json& row, size_t line_no) {
    const std::string where = fmt::format("line {}", line_no);
    if (!row.is_object()) throw Error(Errc::parse_error, where + ": row must be a JSON object");
    DatabaseEntry e;
    e.query.lang = options.hrl_lang;
    switch (format) {
      case DatabaseFormat::generic_jsonl: {
        e.query.text = required_string(row, "question", where);
        const auto it = row.find("answers");
        if (it == row.end()) field_error(where, "answers", "is missing");
        e.answer.answers = string_list(*it, "answers", where);
        if (e.answer.answers.empty()) field_error(where, "answers", "is empty");
        e.query.id = optional_id(row, "id", where).value_or(fmt::format("{}:{}", stem, line_no));
        if (auto lang = row.find("lang"); lang != row.end() && lang->is_string()) {
          e.query.lang = lang->get<std::string>();
        }
        break;
      }
      case DatabaseFormat::nq_open_jsonl: {
        e.query.text = required_string(row, "question", where);
        const auto it = row.find("answer");
        if (it == row.end()) field_error(where, "answer", "is missing");
        e.answer.answers = string_list(*it, "answer", where);
        if (e.answer.answers.empty()) field_error(where, "answer", "is empty");
        e.query.id = optional_id(row, "id", where).value_or(fmt::format("{}:{}", stem, line_no));
        break;
      }
      case DatabaseFormat::mkqa_jsonl: {
        const auto pid = optional_id(row, "example_id", where);
        if (!pid) field_error(where, "example_id", "is missing");
        e.query.id = *pid;
        e.query.text = row.contains("query") ? required_string(row, "query", where) : std::string{};
        const auto& queries = row.value("queries", json::object());
        if (queries.contains(options.hrl_lang)) {
          e.query.text = required_string(queries, options.hrl_lang, where);
        }
        if (e.query.text.empty()) field_error(where, "query", "is missing");
        const auto& answers = row.value("answers", json::object());
        if (answers.contains(options.hrl_lang)) {
          e.answer.answers = mkqa_answers(answers[options.hrl_lang], where);
        }
        if (e.answer.answers.empty()) {
          spdlog::debug("{}: {} has no {} answer, skipped", source, where, options.hrl_lang);
          return;
        }
        break;
      }
      case DatabaseFormat::generic_parallel_jsonl: {
        const auto pid = optional_id(row, "pid", where);
        if (!pid) field_error(where, "pid", "is missing");
        e.query.id = *pid;
        const auto& queries = row.value("queries", json::object());
        e.query.text = required_string(queries, options.hrl_lang, where);
        const auto& answers = row.value("answers", json::object());
        if (!answers.contains(options.hrl_lang)) return;
        e.answer.answers = string_list(answers[options.hrl_lang], "answers", where);
        if (e.answer.answers.empty()) return;
        break;
      }
      case DatabaseFormat::squad_json:
        break;
    }
    e.answer.query_id = e.query.id;
    builder.add(std::move(e), where);
  });
}

// Walks SQuAD-layout documents (also XQuAD per-language files).
template <typename Fn>
void for_each_squad_qa(const json& doc, Fn&& fn) {
  const auto data = doc.find("data");
  if (data == doc.end() || !data->is_array()) {
    throw Error(Errc::parse_error, "squad: top-level \"data\" array is missing");
  }
  for (size_t a = 0; a < data->size(); ++a) {
    const auto& paragraphs = (*data)[a].value("paragraphs", json::array());
    for (size_t p = 0; p < paragraphs.size(); ++p) {
      const auto& qas = paragraphs[p].value("qas", json::array());
      for (size_t q = 0; q < qas.size(); ++q) {
        fn(qas[q], fmt::format("data[{}].paragraphs[{}].qas[{}]", a, p, q));
      }
    }
  }
}

std::vector<std::string> squad_answers(const json& qa) {
  std::vector<std::string> out;
  for (const auto& a : qa.value("answers", json::array())) {
    if (!a.is_object() || !a.contains("text") || !a["text"].is_string()) continue;
    std::string s = a["text"].get<std::string>();
    if (unicode::is_blank(s)) continue;
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
  }
  return out;
}

json parse_json_document(std::istream& in, std::string_view source) {
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, fmt::format("{}: invalid JSON ({})", source, e.what()));
  }
}

}  // namespace

std::optional<DatabaseFormat> parse_database_format(std::string_view name) {
  if (name == "nq_open_jsonl") return DatabaseFormat::nq_open_jsonl;
  if (name == "squad_json") return DatabaseFormat::squad_json;
  if (name == "generic_jsonl") return DatabaseFormat::generic_jsonl;
  if (name == "mkqa_jsonl") return DatabaseFormat::mkqa_jsonl;
  if (name == "generic_parallel_jsonl") return DatabaseFormat::generic_parallel_jsonl;
  return std::nullopt;
}

std::optional<EvalFormat> parse_eval_format(std::string_view name) {
  if (name == "mkqa_jsonl") return EvalFormat::mkqa_jsonl;
  if (name == "xquad_json") return EvalFormat::xquad_json;
  if (name == "generic_parallel_jsonl") return EvalFormat::generic_parallel_jsonl;
  return std::nullopt;
}

std::string_view to_string(DatabaseFormat f) {
  switch (f) {
    case DatabaseFormat::nq_open_jsonl: return "nq_open_jsonl";
    case DatabaseFormat::squad_json: return "squad_json";
    case DatabaseFormat::generic_jsonl: return "generic_jsonl";
    case DatabaseFormat::mkqa_jsonl: return "mkqa_jsonl";
    case DatabaseFormat::generic_parallel_jsonl: return "generic_parallel_jsonl";
  }
  return "?";
}

std::string_view to_string(EvalFormat f) {
  switch (f) {
    case EvalFormat::mkqa_jsonl: return "mkqa_jsonl";
    case EvalFormat::xquad_json: return "xquad_json";
    case EvalFormat::generic_parallel_jsonl: return "generic_parallel_jsonl";
  }
  return "?";
}

// --- Database -------------------------------------------------------------

const DatabaseEntry* Database::find(std::string_view id) const {
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : &it->second;
}

std::vector<std::string> Database::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [id, _] : entries_) out.push_back(id);
  return out;
}

std::string Database::canonical_jsonl() const {
  std::string out;
  for (const auto& [id, e] : entries_) {
    json row = {{"id", id},
                {"question", e.query.text},
                {"lang", e.query.lang},
                {"answers", e.answer.answers}};
    out += row.dump();
    out.push_back('\n');
  }
  return out;
}

DatabaseBuilder::DatabaseBuilder(std::string source, bool dedup) : dedup_(dedup) {
  db_.meta_.source = std::move(source);
}

void DatabaseBuilder::add(DatabaseEntry entry, std::string_view where) {
  if (unicode::is_blank(entry.query.text)) {
    throw Error(Errc::parse_error, fmt::format("{}: field \"question\" is empty", where));
  }
  if (entry.answer.answers.empty()) {
    throw Error(Errc::parse_error, fmt::format("{}: field \"answers\" is empty", where));
  }
  entry.answer.query_id = entry.query.id;
  if (dedup_) {
    std::string key = unicode::canonical_text(entry.query.text);
    if (const auto it = by_text_.find(key); it != by_text_.end()) {
      auto& answers = db_.entries_.at(it->second).answer.answers;
      for (auto& a : entry.answer.answers) {
        if (std::find(answers.begin(), answers.end(), a) == answers.end()) {
          answers.push_back(std::move(a));
        }
      }
      return;
    }
    if (db_.entries_.contains(entry.query.id)) {
      throw Error(Errc::duplicate_id, fmt::format("{}: duplicate id \"{}\"", where, entry.query.id));
    }
    by_text_.emplace(std::move(key), entry.query.id);
  } else if (db_.entries_.contains(entry.query.id)) {
    throw Error(Errc::duplicate_id, fmt::format("{}: duplicate id \"{}\"", where, entry.query.id));
  }
  std::string id = entry.query.id;
  db_.entries_.emplace(std::move(id), std::move(entry));
}

Database DatabaseBuilder::build() && {
  db_.meta_.ingested_at = utc_now();
  return std::move(db_);
}

Database ingest_database(std::istream& in, DatabaseFormat format, std::string_view source,
                         const IngestOptions& options) {
  DatabaseBuilder builder(std::string(source), options.dedup);
  if (format == DatabaseFormat::squad_json) {
    const json doc = parse_json_document(in, source);
    for_each_squad_qa(doc, [&](const json& qa, const std::string& where) {
      DatabaseEntry e;
      e.query.lang = options.hrl_lang;
      e.query.text = required_string(qa, "question", where);
      e.query.id = optional_id(qa, "id", where).value_or(where);
      e.answer.answers = squad_answers(qa);
      if (e.answer.answers.empty()) {
        spdlog::debug("{}: {} is unanswerable, skipped", source, where);
        return;
      }
      builder.add(std::move(e), where);
    });
  } else {
    ingest_jsonl_rows(in, format, source, options, builder);
  }
  if (builder.size() == 0) throw Error(Errc::empty_input, "empty database");
  return std::move(builder).build();
}

Database ingest_database(const std::filesystem::path& path, DatabaseFormat format,
                         const IngestOptions& options) {
  auto in = open_input(path);
  return ingest_database(in, format, path.string(), options);
}

Database merge_databases(const std::vector<Database>& parts, bool dedup) {
  std::string source;
  for (const auto& p : parts) {
    if (!source.empty()) source += "+";
    source += p.meta().source;
  }
  DatabaseBuilder builder(source, dedup);
  for (const auto& p : parts) {
    for (const auto& [id, e] : p.entries()) builder.add(e, fmt::format("{}:{}", p.meta().source, id));
  }
  if (builder.size() == 0) throw Error(Errc::empty_input, "empty database");
  return std::move(builder).build();
}

void write_database(const Database& db, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", path.string()));
  out << db.canonical_jsonl();
  if (!out) throw Error(Errc::io_error, fmt::format("write failed: {}", path.string()));
}

// --- EvalSet --------------------------------------------------------------

size_t EvalSet::parallel_count() const {
  return static_cast<size_t>(std::count_if(examples.begin(), examples.end(),
                                           [](const EvalExample& e) { return e.gold_hrl_id.has_value(); }));
}

double EvalSet::parallel_fraction() const {
  if (original_parallel == 0) return 0.0;
  return static_cast<double>(parallel_count()) / static_cast<double>(original_parallel);
}

std::vector<std::string> EvalSet::gold_ids() const {
  std::set<std::string> ids;
  for (const auto& e : examples) {
    if (e.gold_hrl_id) ids.insert(*e.gold_hrl_id);
  }
  return {ids.begin(), ids.end()};
}

namespace {

[[noreturn]] void unknown_language(std::string_view lang, const std::set<std::string>& available) {
  std::string list;
  for (const auto& l : available) {
    if (!list.empty()) list += ", ";
    list += l;
  }
  throw Error(Errc::unknown_language,
              fmt::format("language \"{}\" not in file; available: {}", lang, list));
}

void attach_gold(EvalSet& set, EvalExample& ex, const std::optional<std::string>& pid,
                 const Database& db, std::string_view where) {
  if (!pid) return;
  ++set.original_parallel;
  if (db.contains(*pid)) {
    ex.gold_hrl_id = *pid;
  } else {
    set.warnings.push_back(fmt::format("{}: parallel id \"{}\" not in database", where, *pid));
  }
}

EvalSet ingest_parallel_jsonl(std::istream& in, EvalFormat format, std::string_view lang,
                              const Database& db, std::string_view source) {
  EvalSet set;
  set.lang = std::string(lang);
  std::set<std::string> available;
  const std::string stem = source_stem(source);
  const bool mkqa = format == EvalFormat::mkqa_jsonl;

  for_each_json_line(in, [&](const json& row, size_t line_no) {
    const std::string where = fmt::format("line {}", line_no);
    if (!row.is_object()) throw Error(Errc::parse_error, where + ": row must be a JSON object");
    const auto queries = row.find("queries");
    if (queries == row.end() || !queries->is_object()) field_error(where, "queries", "is missing");
    for (const auto& [l, _] : queries->items()) available.insert(l);
    if (mkqa) available.insert("en");

    std::optional<std::string> text;
    if (queries->contains(std::string(lang))) {
      text = required_string(*queries, lang, where);
    } else if (mkqa && lang == "en" && row.contains("query")) {
      text = required_string(row, "query", where);
    }
    if (!text) return;

    const auto pid = optional_id(row, mkqa ? "example_id" : "pid", where);
    EvalExample ex;
    ex.lrl_query.lang = std::string(lang);
    ex.lrl_query.text = std::move(*text);
    ex.lrl_query.id = pid.value_or(fmt::format("{}:{}", stem, line_no));
    const auto& answers = row.value("answers", json::object());
    if (answers.is_object() && answers.contains(std::string(lang))) {
      ex.gold_answers = mkqa ? mkqa_answers(answers[std::string(lang)], where)
                             : string_list(answers[std::string(lang)], "answers", where);
    }
    attach_gold(set, ex, pid, db, where);
    set.examples.push_back(std::move(ex));
  });

  if (set.examples.empty()) {
    if (available.empty()) throw Error(Errc::empty_input, fmt::format("{}: no eval rows", source));
    unknown_language(lang, available);
  }
  return set;
}

EvalSet ingest_xquad(std::istream& in, std::string_view lang, const Database& db,
                     std::string_view source) {
  EvalSet set;
  set.lang = std::string(lang);
  const json doc = parse_json_document(in, source);
  for_each_squad_qa(doc, [&](const json& qa, const std::string& where) {
    EvalExample ex;
    ex.lrl_query.lang = std::string(lang);
    ex.lrl_query.text = required_string(qa, "question", where);
    const auto pid = optional_id(qa, "id", where);
    ex.lrl_query.id = pid.value_or(where);
    ex.gold_answers = squad_answers(qa);
    attach_gold(set, ex, pid, db, where);
    set.examples.push_back(std::move(ex));
  });
  if (set.examples.empty()) throw Error(Errc::empty_input, fmt::format("{}: no questions", source));
  return set;
}

std::string substitute_lang(std::string pattern, std::string_view lang) {
  const auto pos = pattern.find("{lang}");
  if (pos != std::string::npos) pattern.replace(pos, 6, lang);
  return pattern;
}

std::set<std::string> languages_matching(const std::filesystem::path& pattern) {
  std::set<std::string> out;
  const std::string name = pattern.filename().string();
  const auto pos = name.find("{lang}");
  const std::string prefix = name.substr(0, pos);
  const std::string suffix = name.substr(pos + 6);
  std::error_code ec;
  const auto dir = pattern.has_parent_path() ? pattern.parent_path() : std::filesystem::path(".");
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    const std::string f = entry.path().filename().string();
    if (f.size() > prefix.size() + suffix.size() && f.starts_with(prefix) && f.ends_with(suffix)) {
      out.insert(f.substr(prefix.size(), f.size() - prefix.size() - suffix.size()));
    }
  }
  return out;
}

}  // namespace

EvalSet ingest_eval_set(std::istream& in, EvalFormat format, std::string_view lang,
                        const Database& db, std::string_view source) {
  EvalSet set = format == EvalFormat::xquad_json ? ingest_xquad(in, lang, db, source)
                                                 : ingest_parallel_jsonl(in, format, lang, db, source);
  for (const auto& w : set.warnings) spdlog::warn("{}: {}", source, w);
  return set;
}

EvalSet ingest_eval_set(const std::filesystem::path& path, EvalFormat format,
                        std::string_view lang, const Database& db) {
  std::filesystem::path resolved = path;
  if (format == EvalFormat::xquad_json && path.string().find("{lang}") != std::string::npos) {
    resolved = substitute_lang(path.string(), lang);
    if (!std::filesystem::exists(resolved)) unknown_language(lang, languages_matching(path));
  }
  auto in = open_input(resolved);
  return ingest_eval_set(in, format, lang, db, resolved.string());
}

// --- experiment operators -------------------------------------------------

Database inject_distractors(const Database& db, const Database& pool, size_t count,
                            uint64_t seed) {
  std::set<std::string, std::less<>> seen_text;
  for (const auto& [_, e] : db.entries()) seen_text.insert(unicode::canonical_text(e.query.text));

  std::vector<const DatabaseEntry*> candidates;
  for (const auto& [id, e] : pool.entries()) {
    if (db.contains(id)) continue;
    if (seen_text.contains(unicode::canonical_text(e.query.text))) continue;
    candidates.push_back(&e);
  }
  if (candidates.size() < count) {
    throw Error(Errc::insufficient_data,
                fmt::format("need {} distractors, only {} available after dedup", count,
                            candidates.size()));
  }

  // Partial Fisher-Yates over the id-sorted candidates.
  SeededRng rng(seed);
  for (size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }

  DatabaseBuilder builder(db.meta().source + "+distractors", false);
  for (const auto& [id, e] : db.entries()) builder.add(e, id);
  for (size_t i = 0; i < count; ++i) builder.add(*candidates[i], candidates[i]->query.id);
  return std::move(builder).build();
}

Database inject_distractors(const Database& db, const std::filesystem::path& distractor_path,
                            size_t count, uint64_t seed) {
  if (count == 0) return db;
  const Database pool = ingest_database(distractor_path, DatabaseFormat::generic_jsonl);
  return inject_distractors(db, pool, count, seed);
}

std::vector<std::string> retained_parallel_ids(std::vector<std::string> parallel_ids,
                                               double keep_fraction, uint64_t seed,
                                               DropoutMode mode) {
  if (!(keep_fraction >= 0.0 && keep_fraction <= 1.0)) {
    throw Error(Errc::invalid_argument,
                fmt::format("keep_fraction {} outside [0, 1]", keep_fraction));
  }
  std::sort(parallel_ids.begin(), parallel_ids.end());
  parallel_ids.erase(std::unique(parallel_ids.begin(), parallel_ids.end()), parallel_ids.end());

  const auto total = static_cast<double>(parallel_ids.size());
  const auto removed = static_cast<size_t>(std::llround((1.0 - keep_fraction) * total));
  const size_t kept = parallel_ids.size() - std::min(removed, parallel_ids.size());

  uint64_t s = seed;
  if (mode == DropoutMode::independent) {
    s = mix_seed(seed, std::bit_cast<uint64_t>(keep_fraction));
  }
  SeededRng rng(s);
  rng.shuffle(std::span<std::string>(parallel_ids));
  parallel_ids.resize(kept);
  std::sort(parallel_ids.begin(), parallel_ids.end());
  return parallel_ids;
}

std::pair<Database, EvalSet> dropout_parallel(const Database& db, const EvalSet& eval,
                                              double keep_fraction, uint64_t seed,
                                              DropoutMode mode) {
  const std::vector<std::string> parallel = eval.gold_ids();
  const std::vector<std::string> kept = retained_parallel_ids(parallel, keep_fraction, seed, mode);
  if (kept.size() == parallel.size()) return {db, eval};

  std::set<std::string, std::less<>> removed;
  std::set_difference(parallel.begin(), parallel.end(), kept.begin(), kept.end(),
                      std::inserter(removed, removed.end()));

  DatabaseBuilder builder(db.meta().source, false);
  for (const auto& [id, e] : db.entries()) {
    if (!removed.contains(id)) builder.add(e, id);
  }
  EvalSet out = eval;
  for (auto& ex : out.examples) {
    if (ex.gold_hrl_id && removed.contains(*ex.gold_hrl_id)) ex.gold_hrl_id.reset();
  }
  Database reduced = builder.size() == 0 ? Database{} : std::move(builder).build();
  return {std::move(reduced), std::move(out)};
}

const AnswerRecord& lookup_answer(const Database& db, std::string_view query_id) {
  const DatabaseEntry* e = db.find(query_id);
  if (e == nullptr) {
    throw Error(Errc::not_found, fmt::format("query id \"{}\" not found", query_id));
  }
  return e->answer;
}

}  // namespace xlp
