#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace xlp {

struct QueryRecord {
  std::string id;
  std::string text;
  std::string lang;

  bool operator==(const QueryRecord&) const = default;
};

struct AnswerRecord {
  std::string query_id;
  std::vector<std::string> answers;

  bool operator==(const AnswerRecord&) const = default;
};

struct DatabaseEntry {
  QueryRecord query;
  AnswerRecord answer;

  bool operator==(const DatabaseEntry&) const = default;
};

struct DatabaseMeta {
  std::string source;
  std::string ingested_at;  // ISO-8601 UTC; not part of the canonical form
};

// Database rows. The parallel formats contribute their HRL ("en") side with
// the parallel id as record id, so eval sets join to them directly.
enum class DatabaseFormat {
  nq_open_jsonl,
  squad_json,
  generic_jsonl,
  mkqa_jsonl,
  generic_parallel_jsonl,
};

enum class EvalFormat { mkqa_jsonl, xquad_json, generic_parallel_jsonl };

std::optional<DatabaseFormat> parse_database_format(std::string_view name);
std::optional<EvalFormat> parse_eval_format(std::string_view name);
std::string_view to_string(DatabaseFormat f);
std::string_view to_string(EvalFormat f);

// Immutable HRL query -> answer map, ordered by id.
class Database {
 public:
  using EntryMap = std::map<std::string, DatabaseEntry, std::less<>>;

  Database() = default;

  size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  bool contains(std::string_view id) const { return entries_.find(id) != entries_.end(); }
  const DatabaseEntry* find(std::string_view id) const;

  const EntryMap& entries() const noexcept { return entries_; }
  const DatabaseMeta& meta() const noexcept { return meta_; }
  std::vector<std::string> ids() const;

  // Sorted-by-id JSONL, one {"answers","id","lang","question"} object per line.
  std::string canonical_jsonl() const;

  bool operator==(const Database& other) const { return entries_ == other.entries_; }

 private:
  friend class DatabaseBuilder;
  EntryMap entries_;
  DatabaseMeta meta_;
};

// Accumulates rows in source order. With dedup on, a row whose canonical
// query text was seen before is folded into the first record (answers
// unioned, first-seen order kept).
class DatabaseBuilder {
 public:
  explicit DatabaseBuilder(std::string source, bool dedup = true);

  // `where` is used in error messages ("line 3", "data[0].paragraphs[2]...").
  void add(DatabaseEntry entry, std::string_view where);
  size_t size() const noexcept { return db_.entries_.size(); }
  Database build() &&;

 private:
  Database db_;
  bool dedup_;
  std::map<std::string, std::string, std::less<>> by_text_;
};

struct IngestOptions {
  bool dedup = true;
  std::string hrl_lang = "en";
};

Database ingest_database(const std::filesystem::path& path, DatabaseFormat format,
                         const IngestOptions& options = {});
Database ingest_database(std::istream& in, DatabaseFormat format, std::string_view source,
                         const IngestOptions& options = {});

// Union of several databases; later duplicates fold into earlier records.
Database merge_databases(const std::vector<Database>& parts, bool dedup = true);

void write_database(const Database& db, const std::filesystem::path& path);

struct EvalExample {
  QueryRecord lrl_query;
  std::optional<std::string> gold_hrl_id;
  std::vector<std::string> gold_answers;  // empty = unanswerable

  bool operator==(const EvalExample&) const = default;
};

struct EvalSet {
  std::string lang;
  std::vector<EvalExample> examples;
  // Examples that carried a resolvable-or-not parallel id at ingest.
  size_t original_parallel = 0;
  std::vector<std::string> warnings;

  size_t parallel_count() const;
  double parallel_fraction() const;
  std::vector<std::string> gold_ids() const;  // sorted, unique
};

// Parallel ids are resolved against `db`; unresolved ids become warnings and
// leave gold_hrl_id empty. For xquad_json the path may contain "{lang}".
EvalSet ingest_eval_set(const std::filesystem::path& path, EvalFormat format,
                        std::string_view lang, const Database& db);
EvalSet ingest_eval_set(std::istream& in, EvalFormat format, std::string_view lang,
                        const Database& db, std::string_view source);

// Records of `db` plus exactly `count` records sampled from `pool` (after
// removing pool rows whose id or canonical text already occurs in `db`).
Database inject_distractors(const Database& db, const Database& pool, size_t count,
                            uint64_t seed);
Database inject_distractors(const Database& db, const std::filesystem::path& distractor_path,
                            size_t count, uint64_t seed);

enum class DropoutMode {
  nested,       // one permutation per seed; retained sets grow with keep_fraction
  independent,  // fresh permutation per (seed, keep_fraction)
};

// Ids retained out of `parallel_ids` (any order) for the given keep fraction.
std::vector<std::string> retained_parallel_ids(std::vector<std::string> parallel_ids,
                                               double keep_fraction, uint64_t seed,
                                               DropoutMode mode = DropoutMode::nested);

std::pair<Database, EvalSet> dropout_parallel(const Database& db, const EvalSet& eval,
                                              double keep_fraction, uint64_t seed,
                                              DropoutMode mode = DropoutMode::nested);

// Throws Errc::not_found for unknown ids.
const AnswerRecord& lookup_answer(const Database& db, std::string_view query_id);

}  // namespace xlp
