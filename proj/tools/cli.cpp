#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "xlp/adapters.hpp"
#include "xlp/answer_xlate.hpp"
#include "xlp/corpus_store.hpp"
#include "xlp/embedding.hpp"
#include "xlp/error.hpp"
#include "xlp/eval_metrics.hpp"
#include "xlp/experiments.hpp"
#include "xlp/mips_index.hpp"
#include "xlp/parallel.hpp"
#include "xlp/pivot.hpp"
#include "xlp/unicode.hpp"
#include "xlp/vector_store.hpp"

namespace xlp::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const std::vector<std::string> kDbFormats{"nq_open_jsonl", "squad_json", "generic_jsonl", "mkqa_jsonl",
                                          "generic_parallel_jsonl"};
const std::vector<std::string> kEvalFormats{"mkqa_jsonl", "xquad_json", "generic_parallel_jsonl"};
const std::vector<std::string> kStrategies{"mips", "nmt_mips", "rm_mips"};

bool given(const CLI::Option* o) { return o != nullptr && o->count() > 0; }

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// --- encoder / scorer / translator flags shared by the low-level commands ---

struct EncoderFlags {
  std::string type = "hash";
  size_t dim = 256;
  std::string command;
  std::string name = "pipe-encoder";
};

void add_encoder_flags(CLI::App* sub, EncoderFlags& f) {
  sub->add_option("--encoder", f.type, "Sentence encoder: hash or pipe")
      ->check(CLI::IsMember({"hash", "pipe"}))
      ->capture_default_str();
  sub->add_option("--dim", f.dim, "Embedding dimension")->capture_default_str();
  sub->add_option("--encoder-command", f.command, "Command of a pipe encoder adapter");
  sub->add_option("--encoder-name", f.name, "Encoder name recorded for a pipe encoder")->capture_default_str();
}

std::shared_ptr<Encoder> make_encoder(const EncoderFlags& f) {
  if (f.type == "hash") return std::make_shared<HashNgramEncoder>(f.dim);
  if (f.command.empty()) throw UsageError("--encoder pipe needs --encoder-command");
  return std::make_shared<PipeEncoder>(std::make_shared<PipeProcess>("encoder", f.command), f.name, f.dim);
}

// --- experiment flags (pivot and sweeps) -------------------------------------

struct ExperimentFlags {
  std::string config;
  std::vector<std::string> db;
  std::string db_format = "generic_jsonl";
  std::string eval;
  std::string eval_format = "generic_parallel_jsonl";
  std::vector<std::string> langs;
  std::vector<std::string> strategies;
  size_t k = kDefaultTopK;
  std::string index_mode;
  std::string answer_strategy;
  std::string encoder;
  size_t dim = 256;
  std::string encoder_command, encoder_name, db_vectors, query_vectors, pool_vectors;
  std::string scorer, scorer_command, translator, translator_command;
  std::string kg, groups;
  std::string pool, pool_format = "generic_jsonl";
  std::string counts, keep, seeds;
  double target_precision = 0.8;
  std::string dropout_mode;
  bool held_out = false;
  bool no_dedup = false;
  unsigned jobs = 0;
  std::string out;
  std::map<std::string, CLI::Option*> opt;
};

enum class ExperimentKind { pivot, distractor, alignment };

void add_experiment_flags(CLI::App* sub, ExperimentFlags& f, ExperimentKind kind) {
  auto& o = f.opt;
  o["config"] = sub->add_option("--config", f.config, "JSON experiment config; flags override it")
                    ->check(CLI::ExistingFile);
  o["db"] = sub->add_option("--db", f.db, "HRL database file (repeatable)");
  o["db-format"] = sub->add_option("--db-format", f.db_format, "Database format")
                       ->check(CLI::IsMember(kDbFormats))
                       ->capture_default_str();
  o["eval"] = sub->add_option("--eval", f.eval, "Evaluation file (xquad_json may contain {lang})");
  o["eval-format"] = sub->add_option("--eval-format", f.eval_format, "Evaluation format")
                         ->check(CLI::IsMember(kEvalFormats))
                         ->capture_default_str();
  o["lang"] = sub->add_option("--lang", f.langs, "Evaluation language(s), comma separated")->delimiter(',');
  o["strategy"] = sub->add_option("--strategy", f.strategies, "Matching strategies, comma separated")
                      ->delimiter(',')
                      ->check(CLI::IsMember(kStrategies));
  o["k"] = sub->add_option("--k", f.k, "Candidates reranked by rm_mips")->check(CLI::PositiveNumber);
  o["index-mode"] = sub->add_option("--index-mode", f.index_mode, "exact or approximate")
                        ->check(CLI::IsMember({"exact", "approximate"}));
  o["answer-strategy"] = sub->add_option("--answer-strategy", f.answer_strategy, "kg_first, mt_only or kg_only")
                             ->check(CLI::IsMember({"kg_first", "mt_only", "kg_only"}));
  o["encoder"] = sub->add_option("--encoder", f.encoder, "hash, store or pipe")
                     ->check(CLI::IsMember({"hash", "store", "pipe"}));
  o["dim"] = sub->add_option("--dim", f.dim, "Embedding dimension (hash, pipe)");
  o["encoder-command"] = sub->add_option("--encoder-command", f.encoder_command, "Pipe encoder command");
  o["encoder-name"] = sub->add_option("--encoder-name", f.encoder_name, "Encoder name (pipe, store)");
  o["db-vectors"] = sub->add_option("--db-vectors", f.db_vectors, "XLPV1 store of database vectors");
  o["query-vectors"] = sub->add_option("--query-vectors", f.query_vectors, "XLPV1 query stores, path with {lang}");
  o["pool-vectors"] = sub->add_option("--pool-vectors", f.pool_vectors, "XLPV1 store of distractor vectors");
  o["scorer"] = sub->add_option("--scorer", f.scorer, "oracle, cosine, pipe or none")
                    ->check(CLI::IsMember({"oracle", "cosine", "pipe", "none"}));
  o["scorer-command"] = sub->add_option("--scorer-command", f.scorer_command, "Pipe cross-encoder command");
  o["translator"] = sub->add_option("--translator", f.translator, "identity, pipe or none")
                        ->check(CLI::IsMember({"identity", "pipe", "none"}));
  o["translator-command"] = sub->add_option("--translator-command", f.translator_command, "Pipe translator command");
  o["kg"] = sub->add_option("--kg", f.kg, "Knowledge-graph TSV for answer translation");
  o["groups"] = sub->add_option("--groups", f.groups, "Language groups: mkqa, xquad or a JSON file");
  o["no-dedup"] = sub->add_flag("--no-dedup", f.no_dedup, "Keep duplicate database questions");
  o["jobs"] = sub->add_option("--jobs", f.jobs, "Worker threads (default: all cores)");
  o["out"] = sub->add_option("--out", f.out, "Output directory");
  if (kind == ExperimentKind::pivot) return;
  o["seeds"] = sub->add_option("--seeds", f.seeds, "Comma-separated seeds");
  if (kind == ExperimentKind::distractor) {
    o["pool"] = sub->add_option("--pool", f.pool, "Distractor pool file");
    o["pool-format"] = sub->add_option("--pool-format", f.pool_format, "Distractor pool format")
                           ->check(CLI::IsMember(kDbFormats))
                           ->capture_default_str();
    o["counts"] = sub->add_option("--counts", f.counts, "Distractor counts: a,b,c or start:stop:step");
  } else {
    o["keep"] = sub->add_option("--keep", f.keep, "Keep fractions: a,b,c or start:stop:step");
    o["target-precision"] = sub->add_option("--target-precision", f.target_precision, "No-Answer precision target");
    o["dropout-mode"] = sub->add_option("--dropout-mode", f.dropout_mode, "nested or independent")
                            ->check(CLI::IsMember({"nested", "independent"}));
    o["held-out"] = sub->add_flag("--held-out-calibration", f.held_out, "Calibrate on one half, measure on the other");
  }
}

bool flag(const ExperimentFlags& f, const std::string& name) {
  const auto it = f.opt.find(name);
  return it != f.opt.end() && given(it->second);
}

void set_adapter(json& spec, const std::string& type, bool type_given) {
  if (type_given && spec.value("type", std::string{}) != type) spec = json{{"type", type}};
}

ExperimentConfig resolve_config(const ExperimentFlags& f) {
  ExperimentConfig c = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  if (flag(f, "db")) {
    c.databases.clear();
    for (const auto& p : f.db) c.databases.push_back({p, f.db_format});
  } else if (flag(f, "db-format")) {
    for (auto& d : c.databases) d.format = f.db_format;
  }
  if (flag(f, "eval")) {
    if (!flag(f, "lang")) throw UsageError("--eval needs --lang");
    c.evals = {EvalSpec{f.eval, f.eval_format, f.langs}};
  } else {
    for (auto& e : c.evals) {
      if (flag(f, "eval-format")) e.format = f.eval_format;
      if (flag(f, "lang")) e.languages = f.langs;
    }
    if (flag(f, "lang") && !c.synthetic.is_null()) c.synthetic["languages"] = f.langs;
  }
  if (flag(f, "strategy")) {
    c.strategies.clear();
    for (const auto& s : f.strategies) c.strategies.push_back(*parse_strategy(s));
  }
  if (flag(f, "k")) c.k = f.k;
  if (flag(f, "index-mode")) c.index_mode = *parse_index_mode(f.index_mode);
  if (flag(f, "answer-strategy")) c.answer_strategy = *parse_answer_strategy(f.answer_strategy);

  set_adapter(c.encoder, f.encoder, flag(f, "encoder"));
  if (flag(f, "dim")) c.encoder["dim"] = f.dim;
  if (flag(f, "encoder-command")) c.encoder["command"] = f.encoder_command;
  if (flag(f, "encoder-name")) c.encoder["name"] = f.encoder_name;
  if (flag(f, "db-vectors")) c.encoder["database"] = f.db_vectors;
  if (flag(f, "query-vectors")) c.encoder["queries"] = f.query_vectors;
  if (flag(f, "pool-vectors")) c.encoder["pool"] = f.pool_vectors;
  set_adapter(c.scorer, f.scorer, flag(f, "scorer"));
  if (flag(f, "scorer-command")) c.scorer["command"] = f.scorer_command;
  set_adapter(c.translator, f.translator, flag(f, "translator"));
  if (flag(f, "translator-command")) c.translator["command"] = f.translator_command;

  if (flag(f, "kg")) c.kg = f.kg;
  if (flag(f, "groups")) c.groups = f.groups;
  if (flag(f, "no-dedup")) c.dedup = false;
  if (flag(f, "jobs")) c.jobs = f.jobs;
  if (flag(f, "out")) c.out_dir = f.out;
  if (flag(f, "seeds")) c.seeds = parse_seeds(f.seeds);
  if (flag(f, "pool")) c.distractor_pool = DatasetSpec{f.pool, f.pool_format};
  if (flag(f, "counts")) c.distractor_counts = parse_count_grid(f.counts);
  if (flag(f, "keep")) c.keep_fractions = parse_real_grid(f.keep);
  if (flag(f, "target-precision")) c.target_precision = f.target_precision;
  if (flag(f, "dropout-mode")) {
    c.dropout_mode = f.dropout_mode == "nested" ? DropoutMode::nested : DropoutMode::independent;
  }
  if (flag(f, "held-out")) c.held_out_calibration = f.held_out;
  if (c.out_dir.empty()) throw UsageError("--out is required (or out_dir in --config)");
  return c;
}

// --- ingest ------------------------------------------------------------------

struct IngestFlags {
  std::vector<std::string> inputs;
  std::string format = "generic_jsonl";
  std::string hrl_lang = "en";
  bool no_dedup = false;
  std::string distractors;
  std::string distractor_format = "generic_jsonl";
  size_t count = 0;
  uint64_t seed = 1;
  std::string out;
};

int run_ingest(const IngestFlags& f, std::ostream& out) {
  const IngestOptions options{!f.no_dedup, f.hrl_lang};
  std::vector<Database> parts;
  for (const auto& p : f.inputs) parts.push_back(ingest_database(p, *parse_database_format(f.format), options));
  Database db = parts.size() == 1 ? std::move(parts.front()) : merge_databases(parts, !f.no_dedup);
  if (f.count > 0) {
    if (f.distractors.empty()) throw UsageError("--count needs --distractors");
    const Database pool = ingest_database(f.distractors, *parse_database_format(f.distractor_format), options);
    db = inject_distractors(db, pool, f.count, f.seed);
  }
  write_database(db, f.out);
  out << fmt::format("ingested {} records into {}\n", db.size(), f.out);
  return 0;
}

// --- embed -------------------------------------------------------------------

struct EmbedFlags {
  std::string db;
  std::string db_format = "generic_jsonl";
  std::string eval;
  std::string eval_format = "generic_parallel_jsonl";
  std::string lang;
  EncoderFlags encoder;
  unsigned jobs = 0;
  std::string out;
};

int run_embed(const EmbedFlags& f, std::ostream& out) {
  const Database db = ingest_database(f.db, *parse_database_format(f.db_format));
  const auto encoder = make_encoder(f.encoder);
  const unsigned jobs = f.jobs == 0 ? default_jobs() : f.jobs;
  VectorStore store(1, {});
  if (!f.eval.empty()) {
    if (f.lang.empty()) throw UsageError("--eval needs --lang");
    const EvalSet eval = ingest_eval_set(f.eval, *parse_eval_format(f.eval_format), f.lang, db);
    std::vector<QueryRecord> queries;
    for (const auto& ex : eval.examples) queries.push_back(ex.lrl_query);
    store = embed_queries(queries, *encoder, jobs);
  } else {
    store = embed_database(db, *encoder, jobs);
  }
  save_vector_store(store, f.out);
  out << fmt::format("embedded {} queries with {} (dim {}) into {}\n", store.size(), store.meta().encoder,
                     store.dim(), f.out);
  return 0;
}

// --- index -------------------------------------------------------------------

struct IndexFlags {
  std::string vectors;
  std::string mode = "exact";
  std::string expect_encoder;
  size_t lists = 0;
  size_t probes = 0;
  std::string out;
};

int run_index(const IndexFlags& f, std::ostream& out) {
  std::optional<std::string_view> expected;
  if (!f.expect_encoder.empty()) expected = f.expect_encoder;
  const VectorStore store = load_vector_store(f.vectors, expected);
  ApproximateParams params;
  params.lists = f.lists;
  params.probes = f.probes;
  const Index index = build_index(store, *parse_index_mode(f.mode), params);
  index.save(f.out);
  out << fmt::format("indexed {} vectors ({}, {}) into {}\n", index.size(), to_string(index.mode()),
                     index.encoder_name(), f.out);
  return 0;
}

// --- match -------------------------------------------------------------------

struct MatchFlags {
  std::string db;
  std::string db_format = "generic_jsonl";
  std::string index;
  std::string vectors;
  std::string query;
  std::string eval;
  std::string eval_format = "generic_parallel_jsonl";
  std::string lang;
  std::string query_vectors;
  EncoderFlags encoder;
  std::string strategy = "rm_mips";
  size_t k = kDefaultTopK;
  std::optional<double> threshold;
  std::string scorer = "cosine";
  std::string scorer_command;
  std::string translator = "identity";
  std::string translator_command;
  unsigned jobs = 0;
  std::string out;
};

json match_to_json(const QueryRecord& q, const MatchResult& r) {
  json cands = json::array();
  for (const auto& c : r.candidates) {
    json item{{"id", c.hrl_id}, {"similarity", c.similarity}};
    if (c.rerank_score) item["rerank_score"] = *c.rerank_score;
    cands.push_back(std::move(item));
  }
  return {{"id", q.id},
          {"lang", q.lang},
          {"strategy", std::string(to_string(r.strategy))},
          {"matched_id", r.hrl_id ? json(*r.hrl_id) : json(nullptr)},
          {"confidence", r.confidence},
          {"candidates", std::move(cands)}};
}

int run_match(const MatchFlags& f, std::ostream& out) {
  if (f.index.empty() == f.vectors.empty()) throw UsageError("give exactly one of --index or --vectors");
  if (f.query.empty() == f.eval.empty()) throw UsageError("give exactly one of --query or --eval");
  if (f.lang.empty()) throw UsageError("--lang is required");
  const Database db = ingest_database(f.db, *parse_database_format(f.db_format));
  const Index index = f.index.empty() ? build_index(restrict_to(load_vector_store(f.vectors), db)) : Index::load(f.index);

  std::vector<EvalSet> evals;
  if (!f.eval.empty()) evals.push_back(ingest_eval_set(f.eval, *parse_eval_format(f.eval_format), f.lang, db));

  std::shared_ptr<const Encoder> encoder;
  std::optional<VectorStore> query_store;
  if (!f.query_vectors.empty()) {
    query_store.emplace(load_vector_store(f.query_vectors, index.encoder_name()));
    encoder = std::make_shared<StoreEncoder>(*query_store);
  } else {
    encoder = make_encoder(f.encoder);
  }
  std::shared_ptr<const Scorer> scorer;
  if (f.scorer == "oracle") {
    scorer = std::make_shared<OracleScorer>(OracleScorer::from_gold(db, evals));
  } else if (f.scorer == "cosine") {
    if (!query_store) scorer = std::make_shared<EncoderScorer>(*encoder, f.lang);
    else throw UsageError("--scorer cosine needs a text encoder, not --query-vectors");
  } else if (f.scorer == "pipe") {
    if (f.scorer_command.empty()) throw UsageError("--scorer pipe needs --scorer-command");
    scorer = std::make_shared<PipeScorer>(std::make_shared<PipeProcess>("scorer", f.scorer_command));
  }
  std::shared_ptr<const Translator> translator;
  if (f.translator == "identity") {
    translator = std::make_shared<IdentityTranslator>();
  } else if (f.translator == "pipe") {
    if (f.translator_command.empty()) throw UsageError("--translator pipe needs --translator-command");
    translator = std::make_shared<PipeTranslator>(std::make_shared<PipeProcess>("translator", f.translator_command));
  }

  PivotContext ctx{&index, &db, encoder.get(), scorer.get(), translator.get(), "en"};
  MatchOptions options;
  options.strategy = *parse_strategy(f.strategy);
  options.k = f.k;
  if (f.threshold) options.threshold = *f.threshold;

  if (!f.query.empty()) {
    const QueryRecord q{"query", f.query, f.lang};
    out << match_to_json(q, match_query(q, ctx, options)).dump() << '\n';
    return 0;
  }
  std::vector<QueryRecord> queries;
  for (const auto& ex : evals.front().examples) queries.push_back(ex.lrl_query);
  const auto results = match_batch(queries, ctx, options, f.jobs == 0 ? default_jobs() : f.jobs);
  const double accuracy = matching_accuracy(results, evals.front());
  if (f.out.empty()) {
    for (size_t i = 0; i < results.size(); ++i) out << match_to_json(queries[i], results[i]).dump() << '\n';
  } else {
    std::filesystem::create_directories(f.out);
    std::ofstream file(std::filesystem::path(f.out) / "matches.jsonl", std::ios::binary);
    if (!file) throw Error(Errc::io_error, fmt::format("cannot write into {}", f.out));
    for (size_t i = 0; i < results.size(); ++i) file << match_to_json(queries[i], results[i]).dump() << '\n';
  }
  out << fmt::format("match_accuracy {} {} {}\n", f.lang, f.strategy, accuracy);
  return 0;
}

// --- eval ----------------------------------------------------------------------

struct EvalFlags {
  std::string predictions;
  std::string db;
  std::string db_format = "generic_jsonl";
  std::string eval;
  std::string eval_format = "generic_parallel_jsonl";
  std::vector<std::string> langs;
  std::string groups = "mkqa";
  std::optional<double> target_precision;
  std::string out;
};

struct Prediction {
  std::string text;
  std::optional<double> confidence;
};

int run_eval(const EvalFlags& f, std::ostream& out) {
  const Database db = ingest_database(f.db, *parse_database_format(f.db_format));
  // strategy -> lang -> id -> prediction
  std::map<std::string, std::map<std::string, std::map<std::string, Prediction>>> preds;
  std::ifstream in(f.predictions);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open {}", f.predictions));
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (unicode::is_blank(line)) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::parse_error&) {
      throw Error(Errc::parse_error, fmt::format("{}: line {}: invalid JSON", f.predictions, line_no));
    }
    if (!row.is_object() || !row.contains("id") || !row.contains("lang") || !row["id"].is_string() ||
        !row["lang"].is_string()) {
      throw Error(Errc::parse_error, fmt::format("{}: line {}: needs string \"id\" and \"lang\"", f.predictions, line_no));
    }
    Prediction p;
    if (row.contains("prediction") && row["prediction"].is_string()) p.text = row["prediction"].get<std::string>();
    if (row.contains("confidence") && row["confidence"].is_number()) p.confidence = row["confidence"].get<double>();
    const std::string strategy = row.contains("strategy") && row["strategy"].is_string()
                                     ? row["strategy"].get<std::string>()
                                     : std::string("eval");
    preds[strategy][row["lang"].get<std::string>()][row["id"].get<std::string>()] = std::move(p);
  }
  if (preds.empty()) throw Error(Errc::empty_input, fmt::format("{}: no predictions", f.predictions));

  std::map<std::string, MetricMap, std::less<>> per_language;
  for (const auto& lang : f.langs) {
    const EvalSet eval = ingest_eval_set(f.eval, *parse_eval_format(f.eval_format), lang, db);
    for (const auto& [strategy, by_lang] : preds) {
      const auto it = by_lang.find(lang);
      if (it == by_lang.end()) continue;
      double f1 = 0, em = 0;
      size_t missing = 0, answerable = 0;
      std::vector<double> scores, f1s;
      std::vector<int> correct;
      for (const auto& ex : eval.examples) {
        const auto p = it->second.find(ex.lrl_query.id);
        if (p == it->second.end()) ++missing;
        const std::string text = p == it->second.end() ? std::string{} : p->second.text;
        const auto s = answer_score(text, ex.gold_answers, lang);
        f1 += s.f1;
        em += s.em;
        answerable += ex.gold_answers.empty() ? 0 : 1;
        if (p != it->second.end() && p->second.confidence && !is_no_answer(text)) {
          scores.push_back(*p->second.confidence);
          correct.push_back(s.em);
          f1s.push_back(s.f1);
        }
      }
      if (missing > 0) spdlog::warn("{} {}: {} examples have no prediction; scored as No Answer", strategy, lang, missing);
      const double n = eval.examples.empty() ? 1.0 : double(eval.examples.size());
      per_language[lang][strategy + "/end_to_end_f1"] = f1 / n;
      per_language[lang][strategy + "/end_to_end_em"] = em / n;
      if (f.target_precision && !scores.empty() && answerable > 0) {
        const auto point = calibrate_threshold(scores, correct, *f.target_precision);
        per_language[lang][strategy + "/recall_at_target"] =
            point ? recall_at_threshold(scores, f1s, point->threshold, answerable) : 0.0;
      }
    }
  }
  if (per_language.empty()) throw Error(Errc::empty_input, "no predictions for the requested languages");
  EvalReport report = aggregate_groups(per_language, LanguageGroups::named(f.groups));
  std::filesystem::create_directories(f.out);
  const auto dir = std::filesystem::path(f.out);
  std::ofstream(dir / "report.txt", std::ios::binary) << report_table(report);
  std::ofstream(dir / "report.csv", std::ios::binary) << report_csv(report);
  out << fmt::format("wrote {}\n", (dir / "report.csv").string());
  return 0;
}

// --- logging -----------------------------------------------------------------

class LogScope {
 public:
  LogScope(std::ostream& err, const std::string& level) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("xlpivot", sink);
    logger->set_pattern("%l: %v");
    logger->set_level(spdlog::level::from_str(level));
    spdlog::set_default_logger(logger);
  }
  ~LogScope() { spdlog::set_default_logger(previous_); }
  LogScope(const LogScope&) = delete;
  LogScope& operator=(const LogScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-lingual pivoting: answer queries through an English query-answer database", "xlpivot"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}))
      ->capture_default_str();

  IngestFlags ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize question-answer files into one database file");
  ingest_cmd->add_option("--input", ingest.inputs, "Input file (repeatable)")->required();
  ingest_cmd->add_option("--format", ingest.format, "Input format")->check(CLI::IsMember(kDbFormats))->capture_default_str();
  ingest_cmd->add_option("--hrl-lang", ingest.hrl_lang, "Database language")->capture_default_str();
  ingest_cmd->add_flag("--no-dedup", ingest.no_dedup, "Keep duplicate questions");
  ingest_cmd->add_option("--distractors", ingest.distractors, "Distractor pool to sample from");
  ingest_cmd->add_option("--distractor-format", ingest.distractor_format, "Distractor pool format")
      ->check(CLI::IsMember(kDbFormats))
      ->capture_default_str();
  ingest_cmd->add_option("--count", ingest.count, "Distractors to add")->capture_default_str();
  ingest_cmd->add_option("--seed", ingest.seed, "Distractor sampling seed")->capture_default_str();
  ingest_cmd->add_option("--out", ingest.out, "Output database (JSONL)")->required();

  EmbedFlags embed;
  auto* embed_cmd = app.add_subcommand("embed", "Embed database or evaluation queries into an XLPV1 store");
  embed_cmd->add_option("--db", embed.db, "Database file")->required();
  embed_cmd->add_option("--db-format", embed.db_format, "Database format")->check(CLI::IsMember(kDbFormats))->capture_default_str();
  embed_cmd->add_option("--eval", embed.eval, "Embed this evaluation file's queries instead");
  embed_cmd->add_option("--eval-format", embed.eval_format, "Evaluation format")->check(CLI::IsMember(kEvalFormats))->capture_default_str();
  embed_cmd->add_option("--lang", embed.lang, "Language of the evaluation queries");
  add_encoder_flags(embed_cmd, embed.encoder);
  embed_cmd->add_option("--jobs", embed.jobs, "Worker threads");
  embed_cmd->add_option("--out", embed.out, "Output store")->required();

  IndexFlags index;
  auto* index_cmd = app.add_subcommand("index", "Build a MIPS index snapshot from a vector store");
  index_cmd->add_option("--vectors", index.vectors, "XLPV1 store")->required()->check(CLI::ExistingFile);
  index_cmd->add_option("--mode", index.mode, "exact or approximate")
      ->check(CLI::IsMember({"exact", "approximate"}))
      ->capture_default_str();
  index_cmd->add_option("--expect-encoder", index.expect_encoder, "Reject stores from another encoder");
  index_cmd->add_option("--lists", index.lists, "Approximate mode: partitions (0 = sqrt n)");
  index_cmd->add_option("--probes", index.probes, "Approximate mode: partitions probed (0 = auto)");
  index_cmd->add_option("--out", index.out, "Output index file")->required();

  MatchFlags match;
  auto* match_cmd = app.add_subcommand("match", "Match LRL queries to database queries");
  match_cmd->add_option("--db", match.db, "Database file")->required();
  match_cmd->add_option("--db-format", match.db_format, "Database format")->check(CLI::IsMember(kDbFormats))->capture_default_str();
  match_cmd->add_option("--index", match.index, "Index snapshot");
  match_cmd->add_option("--vectors", match.vectors, "Database vector store (index built in memory)");
  match_cmd->add_option("--query", match.query, "A single query text");
  match_cmd->add_option("--eval", match.eval, "Evaluation file");
  match_cmd->add_option("--eval-format", match.eval_format, "Evaluation format")->check(CLI::IsMember(kEvalFormats))->capture_default_str();
  match_cmd->add_option("--lang", match.lang, "Query language");
  match_cmd->add_option("--query-vectors", match.query_vectors, "Precomputed query store (keyed by query id)");
  add_encoder_flags(match_cmd, match.encoder);
  match_cmd->add_option("--strategy", match.strategy, "mips, nmt_mips or rm_mips")->check(CLI::IsMember(kStrategies))->capture_default_str();
  match_cmd->add_option("--k", match.k, "Candidates reranked by rm_mips")->check(CLI::PositiveNumber)->capture_default_str();
  match_cmd->add_option("--threshold", match.threshold, "No-Answer confidence threshold");
  match_cmd->add_option("--scorer", match.scorer, "oracle, cosine, pipe or none")
      ->check(CLI::IsMember({"oracle", "cosine", "pipe", "none"}))
      ->capture_default_str();
  match_cmd->add_option("--scorer-command", match.scorer_command, "Pipe cross-encoder command");
  match_cmd->add_option("--translator", match.translator, "identity, pipe or none")
      ->check(CLI::IsMember({"identity", "pipe", "none"}))
      ->capture_default_str();
  match_cmd->add_option("--translator-command", match.translator_command, "Pipe translator command");
  match_cmd->add_option("--jobs", match.jobs, "Worker threads");
  match_cmd->add_option("--out", match.out, "Directory for matches.jsonl (default: stdout)");

  ExperimentFlags pivot;
  auto* pivot_cmd = app.add_subcommand("pivot", "Run the end-to-end pipeline and write a report");
  add_experiment_flags(pivot_cmd, pivot, ExperimentKind::pivot);

  EvalFlags evalf;
  auto* eval_cmd = app.add_subcommand("eval", "Score a predictions file against an evaluation set");
  eval_cmd->add_option("--predictions", evalf.predictions, "JSONL rows with id, lang, prediction")->required();
  eval_cmd->add_option("--db", evalf.db, "Database file (resolves parallel ids)")->required();
  eval_cmd->add_option("--db-format", evalf.db_format, "Database format")->check(CLI::IsMember(kDbFormats))->capture_default_str();
  eval_cmd->add_option("--eval", evalf.eval, "Evaluation file")->required();
  eval_cmd->add_option("--eval-format", evalf.eval_format, "Evaluation format")->check(CLI::IsMember(kEvalFormats))->capture_default_str();
  eval_cmd->add_option("--lang", evalf.langs, "Languages, comma separated")->delimiter(',')->required();
  eval_cmd->add_option("--groups", evalf.groups, "Language groups: mkqa, xquad or a JSON file")->capture_default_str();
  eval_cmd->add_option("--target-precision", evalf.target_precision, "Also report recall at this precision");
  eval_cmd->add_option("--out", evalf.out, "Output directory")->required();

  ExperimentFlags distractor;
  auto* distractor_cmd = app.add_subcommand("sweep-distractor", "Matching accuracy as distractors are added");
  add_experiment_flags(distractor_cmd, distractor, ExperimentKind::distractor);

  ExperimentFlags alignment;
  auto* alignment_cmd = app.add_subcommand("sweep-alignment", "Recall at target precision as parallels are removed");
  add_experiment_flags(alignment_cmd, alignment, ExperimentKind::alignment);

  std::vector<std::string> argv_store{"xlpivot"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    err << "error: usage: " << one_line(e.what()) << "\nRun with --help for more information.\n";
    return 2;
  }

  LogScope logs(err, log_level);
  try {
    if (ingest_cmd->parsed()) return run_ingest(ingest, out);
    if (embed_cmd->parsed()) return run_embed(embed, out);
    if (index_cmd->parsed()) return run_index(index, out);
    if (match_cmd->parsed()) return run_match(match, out);
    if (eval_cmd->parsed()) return run_eval(evalf, out);
    if (pivot_cmd->parsed()) {
      const auto config = resolve_config(pivot);
      const auto result = run_end_to_end(config);
      write_end_to_end_outputs(config.out_dir, config, result);
      out << fmt::format("wrote {}\n", (std::filesystem::path(config.out_dir) / "report.csv").string());
      return 0;
    }
    if (distractor_cmd->parsed() || alignment_cmd->parsed()) {
      const bool is_distractor = distractor_cmd->parsed();
      const auto config = resolve_config(is_distractor ? distractor : alignment);
      const auto curves = is_distractor ? run_distractor_sweep(config) : run_alignment_sweep(config);
      write_sweep_outputs(config.out_dir, config, curves);
      out << fmt::format("wrote {}\n", (std::filesystem::path(config.out_dir) / "curves.csv").string());
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: usage: " << one_line(e.what()) << "\nRun with --help for more information.\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << one_line(e.what()) << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << '\n';
    return 1;
  }
  return 2;
}

}  // namespace xlp::cli
