#include "xlp/experiments.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>
#include <zlib.h>

#include "xlp/adapters.hpp"
#include "xlp/error.hpp"
#include "xlp/parallel.hpp"
#include "xlp/random.hpp"
#include "xlp/synthetic.hpp"

namespace xlp {

using nlohmann::json;

// --- config ----------------------------------------------------------------

namespace {

[[noreturn]] void config_error(std::string_view key, std::string_view what) {
  throw Error(Errc::invalid_argument, fmt::format("config: \"{}\" {}", key, what));
}

template <typename T>
T get_as(const json& v, std::string_view key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    config_error(key, fmt::format("has the wrong type ({})", v.type_name()));
  }
}

const json& require_object(const json& v, std::string_view key) {
  if (!v.is_object()) config_error(key, "must be an object");
  return v;
}

DatasetSpec dataset_from_json(const json& v, std::string_view key, std::string_view default_format) {
  DatasetSpec d{"", std::string(default_format)};
  if (v.is_string()) {
    d.path = v.get<std::string>();
    return d;
  }
  for (const auto& [k, item] : require_object(v, key).items()) {
    if (k == "path") {
      d.path = get_as<std::string>(item, "path");
    } else if (k == "format") {
      d.format = get_as<std::string>(item, "format");
    } else {
      config_error(fmt::format("{}.{}", key, k), "is not a known key");
    }
  }
  if (d.path.empty()) config_error(key, "needs a \"path\"");
  return d;
}

json dataset_to_json(const DatasetSpec& d) { return {{"path", d.path}, {"format", d.format}}; }

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig c;
  for (const auto& [key, v] : require_object(doc, "config").items()) {
    if (key == "databases") {
      if (!v.is_array()) config_error(key, "must be a list");
      c.databases.clear();
      for (const auto& d : v) c.databases.push_back(dataset_from_json(d, key, "generic_jsonl"));
    } else if (key == "distractor_pool") {
      if (v.is_null()) {
        c.distractor_pool.reset();
      } else {
        c.distractor_pool = dataset_from_json(v, key, "generic_jsonl");
      }
    } else if (key == "evals") {
      if (!v.is_array()) config_error(key, "must be a list");
      c.evals.clear();
      for (const auto& e : v) {
        EvalSpec spec{"", "generic_parallel_jsonl", {}};
        for (const auto& [k, item] : require_object(e, key).items()) {
          if (k == "path") {
            spec.path = get_as<std::string>(item, "evals.path");
          } else if (k == "format") {
            spec.format = get_as<std::string>(item, "evals.format");
          } else if (k == "languages") {
            spec.languages = get_as<std::vector<std::string>>(item, "evals.languages");
          } else {
            config_error(fmt::format("evals.{}", k), "is not a known key");
          }
        }
        c.evals.push_back(std::move(spec));
      }
    } else if (key == "kg") {
      c.kg = v.is_null() ? std::string{} : get_as<std::string>(v, key);
    } else if (key == "synthetic") {
      if (!v.is_null()) require_object(v, key);
      c.synthetic = v;
    } else if (key == "encoder") {
      c.encoder = require_object(v, key);
    } else if (key == "scorer") {
      c.scorer = require_object(v, key);
    } else if (key == "translator") {
      c.translator = require_object(v, key);
    } else if (key == "strategies" || key == "strategy") {
      std::vector<std::string> names;
      if (v.is_string()) {
        names.push_back(v.get<std::string>());
      } else {
        names = get_as<std::vector<std::string>>(v, key);
      }
      c.strategies.clear();
      for (const auto& n : names) {
        const auto s = parse_strategy(n);
        if (!s) config_error(key, fmt::format("has unknown strategy \"{}\"", n));
        c.strategies.push_back(*s);
      }
    } else if (key == "k") {
      c.k = get_as<size_t>(v, key);
    } else if (key == "index_mode") {
      const auto m = parse_index_mode(get_as<std::string>(v, key));
      if (!m) config_error(key, "must be exact or approximate");
      c.index_mode = *m;
    } else if (key == "answer_strategy") {
      const auto s = parse_answer_strategy(get_as<std::string>(v, key));
      if (!s) config_error(key, "must be kg_first, mt_only or kg_only");
      c.answer_strategy = *s;
    } else if (key == "target_precision") {
      c.target_precision = get_as<double>(v, key);
    } else if (key == "seeds") {
      c.seeds = get_as<std::vector<uint64_t>>(v, key);
    } else if (key == "distractor_counts") {
      c.distractor_counts = get_as<std::vector<size_t>>(v, key);
    } else if (key == "keep_fractions") {
      c.keep_fractions = get_as<std::vector<double>>(v, key);
    } else if (key == "dropout_mode") {
      const auto m = get_as<std::string>(v, key);
      if (m == "nested") {
        c.dropout_mode = DropoutMode::nested;
      } else if (m == "independent") {
        c.dropout_mode = DropoutMode::independent;
      } else {
        config_error(key, "must be nested or independent");
      }
    } else if (key == "held_out_calibration") {
      c.held_out_calibration = get_as<bool>(v, key);
    } else if (key == "groups") {
      c.groups = get_as<std::string>(v, key);
    } else if (key == "dedup") {
      c.dedup = get_as<bool>(v, key);
    } else if (key == "out_dir") {
      c.out_dir = get_as<std::string>(v, key);
    } else if (key == "jobs") {
      c.jobs = get_as<unsigned>(v, key);
    } else if (key == "fingerprint") {
      // written into config.resolved.json; accepted so that file can be re-run
    } else {
      config_error(key, "is not a known key");
    }
  }
  return c;
}

namespace {

std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
  if (p.empty() || std::filesystem::path(p).is_absolute()) return p;
  return (base / p).lexically_normal().string();
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open config {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, fmt::format("{}: {}", path.string(), e.what()));
  }
  ExperimentConfig c = config_from_json(doc);
  // Relative paths inside a config file are relative to that file.
  const auto base = path.parent_path();
  for (auto& d : c.databases) d.path = resolve_path(base, d.path);
  if (c.distractor_pool) c.distractor_pool->path = resolve_path(base, c.distractor_pool->path);
  for (auto& e : c.evals) e.path = resolve_path(base, e.path);
  c.kg = resolve_path(base, c.kg);
  if (c.groups != "mkqa" && c.groups != "xquad") c.groups = resolve_path(base, c.groups);
  for (const char* key : {"database", "queries", "pool"}) {
    if (c.encoder.is_object() && c.encoder.contains(key) && c.encoder[key].is_string()) {
      c.encoder[key] = resolve_path(base, c.encoder[key].get<std::string>());
    }
  }
  if (!c.out_dir.empty()) c.out_dir = resolve_path(base, c.out_dir);
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json doc;
  doc["databases"] = json::array();
  for (const auto& d : c.databases) doc["databases"].push_back(dataset_to_json(d));
  doc["distractor_pool"] = c.distractor_pool ? dataset_to_json(*c.distractor_pool) : json(nullptr);
  doc["evals"] = json::array();
  for (const auto& e : c.evals) {
    doc["evals"].push_back({{"path", e.path}, {"format", e.format}, {"languages", e.languages}});
  }
  doc["kg"] = c.kg;
  doc["synthetic"] = c.synthetic;
  doc["encoder"] = c.encoder;
  doc["scorer"] = c.scorer;
  doc["translator"] = c.translator;
  doc["strategies"] = json::array();
  for (auto s : c.strategies) doc["strategies"].push_back(std::string(to_string(s)));
  doc["k"] = c.k;
  doc["index_mode"] = std::string(to_string(c.index_mode));
  doc["answer_strategy"] = std::string(to_string(c.answer_strategy));
  doc["target_precision"] = c.target_precision;
  doc["seeds"] = c.seeds;
  doc["distractor_counts"] = c.distractor_counts;
  doc["keep_fractions"] = c.keep_fractions;
  doc["dropout_mode"] = c.dropout_mode == DropoutMode::nested ? "nested" : "independent";
  doc["held_out_calibration"] = c.held_out_calibration;
  doc["groups"] = c.groups;
  doc["dedup"] = c.dedup;
  return doc;
}

std::string config_fingerprint(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  const auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  return fmt::format("{:08x}", crc);
}

void validate_config(const ExperimentConfig& c) {
  if (c.synthetic.is_null()) {
    if (c.databases.empty()) config_error("databases", "must list at least one database");
    if (c.evals.empty()) config_error("evals", "must list at least one eval set");
    for (const auto& d : c.databases) {
      if (!parse_database_format(d.format)) config_error("databases.format", fmt::format("\"{}\" is unknown", d.format));
    }
    if (c.distractor_pool && !parse_database_format(c.distractor_pool->format)) {
      config_error("distractor_pool.format", fmt::format("\"{}\" is unknown", c.distractor_pool->format));
    }
    for (const auto& e : c.evals) {
      if (!parse_eval_format(e.format)) config_error("evals.format", fmt::format("\"{}\" is unknown", e.format));
      if (e.languages.empty()) config_error("evals.languages", "must not be empty");
      if (e.path.empty()) config_error("evals.path", "must not be empty");
    }
  }
  if (c.strategies.empty()) config_error("strategies", "must not be empty");
  if (c.k == 0) config_error("k", "must be at least 1");
  if (!(c.target_precision > 0.0 && c.target_precision <= 1.0)) config_error("target_precision", "must be in (0, 1]");
  if (c.seeds.empty()) config_error("seeds", "must not be empty");
  if (c.keep_fractions.empty()) config_error("keep_fractions", "must not be empty");
  for (double f : c.keep_fractions) {
    if (!(f >= 0.0 && f <= 1.0)) config_error("keep_fractions", fmt::format("value {} outside [0, 1]", f));
  }
  if (c.distractor_counts.empty()) config_error("distractor_counts", "must not be empty");

  const std::string enc = c.encoder.value("type", std::string{});
  if (enc != "hash" && enc != "store" && enc != "pipe") config_error("encoder.type", "must be hash, store or pipe");
  const std::string sc = c.scorer.value("type", std::string{});
  if (sc != "oracle" && sc != "cosine" && sc != "pipe" && sc != "none") {
    config_error("scorer.type", "must be oracle, cosine, pipe or none");
  }
  const std::string tr = c.translator.value("type", std::string{});
  if (tr != "identity" && tr != "pipe" && tr != "none") config_error("translator.type", "must be identity, pipe or none");

  const auto uses = [&](Strategy s) { return std::find(c.strategies.begin(), c.strategies.end(), s) != c.strategies.end(); };
  if (uses(Strategy::rm_mips) && sc == "none") config_error("scorer", "is required by rm_mips");
  if (uses(Strategy::nmt_mips) && tr == "none") config_error("translator", "is required by nmt_mips");
  if (c.answer_strategy != AnswerStrategy::kg_only && tr == "none") {
    config_error("translator", fmt::format("is required by answer strategy {}", to_string(c.answer_strategy)));
  }
  if (enc == "store" && uses(Strategy::nmt_mips)) {
    config_error("encoder", "of type store cannot embed translated text (nmt_mips)");
  }
  if (enc == "store" && sc == "cosine") config_error("scorer", "cosine needs a text encoder, not a store");
}

// --- grids -------------------------------------------------------------------

namespace {

double parse_real(std::string_view s, std::string_view what) {
  const std::string str(s);
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (str.empty() || end != str.c_str() + str.size() || !std::isfinite(v)) {
    throw Error(Errc::invalid_argument, fmt::format("{}: \"{}\" is not a number", what, s));
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  while (true) {
    const size_t next = s.find(sep, pos);
    out.push_back(s.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

// Removes accumulated binary drift (0.1 * 3 -> 0.3).
double tidy(double x) { return std::round(x * 1e12) / 1e12; }

}  // namespace

std::vector<double> parse_real_grid(std::string_view text) {
  std::vector<double> out;
  if (text.find(':') != std::string_view::npos) {
    const auto parts = split(text, ':');
    if (parts.size() != 3) throw Error(Errc::invalid_argument, fmt::format("grid \"{}\": expected start:stop:step", text));
    const double start = parse_real(parts[0], "grid"), stop = parse_real(parts[1], "grid"),
                 step = parse_real(parts[2], "grid");
    if (step <= 0 || stop < start) throw Error(Errc::invalid_argument, fmt::format("grid \"{}\": empty range", text));
    const auto n = static_cast<size_t>(std::floor((stop - start) / step + 1e-9)) + 1;
    for (size_t i = 0; i < n; ++i) out.push_back(tidy(start + double(i) * step));
    return out;
  }
  for (auto p : split(text, ',')) out.push_back(parse_real(p, "grid"));
  return out;
}

std::vector<size_t> parse_count_grid(std::string_view text) {
  std::vector<size_t> out;
  for (double v : parse_real_grid(text)) {
    if (v < 0 || v != std::floor(v)) throw Error(Errc::invalid_argument, fmt::format("grid value {} is not a count", v));
    out.push_back(static_cast<size_t>(v));
  }
  return out;
}

std::vector<uint64_t> parse_seeds(std::string_view text) {
  std::vector<uint64_t> out;
  for (auto p : split(text, ',')) {
    uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(p.data(), p.data() + p.size(), v);
    if (p.empty() || ec != std::errc{} || ptr != p.data() + p.size()) {
      throw Error(Errc::invalid_argument, fmt::format("seed \"{}\" is not an unsigned integer", p));
    }
    out.push_back(v);
  }
  return out;
}

// --- data and components ------------------------------------------------------

namespace {

synthetic::Options synthetic_options(const json& spec) {
  synthetic::Options o;
  for (const auto& [k, v] : spec.items()) {
    const std::string key = "synthetic." + k;
    if (k == "queries") o.queries = get_as<size_t>(v, key);
    else if (k == "languages") o.languages = get_as<std::vector<std::string>>(v, key);
    else if (k == "distractors") o.distractors = get_as<size_t>(v, key);
    else if (k == "seed") o.seed = get_as<uint64_t>(v, key);
    else if (k == "vocabulary") o.vocabulary = get_as<size_t>(v, key);
    else if (k == "min_words") o.min_words = get_as<size_t>(v, key);
    else if (k == "max_words") o.max_words = get_as<size_t>(v, key);
    else if (k == "rewrite_rate") o.rewrite_rate = get_as<double>(v, key);
    else if (k == "drop_rate") o.drop_rate = get_as<double>(v, key);
    else if (k == "swap_rate") o.swap_rate = get_as<double>(v, key);
    else if (k == "label_coverage") o.label_coverage = get_as<double>(v, key);
    else if (k == "distractor_edits") o.distractor_edits = get_as<size_t>(v, key);
    else config_error(key, "is not a known key");
  }
  return o;
}

Database ingest_spec(const DatasetSpec& d, bool dedup) {
  return ingest_database(d.path, *parse_database_format(d.format), IngestOptions{dedup, "en"});
}

}  // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
  validate_config(config);
  ExperimentData data;
  if (!config.synthetic.is_null()) {
    auto corpus = synthetic::make_corpus(synthetic_options(config.synthetic));
    data.db = std::move(corpus.db);
    data.evals = std::move(corpus.evals);
    data.pool = std::move(corpus.distractor_pool);
    data.kg = std::move(corpus.kg);
    return data;
  }
  std::vector<Database> parts;
  for (const auto& d : config.databases) parts.push_back(ingest_spec(d, config.dedup));
  data.db = parts.size() == 1 ? std::move(parts.front()) : merge_databases(parts, config.dedup);
  std::set<std::string> langs;
  for (const auto& e : config.evals) {
    for (const auto& lang : e.languages) {
      if (!langs.insert(lang).second) config_error("evals.languages", fmt::format("lists \"{}\" twice", lang));
      data.evals.push_back(ingest_eval_set(e.path, *parse_eval_format(e.format), lang, data.db));
    }
  }
  if (config.distractor_pool) data.pool = ingest_spec(*config.distractor_pool, config.dedup);
  if (!config.kg.empty()) data.kg = load_knowledge_graph(config.kg);
  return data;
}

namespace {

std::shared_ptr<PipeProcess> start_adapter(std::string name, const json& spec) {
  const std::string command = spec.value("command", std::string{});
  if (command.empty()) config_error(name + ".command", "is required for pipe adapters");
  return std::make_shared<PipeProcess>(std::move(name), command);
}

std::string lang_path(std::string pattern, std::string_view lang) {
  const auto pos = pattern.find("{lang}");
  if (pos != std::string::npos) pattern.replace(pos, 6, lang);
  return pattern;
}

void append_rows(VectorStore& into, const VectorStore& from) {
  for (size_t i = 0; i < from.size(); ++i) {
    if (!into.find(from.ids()[i])) into.add(from.ids()[i], from.row(i));
  }
}

}  // namespace

Components Components::create(const ExperimentConfig& config, const ExperimentData& data, unsigned jobs) {
  validate_config(config);
  Components c;
  const std::string enc = config.encoder.value("type", std::string{});
  std::vector<std::string> langs;
  for (const auto& e : data.evals) langs.push_back(e.lang);

  if (enc == "hash") {
    c.text_encoder_ = std::make_shared<HashNgramEncoder>(config.encoder.value("dim", size_t{256}));
  } else if (enc == "pipe") {
    const auto dim = config.encoder.value("dim", size_t{0});
    if (dim == 0) config_error("encoder.dim", "is required for pipe encoders");
    c.text_encoder_ = std::make_shared<PipeEncoder>(start_adapter("encoder", config.encoder),
                                                    config.encoder.value("name", std::string("pipe-encoder")), dim);
  }

  if (c.text_encoder_) {
    std::vector<QueryRecord> records;
    for (const auto& [_, e] : data.db.entries()) records.push_back(e.query);
    for (const auto& [id, e] : data.pool.entries()) {
      if (!data.db.contains(id)) records.push_back(e.query);
    }
    c.hrl_vectors_ = std::make_shared<VectorStore>(embed_queries(records, *c.text_encoder_, jobs));
  } else {
    const std::string db_path = config.encoder.value("database", std::string{});
    const std::string queries = config.encoder.value("queries", std::string{});
    if (db_path.empty()) config_error("encoder.database", "is required for store encoders");
    if (queries.empty()) config_error("encoder.queries", "is required for store encoders");
    std::optional<std::string> name;
    if (config.encoder.contains("name")) name = config.encoder["name"].get<std::string>();
    auto store = load_vector_store(db_path, name);
    const std::string pool_path = config.encoder.value("pool", std::string{});
    if (!pool_path.empty()) append_rows(store, load_vector_store(pool_path, store.meta().encoder));
    for (const auto& lang : langs) {
      auto qs = std::make_shared<VectorStore>(load_vector_store(lang_path(queries, lang), store.meta().encoder));
      c.query_encoders_[lang] = std::make_shared<StoreEncoder>(*qs);
      c.query_stores_[lang] = std::move(qs);
    }
    c.hrl_vectors_ = std::make_shared<VectorStore>(std::move(store));
  }

  const std::string sc = config.scorer.value("type", std::string{});
  if (sc == "oracle") {
    c.shared_scorer_ = std::make_shared<OracleScorer>(OracleScorer::from_gold(data.db, data.evals));
  } else if (sc == "cosine") {
    for (const auto& lang : langs) c.lang_scorers_[lang] = std::make_shared<EncoderScorer>(*c.text_encoder_, lang);
  } else if (sc == "pipe") {
    c.shared_scorer_ = std::make_shared<PipeScorer>(start_adapter("scorer", config.scorer));
  }

  const std::string tr = config.translator.value("type", std::string{});
  if (tr == "identity") {
    c.translator_ = std::make_shared<IdentityTranslator>();
  } else if (tr == "pipe") {
    c.translator_ = std::make_shared<PipeTranslator>(start_adapter("translator", config.translator));
  }
  return c;
}

const Encoder& Components::query_encoder(std::string_view lang) const {
  if (text_encoder_) return *text_encoder_;
  const auto it = query_encoders_.find(lang);
  if (it == query_encoders_.end()) throw Error(Errc::not_found, fmt::format("no query vectors for language {}", lang));
  return *it->second;
}

const Scorer* Components::scorer(std::string_view lang) const {
  if (shared_scorer_) return shared_scorer_.get();
  const auto it = lang_scorers_.find(lang);
  return it == lang_scorers_.end() ? nullptr : it->second.get();
}

// --- pipeline ---------------------------------------------------------------

std::unique_ptr<Index> build_db_index(const ExperimentConfig& config, const Components& components,
                                      const Database& db) {
  if (db.empty()) return nullptr;
  VectorStore rows = restrict_to(components.hrl_vectors(), db);
  if (rows.size() != db.size()) {
    for (const auto& [id, _] : db.entries()) {
      if (!rows.find(id)) {
        throw Error(Errc::not_found, fmt::format("{} database records have no vector (first: \"{}\")",
                                                 db.size() - rows.size(), id));
      }
    }
  }
  return std::make_unique<Index>(build_index(rows, config.index_mode));
}

std::vector<ExampleOutcome> run_pipeline(const ExperimentConfig& config, const Components& components,
                                         const Database& db, const Index* index, const EvalSet& eval,
                                         const KnowledgeGraph& kg, std::optional<Strategy> strategy,
                                         unsigned jobs) {
  std::vector<ExampleOutcome> outcomes(eval.examples.size());
  PivotContext ctx;
  ctx.index = index;
  ctx.db = &db;
  ctx.encoder = strategy ? &components.query_encoder(eval.lang) : nullptr;
  ctx.scorer = components.scorer(eval.lang);
  ctx.translator = components.translator();
  MatchOptions options;
  options.strategy = strategy.value_or(Strategy::mips);
  options.k = config.k;

  parallel_for(eval.examples.size(), jobs, [&](size_t i) {
    const EvalExample& ex = eval.examples[i];
    ExampleOutcome& o = outcomes[i];
    o.id = ex.lrl_query.id;
    o.answerable = !ex.gold_answers.empty();
    try {
      if (!strategy) {
        if (ex.gold_hrl_id && db.contains(*ex.gold_hrl_id)) {
          o.matched_id = ex.gold_hrl_id;
          o.confidence = 1.0;
        }
      } else if (index != nullptr) {
        const MatchResult r = match_query(ex.lrl_query, ctx, options);
        o.matched_id = r.hrl_id;
        o.confidence = r.confidence;
      }
      o.matched_gold = o.matched_id && ex.gold_hrl_id && *o.matched_id == *ex.gold_hrl_id;
      if (o.matched_id) {
        const auto& answers = lookup_answer(db, *o.matched_id).answers;
        auto t = translate_answer(answers.front(), eval.lang, config.answer_strategy, kg, components.translator());
        if (t.warning) spdlog::warn("{} {}: {}", eval.lang, o.id, *t.warning);
        o.prediction = std::move(t.text);
        o.method = t.method;
      }
      o.score = answer_score(o.prediction, ex.gold_answers, eval.lang);
    } catch (const Error& e) {
      if (e.code() != Errc::adapter_error && e.code() != Errc::adapter_timeout) throw;
      spdlog::warn("{} {}: {}; scored 0", eval.lang, o.id, e.what());
      o.error = e.what();
      o.prediction.clear();
      o.method.reset();
      o.score = AnswerScore{};
    }
  });
  return outcomes;
}

namespace {

unsigned resolve_jobs(const ExperimentConfig& c) { return c.jobs == 0 ? default_jobs() : c.jobs; }

double match_accuracy_of(const std::vector<ExampleOutcome>& outcomes, const EvalSet& eval) {
  size_t with_gold = 0, hits = 0;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (!eval.examples[i].gold_hrl_id) continue;
    ++with_gold;
    hits += outcomes[i].matched_gold ? 1 : 0;
  }
  return with_gold == 0 ? 0.0 : double(hits) / double(with_gold);
}

MetricMap summarize(const std::vector<ExampleOutcome>& outcomes, const EvalSet& eval, std::string_view prefix,
                    bool with_matching) {
  double f1 = 0.0, em = 0.0, answered = 0.0;
  for (const auto& o : outcomes) {
    f1 += o.score.f1;
    em += o.score.em;
    answered += o.matched_id ? 1.0 : 0.0;
  }
  const double n = outcomes.empty() ? 1.0 : double(outcomes.size());
  MetricMap m;
  m[fmt::format("{}/end_to_end_f1", prefix)] = f1 / n;
  m[fmt::format("{}/end_to_end_em", prefix)] = em / n;
  if (with_matching) {
    m[fmt::format("{}/match_accuracy", prefix)] = match_accuracy_of(outcomes, eval);
    m[fmt::format("{}/answered_fraction", prefix)] = answered / n;
  }
  return m;
}

}  // namespace

EndToEndResult run_end_to_end(const ExperimentConfig& config, const ExperimentData& data,
                              const Components& components) {
  validate_config(config);
  const unsigned jobs = resolve_jobs(config);
  const auto index = build_db_index(config, components, data.db);
  EndToEndResult result;
  std::map<std::string, MetricMap, std::less<>> per_language;
  for (const auto& eval : data.evals) {
    auto& metrics = per_language[eval.lang];
    for (const Strategy s : config.strategies) {
      auto outcomes = run_pipeline(config, components, data.db, index.get(), eval, data.kg, s, jobs);
      metrics.merge(summarize(outcomes, eval, to_string(s), true));
      result.outcomes[std::string(to_string(s))][eval.lang] = std::move(outcomes);
    }
    auto perfect = run_pipeline(config, components, data.db, index.get(), eval, data.kg, std::nullopt, jobs);
    metrics.merge(summarize(perfect, eval, "perfect", false));
    result.outcomes["perfect"][eval.lang] = std::move(perfect);
  }
  result.report = aggregate_groups(per_language, LanguageGroups::named(config.groups));
  result.report.fingerprint = config_fingerprint(config);
  return result;
}

EndToEndResult run_end_to_end(const ExperimentConfig& config) {
  const auto data = load_experiment_data(config);
  const auto components = Components::create(config, data, resolve_jobs(config));
  return run_end_to_end(config, data, components);
}

// --- sweeps -----------------------------------------------------------------

double median_of(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : (values[n / 2 - 1] + values[n / 2]) / 2.0;
}

namespace {

void finish_curve(SweepCurve& c) {
  c.median.assign(c.x.size(), 0.0);
  c.mean.assign(c.x.size(), 0.0);
  for (size_t xi = 0; xi < c.x.size(); ++xi) {
    std::vector<double> column;
    double sum = 0.0;
    for (const auto& series : c.y) {
      column.push_back(series[xi]);
      sum += series[xi];
    }
    c.median[xi] = median_of(column);
    c.mean[xi] = column.empty() ? 0.0 : sum / double(column.size());
  }
}

SweepCurve empty_curve(std::string metric, std::string language, std::string strategy, std::vector<double> x,
                       const std::vector<uint64_t>& seeds) {
  SweepCurve c;
  c.metric = std::move(metric);
  c.language = std::move(language);
  c.strategy = std::move(strategy);
  c.seeds = seeds;
  c.y.assign(seeds.size(), std::vector<double>(x.size(), 0.0));
  c.x = std::move(x);
  return c;
}

}  // namespace

std::vector<SweepCurve> run_distractor_sweep(const ExperimentConfig& config, const ExperimentData& data,
                                             const Components& components) {
  validate_config(config);
  const auto& grid = config.distractor_counts;
  const size_t nx = grid.size(), ns = config.seeds.size(), nl = data.evals.size(), nst = config.strategies.size();
  const size_t largest = *std::max_element(grid.begin(), grid.end());
  if (largest > 0 && data.pool.size() < largest) {
    throw Error(Errc::insufficient_data,
                fmt::format("distractor pool has {} records, grid needs {}", data.pool.size(), largest));
  }

  // acc[((x * ns + s) * nl + l) * nst + st]
  std::vector<double> acc(nx * ns * nl * nst, 0.0);
  parallel_for(nx * ns, resolve_jobs(config), [&](size_t job) {
    const size_t xi = job / ns, si = job % ns;
    const Database db = grid[xi] == 0 ? data.db : inject_distractors(data.db, data.pool, grid[xi], config.seeds[si]);
    const auto index = build_db_index(config, components, db);
    for (size_t l = 0; l < nl; ++l) {
      for (size_t st = 0; st < nst; ++st) {
        const auto outcomes = run_pipeline(config, components, db, index.get(), data.evals[l], data.kg,
                                           config.strategies[st], 1);
        acc[((xi * ns + si) * nl + l) * nst + st] = match_accuracy_of(outcomes, data.evals[l]);
      }
    }
  });

  std::vector<double> xs(grid.begin(), grid.end());
  const auto groups = LanguageGroups::named(config.groups);
  std::vector<SweepCurve> curves;
  for (size_t st = 0; st < nst; ++st) {
    const std::string strategy(to_string(config.strategies[st]));
    std::map<std::string, std::vector<size_t>> members;
    for (size_t l = 0; l < nl; ++l) {
      auto c = empty_curve("match_accuracy", data.evals[l].lang, strategy, xs, config.seeds);
      for (size_t si = 0; si < ns; ++si) {
        for (size_t xi = 0; xi < nx; ++xi) c.y[si][xi] = acc[((xi * ns + si) * nl + l) * nst + st];
      }
      finish_curve(c);
      curves.push_back(std::move(c));
      const auto g = groups.group_of(data.evals[l].lang);
      if (!g) throw Error(Errc::unknown_language, fmt::format("language \"{}\" has no resource group", data.evals[l].lang));
      members[std::string(to_string(*g))].push_back(l);
      members["all"].push_back(l);
    }
    for (const auto group : {"high", "medium", "low", "all"}) {
      const auto it = members.find(group);
      if (it == members.end()) continue;
      auto c = empty_curve("match_accuracy", fmt::format("group:{}", group), strategy, xs, config.seeds);
      for (size_t si = 0; si < ns; ++si) {
        for (size_t xi = 0; xi < nx; ++xi) {
          double sum = 0.0;
          for (size_t l : it->second) sum += acc[((xi * ns + si) * nl + l) * nst + st];
          c.y[si][xi] = sum / double(it->second.size());
        }
      }
      finish_curve(c);
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

std::vector<SweepCurve> run_distractor_sweep(const ExperimentConfig& config) {
  const auto data = load_experiment_data(config);
  const auto components = Components::create(config, data, resolve_jobs(config));
  return run_distractor_sweep(config, data, components);
}

namespace {

struct RecallPoint {
  double recall = 0.0;
  bool infeasible = false;
};

RecallPoint calibrated_recall(const std::vector<ExampleOutcome>& outcomes, double target, bool held_out,
                              uint64_t seed) {
  std::vector<size_t> calibrate(outcomes.size()), measure;
  for (size_t i = 0; i < outcomes.size(); ++i) calibrate[i] = i;
  if (held_out) {
    SeededRng rng(mix_seed(seed, 0xCA1B));
    rng.shuffle(std::span<size_t>(calibrate));
    measure.assign(calibrate.begin() + static_cast<ptrdiff_t>(calibrate.size() / 2), calibrate.end());
    calibrate.resize(calibrate.size() / 2);
    std::sort(calibrate.begin(), calibrate.end());
    std::sort(measure.begin(), measure.end());
  } else {
    measure = calibrate;
  }

  std::vector<double> scores;
  std::vector<int> correct;
  for (size_t i : calibrate) {
    if (!outcomes[i].matched_id) continue;
    scores.push_back(outcomes[i].confidence);
    correct.push_back(outcomes[i].score.em);
  }
  size_t answerable = 0;
  std::vector<double> m_scores, m_f1;
  for (size_t i : measure) {
    answerable += outcomes[i].answerable ? 1 : 0;
    if (!outcomes[i].matched_id) continue;
    m_scores.push_back(outcomes[i].confidence);
    m_f1.push_back(outcomes[i].score.f1);
  }
  if (scores.empty() || answerable == 0) return {0.0, true};
  const auto point = calibrate_threshold(scores, correct, target);
  if (!point) return {0.0, true};
  return {recall_at_threshold(m_scores, m_f1, point->threshold, answerable), false};
}

}  // namespace

std::vector<SweepCurve> run_alignment_sweep(const ExperimentConfig& config, const ExperimentData& data,
                                            const Components& components) {
  validate_config(config);
  const auto& grid = config.keep_fractions;
  const size_t nx = grid.size(), ns = config.seeds.size(), nl = data.evals.size(), nst = config.strategies.size();

  std::vector<RecallPoint> points(nx * ns * nl * nst);
  parallel_for(nx * ns * nl, resolve_jobs(config), [&](size_t job) {
    const size_t xi = job / (ns * nl), si = (job / nl) % ns, l = job % nl;
    const auto [db, eval] = dropout_parallel(data.db, data.evals[l], grid[xi], config.seeds[si], config.dropout_mode);
    const auto index = build_db_index(config, components, db);
    for (size_t st = 0; st < nst; ++st) {
      const auto outcomes = run_pipeline(config, components, db, index.get(), eval, data.kg, config.strategies[st], 1);
      points[((xi * ns + si) * nl + l) * nst + st] =
          calibrated_recall(outcomes, config.target_precision, config.held_out_calibration, config.seeds[si]);
    }
  });

  std::vector<SweepCurve> curves;
  for (size_t st = 0; st < nst; ++st) {
    for (size_t l = 0; l < nl; ++l) {
      auto c = empty_curve("recall", data.evals[l].lang, std::string(to_string(config.strategies[st])), grid,
                           config.seeds);
      c.infeasible.assign(ns, std::vector<bool>(nx, false));
      for (size_t si = 0; si < ns; ++si) {
        for (size_t xi = 0; xi < nx; ++xi) {
          const auto& p = points[((xi * ns + si) * nl + l) * nst + st];
          c.y[si][xi] = p.recall;
          c.infeasible[si][xi] = p.infeasible;
          if (p.infeasible) {
            spdlog::info("{} {} keep={} seed={}: no threshold reaches precision {}; recall recorded as 0",
                         c.language, c.strategy, grid[xi], config.seeds[si], config.target_precision);
          }
        }
      }
      finish_curve(c);
      curves.push_back(std::move(c));
    }
  }
  return curves;
}

std::vector<SweepCurve> run_alignment_sweep(const ExperimentConfig& config) {
  const auto data = load_experiment_data(config);
  const auto components = Components::create(config, data, resolve_jobs(config));
  return run_alignment_sweep(config, data, components);
}

// --- outputs ----------------------------------------------------------------

std::string curves_csv(const std::vector<SweepCurve>& curves) {
  std::string out = "x,seed,y,metric,language,strategy\n";
  for (const auto& c : curves) {
    for (size_t xi = 0; xi < c.x.size(); ++xi) {
      for (size_t si = 0; si < c.seeds.size(); ++si) {
        out += fmt::format("{},{},{},{},{},{}\n", c.x[xi], c.seeds[si], c.y[si][xi], c.metric, c.language, c.strategy);
      }
    }
  }
  return out;
}

json plot_data(const std::vector<SweepCurve>& curves) {
  json out{{"curves", json::array()}};
  for (const auto& c : curves) {
    json item{{"metric", c.metric}, {"language", c.language}, {"strategy", c.strategy}, {"x", c.x},
              {"seeds", c.seeds},   {"y", c.y},               {"median", c.median},     {"mean", c.mean}};
    if (!c.infeasible.empty()) item["infeasible"] = c.infeasible;
    out["curves"].push_back(std::move(item));
  }
  return out;
}

std::string sweep_table(const std::vector<SweepCurve>& curves) {
  std::string out;
  for (const auto& c : curves) {
    out += fmt::format("{} {} {} (median / mean over {} seeds)\n", c.strategy, c.language, c.metric, c.seeds.size());
    for (size_t xi = 0; xi < c.x.size(); ++xi) {
      out += fmt::format("  {:>10}  {:>8.4f}  {:>8.4f}\n", c.x[xi], c.median[xi], c.mean[xi]);
    }
    out += '\n';
  }
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_error, fmt::format("cannot write {}", path.string()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error(Errc::io_error, fmt::format("write failed: {}", path.string()));
}

void write_resolved_config(const std::filesystem::path& dir, const ExperimentConfig& config) {
  json doc = config_to_json(config);
  doc["fingerprint"] = config_fingerprint(config);
  write_text(dir / "config.resolved.json", doc.dump(2) + "\n");
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io_error, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

}  // namespace

void write_end_to_end_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                              const EndToEndResult& result) {
  make_dir(dir);
  write_text(dir / "report.txt", report_table(result.report));
  write_text(dir / "report.csv", report_csv(result.report));
  std::string lines;
  for (const auto& [strategy, by_lang] : result.outcomes) {
    for (const auto& [lang, outcomes] : by_lang) {
      for (const auto& o : outcomes) {
        json row{{"strategy", strategy}, {"lang", lang}, {"id", o.id}, {"prediction", o.prediction},
                 {"matched_id", o.matched_id ? json(*o.matched_id) : json(nullptr)},
                 {"confidence", o.confidence}, {"em", o.score.em}, {"f1", o.score.f1}};
        row["method"] = o.method ? json(std::string(to_string(*o.method))) : json(nullptr);
        if (o.error) row["error"] = *o.error;
        lines += row.dump() + "\n";
      }
    }
  }
  write_text(dir / "predictions.jsonl", lines);
  write_resolved_config(dir, config);
}

void write_sweep_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const std::vector<SweepCurve>& curves) {
  make_dir(dir);
  write_text(dir / "report.txt", fmt::format("config {}\n\n{}", config_fingerprint(config), sweep_table(curves)));
  write_text(dir / "curves.csv", curves_csv(curves));
  write_text(dir / "plotdata.json", plot_data(curves).dump(2) + "\n");
  write_resolved_config(dir, config);
}

}  // namespace xlp
