#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xlp/answer_xlate.hpp"
#include "xlp/corpus_store.hpp"
#include "xlp/eval_metrics.hpp"
#include "xlp/mips_index.hpp"
#include "xlp/pivot.hpp"
#include "xlp/vector_store.hpp"

namespace xlp {

struct DatasetSpec {
  std::string path;
  std::string format;

  bool operator==(const DatasetSpec&) const = default;
};

struct EvalSpec {
  std::string path;  // may contain "{lang}" for xquad_json
  std::string format;
  std::vector<std::string> languages;

  bool operator==(const EvalSpec&) const = default;
};

// Adapter specs are small JSON objects with a "type" key:
//   encoder:    {"type":"hash","dim":N}
//               {"type":"store","database":PATH,"queries":PATH_WITH_{lang}[,"pool":PATH]}
//               {"type":"pipe","command":CMD,"name":NAME,"dim":N}
//   scorer:     {"type":"oracle"} | {"type":"cosine"} | {"type":"pipe","command":CMD} | {"type":"none"}
//   translator: {"type":"identity"} | {"type":"pipe","command":CMD} | {"type":"none"}
struct ExperimentConfig {
  std::vector<DatasetSpec> databases;
  std::optional<DatasetSpec> distractor_pool;
  std::vector<EvalSpec> evals;
  std::string kg;  // TSV path, optional
  // When non-null, data comes from synthetic::make_corpus with these options
  // (keys: queries, languages, distractors, seed, label_coverage, ...).
  nlohmann::json synthetic;

  nlohmann::json encoder{{"type", "hash"}, {"dim", 256}};
  nlohmann::json scorer{{"type", "cosine"}};
  nlohmann::json translator{{"type", "identity"}};

  std::vector<Strategy> strategies{Strategy::rm_mips};
  size_t k = kDefaultTopK;
  IndexMode index_mode = IndexMode::exact;
  AnswerStrategy answer_strategy = AnswerStrategy::kg_first;
  double target_precision = 0.8;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<size_t> distractor_counts{0};
  std::vector<double> keep_fractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  DropoutMode dropout_mode = DropoutMode::nested;
  bool held_out_calibration = false;
  std::string groups = "mkqa";  // "mkqa", "xquad" or a JSON file
  bool dedup = true;

  // Not part of the fingerprint.
  std::string out_dir;
  unsigned jobs = 0;  // 0 = machine parallelism
};

// Strict: unknown keys and ill-typed values are Errc::invalid_argument.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);
// CRC-32 (hex) of the canonical JSON of every result-affecting field.
std::string config_fingerprint(const ExperimentConfig& config);
void validate_config(const ExperimentConfig& config);

// "0.1:1.0:0.1" (inclusive) or "0.1,0.5,1".
std::vector<double> parse_real_grid(std::string_view text);
std::vector<size_t> parse_count_grid(std::string_view text);
std::vector<uint64_t> parse_seeds(std::string_view text);

struct ExperimentData {
  Database db;
  std::vector<EvalSet> evals;
  Database pool;
  KnowledgeGraph kg;
};

ExperimentData load_experiment_data(const ExperimentConfig& config);

// Encoders, scorers and translators built from the config's adapter specs,
// plus vectors for every database and pool record (computed once).
class Components {
 public:
  static Components create(const ExperimentConfig& config, const ExperimentData& data, unsigned jobs);

  const Encoder& query_encoder(std::string_view lang) const;
  const Scorer* scorer(std::string_view lang) const;
  const Translator* translator() const noexcept { return translator_.get(); }
  const VectorStore& hrl_vectors() const noexcept { return *hrl_vectors_; }
  bool has_text_encoder() const noexcept { return text_encoder_ != nullptr; }

 private:
  std::shared_ptr<const Encoder> text_encoder_;
  std::map<std::string, std::shared_ptr<VectorStore>, std::less<>> query_stores_;
  std::map<std::string, std::shared_ptr<const Encoder>, std::less<>> query_encoders_;
  std::shared_ptr<const Scorer> shared_scorer_;
  std::map<std::string, std::shared_ptr<const Scorer>, std::less<>> lang_scorers_;
  std::shared_ptr<const Translator> translator_;
  std::shared_ptr<VectorStore> hrl_vectors_;
};

struct ExampleOutcome {
  std::string id;
  std::optional<std::string> matched_id;
  double confidence = 0.0;
  std::string prediction;
  std::optional<TranslationMethod> method;
  AnswerScore score;
  bool answerable = false;
  bool matched_gold = false;
  std::optional<std::string> error;
};

// Runs one eval set against one database: match, look up, translate, score.
// Per-example adapter failures are logged and scored 0. An empty database
// answers nothing. `strategy` unset runs the perfect-matching ceiling.
std::vector<ExampleOutcome> run_pipeline(const ExperimentConfig& config, const Components& components,
                                         const Database& db, const Index* index, const EvalSet& eval,
                                         const KnowledgeGraph& kg, std::optional<Strategy> strategy,
                                         unsigned jobs = 1);

// Builds the index over the records of `db`; nullptr when db is empty.
std::unique_ptr<Index> build_db_index(const ExperimentConfig& config, const Components& components,
                                      const Database& db);

struct EndToEndResult {
  EvalReport report;
  // "<strategy>" or "perfect" -> lang -> outcomes
  std::map<std::string, std::map<std::string, std::vector<ExampleOutcome>>> outcomes;
};

EndToEndResult run_end_to_end(const ExperimentConfig& config, const ExperimentData& data,
                              const Components& components);
EndToEndResult run_end_to_end(const ExperimentConfig& config);

struct SweepCurve {
  std::string metric;
  std::string language;  // language code, or "group:<name>"
  std::string strategy;
  std::vector<double> x;
  std::vector<uint64_t> seeds;
  std::vector<std::vector<double>> y;          // [seed][x]
  std::vector<std::vector<bool>> infeasible;   // [seed][x], alignment sweep only
  std::vector<double> median;
  std::vector<double> mean;
};

std::vector<SweepCurve> run_distractor_sweep(const ExperimentConfig& config, const ExperimentData& data,
                                             const Components& components);
std::vector<SweepCurve> run_distractor_sweep(const ExperimentConfig& config);
std::vector<SweepCurve> run_alignment_sweep(const ExperimentConfig& config, const ExperimentData& data,
                                            const Components& components);
std::vector<SweepCurve> run_alignment_sweep(const ExperimentConfig& config);

double median_of(std::vector<double> values);

// x,seed,y,metric,language,strategy
std::string curves_csv(const std::vector<SweepCurve>& curves);
nlohmann::json plot_data(const std::vector<SweepCurve>& curves);
std::string sweep_table(const std::vector<SweepCurve>& curves);

// report.txt, report.csv, predictions.jsonl, config.resolved.json
void write_end_to_end_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                              const EndToEndResult& result);
// report.txt, curves.csv, plotdata.json, config.resolved.json
void write_sweep_outputs(const std::filesystem::path& dir, const ExperimentConfig& config,
                         const std::vector<SweepCurve>& curves);

}  // namespace xlp
