#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace xlp {

// Languages whose answers are scored per character rather than per
// whitespace token.
const std::set<std::string, std::less<>>& default_space_free_languages();
bool is_space_free(std::string_view lang, const std::set<std::string, std::less<>>& space_free);

// MLQA-style answer normalization: NFKC, lowercase, punctuation removed,
// English articles dropped when lang is "en", then whitespace tokens (or
// single characters for space-free languages).
std::vector<std::string> normalize_tokens(std::string_view text, std::string_view lang);
std::vector<std::string> normalize_tokens(std::string_view text, std::string_view lang,
                                          const std::set<std::string, std::less<>>& space_free);

struct AnswerScore {
  int em = 0;
  double f1 = 0.0;

  bool operator==(const AnswerScore&) const = default;
};

// The prediction that means "No Answer": the empty (blank) string.
bool is_no_answer(std::string_view prediction);

// Max over golds. With no golds the example is unanswerable and only the
// No-Answer prediction earns credit.
AnswerScore answer_score(std::string_view prediction, std::span<const std::string> golds,
                         std::string_view lang);

// Multiset token F1 between two normalized token lists. Two empty lists
// score 1.
double token_f1(std::span<const std::string> prediction, std::span<const std::string> gold);

struct CalibrationPoint {
  double threshold = 0.0;
  size_t answered = 0;
  size_t correct = 0;

  double precision() const { return answered == 0 ? 0.0 : double(correct) / double(answered); }
  bool operator==(const CalibrationPoint&) const = default;
};

// Smallest observed score t with precision(score >= t) >= target. Absent
// when no threshold reaches the target.
std::optional<CalibrationPoint> calibrate_threshold(std::span<const double> scores,
                                                    std::span<const int> correct,
                                                    double target_precision);

// Sum of f1 over items scoring >= threshold, divided by answerable_count.
double recall_at_threshold(std::span<const double> scores, std::span<const double> f1s,
                           double threshold, size_t answerable_count);

enum class ResourceGroup { high, medium, low };
std::string_view to_string(ResourceGroup g);
std::optional<ResourceGroup> parse_resource_group(std::string_view name);

enum class GroupingDataset { mkqa, xquad, custom };

struct LanguageGroups {
  std::map<std::string, ResourceGroup, std::less<>> grouping;
  GroupingDataset dataset = GroupingDataset::custom;

  static LanguageGroups mkqa();
  static LanguageGroups xquad();
  // {"high": [...], "medium": [...], "low": [...]}; a language may appear once.
  static LanguageGroups from_json(const nlohmann::json& doc);
  static LanguageGroups load(const std::filesystem::path& path);
  // "mkqa", "xquad", or a JSON file path.
  static LanguageGroups named(std::string_view name_or_path);

  std::optional<ResourceGroup> group_of(std::string_view lang) const;
};

struct GroupStat {
  double mean = 0.0;
  double stddev = 0.0;  // population
  size_t languages = 0;

  bool operator==(const GroupStat&) const = default;
};

using MetricMap = std::map<std::string, double, std::less<>>;

struct EvalReport {
  std::map<std::string, MetricMap, std::less<>> per_language;
  // "high" | "medium" | "low" | "all" -> metric -> stat
  std::map<std::string, std::map<std::string, GroupStat, std::less<>>, std::less<>> per_group;
  std::map<std::string, std::string, std::less<>> language_group;
  std::string fingerprint;
};

// Throws Errc::unknown_language naming the first language with no group.
EvalReport aggregate_groups(const std::map<std::string, MetricMap, std::less<>>& per_language,
                            const LanguageGroups& groups);

// `language,group,metric,value`; group aggregates use language "ALL" and
// metric suffixes "/mean" and "/std".
std::string report_csv(const EvalReport& report);

// Group table per metric (rows = metric prefix, columns = groups, values in
// percent as mean ± std), followed by the per-language values.
std::string report_table(const EvalReport& report);

}  // namespace xlp
