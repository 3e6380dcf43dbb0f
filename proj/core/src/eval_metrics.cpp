#include "xlp/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>
#include <unicode/uchar.h>

#include "xlp/error.hpp"
#include "xlp/unicode.hpp"

namespace xlp {

using nlohmann::json;

const std::set<std::string, std::less<>>& default_space_free_languages() {
  static const std::set<std::string, std::less<>> langs{"ja", "km", "th", "zh", "zh_cn", "zh_hk", "zh_tw"};
  return langs;
}

bool is_space_free(std::string_view lang, const std::set<std::string, std::less<>>& space_free) {
  if (space_free.contains(lang)) return true;
  // Any zh variant not listed explicitly ("zh-Hans", "zh_sg", ...).
  return &space_free == &default_space_free_languages() && lang.starts_with("zh");
}

namespace {

// Python's `\w` for str patterns: letters, numbers, underscore.
bool is_word_char(char32_t cp) {
  if (cp == U'_') return true;
  return (U_GET_GC_MASK(static_cast<UChar32>(cp)) & (U_GC_L_MASK | U_GC_N_MASK)) != 0;
}

// re.sub(r'\b(a|an|the)\b', ' ', text) over code points.
std::u32string remove_english_articles(const std::u32string& s) {
  static const std::u32string kArticles[] = {U"a", U"an", U"the"};
  std::u32string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    const bool left_boundary = i == 0 || !is_word_char(s[i - 1]);
    size_t hit = 0;
    if (left_boundary && is_word_char(s[i])) {
      for (const auto& art : kArticles) {
        if (s.compare(i, art.size(), art) != 0) continue;
        const size_t end = i + art.size();
        if (end == s.size() || !is_word_char(s[end])) {
          hit = art.size();
          break;
        }
      }
    }
    if (hit > 0) {
      out.push_back(U' ');
      i += hit;
    } else {
      out.push_back(s[i++]);
    }
  }
  return out;
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text, std::string_view lang,
                                          const std::set<std::string, std::less<>>& space_free) {
  const std::u32string lowered = unicode::decode(unicode::to_lower(unicode::nfkc(text)));
  std::u32string kept;
  kept.reserve(lowered.size());
  for (const char32_t cp : lowered) {
    if (!unicode::is_punct(cp)) kept.push_back(cp);
  }
  if (lang == "en") kept = remove_english_articles(kept);

  std::vector<std::string> tokens;
  if (is_space_free(lang, space_free)) {
    for (const char32_t cp : kept) {
      if (!unicode::is_space(cp)) tokens.push_back(unicode::encode(std::u32string_view(&cp, 1)));
    }
    return tokens;
  }
  std::u32string current;
  for (const char32_t cp : kept) {
    if (unicode::is_space(cp)) {
      if (!current.empty()) tokens.push_back(unicode::encode(current));
      current.clear();
    } else {
      current.push_back(cp);
    }
  }
  if (!current.empty()) tokens.push_back(unicode::encode(current));
  return tokens;
}

std::vector<std::string> normalize_tokens(std::string_view text, std::string_view lang) {
  return normalize_tokens(text, lang, default_space_free_languages());
}

bool is_no_answer(std::string_view prediction) { return unicode::is_blank(prediction); }

double token_f1(std::span<const std::string> prediction, std::span<const std::string> gold) {
  if (prediction.empty() && gold.empty()) return 1.0;
  if (prediction.empty() || gold.empty()) return 0.0;
  std::map<std::string_view, long> counts;
  for (const auto& t : gold) ++counts[t];
  size_t same = 0;
  for (const auto& t : prediction) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++same;
    }
  }
  if (same == 0) return 0.0;
  const double precision = 1.0 * double(same) / double(prediction.size());
  const double recall = 1.0 * double(same) / double(gold.size());
  return (2 * precision * recall) / (precision + recall);
}

AnswerScore answer_score(std::string_view prediction, std::span<const std::string> golds,
                         std::string_view lang) {
  if (golds.empty()) {
    return is_no_answer(prediction) ? AnswerScore{1, 1.0} : AnswerScore{0, 0.0};
  }
  const auto pred = normalize_tokens(prediction, lang);
  AnswerScore best;
  for (const auto& g : golds) {
    const auto gold = normalize_tokens(g, lang);
    if (pred == gold) best.em = 1;
    best.f1 = std::max(best.f1, token_f1(pred, gold));
  }
  return best;
}

std::optional<CalibrationPoint> calibrate_threshold(std::span<const double> scores,
                                                    std::span<const int> correct,
                                                    double target_precision) {
  if (scores.size() != correct.size()) {
    throw Error(Errc::invalid_argument,
                fmt::format("calibration: {} scores but {} labels", scores.size(), correct.size()));
  }
  if (scores.empty()) throw Error(Errc::empty_input, "calibration: no scores");
  if (!(target_precision > 0.0 && target_precision <= 1.0)) {
    throw Error(Errc::invalid_argument, fmt::format("target precision {} outside (0, 1]", target_precision));
  }
  std::vector<size_t> order(scores.size());
  for (size_t i = 0; i < order.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw Error(Errc::invalid_argument, fmt::format("calibration: score {} is not finite", i));
    }
    if (correct[i] != 0 && correct[i] != 1) {
      throw Error(Errc::invalid_argument, fmt::format("calibration: label {} is not 0 or 1", i));
    }
    order[i] = i;
  }
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  // Walk thresholds from high to low; each distinct value admits its whole
  // tie group. The last feasible one answers the most.
  std::optional<CalibrationPoint> best;
  size_t answered = 0;
  size_t right = 0;
  for (size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      ++answered;
      right += static_cast<size_t>(correct[order[i]]);
      ++i;
    }
    if (double(right) / double(answered) >= target_precision) best = CalibrationPoint{t, answered, right};
  }
  return best;
}

double recall_at_threshold(std::span<const double> scores, std::span<const double> f1s,
                           double threshold, size_t answerable_count) {
  if (scores.size() != f1s.size()) {
    throw Error(Errc::invalid_argument, fmt::format("recall: {} scores but {} f1 values", scores.size(), f1s.size()));
  }
  if (answerable_count == 0) throw Error(Errc::invalid_argument, "recall: answerable count is zero");
  double sum = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (scores[i] >= threshold) sum += f1s[i];
  }
  return sum / double(answerable_count);
}

std::string_view to_string(ResourceGroup g) {
  switch (g) {
    case ResourceGroup::high: return "high";
    case ResourceGroup::medium: return "medium";
    case ResourceGroup::low: return "low";
  }
  return "unknown";
}

std::optional<ResourceGroup> parse_resource_group(std::string_view name) {
  if (name == "high") return ResourceGroup::high;
  if (name == "medium") return ResourceGroup::medium;
  if (name == "low") return ResourceGroup::low;
  return std::nullopt;
}

namespace {

LanguageGroups make_groups(GroupingDataset dataset, std::initializer_list<std::string_view> high,
                           std::initializer_list<std::string_view> medium,
                           std::initializer_list<std::string_view> low) {
  LanguageGroups g;
  g.dataset = dataset;
  for (auto l : high) g.grouping.emplace(l, ResourceGroup::high);
  for (auto l : medium) g.grouping.emplace(l, ResourceGroup::medium);
  for (auto l : low) g.grouping.emplace(l, ResourceGroup::low);
  return g;
}

}  // namespace

LanguageGroups LanguageGroups::mkqa() {
  return make_groups(GroupingDataset::mkqa, {"de", "es", "fr", "it", "ja", "pl", "pt", "ru", "zh_cn"},
                     {"ar", "da", "fi", "he", "hu", "ko", "nl", "no", "sv", "tr", "vi"},
                     {"km", "ms", "th", "zh_hk", "zh_tw"});
}

LanguageGroups LanguageGroups::xquad() {
  return make_groups(GroupingDataset::xquad, {"es", "de", "ru", "zh"}, {"ar", "tr", "vi"}, {"el", "hi", "th"});
}

LanguageGroups LanguageGroups::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(Errc::parse_error, "language groups: expected an object");
  LanguageGroups g;
  g.dataset = GroupingDataset::custom;
  for (const auto& [name, langs] : doc.items()) {
    const auto group = parse_resource_group(name);
    if (!group) throw Error(Errc::parse_error, fmt::format("language groups: unknown group \"{}\"", name));
    if (!langs.is_array()) throw Error(Errc::parse_error, fmt::format("language groups: \"{}\" is not a list", name));
    for (const auto& l : langs) {
      if (!l.is_string()) throw Error(Errc::parse_error, fmt::format("language groups: non-string in \"{}\"", name));
      if (!g.grouping.emplace(l.get<std::string>(), *group).second) {
        throw Error(Errc::parse_error, fmt::format("language groups: \"{}\" listed twice", l.get<std::string>()));
      }
    }
  }
  return g;
}

LanguageGroups LanguageGroups::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_error, fmt::format("cannot open {}", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse_error, fmt::format("{}: {}", path.string(), e.what()));
  }
  return from_json(doc);
}

LanguageGroups LanguageGroups::named(std::string_view name_or_path) {
  if (name_or_path == "mkqa") return mkqa();
  if (name_or_path == "xquad") return xquad();
  return load(std::filesystem::path(name_or_path));
}

std::optional<ResourceGroup> LanguageGroups::group_of(std::string_view lang) const {
  const auto it = grouping.find(lang);
  if (it == grouping.end()) return std::nullopt;
  return it->second;
}

namespace {

GroupStat stat_of(const std::vector<double>& values) {
  GroupStat s;
  s.languages = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / double(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - s.mean) * (v - s.mean);
  s.stddev = std::sqrt(sq / double(values.size()));
  return s;
}

}  // namespace

EvalReport aggregate_groups(const std::map<std::string, MetricMap, std::less<>>& per_language,
                            const LanguageGroups& groups) {
  EvalReport report;
  report.per_language = per_language;
  std::map<std::string, std::map<std::string, std::vector<double>, std::less<>>, std::less<>> values;
  for (const auto& [lang, metrics] : per_language) {
    const auto group = groups.group_of(lang);
    if (!group) throw Error(Errc::unknown_language, fmt::format("language \"{}\" has no resource group", lang));
    const std::string name(to_string(*group));
    report.language_group[lang] = name;
    for (const auto& [metric, value] : metrics) {
      values[name][metric].push_back(value);
      values["all"][metric].push_back(value);
    }
  }
  for (const auto& [group, metrics] : values) {
    for (const auto& [metric, vs] : metrics) report.per_group[group][metric] = stat_of(vs);
  }
  return report;
}

namespace {

std::pair<std::string, std::string> split_metric(std::string_view name) {
  const auto slash = name.rfind('/');
  if (slash == std::string_view::npos) return {"", std::string(name)};
  return {std::string(name.substr(0, slash)), std::string(name.substr(slash + 1))};
}

int metric_rank(std::string_view m) {
  static const std::string_view order[] = {"match_accuracy", "end_to_end_f1", "end_to_end_em", "answered_fraction"};
  for (int i = 0; i < 4; ++i) {
    if (order[i] == m) return i;
  }
  return 4;
}

int method_rank(std::string_view m) {
  if (m == "mips") return 0;
  if (m == "nmt_mips") return 1;
  if (m == "rm_mips") return 2;
  if (m == "perfect") return 4;
  return 3;
}

constexpr std::string_view kGroupOrder[] = {"high", "medium", "low", "all"};

}  // namespace

std::string report_csv(const EvalReport& report) {
  std::string out = "language,group,metric,value\n";
  for (const auto& [lang, metrics] : report.per_language) {
    const auto g = report.language_group.find(lang);
    const std::string_view group = g == report.language_group.end() ? std::string_view{} : std::string_view(g->second);
    for (const auto& [metric, value] : metrics) out += fmt::format("{},{},{},{}\n", lang, group, metric, value);
  }
  for (const auto group : kGroupOrder) {
    const auto it = report.per_group.find(group);
    if (it == report.per_group.end()) continue;
    for (const auto& [metric, stat] : it->second) {
      out += fmt::format("ALL,{},{}/mean,{}\n", group, metric, stat.mean);
      out += fmt::format("ALL,{},{}/std,{}\n", group, metric, stat.stddev);
    }
  }
  return out;
}

std::string report_table(const EvalReport& report) {
  std::set<std::string> metric_names;
  for (const auto& [lang, metrics] : report.per_language) {
    for (const auto& [m, v] : metrics) metric_names.insert(m);
  }
  // suffix -> methods
  std::map<std::string, std::vector<std::string>> families;
  for (const auto& full : metric_names) {
    auto [method, metric] = split_metric(full);
    families[metric].push_back(method);
  }
  std::vector<std::string> family_order;
  for (const auto& [metric, methods] : families) family_order.push_back(metric);
  std::stable_sort(family_order.begin(), family_order.end(),
                   [](const auto& a, const auto& b) { return metric_rank(a) < metric_rank(b); });

  std::string out;
  if (!report.fingerprint.empty()) out += fmt::format("config {}\n\n", report.fingerprint);
  for (const auto& metric : family_order) {
    auto methods = families[metric];
    std::stable_sort(methods.begin(), methods.end(),
                     [](const auto& a, const auto& b) { return method_rank(a) < method_rank(b); });
    out += fmt::format("{}\n", metric);
    out += fmt::format("{:<16}", "method");
    for (const auto group : kGroupOrder) out += fmt::format("{:>16}", group);
    out += '\n';
    for (const auto& method : methods) {
      const std::string full = method.empty() ? metric : method + "/" + metric;
      out += fmt::format("{:<16}", method.empty() ? "-" : method);
      for (const auto group : kGroupOrder) {
        const GroupStat* stat = nullptr;
        if (const auto g = report.per_group.find(group); g != report.per_group.end()) {
          if (const auto s = g->second.find(full); s != g->second.end()) stat = &s->second;
        }
        if (stat == nullptr) {
          out += fmt::format("{:>16}", "-");
        } else {
          out += fmt::format("{:>16}", fmt::format("{:.1f} ± {:.1f}", 100 * stat->mean, 100 * stat->stddev));
        }
      }
      out += '\n';
    }
    out += '\n';
  }

  out += "per language\n";
  out += fmt::format("{:<10}{:<8}", "language", "group");
  for (const auto& m : metric_names) out += fmt::format("  {}", m);
  out += '\n';
  for (const auto& [lang, metrics] : report.per_language) {
    const auto g = report.language_group.find(lang);
    out += fmt::format("{:<10}{:<8}", lang, g == report.language_group.end() ? "" : g->second);
    for (const auto& m : metric_names) {
      const auto v = metrics.find(m);
      const std::string cell = v == metrics.end() ? "-" : fmt::format("{:.1f}", 100 * v->second);
      out += fmt::format("  {:>{}}", cell, m.size());
    }
    out += '\n';
  }
  return out;
}

}  // namespace xlp
