#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xlp/error.hpp"
#include "xlp/eval_metrics.hpp"

using namespace xlp;
using Tokens = std::vector<std::string>;

TEST(Normalize, SpecExamples) {
  EXPECT_EQ(normalize_tokens("The  Eiffel Tower!", "en"), (Tokens{"eiffel", "tower"}));
  EXPECT_EQ(normalize_tokens("东京", "zh_cn"), (Tokens{"东", "京"}));
  EXPECT_TRUE(normalize_tokens("", "de").empty());
  EXPECT_EQ(normalize_tokens("The house", "de"), (Tokens{"the", "house"}));
  EXPECT_EQ(normalize_tokens("theatre an", "en"), (Tokens{"theatre"}));
  EXPECT_EQ(normalize_tokens("ab cd", "xx", {{"xx"}}), (Tokens{"a", "b", "c", "d"}));
}

TEST(AnswerScore, SpecExamples) {
  const std::vector<std::string> obama{"Barack Obama"};
  auto s = answer_score("Obama", obama, "en");
  EXPECT_EQ(s.em, 0);
  EXPECT_NEAR(s.f1, 0.667, 5e-4);
  s = answer_score("Barack Obama", obama, "en");
  EXPECT_EQ(s, (AnswerScore{1, 1.0}));
  EXPECT_EQ(answer_score("x", std::vector<std::string>{"y"}, "en"), (AnswerScore{0, 0.0}));
  EXPECT_EQ(answer_score("", std::vector<std::string>{}, "en"), (AnswerScore{1, 1.0}));
  EXPECT_EQ(answer_score("Paris", std::vector<std::string>{}, "en"), (AnswerScore{0, 0.0}));
}

// Outputs of tests/support/mlqa_reference.py, committed with the fixture.
TEST(AnswerScore, ReferenceScriptConformance) {
  std::ifstream in(xlp::test::fixture("mlqa_conformance.jsonl"));
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    const auto row = nlohmann::json::parse(line);
    const auto golds = row["golds"].get<std::vector<std::string>>();
    const auto s = answer_score(row["prediction"].get<std::string>(), golds, row["lang"].get<std::string>());
    EXPECT_EQ(s.em, row["em"].get<int>()) << line;
    EXPECT_NEAR(s.f1, row["f1"].get<double>(), 1e-9) << line;
    ++n;
  }
  EXPECT_EQ(n, 25u);
}

TEST(AnswerScore, EmImpliesF1) {
  const std::vector<std::string> preds{"a b", "b a", "A  b.", "c", "", "the a"};
  for (const auto& p : preds) {
    for (const auto& g : preds) {
      const auto s = answer_score(p, std::vector<std::string>{g}, "en");
      if (s.em == 1) {
        EXPECT_EQ(s.f1, 1.0) << p << "|" << g;
      }
      const auto tp = normalize_tokens(p, "en"), tg = normalize_tokens(g, "en");
      auto sp = tp, sg = tg;
      std::sort(sp.begin(), sp.end());
      std::sort(sg.begin(), sg.end());
      EXPECT_EQ(token_f1(tp, tg) == 1.0, sp == sg) << p << "|" << g;
    }
  }
}

TEST(Calibration, SpecExamples) {
  const std::vector<double> s{0.9, 0.8, 0.7};
  auto p = calibrate_threshold(s, std::vector<int>{1, 0, 1}, 0.8);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->threshold, 0.9);
  EXPECT_EQ(p->answered, 1u);
  p = calibrate_threshold(s, std::vector<int>{1, 1, 1}, 0.8);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->threshold, 0.7);
  EXPECT_FALSE(calibrate_threshold(s, std::vector<int>{0, 0, 0}, 0.8));
  EXPECT_THROW(calibrate_threshold(s, std::vector<int>{1, 0}, 0.8), Error);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{}, std::vector<int>{}, 0.8), Error);
  EXPECT_THROW(calibrate_threshold(s, std::vector<int>{1, 0, 1}, 0.0), Error);
  EXPECT_THROW(calibrate_threshold(s, std::vector<int>{1, 0, 2}, 0.5), Error);
}

TEST(Calibration, TiesAreAnsweredTogether) {
  // Precision at 0.5 counts both tied items: 2/3.
  const std::vector<double> s{0.9, 0.5, 0.5};
  auto p = calibrate_threshold(s, std::vector<int>{1, 1, 0}, 0.7);
  ASSERT_TRUE(p);
  EXPECT_EQ(p->threshold, 0.9);
  p = calibrate_threshold(s, std::vector<int>{1, 1, 0}, 0.6);
  EXPECT_EQ(p->threshold, 0.5);
  EXPECT_EQ(p->answered, 3u);
  EXPECT_EQ(p->correct, 2u);
}

TEST(Recall, SpecExamples) {
  const std::vector<double> s(4, 0.5), f(4, 1.0);
  EXPECT_EQ(recall_at_threshold(s, f, -INFINITY, 4), 1.0);
  EXPECT_EQ(recall_at_threshold(s, f, INFINITY, 4), 0.0);
  const std::vector<double> s10{1, 1, 1, 1, 1, 1, 0, 0, 0, 0};
  const std::vector<double> f10{1, 1, 0.5, 0.5, 0.6, 0.6, 1, 1, 1, 1};
  EXPECT_NEAR(recall_at_threshold(s10, f10, 0.5, 10), 0.42, 1e-12);
  EXPECT_THROW(recall_at_threshold(s, f, 0.0, 0), Error);
  EXPECT_THROW(recall_at_threshold(s, std::vector<double>{1.0}, 0.0, 4), Error);
}

TEST(Groups, AggregateMeansAndPopulationStd) {
  const auto groups = LanguageGroups::from_json({{"high", {"en", "de"}}, {"low", {"km"}}});
  std::map<std::string, MetricMap, std::less<>> per;
  per["en"]["m"] = 0.2;
  per["de"]["m"] = 0.4;
  per["km"]["m"] = 0.9;
  const auto r = aggregate_groups(per, groups);
  EXPECT_NEAR(r.per_group.at("high").at("m").mean, 0.3, 1e-12);
  EXPECT_NEAR(r.per_group.at("high").at("m").stddev, 0.1, 1e-12);
  EXPECT_EQ(r.per_group.at("low").at("m").stddev, 0.0);
  EXPECT_NEAR(r.per_group.at("all").at("m").mean, 0.5, 1e-12);
  EXPECT_EQ(r.per_group.at("all").at("m").languages, 3u);
  per["xx"]["m"] = 0.0;
  try {
    aggregate_groups(per, groups);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_language);
    EXPECT_NE(std::string(e.what()).find("xx"), std::string::npos);
  }
  EXPECT_THROW(LanguageGroups::from_json({{"high", {"en"}}, {"low", {"en"}}}), Error);
}

TEST(Groups, BuiltinTables) {
  const auto mkqa = LanguageGroups::mkqa();
  EXPECT_EQ(mkqa.group_of("de"), ResourceGroup::high);
  EXPECT_EQ(mkqa.group_of("km"), ResourceGroup::low);
  EXPECT_EQ(mkqa.grouping.size(), 25u);
  const auto xquad = LanguageGroups::xquad();
  EXPECT_EQ(xquad.grouping.size(), 10u);
  EXPECT_EQ(LanguageGroups::named("xquad").grouping, xquad.grouping);
  EXPECT_FALSE(mkqa.group_of("tlh"));
}

TEST(Report, CsvAndTable) {
  std::map<std::string, MetricMap, std::less<>> per;
  per["de"]["rm_mips/end_to_end_f1"] = 0.5;
  per["km"]["rm_mips/end_to_end_f1"] = 0.25;
  per["de"]["mips/end_to_end_f1"] = 0.4;
  per["km"]["mips/end_to_end_f1"] = 0.2;
  const auto r = aggregate_groups(per, LanguageGroups::mkqa());
  const auto csv = report_csv(r);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "language,group,metric,value");
  EXPECT_NE(csv.find("de,high,rm_mips/end_to_end_f1,0.5\n"), std::string::npos) << csv;
  EXPECT_NE(csv.find("ALL,all,rm_mips/end_to_end_f1/mean,0.375\n"), std::string::npos) << csv;
  const auto table = report_table(r);
  EXPECT_LT(table.find("mips"), table.find("rm_mips")) << table;
  EXPECT_NE(table.find("37.5 ± 12.5"), std::string::npos) << table;
}
