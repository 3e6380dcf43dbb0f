#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "xlp/error.hpp"
#include "xlp/pivot.hpp"
#include "xlp/vector_store.hpp"

using namespace xlp;
using xlp::test::TableEncoder;

namespace {

struct World {
  Database db;
  TableEncoder enc{"table", 2};
  std::optional<Index> index;
  OracleScorer oracle;
  IdentityTranslator identity;

  explicit World(const std::vector<std::pair<std::string, std::vector<float>>>& rows) {
    std::string text;
    for (const auto& [q, _] : rows) {
      text += "{\"id\":\"" + q.substr(0, 2) + "\",\"question\":\"" + q + "\",\"answers\":[\"ans " + q + "\"]}\n";
    }
    std::istringstream in(text);
    db = ingest_database(in, DatabaseFormat::generic_jsonl, "w");
    for (const auto& [q, v] : rows) enc.set(q, v);
    index = build_index(embed_database(db, enc));
  }

  PivotContext ctx() { return {&*index, &db, &enc, &oracle, &identity, "en"}; }
};

}  // namespace

TEST(Pivot, MipsSelfMatch) {
  World w({{"h1 alpha", {1, 0}}, {"h2 beta", {0, 1}}, {"h3 gamma", {0.6f, 0.8f}}});
  const auto r = match_query({"x", "h3 gamma", "en"}, w.ctx(), {Strategy::mips, 10, -1e300});
  ASSERT_TRUE(r.hrl_id);
  EXPECT_EQ(*r.hrl_id, "h3");
  EXPECT_NEAR(r.confidence, 1.0, 1e-5);
  EXPECT_EQ(r.candidates.size(), 1u);
}

TEST(Pivot, RmMipsRecoversGoldOutsideTopOne) {
  World w({{"h1 alpha", {1, 0}}, {"h2 beta", {0.8f, 0.6f}}, {"h3 gamma", {0, 1}}});
  w.enc.set("lrl beta", {0.95f, 0.3122499f});
  w.oracle.add_pair("lrl beta", "h2 beta");
  const QueryRecord q{"q", "lrl beta", "xx"};
  const auto mips = match_query(q, w.ctx(), {Strategy::mips, 10, -1e300});
  EXPECT_EQ(*mips.hrl_id, "h1");
  const auto rm = match_query(q, w.ctx(), {Strategy::rm_mips, 2, -1e300});
  EXPECT_EQ(*rm.hrl_id, "h2");
  EXPECT_EQ(rm.confidence, 1.0);
  ASSERT_EQ(rm.candidates.size(), 2u);
  EXPECT_TRUE(rm.candidates[0].rerank_score.has_value());
  // k = 1 cannot see the gold.
  EXPECT_EQ(*match_query(q, w.ctx(), {Strategy::rm_mips, 1, -1e300}).hrl_id, "h1");
}

TEST(Pivot, RerankTiesPickSmallestId) {
  World w({{"h2 same", {1, 0}}, {"h1 same", {0.9f, 0.43588989f}}});
  w.enc.set("same", {1, 0});
  // Both candidates overlap the query equally under the oracle's fallback.
  const auto r = match_query({"q", "same", "xx"}, w.ctx(), {Strategy::rm_mips, 10, -1e300});
  EXPECT_EQ(*r.hrl_id, "h1");
}

TEST(Pivot, ThresholdAbstainsMonotonically) {
  World w({{"h1 alpha", {1, 0}}, {"h2 beta", {0, 1}}});
  w.enc.set("q", {0.6f, 0.8f});
  const QueryRecord q{"q", "q", "xx"};
  const auto base = match_query(q, w.ctx(), {Strategy::mips, 10, -1e300});
  EXPECT_EQ(*base.hrl_id, "h2");
  EXPECT_FALSE(match_query(q, w.ctx(), {Strategy::mips, 10, 0.9}).hrl_id);
  EXPECT_FALSE(apply_threshold(base, 0.9).hrl_id);
  EXPECT_EQ(apply_threshold(apply_threshold(base, 0.9), 0.1), base);
}

TEST(Pivot, NmtMipsTranslatesFirst) {
  World w({{"h1 alpha", {1, 0}}, {"h2 beta", {0, 1}}});
  const auto r = match_query({"q", "h2 beta", "xx"}, w.ctx(), {Strategy::nmt_mips, 10, -1e300});
  EXPECT_EQ(*r.hrl_id, "h2");
}

TEST(Pivot, ContextErrors) {
  World w({{"h1 alpha", {1, 0}}});
  auto ctx = w.ctx();
  ctx.scorer = nullptr;
  EXPECT_THROW(match_query({"q", "h1 alpha", "xx"}, ctx, {Strategy::rm_mips, 10, -1e300}), Error);
  ctx = w.ctx();
  ctx.translator = nullptr;
  EXPECT_THROW(match_query({"q", "h1 alpha", "xx"}, ctx, {Strategy::nmt_mips, 10, -1e300}), Error);
  TableEncoder other("other", 2);
  other.set("h1 alpha", {1, 0});
  ctx = w.ctx();
  ctx.encoder = &other;
  try {
    match_query({"q", "h1 alpha", "xx"}, ctx, {Strategy::mips, 10, -1e300});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::encoder_mismatch);
  }
  EXPECT_THROW(match_query({"q", "h1 alpha", "xx"}, w.ctx(), {Strategy::mips, 0, -1e300}), Error);
}

TEST(Pivot, BatchAndAccuracy) {
  World w({{"h1 alpha", {1, 0}}, {"h2 beta", {0, 1}}});
  w.enc.set("a", {0.9f, 0.43588989f});
  w.enc.set("b", {0.2f, 0.9797959f});
  EvalSet eval;
  eval.lang = "xx";
  eval.examples = {{{"1", "a", "xx"}, "h1", {}}, {{"2", "b", "xx"}, "h1", {}}, {{"3", "b", "xx"}, std::nullopt, {}}};
  std::vector<QueryRecord> qs;
  for (const auto& e : eval.examples) qs.push_back(e.lrl_query);
  const auto r1 = match_batch(qs, w.ctx(), {Strategy::mips, 10, -1e300}, 1);
  EXPECT_EQ(r1, match_batch(qs, w.ctx(), {Strategy::mips, 10, -1e300}, 3));
  EXPECT_DOUBLE_EQ(matching_accuracy(r1, eval), 0.5);
}

TEST(Scorers, OracleAndOverlap) {
  EXPECT_DOUBLE_EQ(token_overlap("Barack Obama", "obama"), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(token_overlap("a b", "c"), 0.0);
  OracleScorer o;
  o.add_pair("x y", "x y z");
  EXPECT_EQ(o.score("x y", "x y z"), 1.0);
  EXPECT_LT(o.score("x y z", "x y z"), 1.0);
  EXPECT_GT(o.score("x y z", "x y z"), 0.99);
  EXPECT_THROW(score_pair(o, " ", "x"), Error);
  HashNgramEncoder h(64);
  EncoderScorer es(h, "xx");
  EXPECT_NEAR(es.score("abc", "abc"), 1.0, 1e-6);
}
