#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "support.hpp"
#include "xlp/corpus_store.hpp"
#include "xlp/error.hpp"

using namespace xlp;
using xlp::test::fixture;

namespace {

Database from_jsonl(const std::string& text, DatabaseFormat f = DatabaseFormat::generic_jsonl, bool dedup = true) {
  std::istringstream in(text);
  return ingest_database(in, f, "mem.jsonl", {dedup, "en"});
}

template <typename Fn>
Errc code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no xlp::Error thrown";
  return Errc::invalid_argument;
}

Database numbered(size_t n, const std::string& prefix = "q") {
  std::string text;
  for (size_t i = 0; i < n; ++i) {
    text += "{\"id\":\"" + prefix + std::to_string(1000 + i) + "\",\"question\":\"question " + prefix +
            std::to_string(i) + "\",\"answers\":[\"a" + std::to_string(i) + "\"]}\n";
  }
  return from_jsonl(text);
}

EvalSet eval_for(const Database& db) {
  EvalSet set;
  set.lang = "xx";
  for (const auto& [id, e] : db.entries()) {
    EvalExample ex;
    ex.lrl_query = {id, "lrl " + e.query.text, "xx"};
    ex.gold_hrl_id = id;
    ex.gold_answers = e.answer.answers;
    set.examples.push_back(ex);
  }
  set.original_parallel = set.examples.size();
  return set;
}

}  // namespace

TEST(CorpusStore, GenericJsonlWithDedup) {
  const auto db = ingest_database(fixture("generic_small.jsonl"), DatabaseFormat::generic_jsonl);
  // "Who wrote Hamlet?" canonicalizes differently from "who wrote hamlet" (the '?'), so nothing folds.
  EXPECT_EQ(db.size(), 4u);
  const auto merged = from_jsonl(
      "{\"id\":\"a\",\"question\":\"Who  wrote X\",\"answers\":[\"p\"]}\n"
      "{\"id\":\"b\",\"question\":\"who wrote x\",\"answers\":[\"q\",\"p\"]}\n");
  ASSERT_EQ(merged.size(), 1u);
  EXPECT_EQ(lookup_answer(merged, "a").answers, (std::vector<std::string>{"p", "q"}));
  EXPECT_EQ(from_jsonl("{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n"
                       "{\"id\":\"b\",\"question\":\"X\",\"answers\":[\"q\"]}\n",
                       DatabaseFormat::generic_jsonl, false)
                .size(),
            2u);
}

TEST(CorpusStore, NqOpenSquadAndMkqa) {
  const auto nq = ingest_database(fixture("nq_small.jsonl"), DatabaseFormat::nq_open_jsonl);
  EXPECT_EQ(nq.size(), 2u);
  EXPECT_TRUE(nq.contains("nq_small:1"));
  const auto squad = ingest_database(fixture("squad_small.json"), DatabaseFormat::squad_json);
  EXPECT_EQ(squad.ids(), (std::vector<std::string>{"s1", "s3"}));
  EXPECT_EQ(lookup_answer(squad, "s1").answers, (std::vector<std::string>{"Paris"}));
  const auto mkqa = ingest_database(fixture("mkqa_small.jsonl"), DatabaseFormat::mkqa_jsonl);
  EXPECT_EQ(mkqa.size(), 9u);  // m9 is unanswerable
  EXPECT_FALSE(mkqa.contains("m9"));
  EXPECT_EQ(mkqa.find("m2")->query.text, "what is the capital of france");
}

TEST(CorpusStore, Errors) {
  EXPECT_EQ(code_of([] { from_jsonl("{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n{bad\n"); }), Errc::parse_error);
  EXPECT_EQ(code_of([] { from_jsonl("{\"id\":\"a\",\"answers\":[\"p\"]}\n"); }), Errc::parse_error);
  EXPECT_EQ(code_of([] { from_jsonl(""); }), Errc::empty_input);
  EXPECT_EQ(code_of([] {
              from_jsonl("{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n"
                         "{\"id\":\"a\",\"question\":\"y\",\"answers\":[\"p\"]}\n");
            }),
            Errc::duplicate_id);
  EXPECT_EQ(code_of([] { ingest_database("/nonexistent/file.jsonl", DatabaseFormat::generic_jsonl); }), Errc::io_error);
  const auto db = numbered(2);
  EXPECT_EQ(code_of([&] { lookup_answer(db, "nope"); }), Errc::not_found);
}

TEST(CorpusStore, ParseErrorNamesLine) {
  try {
    from_jsonl("{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n{\"id\":\"b\",\"answers\":[\"p\"]}\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(CorpusStore, CanonicalJsonlIsOrderIndependent) {
  const auto a = from_jsonl(
      "{\"id\":\"b\",\"question\":\"y\",\"answers\":[\"q\"]}\n{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n");
  const auto b = from_jsonl(
      "{\"id\":\"a\",\"question\":\"x\",\"answers\":[\"p\"]}\n{\"id\":\"b\",\"question\":\"y\",\"answers\":[\"q\"]}\n");
  EXPECT_EQ(a.canonical_jsonl(), b.canonical_jsonl());
  xlp::test::TempDir tmp;
  write_database(a, tmp / "db.jsonl");
  const auto back = ingest_database(tmp / "db.jsonl", DatabaseFormat::generic_jsonl);
  EXPECT_EQ(back, a);
}

TEST(CorpusStore, EvalSetsResolveParallelIds) {
  const auto db = ingest_database(fixture("mkqa_small.jsonl"), DatabaseFormat::mkqa_jsonl);
  const auto ja = ingest_eval_set(fixture("mkqa_small.jsonl"), EvalFormat::mkqa_jsonl, "ja", db);
  EXPECT_EQ(ja.examples.size(), 10u);
  EXPECT_EQ(ja.original_parallel, 10u);
  EXPECT_EQ(ja.parallel_count(), 9u);
  EXPECT_EQ(ja.warnings.size(), 1u);
  EXPECT_TRUE(ja.examples[8].gold_answers.empty());
  EXPECT_EQ(ja.examples[1].gold_answers, (std::vector<std::string>{"パリ"}));
  EXPECT_THROW(ingest_eval_set(fixture("mkqa_small.jsonl"), EvalFormat::mkqa_jsonl, "ko", db), Error);

  const auto squad = ingest_database(fixture("squad_small.json"), DatabaseFormat::squad_json);
  const auto es = ingest_eval_set(fixture("xquad_{lang}.json"), EvalFormat::xquad_json, "es", squad);
  EXPECT_EQ(es.examples.size(), 3u);
  EXPECT_EQ(es.parallel_count(), 2u);
  EXPECT_EQ(es.examples[0].lrl_query.text, "¿Dónde está el Louvre?");
  try {
    ingest_eval_set(fixture("xquad_{lang}.json"), EvalFormat::xquad_json, "fi", squad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::unknown_language);
    EXPECT_NE(std::string(e.what()).find("de, es"), std::string::npos) << e.what();
  }
}

TEST(CorpusStore, InjectDistractorsAddsExactlyCount) {
  const auto db = numbered(20, "q");
  const auto pool = numbered(50, "d");
  for (size_t n : {0u, 1u, 17u, 50u}) {
    const auto out = inject_distractors(db, pool, n, 9);
    EXPECT_EQ(out.size(), 20 + n);
    for (const auto& id : db.ids()) EXPECT_TRUE(out.contains(id));
  }
  EXPECT_EQ(inject_distractors(db, pool, 10, 3), inject_distractors(db, pool, 10, 3));
  const auto small = inject_distractors(db, pool, 10, 3);
  const auto big = inject_distractors(db, pool, 30, 3);
  for (const auto& id : small.ids()) EXPECT_TRUE(big.contains(id)) << "prefix property " << id;
  EXPECT_THROW(inject_distractors(db, pool, 51, 1), Error);
  // Pool rows duplicating a db question are not eligible.
  EXPECT_THROW(inject_distractors(db, db, 1, 1), Error);
}

TEST(CorpusStore, DropoutKeepsFractionAndNests) {
  const auto db = numbered(100);
  const auto eval = eval_for(db);
  for (double keep : {0.0, 0.1, 0.25, 0.5, 0.99, 1.0}) {
    const auto [reduced, out] = dropout_parallel(db, eval, keep, 5);
    EXPECT_NEAR(out.parallel_fraction(), keep, 0.01 + 1e-12);
    EXPECT_EQ(reduced.size(), out.parallel_count());
    for (const auto& ex : out.examples) {
      if (ex.gold_hrl_id) {
        EXPECT_TRUE(reduced.contains(*ex.gold_hrl_id));
      }
    }
  }
  const auto ids = db.ids();
  auto prev = retained_parallel_ids(ids, 0.1, 4);
  for (double keep = 0.2; keep <= 1.0001; keep += 0.1) {
    const auto cur = retained_parallel_ids(ids, keep, 4);
    EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
    prev = cur;
  }
  EXPECT_EQ(retained_parallel_ids(ids, 0.3, 4, DropoutMode::independent),
            retained_parallel_ids(ids, 0.3, 4, DropoutMode::independent));
  EXPECT_THROW(retained_parallel_ids(ids, 1.5, 1), Error);
}

TEST(CorpusStore, DropoutLeavesDistractorsAlone) {
  const auto parallel = numbered(10);
  const auto with_noise = inject_distractors(parallel, numbered(30, "d"), 30, 1);
  const auto [reduced, out] = dropout_parallel(with_noise, eval_for(parallel), 0.5, 2);
  EXPECT_EQ(reduced.size(), 35u);
  size_t noise = 0;
  for (const auto& id : reduced.ids()) noise += id[0] == 'd';
  EXPECT_EQ(noise, 30u);
}
