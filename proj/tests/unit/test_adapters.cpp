#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <functional>
#include <thread>

#include "support.hpp"
#include "xlp/adapters.hpp"
#include "xlp/error.hpp"

using namespace xlp;
using namespace std::chrono_literals;
using xlp::test::adapter_command;

namespace {

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error";
  return Errc::invalid_argument;
}

std::shared_ptr<PipeProcess> proc(const std::string& args, std::chrono::milliseconds timeout = 10s) {
  return std::make_shared<PipeProcess>("fake", adapter_command(args), timeout);
}

}  // namespace

TEST(Adapters, ScoreTranslateEmbed) {
  auto p = proc("--dim 6");
  PipeScorer scorer(p);
  PipeTranslator translator(p);
  PipeEncoder encoder(p, "fake-enc", 6);
  EXPECT_NEAR(scorer.score("a b", "b c"), 1.0 / 3.0, 1e-12);
  EXPECT_EQ(translator.translate("hola", "es", "en"), "hola [en]");
  const auto v = encoder.encode("hello", "en");
  EXPECT_EQ(v.dim(), 6u);
  EXPECT_EQ(v, encoder.encode("hello", "en"));
  EXPECT_EQ(scorer.name(), "pipe:fake");
}

TEST(Adapters, ConcurrentCallsAreSerialized) {
  auto p = proc("");
  PipeScorer scorer(p);
  std::vector<std::thread> ts;
  std::atomic<int> ok{0};
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&] {
      for (int i = 0; i < 25; ++i) ok += scorer.score("x y", "x y") == 1.0;
    });
  }
  for (auto& t : ts) t.join();
  EXPECT_EQ(ok.load(), 100);
}

TEST(Adapters, Failures) {
  EXPECT_EQ(code_of([] { PipeScorer(proc("--mode error")).score("a", "b"); }), Errc::adapter_error);
  EXPECT_EQ(code_of([] { PipeScorer(proc("--mode garbage")).score("a", "b"); }), Errc::adapter_error);
  EXPECT_EQ(code_of([] { PipeEncoder(proc("--dim 3"), "e", 4).encode("a", "en"); }), Errc::dim_mismatch);
  EXPECT_EQ(code_of([] { PipeScorer(std::make_shared<PipeProcess>("x", "/nonexistent/bin")).score("a", "b"); }),
            Errc::adapter_error);
}

TEST(Adapters, ExitAfterServingIsAnAdapterError) {
  PipeScorer s(proc("--mode exit --after 1"));
  EXPECT_DOUBLE_EQ(s.score("a", "a"), 1.0);
  EXPECT_EQ(code_of([&] { s.score("a", "a"); }), Errc::adapter_error);
  // Stays broken.
  EXPECT_EQ(code_of([&] { s.score("a", "a"); }), Errc::adapter_error);
}

TEST(Adapters, Timeout) {
  const auto start = std::chrono::steady_clock::now();
  EXPECT_EQ(code_of([] { PipeScorer(proc("--mode slow", 300ms)).score("a", "b"); }), Errc::adapter_timeout);
  EXPECT_LT(std::chrono::steady_clock::now() - start, 4s);
}

TEST(Adapters, NonFiniteScoreRejected) {
  PipeScorer s(proc("--mode nan"));
  EXPECT_EQ(code_of([&] { score_pair(s, "a", "b"); }), Errc::adapter_error);
}
