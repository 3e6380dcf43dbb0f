#include <gtest/gtest.h>

#include <algorithm>

#include <nlohmann/json.hpp>

#include "support.hpp"
#include "xlp/error.hpp"
#include "xlp/vector_store.hpp"

using namespace xlp;
using xlp::test::fixture;

namespace {

std::vector<uint8_t> bytes_of(const std::filesystem::path& p) {
  const auto s = xlp::test::read_file(p);
  return {s.begin(), s.end()};
}

Errc parse_code(const std::vector<uint8_t>& bytes) {
  try {
    parse_vector_store(bytes);
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "parsed";
  return Errc::invalid_argument;
}

VectorStore small_store() {
  VectorStore s(2, {"enc", true, {{"note", "x"}}});
  s.add("a", std::vector<float>{1.0f, 0.0f});
  s.add("b", std::vector<float>{0.0f, 1.0f});
  return s;
}

}  // namespace

TEST(VectorStore, GoldenFilesFromIndependentWriter) {
  for (const std::string name : {"golden_d4", "golden_d768"}) {
    const auto side = nlohmann::json::parse(xlp::test::read_file(fixture(name + ".json")));
    const auto raw = bytes_of(fixture(name + ".xlpv1"));
    const auto store = parse_vector_store(raw);
    EXPECT_EQ(store.dim(), side["dim"].get<size_t>());
    EXPECT_EQ(store.meta().encoder, side["encoder"].get<std::string>());
    EXPECT_TRUE(store.meta().normalized);
    ASSERT_EQ(store.ids(), side["ids"].get<std::vector<std::string>>());
    for (size_t i = 0; i < store.size(); ++i) {
      const auto& want = side["vectors"][i];
      for (size_t d = 0; d < store.dim(); ++d) {
        EXPECT_EQ(store.row(i)[d], std::stof(want[d].get<std::string>()));
      }
      EXPECT_TRUE(is_unit_norm(store.row(i)));
    }
    // Header, rows and CRC re-serialize byte for byte; the meta trailer is free-form JSON.
    size_t body = 6 + 4 + 8 + 4;
    for (const auto& id : store.ids()) body += 2 + id.size() + 4 * store.dim();
    const auto again = serialize_vector_store(store);
    ASSERT_GE(again.size(), body);
    EXPECT_TRUE(std::equal(raw.begin(), raw.begin() + static_cast<long>(body), again.begin())) << name;
    EXPECT_EQ(parse_vector_store(again), store) << name;
  }
}

TEST(VectorStore, CorruptionIsRejected) {
  const auto raw = bytes_of(fixture("golden_d4.xlpv1"));
  auto bad = raw;
  bad[0] = 'Y';
  EXPECT_EQ(parse_code(bad), Errc::bad_magic);
  bad = raw;
  bad[30] ^= 0x01;  // inside the first vector
  EXPECT_EQ(parse_code(bad), Errc::checksum_mismatch);
  for (size_t cut : {3u, 10u, 40u, 80u}) {
    EXPECT_EQ(parse_code({raw.begin(), raw.begin() + static_cast<long>(cut)}), Errc::truncated) << cut;
  }
  bad = raw;
  bad.push_back('!');
  EXPECT_EQ(parse_code(bad), Errc::parse_error);
}

TEST(VectorStore, SingleByteFlipsNeverParseSilentlyWrong) {
  const auto raw = bytes_of(fixture("golden_d4.xlpv1"));
  const auto good = parse_vector_store(raw);
  for (size_t i = 0; i < raw.size(); ++i) {
    auto bad = raw;
    bad[i] ^= 0x20;
    try {
      const auto s = parse_vector_store(bad);
      // Only the meta trailer is outside the checksum.
      EXPECT_EQ(s.ids(), good.ids()) << i;
      EXPECT_EQ(s.data(), good.data()) << i;
    } catch (const Error&) {
    }
  }
}

TEST(VectorStore, AddValidates) {
  VectorStore s(2, {"enc", true, {}});
  s.add("a", std::vector<float>{1.0f, 0.0f});
  EXPECT_THROW(s.add("a", std::vector<float>{0.0f, 1.0f}), Error);
  EXPECT_THROW(s.add("b", std::vector<float>{1.0f, 0.0f, 0.0f}), Error);
  EXPECT_THROW(s.add("c", std::vector<float>{2.0f, 0.0f}), Error);
  VectorStore raw(2, {"enc", false, {}});
  EXPECT_NO_THROW(raw.add("c", std::vector<float>{2.0f, 0.0f}));
  ASSERT_TRUE(s.find("a").has_value());
  EXPECT_FALSE(s.find("zz").has_value());
}

TEST(VectorStore, SaveLoadRoundTripAndEncoderCheck) {
  xlp::test::TempDir tmp;
  const auto s = small_store();
  save_vector_store(s, tmp / "s.xlpv1");
  EXPECT_EQ(load_vector_store(tmp / "s.xlpv1"), s);
  EXPECT_EQ(load_vector_store(tmp / "s.xlpv1", "enc"), s);
  try {
    load_vector_store(tmp / "s.xlpv1", "other");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::encoder_mismatch);
  }
  EXPECT_THROW(load_vector_store(tmp / "missing.xlpv1"), Error);
}

TEST(VectorStore, EmbedAndRestrict) {
  std::istringstream in(
      "{\"id\":\"a\",\"question\":\"alpha\",\"answers\":[\"1\"]}\n"
      "{\"id\":\"b\",\"question\":\"beta\",\"answers\":[\"2\"]}\n"
      "{\"id\":\"c\",\"question\":\"gamma\",\"answers\":[\"3\"]}\n");
  const auto db = ingest_database(in, DatabaseFormat::generic_jsonl, "m");
  HashNgramEncoder enc(32);
  const auto one = embed_database(db, enc, 1);
  EXPECT_EQ(one, embed_database(db, enc, 4));
  EXPECT_EQ(one.ids(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(one.meta().encoder, enc.name());

  std::istringstream in2("{\"id\":\"c\",\"question\":\"gamma\",\"answers\":[\"3\"]}\n");
  const auto sub = restrict_to(one, ingest_database(in2, DatabaseFormat::generic_jsonl, "m"));
  EXPECT_EQ(sub.ids(), std::vector<std::string>{"c"});

  StoreEncoder se(one);
  EXPECT_EQ(se.encode(QueryRecord{"b", "ignored", "en"}).values,
            std::vector<float>(one.find("b")->begin(), one.find("b")->end()));
  EXPECT_THROW(se.encode("beta", "en"), Error);
  EXPECT_THROW(se.encode(QueryRecord{"zz", "x", "en"}), Error);
}
