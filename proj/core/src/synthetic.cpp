#include "xlp/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "xlp/error.hpp"
#include "xlp/random.hpp"
#include "xlp/unicode.hpp"

namespace xlp::synthetic {

using nlohmann::json;

namespace {

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::string_view kQuestionWords[] = {"what", "who", "when", "where", "which", "how"};

uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string make_word(SeededRng& rng, size_t syllables) {
  std::string w;
  for (size_t i = 0; i < syllables; ++i) {
    w += kConsonants[rng.below(kConsonants.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  if (rng.below(2) == 0) w += kConsonants[rng.below(kConsonants.size())];
  return w;
}

// Draws `n` words not yet in `taken`.
std::vector<std::string> fresh_words(SeededRng& rng, size_t n, std::set<std::string>& taken,
                                     size_t min_syllables) {
  std::vector<std::string> out;
  out.reserve(n);
  while (out.size() < n) {
    std::string w = make_word(rng, min_syllables + rng.below(2));
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::string join(const std::vector<std::string>& words) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += w;
  }
  return s;
}

std::string capitalize(std::string w) {
  if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
  return w;
}

std::string label_of(const std::vector<std::string>& words, const std::string* lang) {
  std::string s;
  for (const auto& w : words) {
    if (!s.empty()) s += ' ';
    s += capitalize(lang ? rewrite_word(w, *lang) : w);
  }
  return s;
}

}  // namespace

std::string rewrite_word(const std::string& word, const std::string& lang) {
  const uint64_t h = fnv1a(lang);
  const size_t shift = 1 + h % 4;
  std::string out;
  size_t vowel_index = 0;
  for (char c : word) {
    const auto v = kVowels.find(c);
    if (v != std::string_view::npos && (vowel_index++ + (h >> 8)) % 2 == 0) {
      out += kVowels[(v + shift) % kVowels.size()];
    } else {
      out += c;
    }
  }
  out += kVowels[(h >> 32) % kVowels.size()];
  out += kConsonants[(h >> 40) % kConsonants.size()];
  return out;
}

Corpus make_corpus(const Options& o) {
  if (o.queries == 0) throw Error(Errc::invalid_argument, "synthetic corpus needs at least one query");
  if (o.min_words < 2 || o.max_words < o.min_words) {
    throw Error(Errc::invalid_argument, "synthetic corpus: bad word-count range");
  }
  SeededRng rng(mix_seed(o.seed, 0x5111));
  std::set<std::string> taken(std::begin(kQuestionWords), std::end(kQuestionWords));
  const auto vocab = fresh_words(rng, o.vocabulary, taken, 2);
  const auto names = fresh_words(rng, 2 * (o.queries + o.distractors), taken, 2);

  std::vector<std::vector<std::string>> questions;
  std::set<std::string> seen;
  while (questions.size() < o.queries) {
    std::vector<std::string> words{std::string(kQuestionWords[rng.below(std::size(kQuestionWords))])};
    const size_t len = o.min_words + rng.below(o.max_words - o.min_words + 1);
    for (size_t i = 0; i < len; ++i) words.push_back(vocab[rng.below(vocab.size())]);
    if (seen.insert(join(words)).second) questions.push_back(std::move(words));
  }

  Corpus c;
  DatabaseBuilder db("synthetic", false);
  std::vector<std::vector<std::string>> answers(o.queries);
  for (size_t i = 0; i < o.queries; ++i) {
    const std::string id = fmt::format("q{:06}", i + 1);
    answers[i] = {names[2 * i], names[2 * i + 1]};
    const std::string answer = label_of(answers[i], nullptr);
    db.add({{id, join(questions[i]), "en"}, {id, {answer}}}, id);
    const std::string entity = fmt::format("E{:06}", i + 1);
    c.kg.add_label(entity, "en", answer);
  }
  c.db = std::move(db).build();

  for (const auto& lang : o.languages) {
    SeededRng lrng(mix_seed(o.seed, fnv1a(lang)));
    EvalSet set;
    set.lang = lang;
    for (size_t i = 0; i < o.queries; ++i) {
      std::vector<std::string> words;
      for (const auto& w : questions[i]) words.push_back(lrng.unit() < o.rewrite_rate ? rewrite_word(w, lang) : w);
      if (lrng.unit() < o.drop_rate && words.size() > 2) {
        words.erase(words.begin() + 1 + static_cast<ptrdiff_t>(lrng.below(words.size() - 1)));
      }
      if (lrng.unit() < o.swap_rate) {
        const size_t p = lrng.below(words.size() - 1);
        std::swap(words[p], words[p + 1]);
      }
      const std::string id = fmt::format("q{:06}", i + 1);
      EvalExample ex;
      ex.lrl_query = {id, join(words), lang};
      ex.gold_hrl_id = id;
      if (lrng.unit() < o.label_coverage) {
        const std::string label = label_of(answers[i], &lang);
        c.kg.add_label(fmt::format("E{:06}", i + 1), lang, label);
        ex.gold_answers = {label};
      } else {
        ex.gold_answers = {label_of(answers[i], nullptr)};
      }
      set.examples.push_back(std::move(ex));
    }
    set.original_parallel = o.queries;
    c.evals.push_back(std::move(set));
  }

  SeededRng drng(mix_seed(o.seed, 0xD157));
  DatabaseBuilder pool("synthetic-distractors", false);
  for (size_t j = 0; j < o.distractors;) {
    auto words = questions[drng.below(o.queries)];
    for (size_t e = 0; e < o.distractor_edits; ++e) {
      words[1 + drng.below(words.size() - 1)] = vocab[drng.below(vocab.size())];
    }
    if (!seen.insert(join(words)).second) continue;
    const std::string id = fmt::format("d{:06}", j + 1);
    const size_t n = o.queries + j;
    pool.add({{id, join(words), "en"}, {id, {label_of({names[2 * n], names[2 * n + 1]}, nullptr)}}}, id);
    ++j;
  }
  c.distractor_pool = std::move(pool).build();
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream parallel(dir / "parallel.jsonl", std::ios::binary);
  std::ofstream distractors(dir / "distractors.jsonl", std::ios::binary);
  std::ofstream kg(dir / "kg.tsv", std::ios::binary);
  if (!parallel || !distractors || !kg) throw Error(Errc::io_error, fmt::format("cannot write into {}", dir.string()));

  for (const auto& [id, entry] : corpus.db.entries()) {
    json row{{"pid", id}, {"queries", {{"en", entry.query.text}}}, {"answers", {{"en", entry.answer.answers}}}};
    for (const auto& set : corpus.evals) {
      for (const auto& ex : set.examples) {
        if (ex.lrl_query.id != id) continue;
        row["queries"][set.lang] = ex.lrl_query.text;
        row["answers"][set.lang] = ex.gold_answers;
        break;
      }
    }
    parallel << row.dump() << '\n';
  }
  for (const auto& [id, entry] : corpus.distractor_pool.entries()) {
    distractors << json{{"id", id}, {"question", entry.query.text}, {"answers", entry.answer.answers}}.dump() << '\n';
  }
  for (const auto& [id, entity] : corpus.kg.entities()) {
    for (const auto& [lang, label] : entity.labels) kg << id << '\t' << lang << '\t' << label << '\n';
    for (const auto& alias : entity.aliases) kg << id << "\talias\t" << alias << '\n';
  }
}

}  // namespace xlp::synthetic
