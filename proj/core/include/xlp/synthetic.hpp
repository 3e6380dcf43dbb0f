#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xlp/answer_xlate.hpp"
#include "xlp/corpus_store.hpp"

// Seeded toy corpora for desk-scale experiments and fixtures. Queries are
// strings of pseudo-words; each "language" rewrites words with its own vowel
// shift and suffix, so LRL queries share some character n-grams with their
// English parallels without being copies of them.
namespace xlp::synthetic {

struct Options {
  size_t queries = 1000;
  std::vector<std::string> languages{"ms", "es"};
  size_t distractors = 0;  // size of the distractor pool
  uint64_t seed = 1;
  size_t vocabulary = 3000;
  size_t min_words = 5;
  size_t max_words = 8;
  double rewrite_rate = 0.5;  // share of words rewritten in LRL text
  double drop_rate = 0.15;    // chance an LRL query loses one word
  double swap_rate = 0.3;     // chance two neighbouring words swap
  double label_coverage = 1.0;  // share of answers with a label per language
  size_t distractor_edits = 2;  // words replaced in a near-miss distractor
};

struct Corpus {
  Database db;                 // English side, ids "q000001"...
  std::vector<EvalSet> evals;  // one per language, gold ids = db ids
  Database distractor_pool;    // near-miss English queries, ids "d000001"...
  KnowledgeGraph kg;           // one entity per db answer
};

Corpus make_corpus(const Options& options);

// Language-specific word rewrite used for LRL text and answer labels.
std::string rewrite_word(const std::string& word, const std::string& lang);

// Writes parallel.jsonl (generic_parallel_jsonl: en plus every language),
// distractors.jsonl (generic_jsonl) and kg.tsv into `dir`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

}  // namespace xlp::synthetic
