#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curec/kg.hpp"
#include "curec/rng.hpp"

namespace curec {

// Token table with fixed reserved specials at ids 0-5.
class Vocabulary {
 public:
  static constexpr int64_t kPad = 0;
  static constexpr int64_t kBos = 1;
  static constexpr int64_t kEos = 2;
  static constexpr int64_t kCls = 3;
  static constexpr int64_t kItem = 4;  // the [ITEM] mask token
  static constexpr int64_t kUnk = 5;

  Vocabulary();

  int64_t add(const std::string& token);
  int64_t id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int64_t id) const;
  int64_t size() const { return static_cast<int64_t>(tokens_.size()); }

  std::vector<int64_t> encode(const std::string& text) const;
  std::string decode(const std::vector<int64_t>& ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int64_t> by_name_;
};

// Lowercased word/punctuation split. Bracketed specials like "[ITEM]" survive
// as single tokens; words are runs of [a-z0-9_], everything else splits into
// single-character punctuation tokens.
std::vector<std::string> tokenize_words(const std::string& text);

// Replaces each mention's surface form (first unused occurrence, left to
// right) with the literal token [ITEM]. Already-masked text passes through
// unchanged; a mention that can neither be found nor explained by existing
// [ITEM] tokens is an error, as are overlapping spans.
std::string mask_items(const std::string& text, const std::vector<std::string>& mentions);

struct DialogueTurn {
  bool recommender = false;
  std::string text;
  std::vector<int64_t> items;     // mentioned item entity ids
  std::vector<int64_t> entities;  // linked entity ids
};

struct DialogueSample {
  std::string id;
  std::vector<DialogueTurn> turns;
  int64_t target_turn = 0;

  const DialogueTurn& target() const { return turns[static_cast<size_t>(target_turn)]; }
  // union of linked entities over the context turns (before target), in
  // first-mention order
  std::vector<int64_t> context_entities() const;
};

void validate_sample(const DialogueSample& s, const KnowledgeGraph& g);

std::vector<DialogueSample> load_corpus_file(const std::string& path, const KnowledgeGraph& g);
void save_corpus_file(const std::vector<DialogueSample>& samples, const std::string& path);

struct Corpus {
  std::vector<DialogueSample> train;
  std::vector<DialogueSample> valid;
  std::vector<DialogueSample> test;
};

// Expects corpus.train.jsonl / corpus.valid.jsonl / corpus.test.jsonl in dir.
Corpus load_corpus_dir(const std::string& dir, const KnowledgeGraph& g);
void save_corpus_dir(const Corpus& corpus, const std::string& dir);

struct CorpusStats {
  int64_t conversations = 0;
  int64_t utterances = 0;
  double words_per_utterance = 0.0;
  int64_t entities = 0;
  int64_t items = 0;
};
CorpusStats corpus_stats(const Corpus& corpus, const KnowledgeGraph& g);

struct SyntheticCorpusParams {
  int64_t n_dialogues = 500;
  double p_signal = 0.9;     // gold drawn from the 2-hop neighborhood of a seed
  double p_chitchat = 0.1;   // target turn recommends nothing
  double p_second_gold = 0.15;
  uint64_t seed = 0;
};

// Template dialogues whose gold items correlate with the KG neighborhood of
// the mentioned entities; 80/10/10 split.
Corpus generate_synthetic_corpus(const KnowledgeGraph& g, const SyntheticCorpusParams& params);

// Vocabulary over the train split plus all KG entity names, in first-seen order.
Vocabulary build_vocabulary(const Corpus& corpus, const KnowledgeGraph& g);

// Speaker-tagged context token ids for the turns before the target, truncated
// from the left (oldest turns dropped first).
std::vector<int64_t> context_token_ids(const DialogueSample& s, const Vocabulary& vocab,
                                       int64_t max_tokens);

}  // namespace curec
