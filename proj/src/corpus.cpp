#include "curec/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "curec/common.hpp"

namespace curec {

using nlohmann::json;

namespace {

const char* kSpecials[] = {"[pad]", "[bos]", "[eos]", "[cls]", "[item]", "[unk]"};

bool word_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

Vocabulary::Vocabulary() {
  for (const char* s : kSpecials) {
    const int64_t id = static_cast<int64_t>(tokens_.size());
    tokens_.emplace_back(s);
    by_name_.emplace(s, id);
  }
}

int64_t Vocabulary::add(const std::string& token) {
  auto it = by_name_.find(token);
  if (it != by_name_.end()) return it->second;
  const int64_t id = size();
  tokens_.push_back(token);
  by_name_.emplace(token, id);
  return id;
}

int64_t Vocabulary::id(const std::string& token) const {
  auto it = by_name_.find(token);
  return it == by_name_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int64_t id) const {
  if (id < 0 || id >= size()) throw DataError("vocab: id out of range " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int64_t> Vocabulary::encode(const std::string& text) const {
  std::vector<int64_t> out;
  for (const auto& tok : tokenize_words(text)) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode(const std::vector<int64_t>& ids) const {
  std::string out;
  for (int64_t i : ids) {
    if (i == kPad || i == kBos || i == kEos || i == kCls) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(i);
  }
  return out;
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::string lower;
  lower.reserve(text.size());
  for (char c : text) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::vector<std::string> out;
  size_t i = 0;
  while (i < lower.size()) {
    const char c = lower[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (c == '[') {
      // bracketed special tokens stay whole
      const size_t close = lower.find(']', i);
      if (close != std::string::npos) {
        bool simple = true;
        for (size_t j = i + 1; j < close; ++j)
          if (!word_char(lower[j])) simple = false;
        if (simple && close > i + 1) {
          out.push_back(lower.substr(i, close - i + 1));
          i = close + 1;
          continue;
        }
      }
      out.emplace_back(1, c);
      ++i;
      continue;
    }
    if (word_char(c)) {
      size_t j = i;
      while (j < lower.size() && word_char(lower[j])) ++j;
      out.push_back(lower.substr(i, j - i));
      i = j;
      continue;
    }
    out.emplace_back(1, c);
    ++i;
  }
  return out;
}

std::string mask_items(const std::string& text, const std::vector<std::string>& mentions) {
  struct Span {
    size_t begin, end;
  };
  std::vector<Span> spans;
  auto overlaps = [&](size_t b, size_t e) {
    for (const auto& s : spans)
      if (b < s.end && s.begin < e) return true;
    return false;
  };
  size_t already_masked = 0;
  for (size_t p = text.find("[ITEM]"); p != std::string::npos; p = text.find("[ITEM]", p + 1))
    ++already_masked;

  for (const auto& mention : mentions) {
    if (mention.empty()) throw DataError("mask_items: empty mention");
    size_t pos = 0;
    bool placed = false;
    while ((pos = text.find(mention, pos)) != std::string::npos) {
      if (!overlaps(pos, pos + mention.size())) {
        spans.push_back({pos, pos + mention.size()});
        placed = true;
        break;
      }
      ++pos;
    }
    if (!placed) {
      if (already_masked > 0) {
        --already_masked;  // mention was masked by an earlier pass
        continue;
      }
      throw DataError("mask_items: mention '" + mention +
                      "' not found or overlaps a previous mention in: " + text);
    }
  }
  std::sort(spans.begin(), spans.end(), [](const Span& a, const Span& b) { return a.begin < b.begin; });
  std::string out;
  size_t cursor = 0;
  for (const auto& s : spans) {
    out += text.substr(cursor, s.begin - cursor);
    out += "[ITEM]";
    cursor = s.end;
  }
  out += text.substr(cursor);
  return out;
}

std::vector<int64_t> DialogueSample::context_entities() const {
  std::vector<int64_t> out;
  for (int64_t t = 0; t < target_turn; ++t)
    for (int64_t e : turns[static_cast<size_t>(t)].entities)
      if (std::find(out.begin(), out.end(), e) == out.end()) out.push_back(e);
  return out;
}

void validate_sample(const DialogueSample& s, const KnowledgeGraph& g) {
  if (s.turns.empty()) throw DataError("sample " + s.id + ": no turns");
  if (s.target_turn < 1 || s.target_turn >= static_cast<int64_t>(s.turns.size()))
    throw DataError("sample " + s.id + ": target_turn out of range");
  if (!s.target().recommender)
    throw DataError("sample " + s.id + ": target turn speaker must be recommender");
  for (const auto& turn : s.turns) {
    for (int64_t item : turn.items) {
      g.validate_entity(item);
      if (!g.is_item(item))
        throw DataError("sample " + s.id + ": entity " + std::to_string(item) +
                        " mentioned as item but not in the item set");
    }
    for (int64_t e : turn.entities) g.validate_entity(e);
  }
}

namespace {

DialogueSample sample_from_json(const json& j) {
  DialogueSample s;
  s.id = j.at("id").get<std::string>();
  s.target_turn = j.at("target_turn").get<int64_t>();
  for (const auto& jt : j.at("turns")) {
    DialogueTurn turn;
    const std::string speaker = jt.at("speaker").get<std::string>();
    if (speaker != "user" && speaker != "recommender")
      throw DataError("sample " + s.id + ": bad speaker '" + speaker + "'");
    turn.recommender = speaker == "recommender";
    turn.text = jt.at("text").get<std::string>();
    turn.items = jt.at("items").get<std::vector<int64_t>>();
    turn.entities = jt.at("entities").get<std::vector<int64_t>>();
    s.turns.push_back(std::move(turn));
  }
  return s;
}

json sample_to_json(const DialogueSample& s) {
  json turns = json::array();
  for (const auto& t : s.turns) {
    turns.push_back({{"speaker", t.recommender ? "recommender" : "user"},
                     {"text", t.text},
                     {"items", t.items},
                     {"entities", t.entities}});
  }
  return json{{"id", s.id}, {"turns", turns}, {"target_turn", s.target_turn}};
}

}  // namespace

std::vector<DialogueSample> load_corpus_file(const std::string& path, const KnowledgeGraph& g) {
  std::ifstream in(path);
  if (!in) throw DataError("corpus: cannot open " + path);
  std::vector<DialogueSample> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("corpus: " + path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    DialogueSample s = sample_from_json(j);
    validate_sample(s, g);
    out.push_back(std::move(s));
  }
  return out;
}

void save_corpus_file(const std::vector<DialogueSample>& samples, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("corpus: cannot write " + path);
  for (const auto& s : samples) out << sample_to_json(s).dump() << '\n';
}

Corpus load_corpus_dir(const std::string& dir, const KnowledgeGraph& g) {
  Corpus c;
  c.train = load_corpus_file(dir + "/corpus.train.jsonl", g);
  c.valid = load_corpus_file(dir + "/corpus.valid.jsonl", g);
  c.test = load_corpus_file(dir + "/corpus.test.jsonl", g);
  return c;
}

void save_corpus_dir(const Corpus& corpus, const std::string& dir) {
  save_corpus_file(corpus.train, dir + "/corpus.train.jsonl");
  save_corpus_file(corpus.valid, dir + "/corpus.valid.jsonl");
  save_corpus_file(corpus.test, dir + "/corpus.test.jsonl");
}

CorpusStats corpus_stats(const Corpus& corpus, const KnowledgeGraph& g) {
  CorpusStats st;
  int64_t words = 0;
  for (const auto* split : {&corpus.train, &corpus.valid, &corpus.test}) {
    st.conversations += static_cast<int64_t>(split->size());
    for (const auto& s : *split) {
      st.utterances += static_cast<int64_t>(s.turns.size());
      for (const auto& t : s.turns)
        words += static_cast<int64_t>(tokenize_words(t.text).size());
    }
  }
  st.words_per_utterance =
      st.utterances > 0 ? static_cast<double>(words) / static_cast<double>(st.utterances) : 0.0;
  st.entities = g.num_entities();
  st.items = static_cast<int64_t>(g.item_ids().size());
  return st;
}

namespace {

std::string join_names(const KnowledgeGraph& g, const std::vector<int64_t>& ids) {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ids.size() == 2 ? " and " : (i + 1 == ids.size() ? " and " : " , ");
    out += g.entity_name(ids[i]);
  }
  return out;
}

}  // namespace

Corpus generate_synthetic_corpus(const KnowledgeGraph& g, const SyntheticCorpusParams& params) {
  const auto& items = g.item_ids();
  if (static_cast<int64_t>(items.size()) < 20)
    throw DataError("synthetic corpus: graph has " + std::to_string(items.size()) +
                    " items, need >= 20");
  if (params.n_dialogues < 3) throw ConfigError("synthetic corpus: need >= 3 dialogues");

  static const char* kOpeners[] = {
      "hi , i am looking for something like %s .",
      "hello , i really love %s , any ideas ?",
      "hey there , i want a movie about %s .",
      "i enjoyed %s a lot , what should i watch next ?",
      "good evening , can you recommend something close to %s ?"};
  static const char* kAcks[] = {"sure , what else do you like ?",
                                "okay , tell me more about your taste .",
                                "got it , anything else you enjoy ?"};
  static const char* kSecond[] = {"i also like %s .", "maybe something with %s ?",
                                  "oh , and %s is great too ."};
  static const char* kRecOne[] = {
      "have you seen %s ? i think you will like it .",
      "how about %s ? it is a great pick .",
      "you should try %s , it fits what you like .",
      "%s might be perfect for you .",
      "i would go with %s tonight ."};
  static const char* kRecTwo[] = {
      "have you seen %s ? also %s is great .",
      "i suggest %s , and %s as a backup .",
      "two picks for you : %s and %s ."};
  static const char* kChitchat[] = {"tell me a bit more about what you enjoy .",
                                    "what kind of story are you in the mood for ?"};

  auto fill = [](const char* tmpl, const std::vector<std::string>& args) {
    std::string out;
    size_t arg = 0;
    for (const char* p = tmpl; *p; ++p) {
      if (*p == '%' && *(p + 1) == 's') {
        out += args.at(arg++);
        ++p;
      } else {
        out.push_back(*p);
      }
    }
    return out;
  };

  Rng rng = Rng(params.seed).fork(0xC0D9);
  std::vector<int64_t> non_items;
  for (int64_t e = 0; e < g.num_entities(); ++e)
    if (!g.is_item(e)) non_items.push_back(e);

  std::vector<DialogueSample> all;
  for (int64_t d = 0; d < params.n_dialogues; ++d) {
    DialogueSample s;
    {
      std::ostringstream id;
      id << "dlg_" << params.seed << "_" << d;
      s.id = id.str();
    }

    // 1-3 seed entities, biased toward attributes
    const int64_t n_seeds = rng.uniform_int(1, 3);
    std::vector<int64_t> seeds;
    while (static_cast<int64_t>(seeds.size()) < n_seeds) {
      int64_t e;
      if (!non_items.empty() && rng.uniform() < 0.7)
        e = non_items[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(non_items.size()) - 1))];
      else
        e = items[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
      if (std::find(seeds.begin(), seeds.end(), e) == seeds.end()) seeds.push_back(e);
    }

    // opener mentions all but (possibly) the last seed
    std::vector<int64_t> opener_seeds = seeds;
    std::vector<int64_t> later_seed;
    if (seeds.size() > 1 && rng.uniform() < 0.4) {
      later_seed.push_back(opener_seeds.back());
      opener_seeds.pop_back();
    }

    DialogueTurn opener;
    opener.recommender = false;
    opener.text = fill(kOpeners[static_cast<size_t>(rng.uniform_int(0, 4))],
                       {join_names(g, opener_seeds)});
    opener.entities = opener_seeds;
    for (int64_t e : opener_seeds)
      if (g.is_item(e)) opener.items.push_back(e);
    s.turns.push_back(opener);

    if (!later_seed.empty()) {
      DialogueTurn ack;
      ack.recommender = true;
      ack.text = kAcks[static_cast<size_t>(rng.uniform_int(0, 2))];
      s.turns.push_back(ack);

      DialogueTurn second;
      second.recommender = false;
      second.text = fill(kSecond[static_cast<size_t>(rng.uniform_int(0, 2))],
                         {g.entity_name(later_seed[0])});
      second.entities = later_seed;
      if (g.is_item(later_seed[0])) second.items.push_back(later_seed[0]);
      s.turns.push_back(second);
    }

    DialogueTurn target;
    target.recommender = true;
    if (rng.uniform() < params.p_chitchat) {
      target.text = kChitchat[static_cast<size_t>(rng.uniform_int(0, 1))];
    } else {
      // gold from the 2-hop neighborhood of a random seed with p_signal
      std::vector<int64_t> golds;
      int64_t gold = -1;
      if (rng.uniform() < params.p_signal) {
        const int64_t anchor =
            seeds[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(seeds.size()) - 1))];
        std::vector<int64_t> cand;
        for (int64_t e : g.undirected_within(anchor, 2))
          if (g.is_item(e)) cand.push_back(e);
        std::vector<int64_t> fresh;
        for (int64_t c : cand)
          if (std::find(seeds.begin(), seeds.end(), c) == seeds.end()) fresh.push_back(c);
        const auto& pool = fresh.empty() ? cand : fresh;
        gold = pool[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(pool.size()) - 1))];
      } else {
        gold = items[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
      }
      golds.push_back(gold);
      if (rng.uniform() < params.p_second_gold) {
        const int64_t extra =
            items[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(items.size()) - 1))];
        if (extra != gold) golds.push_back(extra);
      }
      if (golds.size() == 2) {
        target.text = fill(kRecTwo[static_cast<size_t>(rng.uniform_int(0, 2))],
                           {g.entity_name(golds[0]), g.entity_name(golds[1])});
      } else {
        target.text = fill(kRecOne[static_cast<size_t>(rng.uniform_int(0, 4))],
                           {g.entity_name(golds[0])});
      }
      target.items = golds;
      target.entities = golds;
    }
    s.target_turn = static_cast<int64_t>(s.turns.size());
    s.turns.push_back(target);
    all.push_back(std::move(s));
  }

  // seed-pinned 80/10/10 split
  std::vector<size_t> order(all.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = Rng(params.seed).fork(0x5917);
  split_rng.shuffle(order);
  const size_t n_train = static_cast<size_t>(0.8 * static_cast<double>(all.size()));
  const size_t n_valid = static_cast<size_t>(0.1 * static_cast<double>(all.size()));
  Corpus corpus;
  for (size_t i = 0; i < order.size(); ++i) {
    auto& dst = i < n_train ? corpus.train : (i < n_train + n_valid ? corpus.valid : corpus.test);
    dst.push_back(all[order[i]]);
  }
  return corpus;
}

Vocabulary build_vocabulary(const Corpus& corpus, const KnowledgeGraph& g) {
  Vocabulary vocab;
  for (const auto& s : corpus.train)
    for (const auto& t : s.turns)
      for (const auto& tok : tokenize_words(t.text)) vocab.add(tok);
  for (int64_t e = 0; e < g.num_entities(); ++e)
    for (const auto& tok : tokenize_words(g.entity_name(e))) vocab.add(tok);
  // speaker tags used by context assembly
  vocab.add("user");
  vocab.add("rec");
  vocab.add(":");
  return vocab;
}

std::vector<int64_t> context_token_ids(const DialogueSample& s, const Vocabulary& vocab,
                                       int64_t max_tokens) {
  std::vector<int64_t> ids;
  for (int64_t t = 0; t < s.target_turn; ++t) {
    const auto& turn = s.turns[static_cast<size_t>(t)];
    ids.push_back(vocab.id(turn.recommender ? "rec" : "user"));
    ids.push_back(vocab.id(":"));
    for (int64_t tok : vocab.encode(turn.text)) ids.push_back(tok);
  }
  if (static_cast<int64_t>(ids.size()) > max_tokens)
    ids.erase(ids.begin(), ids.end() - max_tokens);
  return ids;
}

}  // namespace curec
