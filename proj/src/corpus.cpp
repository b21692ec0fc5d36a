#include "rltm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rltm/rng.hpp"

namespace rltm {

static bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

static bool is_ascii_punct(char c) {
  const unsigned char u = static_cast<unsigned char>(c);
  return u < 128 && std::ispunct(u);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  size_t i = 0;
  const size_t n = text.size();
  while (i < n) {
    while (i < n && is_ascii_space(text[i])) ++i;
    size_t j = i;
    while (j < n && !is_ascii_space(text[j])) ++j;
    if (j > i) {
      size_t a = i, b = j;
      while (a < b && is_ascii_punct(text[a])) ++a;
      while (b > a && is_ascii_punct(text[b - 1])) --b;
      if (b > a) {
        std::string tok;
        tok.reserve(b - a);
        for (size_t k = a; k < b; ++k) {
          char c = text[k];
          if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
          tok.push_back(c);
        }
        tokens.push_back(std::move(tok));
      }
    }
    i = j;
  }
  return tokens;
}

std::vector<std::string> segment_sentences(const std::string& body, size_t max_sentences) {
  static const std::string cjk_stop = "\xe3\x80\x82";    // U+3002
  static const std::string cjk_bang = "\xef\xbc\x81";    // U+FF01
  static const std::string cjk_quest = "\xef\xbc\x9f";   // U+FF1F
  std::vector<std::string> sentences;
  auto flush = [&](size_t begin, size_t end) {
    while (begin < end && is_ascii_space(body[begin])) ++begin;
    while (end > begin && is_ascii_space(body[end - 1])) --end;
    if (end > begin) sentences.push_back(body.substr(begin, end - begin));
  };
  size_t start = 0;
  size_t i = 0;
  while (i < body.size()) {
    size_t delim_len = 0;
    const char c = body[i];
    if (c == '.' || c == '!' || c == '?') {
      delim_len = 1;
    } else if (body.compare(i, 3, cjk_stop) == 0 || body.compare(i, 3, cjk_bang) == 0 ||
               body.compare(i, 3, cjk_quest) == 0) {
      delim_len = 3;
    }
    if (delim_len > 0) {
      flush(start, i);
      i += delim_len;
      start = i;
    } else {
      ++i;
    }
  }
  flush(start, body.size());
  if (max_sentences > 0 && sentences.size() > max_sentences) sentences.resize(max_sentences);
  return sentences;
}

Vocabulary::Vocabulary() {
  id_to_token_ = {"<pad>", "<unk>"};
}

Vocabulary Vocabulary::build(const std::map<std::string, uint64_t>& counts, size_t max_size) {
  if (max_size < 3) throw ConfigError("build_vocab: max_size must be >= 3");
  std::vector<std::pair<std::string, uint64_t>> items(counts.begin(), counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const size_t keep = std::min(items.size(), max_size - kReservedIds);
  Vocabulary vocab;
  for (size_t i = 0; i < keep; ++i) {
    vocab.token_to_id_.emplace(items[i].first, static_cast<TokenId>(vocab.id_to_token_.size()));
    vocab.id_to_token_.push_back(items[i].first);
  }
  return vocab;
}

TokenId Vocabulary::lookup(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::vector<std::string>& tokens, size_t cap) const {
  std::vector<TokenId> ids;
  ids.reserve(std::min(tokens.size(), cap));
  for (const auto& t : tokens) {
    if (cap > 0 && ids.size() >= cap) break;
    ids.push_back(lookup(t));
  }
  return ids;
}

uint64_t Vocabulary::hash() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& t : id_to_token_) {
    h = fnv1a(t.data(), t.size(), h);
    h = fnv1a("\n", 1, h);
  }
  return h;
}

void Vocabulary::save(const std::string& path, uint64_t config_hash, uint64_t seed) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("vocab: cannot open for writing: " + path);
  char header[128];
  std::snprintf(header, sizeof(header),
                "# rltm-vocab v1\n# config_hash=%016llx\n# seed=%llu\n# size=%zu\n",
                static_cast<unsigned long long>(config_hash), static_cast<unsigned long long>(seed),
                size());
  out << header;
  for (size_t i = kReservedIds; i < id_to_token_.size(); ++i) out << id_to_token_[i] << "\n";
  if (!out) throw DataError("vocab: write failed: " + path);
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("vocab: cannot open: " + path);
  Vocabulary vocab;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (vocab.token_to_id_.count(line)) {
      throw DataError("vocab: duplicate token at line " + std::to_string(lineno));
    }
    vocab.token_to_id_.emplace(line, static_cast<TokenId>(vocab.id_to_token_.size()));
    vocab.id_to_token_.push_back(line);
  }
  return vocab;
}

EncodedDocument encode_document(const RawDocument& raw, const Vocabulary& vocab, const Caps& caps) {
  EncodedDocument doc;
  doc.doc_id = raw.doc_id;
  doc.title = vocab.encode(tokenize(raw.title), caps.sentence_len);
  const auto sentence_strings = segment_sentences(raw.body, 0);
  doc.raw_sentence_count = sentence_strings.size();
  for (const auto& s : sentence_strings) {
    if (doc.sentences.size() >= caps.sentences) break;
    auto ids = vocab.encode(tokenize(s), caps.sentence_len);
    if (!ids.empty()) doc.sentences.push_back(std::move(ids));
  }
  return doc;
}

Query encode_query(const RawQuery& raw, const Vocabulary& vocab, const Caps& caps) {
  Query q;
  q.query_id = raw.query_id;
  q.tokens = vocab.encode(tokenize(raw.text), caps.query_len);
  return q;
}

// --- record files -----------------------------------------------------------

using nlohmann::json;

static json parse_record(const std::string& line, const std::string& path, size_t lineno) {
  json rec = json::parse(line, nullptr, false);
  if (rec.is_discarded() || !rec.is_object()) {
    throw DataError(path + ":" + std::to_string(lineno) + ": malformed record");
  }
  return rec;
}

static std::string require_string(const json& rec, const char* key, const std::string& path,
                                  size_t lineno) {
  if (!rec.contains(key) || !rec[key].is_string()) {
    throw DataError(path + ":" + std::to_string(lineno) + ": missing string field '" + key + "'");
  }
  return rec[key].get<std::string>();
}

std::vector<RawDocument> read_documents(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("documents: cannot open: " + path);
  std::vector<RawDocument> docs;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_record(line, path, lineno);
    RawDocument d;
    d.doc_id = require_string(rec, "doc_id", path, lineno);
    d.title = require_string(rec, "title", path, lineno);
    d.body = require_string(rec, "body", path, lineno);
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<RawQuery> read_queries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("queries: cannot open: " + path);
  std::vector<RawQuery> queries;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_record(line, path, lineno);
    RawQuery q;
    q.query_id = require_string(rec, "query_id", path, lineno);
    q.text = require_string(rec, "text", path, lineno);
    queries.push_back(std::move(q));
  }
  return queries;
}

std::vector<GradedJudgment> read_judgments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("judgments: cannot open: " + path);
  std::vector<GradedJudgment> judgments;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    GradedJudgment j;
    std::string iteration;
    long grade = -1;
    if (!(ss >> j.query_id >> iteration >> j.doc_id >> grade)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": expected 4 columns");
    }
    if (grade < 0 || grade > 4) {
      throw DataError(path + ":" + std::to_string(lineno) + ": grade out of range [0,4]");
    }
    j.grade = static_cast<int>(grade);
    if (!seen.emplace(j.query_id, j.doc_id).second) {
      throw DataError(path + ":" + std::to_string(lineno) + ": duplicate (query_id, doc_id)");
    }
    judgments.push_back(std::move(j));
  }
  return judgments;
}

void write_documents(const std::string& path, const std::vector<RawDocument>& docs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("documents: cannot open for writing: " + path);
  for (const auto& d : docs) {
    json rec = {{"doc_id", d.doc_id}, {"title", d.title}, {"body", d.body}};
    out << rec.dump() << "\n";
  }
}

void write_queries(const std::string& path, const std::vector<RawQuery>& queries) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("queries: cannot open for writing: " + path);
  for (const auto& q : queries) {
    json rec = {{"query_id", q.query_id}, {"text", q.text}};
    out << rec.dump() << "\n";
  }
}

void write_judgments(const std::string& path, const std::vector<GradedJudgment>& judgments) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("judgments: cannot open for writing: " + path);
  for (const auto& j : judgments) {
    out << j.query_id << " 0 " << j.doc_id << " " << j.grade << "\n";
  }
}

void write_planted_truth(const std::string& path, const PlantedTruth& truth) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("planted truth: cannot open for writing: " + path);
  for (const auto& [key, indices] : truth) {
    json rec = {{"query_id", key.first}, {"doc_id", key.second}, {"planted", indices}};
    out << rec.dump() << "\n";
  }
}

PlantedTruth read_planted_truth(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("planted truth: cannot open: " + path);
  PlantedTruth truth;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec = parse_record(line, path, lineno);
    const std::string qid = require_string(rec, "query_id", path, lineno);
    const std::string did = require_string(rec, "doc_id", path, lineno);
    if (!rec.contains("planted") || !rec["planted"].is_array()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": missing 'planted' array");
    }
    truth[{qid, did}] = rec["planted"].get<std::vector<size_t>>();
  }
  return truth;
}

const Query& Dataset::query(const std::string& query_id) const {
  auto it = query_index.find(query_id);
  if (it == query_index.end()) throw DataError("dataset: unknown query '" + query_id + "'");
  return queries[it->second];
}

const EncodedDocument& Dataset::document(const std::string& doc_id) const {
  auto it = doc_index.find(doc_id);
  if (it == doc_index.end()) throw DataError("dataset: unknown document '" + doc_id + "'");
  return documents[it->second];
}

Dataset build_dataset(const std::vector<RawQuery>& queries, const std::vector<RawDocument>& docs,
                      const std::vector<GradedJudgment>& judgments, const Vocabulary& vocab,
                      const Caps& caps) {
  Dataset data;
  for (const auto& raw : queries) {
    Query q = encode_query(raw, vocab, caps);
    if (q.tokens.empty()) {
      throw DataError("dataset: query '" + raw.query_id + "' is empty after encoding");
    }
    if (!data.query_index.emplace(q.query_id, data.queries.size()).second) {
      throw DataError("dataset: duplicate query_id '" + q.query_id + "'");
    }
    data.queries.push_back(std::move(q));
  }
  for (const auto& raw : docs) {
    EncodedDocument d = encode_document(raw, vocab, caps);
    if (!data.doc_index.emplace(d.doc_id, data.documents.size()).second) {
      throw DataError("dataset: duplicate doc_id '" + d.doc_id + "'");
    }
    data.documents.push_back(std::move(d));
  }
  for (const auto& j : judgments) {
    if (!data.query_index.count(j.query_id)) continue;
    if (!data.doc_index.count(j.doc_id)) {
      throw DataError("dataset: judgment references unknown document '" + j.doc_id + "'");
    }
    data.judgments.push_back(j);
  }
  return data;
}

// --- training pairs ----------------------------------------------------------

std::vector<Triple> make_triples(const std::vector<GradedJudgment>& judgments,
                                 size_t per_query_budget, uint64_t seed) {
  std::vector<std::string> query_order;
  std::map<std::string, std::vector<const GradedJudgment*>> by_query;
  for (const auto& j : judgments) {
    auto [it, inserted] = by_query.try_emplace(j.query_id);
    if (inserted) query_order.push_back(j.query_id);
    it->second.push_back(&j);
  }

  std::vector<Triple> triples;
  for (const auto& qid : query_order) {
    const auto& docs = by_query[qid];
    std::vector<Triple> pairs;
    for (const auto* pos : docs) {
      for (const auto* neg : docs) {
        if (pos->grade > neg->grade) {
          pairs.push_back({qid, pos->doc_id, neg->doc_id, pos->grade - neg->grade});
        }
      }
    }
    if (per_query_budget > 0 && pairs.size() > per_query_budget) {
      Rng rng(substream_seed(seed, fnv1a(qid.data(), qid.size())));
      rng.shuffle(pairs);
      pairs.resize(per_query_budget);
    }
    triples.insert(triples.end(), pairs.begin(), pairs.end());
  }
  return triples;
}

// --- synthetic corpus ---------------------------------------------------------

void SynthConfig::validate() const {
  if (background_tokens < 1 || query_tokens < query_len) {
    throw ConfigError("synth: token pools too small");
  }
  if (query_len < 1 || sentence_len < 1 || sentences_per_doc < 1) {
    throw ConfigError("synth: lengths must be >= 1");
  }
  if (plant_fraction < 0.5 || plant_fraction > 1.0) {
    throw ConfigError("synth: plant_fraction must be in [0.5, 1]");
  }
  if (confuser_rate < 0.0 || confuser_rate > 1.0) {
    throw ConfigError("synth: confuser_rate must be in [0, 1]");
  }
  int max_grade = 0;
  for (int g : grades_per_query) {
    if (g < 0 || g > 4) throw ConfigError("synth: grades must be in [0, 4]");
    max_grade = std::max(max_grade, g);
  }
  if (static_cast<size_t>(max_grade) > sentences_per_doc) {
    throw ConfigError("synth: planting needs more sentences than sentences_per_doc");
  }
  const size_t plant_count = static_cast<size_t>(std::ceil(plant_fraction * query_len));
  if (plant_count > sentence_len) {
    throw ConfigError("synth: planted tokens exceed sentence_len");
  }
}

static std::string background_token(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "n%05u", static_cast<unsigned>(i));
  return buf;
}

static std::string query_token(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "q%05u", static_cast<unsigned>(i));
  return buf;
}

static std::vector<size_t> sample_distinct(Rng& rng, size_t pool, size_t count) {
  std::set<size_t> chosen;
  std::vector<size_t> out;
  while (out.size() < count) {
    const size_t c = rng.uniform_index(pool);
    if (chosen.insert(c).second) out.push_back(c);
  }
  return out;
}

static std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) s += ' ';
    s += tokens[i];
  }
  return s;
}

SynthCorpus synth_corpus(const SynthConfig& config, uint64_t seed) {
  config.validate();
  SynthCorpus corpus;

  const size_t total = config.train_queries + config.val_queries + config.test_queries;
  const size_t plant_count = std::max<size_t>(
      static_cast<size_t>(std::ceil(config.plant_fraction * config.query_len)),
      (config.query_len + 1) / 2);

  for (size_t qi = 0; qi < total; ++qi) {
    Rng rng(substream_seed(seed, qi));
    const char* split = qi < config.train_queries                        ? "train"
                        : qi < config.train_queries + config.val_queries ? "val"
                                                                         : "test";
    char qid[32];
    std::snprintf(qid, sizeof(qid), "%s_q%05zu", split, qi);

    std::vector<std::string> q_tokens;
    for (size_t t : sample_distinct(rng, config.query_tokens, config.query_len)) {
      q_tokens.push_back(query_token(t));
    }
    RawQuery query{qid, join(q_tokens)};
    if (std::string(split) == "train") {
      corpus.train_queries.push_back(query);
    } else if (std::string(split) == "val") {
      corpus.val_queries.push_back(query);
    } else {
      corpus.test_queries.push_back(query);
    }

    auto noise_sentence = [&]() {
      std::vector<std::string> toks(config.sentence_len);
      for (auto& t : toks) t = background_token(rng.uniform_index(config.background_tokens));
      return toks;
    };

    for (size_t di = 0; di < config.grades_per_query.size(); ++di) {
      const int grade = config.grades_per_query[di];
      char did[48];
      std::snprintf(did, sizeof(did), "%s_d%02zu", qid, di);

      std::vector<size_t> planted_idx;
      if (grade > 0) {
        planted_idx = sample_distinct(rng, config.sentences_per_doc, static_cast<size_t>(grade));
        std::sort(planted_idx.begin(), planted_idx.end());
      }

      const size_t confuser_count = plant_count > 1 ? plant_count - 1 : 0;
      std::vector<std::string> sentences;
      for (size_t si = 0; si < config.sentences_per_doc; ++si) {
        const bool is_planted =
            std::binary_search(planted_idx.begin(), planted_idx.end(), si);
        std::vector<std::string> toks;
        if (is_planted) {
          for (size_t t : sample_distinct(rng, config.query_len, plant_count)) {
            toks.push_back(q_tokens[t]);
          }
          while (toks.size() < config.sentence_len) {
            toks.push_back(background_token(rng.uniform_index(config.background_tokens)));
          }
          rng.shuffle(toks);
        } else if (grade > 0 && confuser_count > 0 && rng.uniform() < config.confuser_rate) {
          for (size_t t : sample_distinct(rng, config.query_len, confuser_count)) {
            toks.push_back(q_tokens[t]);
          }
          while (toks.size() < config.sentence_len) {
            toks.push_back(background_token(rng.uniform_index(config.background_tokens)));
          }
          rng.shuffle(toks);
        } else {
          toks = noise_sentence();
        }
        sentences.push_back(join(toks));
      }

      std::vector<std::string> title_tokens(config.title_len);
      for (auto& t : title_tokens) t = background_token(rng.uniform_index(config.background_tokens));

      std::string body;
      for (const auto& s : sentences) {
        body += s;
        body += ". ";
      }
      corpus.documents.push_back({did, join(title_tokens), body});
      corpus.judgments.push_back({qid, did, grade});
      if (grade > 0) corpus.planted[{qid, did}] = planted_idx;
    }
  }
  return corpus;
}

}  // namespace rltm
