#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "rltm/error.hpp"

namespace rltm {

using TokenId = uint32_t;

inline constexpr TokenId kPadId = 0;
inline constexpr TokenId kUnkId = 1;
inline constexpr size_t kReservedIds = 2;

// Lowercased whitespace tokenizer; ASCII punctuation is stripped from token
// edges and empty tokens dropped. Non-ASCII bytes pass through untouched, so
// any pre-segmented text works.
std::vector<std::string> tokenize(const std::string& text);

// Splits on sentence-terminal punctuation: . ! ? and their fullwidth/CJK
// equivalents. Segments are trimmed, empties dropped, and the result truncated
// to max_sentences (0 = unlimited).
std::vector<std::string> segment_sentences(const std::string& body, size_t max_sentences);

class Vocabulary {
 public:
  Vocabulary();

  // Counts must cover the whole corpus; retains the max_size-2 most frequent
  // tokens (ties broken lexicographically) after PAD and UNK.
  static Vocabulary build(const std::map<std::string, uint64_t>& counts, size_t max_size);

  TokenId lookup(const std::string& token) const;
  const std::string& token(TokenId id) const { return id_to_token_[id]; }
  size_t size() const { return id_to_token_.size(); }

  std::vector<TokenId> encode(const std::vector<std::string>& tokens, size_t cap) const;

  // Fingerprint of the id->token list; checkpoints bind to it.
  uint64_t hash() const;

  void save(const std::string& path, uint64_t config_hash, uint64_t seed) const;
  static Vocabulary load(const std::string& path);

 private:
  std::unordered_map<std::string, TokenId> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct Caps {
  size_t query_len = 16;
  size_t sentence_len = 64;
  size_t sentences = 64;
};

struct EncodedDocument {
  std::string doc_id;
  std::vector<TokenId> title;
  std::vector<std::vector<TokenId>> sentences;
  size_t raw_sentence_count = 0;

  size_t sentence_count() const { return sentences.size(); }
};

struct Query {
  std::string query_id;
  std::vector<TokenId> tokens;
};

struct GradedJudgment {
  std::string query_id;
  std::string doc_id;
  int grade = 0;
};

struct RawDocument {
  std::string doc_id;
  std::string title;
  std::string body;
};

struct RawQuery {
  std::string query_id;
  std::string text;
};

EncodedDocument encode_document(const RawDocument& raw, const Vocabulary& vocab, const Caps& caps);
Query encode_query(const RawQuery& raw, const Vocabulary& vocab, const Caps& caps);

// --- record files -----------------------------------------------------------
// Documents and queries are line-delimited JSON records; judgments use the
// 4-column qrels format (query_id, ignored, doc_id, grade). Readers reject
// malformed lines with line numbers.

std::vector<RawDocument> read_documents(const std::string& path);
std::vector<RawQuery> read_queries(const std::string& path);
std::vector<GradedJudgment> read_judgments(const std::string& path);

void write_documents(const std::string& path, const std::vector<RawDocument>& docs);
void write_queries(const std::string& path, const std::vector<RawQuery>& queries);
void write_judgments(const std::string& path, const std::vector<GradedJudgment>& judgments);

// Planted-sentence ground truth for synthetic corpora, keyed (query_id, doc_id).
using PlantedTruth = std::map<std::pair<std::string, std::string>, std::vector<size_t>>;

void write_planted_truth(const std::string& path, const PlantedTruth& truth);
PlantedTruth read_planted_truth(const std::string& path);

// Encoded view of one split: queries, documents, and the judgments that are
// resolvable within it. Judgments for absent queries are dropped (splits share
// one qrels file); a judged document missing from the corpus is an error.
struct Dataset {
  std::vector<Query> queries;
  std::vector<EncodedDocument> documents;
  std::unordered_map<std::string, size_t> query_index;
  std::unordered_map<std::string, size_t> doc_index;
  std::vector<GradedJudgment> judgments;

  const Query& query(const std::string& query_id) const;
  const EncodedDocument& document(const std::string& doc_id) const;
};

Dataset build_dataset(const std::vector<RawQuery>& queries, const std::vector<RawDocument>& docs,
                      const std::vector<GradedJudgment>& judgments, const Vocabulary& vocab,
                      const Caps& caps);

// --- training pairs ----------------------------------------------------------

struct Triple {
  std::string query_id;
  std::string pos_doc_id;
  std::string neg_doc_id;
  int grade_gap = 0;
};

// Emits per query all (d+, d-) pairs with grade(d+) > grade(d-), uniformly
// subsampled to per_query_budget when there are more (0 = unlimited).
// Deterministic for a given seed; queries with a single grade level
// contribute nothing.
std::vector<Triple> make_triples(const std::vector<GradedJudgment>& judgments,
                                 size_t per_query_budget, uint64_t seed);

// --- synthetic corpus ---------------------------------------------------------

struct SynthConfig {
  size_t background_tokens = 2000;  // noise token pool
  size_t query_tokens = 500;        // query token pool, disjoint from noise
  size_t train_queries = 100;
  size_t val_queries = 20;
  size_t test_queries = 20;
  std::vector<int> grades_per_query = {4, 3, 2, 1, 0, 0, 0, 0, 0, 0};
  size_t sentences_per_doc = 16;
  size_t sentence_len = 12;
  size_t query_len = 4;
  size_t title_len = 4;
  double plant_fraction = 1.0;  // fraction of query tokens in a planted sentence, >= 0.5
  // Probability that a non-planted sentence of a graded document carries a
  // sub-threshold number of query tokens (one less than ceil(|q|/2)). These
  // confusers inflate whole-document term counts without being relevant;
  // grade-0 documents never receive them.
  double confuser_rate = 0.0;

  void validate() const;
};

struct SynthCorpus {
  std::vector<RawQuery> train_queries;
  std::vector<RawQuery> val_queries;
  std::vector<RawQuery> test_queries;
  std::vector<RawDocument> documents;
  std::vector<GradedJudgment> judgments;
  PlantedTruth planted;
};

// Planted-relevance generator: a grade-g document carries exactly g body
// sentences containing at least ceil(|q|/2) of the query's tokens; grade-0
// documents share no token with their query. Titles and noise sentences draw
// from a token pool disjoint from query tokens.
SynthCorpus synth_corpus(const SynthConfig& config, uint64_t seed);

}  // namespace rltm
