#pragma once

#include <span>
#include <unordered_map>
#include <vector>

#include "rltm/corpus.hpp"
#include "rltm/rng.hpp"
#include "rltm/selector.hpp"

namespace rltm {

// Corpus statistics for BM25 over title+body token ids.
struct CorpusStats {
  std::unordered_map<TokenId, size_t> doc_frequency;
  std::unordered_map<std::string, size_t> doc_length;  // by doc_id
  double avg_doc_length = 0;
  size_t doc_count = 0;

  static CorpusStats build(const std::vector<EncodedDocument>& docs);
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Okapi BM25 with the non-negative smoothed IDF ln(1 + (N - df + 0.5)/(df + 0.5)),
// scored over the unique query terms against title+body.
double bm25_score(std::span<const TokenId> query_ids, const EncodedDocument& doc,
                  const CorpusStats& stats, const Bm25Params& params = {});

// Degenerate selection strategies for the ablations. Both prepend the title
// implicitly via score_document; indices cover body sentences only.
SelectedSentences select_firstk(const EncodedDocument& doc, size_t k);
SelectedSentences select_random(const EncodedDocument& doc, size_t k, Rng& rng);

}  // namespace rltm
