#include "rltm/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace rltm {

static size_t doc_token_count(const EncodedDocument& doc) {
  size_t n = doc.title.size();
  for (const auto& s : doc.sentences) n += s.size();
  return n;
}

CorpusStats CorpusStats::build(const std::vector<EncodedDocument>& docs) {
  if (docs.empty()) throw DataError("bm25: empty corpus");
  CorpusStats stats;
  stats.doc_count = docs.size();
  double total_len = 0;
  for (const auto& doc : docs) {
    const size_t len = doc_token_count(doc);
    stats.doc_length[doc.doc_id] = len;
    total_len += static_cast<double>(len);
    std::set<TokenId> uniq(doc.title.begin(), doc.title.end());
    for (const auto& s : doc.sentences) uniq.insert(s.begin(), s.end());
    for (TokenId t : uniq) stats.doc_frequency[t] += 1;
  }
  stats.avg_doc_length = total_len / static_cast<double>(stats.doc_count);
  if (!(stats.avg_doc_length > 0)) throw DataError("bm25: corpus has no tokens");
  return stats;
}

double bm25_score(std::span<const TokenId> query_ids, const EncodedDocument& doc,
                  const CorpusStats& stats, const Bm25Params& params) {
  std::unordered_map<TokenId, size_t> tf;
  for (TokenId t : doc.title) tf[t] += 1;
  for (const auto& s : doc.sentences) {
    for (TokenId t : s) tf[t] += 1;
  }
  const double doc_len = static_cast<double>(doc_token_count(doc));
  const double norm = params.k1 * (1 - params.b + params.b * doc_len / stats.avg_doc_length);

  std::set<TokenId> uniq(query_ids.begin(), query_ids.end());
  double score = 0;
  for (TokenId t : uniq) {
    auto it = tf.find(t);
    if (it == tf.end()) continue;
    const double f = static_cast<double>(it->second);
    auto df_it = stats.doc_frequency.find(t);
    const double df = df_it == stats.doc_frequency.end() ? 0.0 : static_cast<double>(df_it->second);
    const double n = static_cast<double>(stats.doc_count);
    const double idf = std::log(1 + (n - df + 0.5) / (df + 0.5));
    score += idf * f * (params.k1 + 1) / (f + norm);
  }
  return score;
}

SelectedSentences select_firstk(const EncodedDocument& doc, size_t k) {
  if (k < 1) throw ConfigError("select_firstk: K must be >= 1");
  SelectedSentences sel;
  sel.indices.resize(std::min(k, doc.sentence_count()));
  std::iota(sel.indices.begin(), sel.indices.end(), 0);
  return sel;
}

SelectedSentences select_random(const EncodedDocument& doc, size_t k, Rng& rng) {
  if (k < 1) throw ConfigError("select_random: K must be >= 1");
  const size_t t_count = doc.sentence_count();
  SelectedSentences sel;
  if (k >= t_count) {
    sel.indices.resize(t_count);
    std::iota(sel.indices.begin(), sel.indices.end(), 0);
    return sel;
  }
  std::vector<size_t> order(t_count);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  sel.indices.assign(order.begin(), order.begin() + k);
  return sel;
}

}  // namespace rltm
