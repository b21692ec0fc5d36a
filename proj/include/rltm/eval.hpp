#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "rltm/corpus.hpp"
#include "rltm/matcher.hpp"
#include "rltm/model.hpp"

namespace rltm {

// DCG with gain 2^grade - 1 and discount log(1+rank); NDCG normalizes by the
// ideal (grade-descending) order. All-zero grades score 0 by convention.
// Throws DataError on negative grades.
double ndcg_at_k(std::span<const int> grades_in_rank_order, size_t k, double log_base = 2.0);

// AP over grades binarized at grade >= threshold; no relevant documents -> 0.
double average_precision(std::span<const int> grades_in_rank_order, int threshold);

struct RankedList {
  std::string query_id;
  std::vector<std::string> doc_ids;  // descending score, ties by doc id
  std::vector<int> grades;           // aligned with doc_ids
  std::vector<double> scores;
};

struct QueryMetrics {
  std::string query_id;
  std::map<size_t, double> ndcg;
  double ap = 0;
};

struct MetricsReport {
  std::vector<size_t> ndcg_cutoffs = {1, 3, 5, 10};
  std::map<size_t, double> ndcg;  // mean over queries
  double map = 0;
  size_t query_count = 0;
  std::vector<QueryMetrics> per_query;
};

struct EvalOptions {
  std::vector<size_t> ndcg_cutoffs = {1, 3, 5, 10};
  int map_threshold = 2;
  double ndcg_log_base = 2.0;
  size_t threads = 1;  // per-query scoring parallelism; results are merged in
                       // query order, so the report is thread-count invariant
};

using DocScorer = std::function<double(const Query&, const EncodedDocument&)>;

// Scores every judged (query, document) pair, ranks per query (score
// descending, doc id ascending on ties), and averages the metrics over all
// queries that have judgments.
MetricsReport evaluate(const DocScorer& scorer, const Dataset& data, const EvalOptions& options,
                       std::vector<RankedList>* rankings = nullptr);

// Scorer over a trained model in a fixed mode. sampled/random modes derive a
// per-pair rng substream from the seed so results do not depend on order.
DocScorer neural_scorer(const Model& model, ScoreMode mode, size_t k, uint64_t seed);

void write_run_file(const std::string& path, const std::vector<RankedList>& rankings);

void write_metrics_report(const std::string& path, const MetricsReport& report,
                          uint64_t config_hash, uint64_t seed);

// Fraction of judged grade>0 documents whose top-K body selection intersects
// the planted ground truth. mode must be topk, firstk or random.
double selection_precision(const Model& model, const Dataset& data, const PlantedTruth& truth,
                           size_t k, ScoreMode mode = ScoreMode::topk, uint64_t seed = 0,
                           size_t draws_per_doc = 1);

// --- inference-time benchmark -------------------------------------------------

struct BenchConfig {
  std::vector<size_t> batch_sizes = {32, 64, 128};
  std::vector<size_t> doc_sentences = {40};
  size_t sentence_len = 50;
  size_t title_len = 8;
  size_t query_len = 4;
  size_t k = 3;
  size_t repetitions = 20;
  size_t warmup = 3;
  size_t vocab_size = 5000;
  size_t embed_dim = 64;
  size_t hidden_dim = 64;
  size_t conv_maps = 64;
  std::vector<MatcherKind> matchers = {MatcherKind::knrm, MatcherKind::matchpyramid};
};

struct BenchRow {
  MatcherKind matcher;
  ScoreMode mode;
  size_t batch = 0;
  size_t doc_sentences = 0;
  size_t doc_tokens = 0;
  double median_ms = 0;   // per batch
  double speedup = 0;     // fulldoc time / topk time, filled on topk rows
};

// Times score_document over randomly generated documents (timing does not
// depend on parameter values). Single-threaded by design.
std::vector<BenchRow> bench(const BenchConfig& config, uint64_t seed);

void write_bench_table(const std::string& path, const std::vector<BenchRow>& rows,
                       uint64_t config_hash, uint64_t seed);

}  // namespace rltm
