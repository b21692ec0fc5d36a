#include "rltm/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "rltm/baselines.hpp"
#include "rltm/rng.hpp"

namespace rltm {

double ndcg_at_k(std::span<const int> grades_in_rank_order, size_t k, double log_base) {
  if (k < 1) throw ConfigError("ndcg: k must be >= 1");
  for (int g : grades_in_rank_order) {
    if (g < 0) throw DataError("ndcg: negative grade");
  }
  const double log_denom = std::log(log_base);
  auto dcg = [&](std::span<const int> grades) {
    double acc = 0;
    const size_t n = std::min(k, grades.size());
    for (size_t m = 1; m <= n; ++m) {
      const double gain = std::pow(2.0, grades[m - 1]) - 1;
      acc += gain / (std::log(1.0 + static_cast<double>(m)) / log_denom);
    }
    return acc;
  };
  std::vector<int> ideal(grades_in_rank_order.begin(), grades_in_rank_order.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<int>());
  const double idcg = dcg(ideal);
  if (idcg == 0) return 0;
  return dcg(grades_in_rank_order) / idcg;
}

double average_precision(std::span<const int> grades_in_rank_order, int threshold) {
  size_t relevant_seen = 0;
  double acc = 0;
  for (size_t rank = 1; rank <= grades_in_rank_order.size(); ++rank) {
    if (grades_in_rank_order[rank - 1] >= threshold) {
      ++relevant_seen;
      acc += static_cast<double>(relevant_seen) / static_cast<double>(rank);
    }
  }
  if (relevant_seen == 0) return 0;
  return acc / static_cast<double>(relevant_seen);
}

MetricsReport evaluate(const DocScorer& scorer, const Dataset& data, const EvalOptions& options,
                       std::vector<RankedList>* rankings) {
  // Group judgments by query, keeping the query file order.
  std::map<std::string, std::vector<const GradedJudgment*>> by_query;
  std::vector<std::string> order;
  for (const auto& j : data.judgments) {
    auto [it, inserted] = by_query.try_emplace(j.query_id);
    if (inserted) order.push_back(j.query_id);
    it->second.push_back(&j);
  }

  auto rank_one = [&](const std::string& qid) {
    const Query& query = data.query(qid);
    struct Entry {
      const GradedJudgment* judgment;
      double score;
    };
    std::vector<Entry> entries;
    for (const auto* j : by_query.at(qid)) {
      entries.push_back({j, scorer(query, data.document(j->doc_id))});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.judgment->doc_id < b.judgment->doc_id;
    });
    RankedList ranked;
    ranked.query_id = qid;
    for (const auto& e : entries) {
      ranked.doc_ids.push_back(e.judgment->doc_id);
      ranked.grades.push_back(e.judgment->grade);
      ranked.scores.push_back(e.score);
    }
    return ranked;
  };

  // Per-query scoring is read-only and lands in a fixed slot, so the merge
  // order (and with it every output byte) is independent of the thread count.
  std::vector<RankedList> ranked_lists(order.size());
  const size_t workers = std::max<size_t>(1, std::min(options.threads, order.size()));
  if (workers == 1) {
    for (size_t i = 0; i < order.size(); ++i) ranked_lists[i] = rank_one(order[i]);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < order.size(); i = next.fetch_add(1)) {
          ranked_lists[i] = rank_one(order[i]);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  MetricsReport report;
  report.ndcg_cutoffs = options.ndcg_cutoffs;
  for (size_t k : options.ndcg_cutoffs) report.ndcg[k] = 0;

  for (auto& ranked : ranked_lists) {
    QueryMetrics qm;
    qm.query_id = ranked.query_id;
    for (size_t k : options.ndcg_cutoffs) {
      qm.ndcg[k] = ndcg_at_k(ranked.grades, k, options.ndcg_log_base);
      report.ndcg[k] += qm.ndcg[k];
    }
    qm.ap = average_precision(ranked.grades, options.map_threshold);
    report.map += qm.ap;
    report.per_query.push_back(std::move(qm));
    if (rankings) rankings->push_back(std::move(ranked));
    ++report.query_count;
  }

  if (report.query_count > 0) {
    for (size_t k : options.ndcg_cutoffs) report.ndcg[k] /= static_cast<double>(report.query_count);
    report.map /= static_cast<double>(report.query_count);
  }
  return report;
}

DocScorer neural_scorer(const Model& model, ScoreMode mode, size_t k, uint64_t seed) {
  return [&model, mode, k, seed](const Query& query, const EncodedDocument& doc) {
    if (mode == ScoreMode::sampled || mode == ScoreMode::random) {
      const uint64_t pair_hash =
          fnv1a(doc.doc_id.data(), doc.doc_id.size(),
                fnv1a(query.query_id.data(), query.query_id.size()));
      Rng rng(substream_seed(seed, pair_hash));
      return static_cast<double>(score_document(model, query, doc, mode, k, &rng).score);
    }
    return static_cast<double>(score_document(model, query, doc, mode, k).score);
  };
}

void write_run_file(const std::string& path, const std::vector<RankedList>& rankings) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("run file: cannot open for writing: " + path);
  char buf[64];
  for (const auto& ranked : rankings) {
    for (size_t i = 0; i < ranked.doc_ids.size(); ++i) {
      std::snprintf(buf, sizeof(buf), " %zu %.6f\n", i + 1, ranked.scores[i]);
      out << ranked.query_id << " " << ranked.doc_ids[i] << buf;
    }
  }
}

void write_metrics_report(const std::string& path, const MetricsReport& report,
                          uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("metrics report: cannot open for writing: " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "# rltm-metrics v1\n# config_hash=%016llx\n# seed=%llu\n",
                static_cast<unsigned long long>(config_hash),
                static_cast<unsigned long long>(seed));
  out << buf;
  out << "query_count " << report.query_count << "\n";
  for (size_t k : report.ndcg_cutoffs) {
    std::snprintf(buf, sizeof(buf), "ndcg@%zu %.17g\n", k, report.ndcg.at(k));
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "map %.17g\n", report.map);
  out << buf;
  for (const auto& qm : report.per_query) {
    out << "query " << qm.query_id;
    for (size_t k : report.ndcg_cutoffs) {
      std::snprintf(buf, sizeof(buf), " ndcg@%zu=%.17g", k, qm.ndcg.at(k));
      out << buf;
    }
    std::snprintf(buf, sizeof(buf), " ap=%.17g\n", qm.ap);
    out << buf;
  }
}

double selection_precision(const Model& model, const Dataset& data, const PlantedTruth& truth,
                           size_t k, ScoreMode mode, uint64_t seed, size_t draws_per_doc) {
  if (mode != ScoreMode::topk && mode != ScoreMode::firstk && mode != ScoreMode::random) {
    throw ConfigError("selection_precision: mode must be topk, firstk or random");
  }
  if (truth.empty()) throw DataError("selection_precision: dataset lacks planted ground truth");
  size_t hits = 0, total = 0;
  for (const auto& j : data.judgments) {
    if (j.grade <= 0) continue;
    auto it = truth.find({j.query_id, j.doc_id});
    if (it == truth.end()) {
      throw DataError("selection_precision: no ground truth for (" + j.query_id + ", " + j.doc_id +
                      ")");
    }
    const auto& planted = it->second;
    const Query& query = data.query(j.query_id);
    const EncodedDocument& doc = data.document(j.doc_id);
    if (doc.sentence_count() == 0) continue;
    const size_t draws = mode == ScoreMode::random ? draws_per_doc : 1;
    for (size_t d = 0; d < draws; ++d) {
      SelectedSentences sel;
      if (mode == ScoreMode::topk) {
        sel = select_topk(compute_policy(model, query, doc).policy, k);
      } else if (mode == ScoreMode::firstk) {
        sel = select_firstk(doc, k);
      } else {
        const uint64_t pair_hash = fnv1a(j.doc_id.data(), j.doc_id.size(),
                                         fnv1a(j.query_id.data(), j.query_id.size(), d + 1));
        Rng rng(substream_seed(seed, pair_hash));
        sel = select_random(doc, k, rng);
      }
      bool hit = false;
      for (size_t idx : sel.indices) {
        if (std::binary_search(planted.begin(), planted.end(), idx)) {
          hit = true;
          break;
        }
      }
      hits += hit ? 1 : 0;
      ++total;
    }
  }
  if (total == 0) throw DataError("selection_precision: no graded documents to measure");
  return static_cast<double>(hits) / static_cast<double>(total);
}

// --- benchmark ----------------------------------------------------------------

static std::vector<TokenId> random_ids(Rng& rng, size_t len, size_t vocab_size) {
  std::vector<TokenId> ids(len);
  for (auto& id : ids) {
    id = static_cast<TokenId>(kReservedIds + rng.uniform_index(vocab_size - kReservedIds));
  }
  return ids;
}

std::vector<BenchRow> bench(const BenchConfig& config, uint64_t seed) {
  using clock = std::chrono::steady_clock;
  std::vector<BenchRow> rows;

  for (MatcherKind kind : config.matchers) {
    ModelConfig mc;
    mc.vocab_size = config.vocab_size;
    mc.embed_dim = config.embed_dim;
    mc.hidden_dim = config.hidden_dim;
    mc.conv_maps = config.conv_maps;
    mc.matcher = kind;
    mc.k_sentences = config.k;
    Model model = Model::create(mc, seed);

    for (size_t sentences : config.doc_sentences) {
      // One pool of documents per length; batches reuse it round-robin.
      Rng rng(substream_seed(seed, sentences * 31 + static_cast<size_t>(kind)));
      const size_t pool_size = *std::max_element(config.batch_sizes.begin(),
                                                 config.batch_sizes.end());
      std::vector<EncodedDocument> pool(pool_size);
      std::vector<Query> queries(pool_size);
      size_t doc_tokens = 0;
      for (size_t i = 0; i < pool_size; ++i) {
        pool[i].doc_id = "bench_d" + std::to_string(i);
        pool[i].title = random_ids(rng, config.title_len, config.vocab_size);
        for (size_t s = 0; s < sentences; ++s) {
          pool[i].sentences.push_back(random_ids(rng, config.sentence_len, config.vocab_size));
        }
        pool[i].raw_sentence_count = sentences;
        queries[i].query_id = "bench_q" + std::to_string(i);
        queries[i].tokens = random_ids(rng, config.query_len, config.vocab_size);
      }
      doc_tokens = config.title_len + sentences * config.sentence_len;

      for (size_t batch : config.batch_sizes) {
        double fulldoc_ms = 0;
        for (ScoreMode mode : {ScoreMode::fulldoc, ScoreMode::topk}) {
          [[maybe_unused]] static volatile double sink;  // keeps the scoring loop live
          std::vector<double> times;
          for (size_t rep = 0; rep < config.warmup + config.repetitions; ++rep) {
            double acc = 0;
            const auto start = clock::now();
            for (size_t i = 0; i < batch; ++i) {
              acc += score_document(model, queries[i % pool_size], pool[i % pool_size], mode,
                                    config.k)
                         .score;
            }
            const auto stop = clock::now();
            sink = acc;
            if (rep >= config.warmup) {
              times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
            }
          }
          std::sort(times.begin(), times.end());
          const double median = times[times.size() / 2];
          BenchRow row;
          row.matcher = kind;
          row.mode = mode;
          row.batch = batch;
          row.doc_sentences = sentences;
          row.doc_tokens = doc_tokens;
          row.median_ms = median;
          if (mode == ScoreMode::fulldoc) {
            fulldoc_ms = median;
          } else {
            row.speedup = fulldoc_ms / median;
          }
          rows.push_back(row);
        }
      }
    }
  }
  return rows;
}

void write_bench_table(const std::string& path, const std::vector<BenchRow>& rows,
                       uint64_t config_hash, uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("bench table: cannot open for writing: " + path);
  char buf[192];
  std::snprintf(buf, sizeof(buf), "# rltm-bench v1\n# config_hash=%016llx\n# seed=%llu\n",
                static_cast<unsigned long long>(config_hash),
                static_cast<unsigned long long>(seed));
  out << buf;
  out << "matcher\tmode\tbatch\tdoc_sentences\tdoc_tokens\tmedian_ms\tspeedup\n";
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%s\t%zu\t%zu\t%zu\t%.3f\t%.2f\n",
                  to_string(r.matcher).c_str(), to_string(r.mode).c_str(), r.batch,
                  r.doc_sentences, r.doc_tokens, r.median_ms, r.speedup);
    out << buf;
  }
}

}  // namespace rltm
