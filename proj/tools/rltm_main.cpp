#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rltm/baselines.hpp"
#include "rltm/config.hpp"
#include "rltm/corpus.hpp"
#include "rltm/eval.hpp"
#include "rltm/matcher.hpp"
#include "rltm/model.hpp"
#include "rltm/trainer.hpp"
#include "rltm/verify.hpp"

using namespace rltm;

namespace {

void usage() {
  std::puts(
      "usage: rltm <command> [--config FILE] [--key value ...]\n"
      "\n"
      "commands:\n"
      "  build-vocab   build a vocabulary file        (--docs, [--queries], --out)\n"
      "  synth         generate a synthetic corpus    (--synth_* keys, --out)\n"
      "  train         train a ranking model          (--docs, --train_queries,\n"
      "                                                [--val_queries], --qrels,\n"
      "                                                --vocab, --out)\n"
      "  evaluate      rank judged documents          (--docs, --queries, --qrels,\n"
      "                                                --vocab, --checkpoint | --scorer bm25,\n"
      "                                                [--ground_truth], --out)\n"
      "  score         print per-pair scores and the  (same inputs as evaluate)\n"
      "                selected sentences\n"
      "  bench         inference latency comparison   (--bench_* keys, --out)\n"
      "  grad-check    finite-difference check of all backward passes\n"
      "\n"
      "Flat key=value config file; command-line --key value pairs override it.\n"
      "RLTM_SEED overrides the default seed. Exit codes: 2 config, 3 data, 4 numeric.");
}

std::string require_path(const RunConfig& cfg, const std::string& key) {
  const std::string& value = cfg.str(key);
  if (value.empty()) throw ConfigError("missing required option --" + key);
  return value;
}

std::string out_dir(const RunConfig& cfg) {
  const std::string out = require_path(cfg, "out");
  std::filesystem::create_directories(out);
  cfg.write_echo(out + "/config.txt");
  return out;
}

Caps caps_from(const RunConfig& cfg) {
  Caps caps;
  caps.query_len = cfg.size("query_cap");
  caps.sentence_len = cfg.size("sentence_len_cap");
  caps.sentences = cfg.size("sentence_cap");
  return caps;
}

ModelConfig model_config_from(const RunConfig& cfg, size_t vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.embed_dim = cfg.size("embed_dim");
  mc.hidden_dim = cfg.size("hidden_dim");
  mc.matcher = matcher_kind_from_string(cfg.str("matcher"));
  mc.kernel_count = cfg.size("kernels");
  mc.conv_maps = cfg.size("conv_maps");
  mc.conv_kh = cfg.size("conv_kh");
  mc.conv_kw = cfg.size("conv_kw");
  mc.pool_rows = cfg.size("pool_rows");
  mc.pool_cols = cfg.size("pool_cols");
  mc.query_cap = cfg.size("query_cap");
  mc.sentence_len_cap = cfg.size("sentence_len_cap");
  mc.sentence_cap = cfg.size("sentence_cap");
  mc.k_sentences = cfg.size("K");
  mc.share_embeddings = cfg.flag("share_embeddings");
  return mc;
}

TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig tc;
  tc.mode = train_mode_from_string(cfg.str("mode"));
  tc.k = cfg.size("K");
  tc.batch_size = cfg.size("batch_size");
  tc.adam.learning_rate = static_cast<real>(cfg.number("lr"));
  tc.adam.beta1 = static_cast<real>(cfg.number("adam_beta1"));
  tc.adam.beta2 = static_cast<real>(cfg.number("adam_beta2"));
  tc.adam.epsilon = static_cast<real>(cfg.number("adam_epsilon"));
  tc.pretrain_selector_steps = cfg.size("pretrain_selector_steps");
  tc.pretrain_matcher_steps = cfg.size("pretrain_matcher_steps");
  tc.joint_steps = cfg.size("joint_steps");
  tc.seed = cfg.seed();
  tc.clip_norm = static_cast<real>(cfg.number("clip_norm"));
  tc.margin = static_cast<real>(cfg.number("margin"));
  tc.reward_baseline = cfg.flag("reward_baseline");
  tc.baseline_decay = static_cast<real>(cfg.number("baseline_decay"));
  tc.sample_with_replacement = cfg.flag("sample_with_replacement");
  tc.freeze_selector_embeddings = cfg.flag("freeze_selector_embeddings");
  tc.val_interval = cfg.size("val_interval");
  tc.triple_budget = cfg.size("triple_budget");
  return tc;
}

Dataset load_dataset(const RunConfig& cfg, const std::string& queries_key,
                     const Vocabulary& vocab) {
  const auto docs = read_documents(require_path(cfg, "docs"));
  const auto queries = read_queries(require_path(cfg, queries_key));
  const auto judgments = read_judgments(require_path(cfg, "qrels"));
  return build_dataset(queries, docs, judgments, vocab, caps_from(cfg));
}

int cmd_build_vocab(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  std::map<std::string, uint64_t> counts;
  for (const auto& doc : read_documents(require_path(cfg, "docs"))) {
    for (auto& tok : tokenize(doc.title)) counts[tok] += 1;
    for (auto& tok : tokenize(doc.body)) counts[tok] += 1;
  }
  if (!cfg.str("queries").empty()) {
    for (const auto& q : read_queries(cfg.str("queries"))) {
      for (auto& tok : tokenize(q.text)) counts[tok] += 1;
    }
  }
  const Vocabulary vocab = Vocabulary::build(counts, cfg.size("vocab_max_size"));
  vocab.save(out + "/vocab.txt", cfg.hash(), cfg.seed());
  std::printf("vocab: %zu tokens (incl. pad/unk), hash %016llx -> %s/vocab.txt\n", vocab.size(),
              static_cast<unsigned long long>(vocab.hash()), out.c_str());
  return 0;
}

int cmd_synth(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  SynthConfig sc;
  sc.background_tokens = cfg.size("synth_background_tokens");
  sc.query_tokens = cfg.size("synth_query_tokens");
  sc.train_queries = cfg.size("synth_train_queries");
  sc.val_queries = cfg.size("synth_val_queries");
  sc.test_queries = cfg.size("synth_test_queries");
  sc.grades_per_query = cfg.int_list("synth_grades");
  sc.sentences_per_doc = cfg.size("synth_sentences_per_doc");
  sc.sentence_len = cfg.size("synth_sentence_len");
  sc.query_len = cfg.size("synth_query_len");
  sc.title_len = cfg.size("synth_title_len");
  sc.plant_fraction = cfg.number("synth_plant_fraction");
  sc.confuser_rate = cfg.number("synth_confuser_rate");
  const SynthCorpus corpus = synth_corpus(sc, cfg.seed());
  write_documents(out + "/docs.jsonl", corpus.documents);
  write_queries(out + "/train_queries.jsonl", corpus.train_queries);
  write_queries(out + "/val_queries.jsonl", corpus.val_queries);
  write_queries(out + "/test_queries.jsonl", corpus.test_queries);
  write_judgments(out + "/qrels.txt", corpus.judgments);
  write_planted_truth(out + "/ground_truth.jsonl", corpus.planted);
  std::printf("synth: %zu docs, %zu/%zu/%zu train/val/test queries -> %s\n",
              corpus.documents.size(), corpus.train_queries.size(), corpus.val_queries.size(),
              corpus.test_queries.size(), out.c_str());
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  const Vocabulary vocab = Vocabulary::load(require_path(cfg, "vocab"));
  const auto docs = read_documents(require_path(cfg, "docs"));
  const auto judgments = read_judgments(require_path(cfg, "qrels"));
  const Caps caps = caps_from(cfg);
  const Dataset train_data =
      build_dataset(read_queries(require_path(cfg, "train_queries")), docs, judgments, vocab, caps);
  Dataset val_data;
  if (!cfg.str("val_queries").empty()) {
    val_data = build_dataset(read_queries(cfg.str("val_queries")), docs, judgments, vocab, caps);
  }

  const ModelConfig mc = model_config_from(cfg, vocab.size());
  TrainConfig tc = train_config_from(cfg);
  const std::vector<double> lr_grid = cfg.number_list("lr_grid");

  std::vector<std::string> log_lines;
  TrainResult best;
  bool have_best = false;
  double chosen_lr = tc.adam.learning_rate;
  char line[160];

  if (lr_grid.empty()) {
    best = train(Model::create(mc, cfg.seed()), train_data, val_data, tc);
    log_lines = best.log_lines;
    have_best = true;
  } else {
    if (val_data.judgments.empty()) {
      throw ConfigError("train: lr_grid sweep needs --val_queries for model selection");
    }
    for (double lr : lr_grid) {
      TrainConfig sweep = tc;
      sweep.adam.learning_rate = static_cast<real>(lr);
      TrainResult result = train(Model::create(mc, cfg.seed()), train_data, val_data, sweep);
      for (const auto& entry : result.log_lines) {
        std::snprintf(line, sizeof(line), "lr=%g %s", lr, entry.c_str());
        log_lines.emplace_back(line);
      }
      if (!have_best || result.best_val_ndcg1 > best.best_val_ndcg1) {
        best = std::move(result);
        chosen_lr = lr;
        have_best = true;
      }
    }
    std::snprintf(line, sizeof(line), "selected lr=%g val_ndcg1=%.17g", chosen_lr,
                  best.best_val_ndcg1);
    log_lines.emplace_back(line);
  }

  save_checkpoint(out + "/checkpoint.bin", best.model, vocab.hash(), cfg.hash(), cfg.seed());
  std::ofstream log(out + "/train_log.txt", std::ios::binary);
  char header[96];
  std::snprintf(header, sizeof(header), "# rltm-train-log v1\n# config_hash=%016llx\n# seed=%llu\n",
                static_cast<unsigned long long>(cfg.hash()),
                static_cast<unsigned long long>(cfg.seed()));
  log << header;
  for (const auto& entry : log_lines) log << entry << "\n";

  std::printf("train: mode=%s matcher=%s steps=%zu", cfg.str("mode").c_str(),
              cfg.str("matcher").c_str(), best.total_steps);
  if (best.best_val_ndcg1 >= 0) {
    std::printf(" best_val_ndcg1=%.4f (step %zu, lr %g)", best.best_val_ndcg1, best.best_step,
                chosen_lr);
  }
  std::printf(" -> %s/checkpoint.bin\n", out.c_str());
  return 0;
}

DocScorer make_scorer(const RunConfig& cfg, const Dataset& data, const Vocabulary& vocab,
                      std::optional<Checkpoint>& ckpt, std::optional<CorpusStats>& stats) {
  if (cfg.str("scorer") == "bm25") {
    stats = CorpusStats::build(data.documents);
    Bm25Params params{cfg.number("bm25_k1"), cfg.number("bm25_b")};
    const CorpusStats* stats_ptr = &*stats;
    return [stats_ptr, params](const Query& q, const EncodedDocument& d) {
      return bm25_score(q.tokens, d, *stats_ptr, params);
    };
  }
  ckpt = load_checkpoint(require_path(cfg, "checkpoint"), vocab.hash());
  return neural_scorer(ckpt->model, score_mode_from_string(cfg.str("eval_mode")), cfg.size("K"),
                       cfg.seed());
}

int cmd_evaluate(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  const Vocabulary vocab = Vocabulary::load(require_path(cfg, "vocab"));
  const Dataset data = load_dataset(cfg, "queries", vocab);
  std::optional<Checkpoint> ckpt;
  std::optional<CorpusStats> stats;
  const DocScorer scorer = make_scorer(cfg, data, vocab, ckpt, stats);

  EvalOptions opts;
  opts.map_threshold = static_cast<int>(cfg.integer("map_threshold"));
  opts.ndcg_log_base = cfg.number("ndcg_log_base");
  opts.threads = cfg.size("threads");
  std::vector<RankedList> rankings;
  const MetricsReport report = evaluate(scorer, data, opts, &rankings);
  write_metrics_report(out + "/metrics.txt", report, cfg.hash(), cfg.seed());
  write_run_file(out + "/run.txt", rankings);

  std::printf("evaluate: %zu queries", report.query_count);
  for (size_t k : report.ndcg_cutoffs) std::printf("  ndcg@%zu=%.4f", k, report.ndcg.at(k));
  std::printf("  map=%.4f\n", report.map);

  if (!cfg.str("ground_truth").empty() && ckpt.has_value()) {
    const PlantedTruth truth = read_planted_truth(cfg.str("ground_truth"));
    const double precision =
        selection_precision(ckpt->model, data, truth, cfg.size("K"), ScoreMode::topk);
    std::ofstream metrics(out + "/metrics.txt", std::ios::binary | std::ios::app);
    char line[64];
    std::snprintf(line, sizeof(line), "selection_precision %.17g\n", precision);
    metrics << line;
    std::printf("selection_precision@%zu=%.4f\n", cfg.size("K"), precision);
  }
  return 0;
}

int cmd_score(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  const Vocabulary vocab = Vocabulary::load(require_path(cfg, "vocab"));
  const Dataset data = load_dataset(cfg, "queries", vocab);
  const Checkpoint ckpt = load_checkpoint(require_path(cfg, "checkpoint"), vocab.hash());
  const ScoreMode mode = score_mode_from_string(cfg.str("eval_mode"));
  const size_t k = cfg.size("K");

  std::ofstream file(out + "/scores.txt", std::ios::binary);
  char buf[128];
  for (const auto& j : data.judgments) {
    const Query& query = data.query(j.query_id);
    const EncodedDocument& doc = data.document(j.doc_id);
    Rng rng(substream_seed(cfg.seed(), fnv1a(j.doc_id.data(), j.doc_id.size())));
    const ScoredDocument scored = score_document(ckpt.model, query, doc, mode, k, &rng);
    std::snprintf(buf, sizeof(buf), "%s %s grade=%d score=%.6f selected=", j.query_id.c_str(),
                  j.doc_id.c_str(), j.grade, static_cast<double>(scored.score));
    std::string entry = buf;
    for (size_t i = 0; i < scored.selected.indices.size(); ++i) {
      entry += (i ? "," : "") + std::to_string(scored.selected.indices[i]);
    }
    entry += "\n";
    for (size_t idx : scored.selected.indices) {
      entry += "    [" + std::to_string(idx) + "]";
      for (TokenId id : doc.sentences[idx]) entry += " " + vocab.token(id);
      entry += "\n";
    }
    file << entry;
    std::fputs(entry.c_str(), stdout);
  }
  std::printf("score: wrote %s/scores.txt\n", out.c_str());
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const std::string out = out_dir(cfg);
  BenchConfig bc;
  bc.batch_sizes = cfg.size_list("bench_batches");
  bc.doc_sentences = cfg.size_list("bench_doc_sentences");
  bc.sentence_len = cfg.size("bench_sentence_len");
  bc.title_len = cfg.size("bench_title_len");
  bc.query_len = cfg.size("bench_query_len");
  bc.k = cfg.size("bench_k");
  bc.repetitions = cfg.size("bench_reps");
  bc.warmup = cfg.size("bench_warmup");
  bc.vocab_size = cfg.size("bench_vocab");
  bc.embed_dim = cfg.size("bench_embed_dim");
  bc.hidden_dim = cfg.size("bench_hidden_dim");
  bc.conv_maps = cfg.size("bench_conv_maps");
  const auto rows = bench(bc, cfg.seed());
  write_bench_table(out + "/bench.tsv", rows, cfg.hash(), cfg.seed());
  std::puts("matcher       mode     batch  sentences  tokens  median_ms  speedup");
  for (const auto& r : rows) {
    std::printf("%-12s  %-7s  %5zu  %9zu  %6zu  %9.3f  %7.2f\n", to_string(r.matcher).c_str(),
                to_string(r.mode).c_str(), r.batch, r.doc_sentences, r.doc_tokens, r.median_ms,
                r.speedup);
  }
  std::printf("bench: wrote %s/bench.tsv\n", out.c_str());
  return 0;
}

int cmd_grad_check(const RunConfig& cfg) {
  const int seeds = static_cast<int>(cfg.size("gradcheck_seeds"));
  const int probes = static_cast<int>(cfg.size("gradcheck_probes"));
  double worst = 0;
  std::string report;
  char line[128];
  for (MatcherKind kind : {MatcherKind::knrm, MatcherKind::matchpyramid}) {
    const auto results =
        model_grad_checks(kind, 8, 8, cfg.size("kernels"), 8, seeds, probes, cfg.seed());
    for (const auto& r : results) {
      std::snprintf(line, sizeof(line), "%-13s %-9s max_rel_error=%.3g\n", to_string(kind).c_str(),
                    r.component.c_str(), r.max_rel_error);
      report += line;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  std::fputs(report.c_str(), stdout);
  std::printf("grad-check: max relative error %.3g over %d seeds\n", worst, seeds);
  if (!cfg.str("out").empty()) {
    const std::string out = out_dir(cfg);
    std::ofstream file(out + "/grad_check.txt", std::ios::binary);
    file << report;
  }
  if (worst >= 1e-4) throw NumericError("grad-check: analytic/numeric mismatch above 1e-4");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  if (args.empty()) {
    usage();
    return 2;
  }
  const std::string command = args[0];
  if (command == "help" || command == "--help" || command == "-h") {
    usage();
    return 0;
  }
  try {
    RunConfig cfg;
    for (size_t i = 1; i < args.size(); i += 2) {
      if (args[i].rfind("--", 0) != 0 || i + 1 >= args.size()) {
        throw ConfigError("expected --key value pairs, got '" + args[i] + "'");
      }
      if (args[i] == "--config") cfg.load_file(args[i + 1]);
    }
    for (size_t i = 1; i < args.size(); i += 2) {
      if (args[i] != "--config") cfg.set(args[i].substr(2), args[i + 1]);
    }
    cfg.validate();

    if (command == "build-vocab") return cmd_build_vocab(cfg);
    if (command == "synth") return cmd_synth(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "score") return cmd_score(cfg);
    if (command == "bench") return cmd_bench(cfg);
    if (command == "grad-check") return cmd_grad_check(cfg);
    throw ConfigError("unknown command '" + command + "'");
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 4;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "dimension error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
