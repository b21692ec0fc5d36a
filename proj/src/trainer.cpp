#include "rltm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "rltm/baselines.hpp"
#include "rltm/ops.hpp"
#include "rltm/rng.hpp"

namespace rltm {

TrainMode train_mode_from_string(const std::string& s) {
  if (s == "rltm") return TrainMode::rltm;
  if (s == "pipeline") return TrainMode::pipeline;
  if (s == "fulldoc") return TrainMode::fulldoc;
  throw ConfigError("unknown train mode '" + s + "' (expected rltm, pipeline or fulldoc)");
}

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::rltm: return "rltm";
    case TrainMode::pipeline: return "pipeline";
    case TrainMode::fulldoc: return "fulldoc";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (k < 1) throw ConfigError("train: K must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (adam.learning_rate < 0) throw ConfigError("train: learning rate must be >= 0");
  if (!(adam.beta1 >= 0 && adam.beta1 < 1) || !(adam.beta2 >= 0 && adam.beta2 < 1)) {
    throw ConfigError("train: adam betas must be in [0, 1)");
  }
  if (margin < 0) throw ConfigError("train: margin must be >= 0");
  if (!(baseline_decay >= 0 && baseline_decay < 1)) {
    throw ConfigError("train: baseline_decay must be in [0, 1)");
  }
}

size_t overlap_target(const Query& query, const EncodedDocument& doc) {
  std::set<TokenId> query_ids;
  for (TokenId id : query.tokens) {
    if (id != kPadId) query_ids.insert(id);
  }
  size_t best = 0, best_overlap = 0;
  for (size_t t = 0; t < doc.sentence_count(); ++t) {
    std::set<TokenId> sentence_ids(doc.sentences[t].begin(), doc.sentences[t].end());
    size_t overlap = 0;
    for (TokenId id : query_ids) overlap += sentence_ids.count(id);
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = t;
    }
  }
  return best;
}

real selector_ce_step(Model& model, const Dataset& data,
                      const std::vector<std::pair<size_t, size_t>>& batch,
                      const TrainConfig& config) {
  const bool emb = !config.freeze_selector_embeddings;
  auto params = model.selector_params(emb);
  real loss_sum = 0;
  size_t used = 0;
  for (const auto& [qi, di] : batch) {
    const Query& query = data.queries[qi];
    const EncodedDocument& doc = data.documents[di];
    if (doc.sentence_count() == 0) continue;
    PolicyCache cache = compute_policy(model, query, doc);
    const size_t target = overlap_target(query, doc);
    loss_sum += -std::log(cache.policy.probs[target]);
    std::vector<real> dscores(cache.policy.probs);
    dscores[target] -= 1;  // d(-log p_target)/dc = p - onehot
    policy_backward(model, query, doc, cache, dscores, emb);
    ++used;
  }
  if (used == 0) return 0;
  scale_grads(params, 1 / static_cast<real>(used));
  clip_global_grad_norm(params, config.clip_norm);
  for (ParamTensor* p : params) adam_step(*p, config.adam);
  return loss_sum / static_cast<real>(used);
}

namespace {

struct DocForward {
  SelectedSentences selected;
  std::vector<PsiCache> caches;  // title first, then selected sentences
  real score = 0;
};

DocForward forward_doc(Model& model, const Query& query, const EncodedDocument& doc,
                       const SelectedSentences& selected) {
  DocForward fwd;
  fwd.selected = selected;
  fwd.caches.resize(1 + selected.indices.size());
  std::vector<real> scores;
  scores.push_back(psi(model, query.tokens, doc.title, fwd.caches[0]));
  for (size_t i = 0; i < selected.indices.size(); ++i) {
    scores.push_back(
        psi(model, query.tokens, doc.sentences[selected.indices[i]], fwd.caches[1 + i]));
  }
  fwd.score = aggregate(scores);
  return fwd;
}

void backward_doc(Model& model, const Query& query, const EncodedDocument& doc,
                  const DocForward& fwd, real dscore) {
  psi_backward(model, query.tokens, doc.title, fwd.caches[0], dscore, true);
  for (size_t i = 0; i < fwd.selected.indices.size(); ++i) {
    psi_backward(model, query.tokens, doc.sentences[fwd.selected.indices[i]], fwd.caches[1 + i],
                 dscore, true);
  }
}

SelectedSentences pick_for_gap(const Model& model, const Query& query, const EncodedDocument& doc,
                               ScoreMode sel_mode, size_t k) {
  if (doc.sentence_count() == 0) return {};
  switch (sel_mode) {
    case ScoreMode::firstk:
      return select_firstk(doc, k);
    case ScoreMode::topk:
      return select_topk(compute_policy(model, query, doc).policy, k);
    case ScoreMode::fulldoc: {
      SelectedSentences sel;
      sel.indices.resize(doc.sentence_count());
      std::iota(sel.indices.begin(), sel.indices.end(), 0);
      return sel;
    }
    default:
      throw ConfigError("matcher_gap_step: selection mode must be firstk, topk or fulldoc");
  }
}

void check_finite_score(real s, const Triple& triple) {
  if (!std::isfinite(s)) {
    throw NumericError("non-finite score on triple (" + triple.query_id + ", " +
                       triple.pos_doc_id + ", " + triple.neg_doc_id + ")");
  }
}

}  // namespace

real matcher_gap_step(Model& model, const Dataset& data, const std::vector<const Triple*>& batch,
                      ScoreMode sel_mode, const TrainConfig& config) {
  auto params = model.matcher_params(true);
  real gap_sum = 0;
  size_t used = 0;
  for (const Triple* triple : batch) {
    const Query& query = data.query(triple->query_id);
    const EncodedDocument& pos = data.document(triple->pos_doc_id);
    const EncodedDocument& neg = data.document(triple->neg_doc_id);
    DocForward fwd_pos = forward_doc(model, query, pos, pick_for_gap(model, query, pos, sel_mode,
                                                                     config.k));
    DocForward fwd_neg = forward_doc(model, query, neg, pick_for_gap(model, query, neg, sel_mode,
                                                                     config.k));
    check_finite_score(fwd_pos.score, *triple);
    check_finite_score(fwd_neg.score, *triple);
    const real gap = fwd_pos.score - fwd_neg.score;
    gap_sum += gap;
    ++used;
    if (config.margin > 0 && gap >= config.margin) continue;  // hinge saturated
    backward_doc(model, query, pos, fwd_pos, -1);
    backward_doc(model, query, neg, fwd_neg, +1);
  }
  if (used == 0) return 0;
  scale_grads(params, 1 / static_cast<real>(used));
  clip_global_grad_norm(params, config.clip_norm);
  for (ParamTensor* p : params) adam_step(*p, config.adam);
  return gap_sum / static_cast<real>(used);
}

RewardRecord rltm_accumulate(Model& model, const Dataset& data, const Triple& triple,
                             const TrainConfig& config, Rng& rng, real baseline) {
  const Query& query = data.query(triple.query_id);
  const EncodedDocument& pos = data.document(triple.pos_doc_id);
  const EncodedDocument& neg = data.document(triple.neg_doc_id);

  std::optional<PolicyCache> cache_pos, cache_neg;
  RewardRecord rec;
  if (pos.sentence_count() > 0) {
    cache_pos = compute_policy(model, query, pos);
    rec.u_plus = sample_k(cache_pos->policy, config.k, rng, config.sample_with_replacement);
  }
  if (neg.sentence_count() > 0) {
    cache_neg = compute_policy(model, query, neg);
    rec.u_minus = sample_k(cache_neg->policy, config.k, rng, config.sample_with_replacement);
  }

  DocForward fwd_pos = forward_doc(model, query, pos, rec.u_plus);
  DocForward fwd_neg = forward_doc(model, query, neg, rec.u_minus);
  rec.s_plus = fwd_pos.score;
  rec.s_minus = fwd_neg.score;
  check_finite_score(rec.s_plus, triple);
  check_finite_score(rec.s_minus, triple);
  rec.reward = rec.s_plus - rec.s_minus;

  // Matcher ascent on the gap, through psi and the sum only. The optional
  // hinge gates this term exactly as in the supervised phases.
  if (!(config.margin > 0 && rec.reward >= config.margin)) {
    backward_doc(model, query, pos, fwd_pos, -1);
    backward_doc(model, query, neg, fwd_neg, +1);
  }

  // REINFORCE ascent with the same reward on both sampled sets.
  const real advantage = rec.reward - baseline;
  const bool emb = !config.freeze_selector_embeddings;
  if (cache_pos) policy_grad(model, query, pos, *cache_pos, rec.u_plus, advantage, emb);
  if (cache_neg) policy_grad(model, query, neg, *cache_neg, rec.u_minus, advantage, emb);
  return rec;
}

namespace {

// Cyclic shuffled stream over item indices, reshuffled each pass.
class IndexStream {
 public:
  IndexStream(size_t count, uint64_t seed) : seed_(seed), order_(count) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }
  size_t next() {
    if (pos_ >= order_.size()) reshuffle();
    return order_[pos_++];
  }
  bool empty() const { return order_.empty(); }

 private:
  void reshuffle() {
    Rng rng(substream_seed(seed_, pass_++));
    rng.shuffle(order_);
    pos_ = 0;
  }
  uint64_t seed_;
  std::vector<size_t> order_;
  size_t pass_ = 0;
  size_t pos_ = 0;
};

}  // namespace

TrainResult train(Model model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config) {
  config.validate();
  TrainResult result;

  const std::vector<Triple> triples =
      make_triples(train_data.judgments, config.triple_budget, config.seed);
  std::vector<std::pair<size_t, size_t>> positive_pairs;
  for (const auto& j : train_data.judgments) {
    if (j.grade > 0) {
      positive_pairs.emplace_back(train_data.query_index.at(j.query_id),
                                  train_data.doc_index.at(j.doc_id));
    }
  }

  size_t global_step = 0, global_item = 0;
  real running_metric = 0;
  size_t running_count = 0;
  real baseline = 0;
  bool baseline_started = false;

  char line[256];
  auto validate_now = [&](const char* phase) {
    if (val_data.judgments.empty()) return;
    const ScoreMode eval_mode =
        config.mode == TrainMode::fulldoc ? ScoreMode::fulldoc : ScoreMode::topk;
    EvalOptions opts;
    opts.ndcg_cutoffs = {1};
    const MetricsReport report =
        evaluate(neural_scorer(model, eval_mode, config.k, config.seed), val_data, opts);
    const double ndcg1 = report.ndcg.at(1);
    const double mean_metric =
        running_count > 0 ? static_cast<double>(running_metric) / running_count : 0;
    std::snprintf(line, sizeof(line),
                  "step=%zu mode=%s phase=%s mean_metric=%.17g val_ndcg1=%.17g", global_step,
                  to_string(config.mode).c_str(), phase, mean_metric, ndcg1);
    result.log_lines.emplace_back(line);
    running_metric = 0;
    running_count = 0;
    if (ndcg1 > result.best_val_ndcg1) {
      result.best_val_ndcg1 = ndcg1;
      result.best_step = global_step;
      result.model = model;
    }
  };

  auto run_selector_phase = [&](size_t steps) {
    if (steps == 0 || positive_pairs.empty()) return;
    IndexStream stream(positive_pairs.size(), substream_seed(config.seed, 0x5e1));
    for (size_t s = 0; s < steps; ++s) {
      std::vector<std::pair<size_t, size_t>> batch;
      for (size_t b = 0; b < config.batch_size; ++b) batch.push_back(positive_pairs[stream.next()]);
      running_metric += selector_ce_step(model, train_data, batch, config);
      ++running_count;
      ++global_step;
      if (config.val_interval > 0 && global_step % config.val_interval == 0) {
        validate_now("pretrain_selector");
      }
    }
  };

  auto run_matcher_phase = [&](size_t steps, ScoreMode sel_mode, const char* phase) {
    if (steps == 0 || triples.empty()) return;
    IndexStream stream(triples.size(), substream_seed(config.seed, 0x3a7));
    for (size_t s = 0; s < steps; ++s) {
      std::vector<const Triple*> batch;
      for (size_t b = 0; b < config.batch_size; ++b) batch.push_back(&triples[stream.next()]);
      running_metric += matcher_gap_step(model, train_data, batch, sel_mode, config);
      ++running_count;
      ++global_step;
      if (config.val_interval > 0 && global_step % config.val_interval == 0) validate_now(phase);
    }
  };

  auto run_joint_phase = [&](size_t steps) {
    if (steps == 0 || triples.empty()) return;
    IndexStream stream(triples.size(), substream_seed(config.seed, 0x90e));
    auto params = model.params();
    for (size_t s = 0; s < steps; ++s) {
      real reward_sum = 0;
      for (size_t b = 0; b < config.batch_size; ++b) {
        const Triple& triple = triples[stream.next()];
        Rng rng(substream_seed(config.seed, 0x7000000000000000ULL ^ global_item++));
        const real base = config.reward_baseline && baseline_started ? baseline : 0;
        const RewardRecord rec = rltm_accumulate(model, train_data, triple, config, rng, base);
        reward_sum += rec.reward;
      }
      scale_grads(params, 1 / static_cast<real>(config.batch_size));
      clip_global_grad_norm(params, config.clip_norm);
      for (ParamTensor* p : params) adam_step(*p, config.adam);

      const real mean_reward = reward_sum / static_cast<real>(config.batch_size);
      if (config.reward_baseline) {
        baseline = baseline_started
                       ? config.baseline_decay * baseline + (1 - config.baseline_decay) * mean_reward
                       : mean_reward;
        baseline_started = true;
      }
      running_metric += mean_reward;
      ++running_count;
      ++global_step;
      if (config.val_interval > 0 && global_step % config.val_interval == 0) validate_now("joint");
    }
  };

  switch (config.mode) {
    case TrainMode::rltm:
      run_selector_phase(config.pretrain_selector_steps);
      run_matcher_phase(config.pretrain_matcher_steps, ScoreMode::firstk, "pretrain_matcher");
      run_joint_phase(config.joint_steps);
      break;
    case TrainMode::pipeline:
      run_selector_phase(config.pretrain_selector_steps);
      run_matcher_phase(config.pretrain_matcher_steps + config.joint_steps, ScoreMode::topk,
                        "matcher");
      break;
    case TrainMode::fulldoc:
      run_matcher_phase(
          config.pretrain_selector_steps + config.pretrain_matcher_steps + config.joint_steps,
          ScoreMode::fulldoc, "matcher");
      break;
  }

  validate_now("final");
  result.total_steps = global_step;
  if (result.best_val_ndcg1 < 0) result.model = std::move(model);
  return result;
}

}  // namespace rltm
