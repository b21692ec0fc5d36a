#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rltm/corpus.hpp"
#include "rltm/eval.hpp"
#include "rltm/matcher.hpp"
#include "rltm/model.hpp"
#include "rltm/selector.hpp"
#include "rltm/tensor.hpp"

namespace rltm {

enum class TrainMode { rltm, pipeline, fulldoc };

TrainMode train_mode_from_string(const std::string& s);
std::string to_string(TrainMode mode);

struct TrainConfig {
  TrainMode mode = TrainMode::rltm;
  size_t k = 5;
  size_t batch_size = 32;
  AdamConfig adam;
  size_t pretrain_selector_steps = 200;
  size_t pretrain_matcher_steps = 200;
  size_t joint_steps = 600;
  uint64_t seed = 1;
  real clip_norm = 5.0;
  real margin = 0;  // optional hinge on the score gap; 0 = raw gap
  bool reward_baseline = false;
  real baseline_decay = 0.99;
  bool sample_with_replacement = false;
  bool freeze_selector_embeddings = false;
  size_t val_interval = 100;  // global steps between validation passes
  size_t triple_budget = 10;

  void validate() const;
};

struct RewardRecord {
  real s_plus = 0;
  real s_minus = 0;
  real reward = 0;  // s_plus - s_minus exactly
  SelectedSentences u_plus;
  SelectedSentences u_minus;
};

struct TrainResult {
  Model model;               // best on validation NDCG@1 (final weights if never validated)
  double best_val_ndcg1 = -1;
  size_t best_step = 0;
  size_t total_steps = 0;
  std::vector<std::string> log_lines;
};

// The max-term-overlap pretraining target for (query, doc): the body sentence
// sharing the most distinct token ids with the query, lower index on ties.
size_t overlap_target(const Query& query, const EncodedDocument& doc);

// One cross-entropy batch over (query, positive doc) pairs against the
// overlap target. Accumulates, averages and applies an Adam step; returns the
// mean loss.
real selector_ce_step(Model& model, const Dataset& data,
                      const std::vector<std::pair<size_t, size_t>>& batch,
                      const TrainConfig& config);

// One pairwise batch maximizing s+ - s- through the matcher only. Sentences
// are picked by sel_mode (firstk for pretraining, topk for pipeline, fulldoc
// for whole-document training). Returns the mean gap.
real matcher_gap_step(Model& model, const Dataset& data, const std::vector<const Triple*>& batch,
                      ScoreMode sel_mode, const TrainConfig& config);

// Algorithm core for one triple: samples U+ ~ pi(.|q,d+) and U- ~ pi(.|q,d-),
// scores both through the matcher, and accumulates
//   selector: -advantage * d/dtheta [sum_k log pi(u+_k) + sum_k log pi(u-_k)]
//   matcher:  -d/dtheta (s+ - s-)
// (descent convention; the train loop averages over the batch, clips and
// applies Adam). baseline, when enabled, is subtracted from the reward in the
// selector term only.
RewardRecord rltm_accumulate(Model& model, const Dataset& data, const Triple& triple,
                             const TrainConfig& config, Rng& rng, real baseline);

// Full training per the configured mode with periodic validation on NDCG@1;
// the best-on-validation parameters are retained. Deterministic per seed.
TrainResult train(Model model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config);

}  // namespace rltm
