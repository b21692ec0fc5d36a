#pragma once

#include <span>
#include <vector>

#include "rltm/corpus.hpp"
#include "rltm/model.hpp"
#include "rltm/rng.hpp"
#include "rltm/tensor.hpp"

namespace rltm {

// Probability distribution over the body sentences of one document. The title
// is never part of the support; it is always selected separately.
struct SelectionPolicy {
  std::vector<real> scores;  // raw cosine scores c_t
  std::vector<real> probs;   // softmax(scores)

  size_t sentence_count() const { return probs.size(); }
};

struct SelectedSentences {
  std::vector<size_t> indices;  // body sentence positions
  real log_prob_sum = 0;        // sum of log pi over the original distribution
  bool includes_title = true;
};

// Forward intermediates of one policy evaluation, kept for the backward pass.
struct PolicyCache {
  std::vector<real> bow_q;
  std::vector<real> h_q;
  std::vector<std::vector<real>> bow_u;
  std::vector<std::vector<real>> h_u;
  SelectionPolicy policy;
};

// Mean of the embedding rows of all non-PAD ids; a PAD-only or empty sequence
// yields the zero vector.
std::vector<real> bow_encode(std::span<const TokenId> ids, const Tensor& embeddings);

// c_t = cos(tanh(Wq bow(q) + bq), tanh(Wu bow(u_t) + bu)); probs = softmax(c).
// Throws DimensionError on a document with no body sentences.
PolicyCache compute_policy(const Model& model, const Query& query, const EncodedDocument& doc);

// Deterministic top-K by probability, ties broken by the lower index. K > T
// selects all T sentences.
SelectedSentences select_topk(const SelectionPolicy& policy, size_t k);

// K distinct draws without replacement with sequential renormalization.
// log_prob_sum is the sum of log pi over the ORIGINAL distribution, matching
// the policy-gradient expression the trainer uses. K >= T selects everything.
// with_replacement switches to independent draws (duplicates possible).
SelectedSentences sample_k(const SelectionPolicy& policy, size_t k, Rng& rng,
                           bool with_replacement = false);

// Backward through the whole selector stack given d(loss)/d(scores).
// update_embeddings=false freezes the embedding table in this path.
void policy_backward(Model& model, const Query& query, const EncodedDocument& doc,
                     const PolicyCache& cache, std::span<const real> dscores,
                     bool update_embeddings);

// REINFORCE contribution: accumulates the gradient of
//   loss = -reward * sum_k log pi(u_k | q, d)
// into the selector parameters (descent convention; the trainer maximizes).
void policy_grad(Model& model, const Query& query, const EncodedDocument& doc,
                 const PolicyCache& cache, const SelectedSentences& selected, real reward,
                 bool update_embeddings);

}  // namespace rltm
