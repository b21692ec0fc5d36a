#include "rltm/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rltm/ops.hpp"

namespace rltm {

std::vector<real> bow_encode(std::span<const TokenId> ids, const Tensor& embeddings) {
  const size_t dim = embeddings.dim(1);
  std::vector<real> mean(dim, 0);
  size_t count = 0;
  for (TokenId id : ids) {
    if (id == kPadId) continue;
    const real* row = embeddings.row(id);
    for (size_t j = 0; j < dim; ++j) mean[j] += row[j];
    ++count;
  }
  if (count > 0) {
    for (real& x : mean) x /= static_cast<real>(count);
  }
  return mean;
}

static void bow_backward(std::span<const TokenId> ids, std::span<const real> dmean,
                         Tensor& emb_grad) {
  size_t count = 0;
  for (TokenId id : ids) {
    if (id != kPadId) ++count;
  }
  if (count == 0) return;
  const real scale = 1 / static_cast<real>(count);
  for (TokenId id : ids) {
    if (id == kPadId) continue;
    real* row = emb_grad.row(id);
    for (size_t j = 0; j < dmean.size(); ++j) row[j] += scale * dmean[j];
  }
}

PolicyCache compute_policy(const Model& model, const Query& query, const EncodedDocument& doc) {
  const size_t t_count = doc.sentence_count();
  if (t_count == 0) {
    throw DimensionError("policy: document '" + doc.doc_id + "' has no body sentences");
  }
  const Tensor& emb = model.selector_embeddings().value;
  PolicyCache cache;
  cache.bow_q = bow_encode(query.tokens, emb);
  cache.h_q.assign(model.cfg.hidden_dim, 0);
  affine_tanh_forward(model.sel_Wq.value, model.sel_bq.value, cache.bow_q, cache.h_q);

  cache.bow_u.resize(t_count);
  cache.h_u.resize(t_count);
  cache.policy.scores.resize(t_count);
  for (size_t t = 0; t < t_count; ++t) {
    cache.bow_u[t] = bow_encode(doc.sentences[t], emb);
    cache.h_u[t].assign(model.cfg.hidden_dim, 0);
    affine_tanh_forward(model.sel_Wu.value, model.sel_bu.value, cache.bow_u[t], cache.h_u[t]);
    cache.policy.scores[t] = cosine(cache.h_q, cache.h_u[t]);
  }
  cache.policy.probs = softmax(cache.policy.scores);
  return cache;
}

SelectedSentences select_topk(const SelectionPolicy& policy, size_t k) {
  if (k < 1) throw ConfigError("select_topk: K must be >= 1");
  const size_t t_count = policy.sentence_count();
  std::vector<size_t> order(t_count);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (policy.probs[a] != policy.probs[b]) return policy.probs[a] > policy.probs[b];
    return a < b;
  });
  SelectedSentences sel;
  const size_t take = std::min(k, t_count);
  sel.indices.assign(order.begin(), order.begin() + take);
  for (size_t idx : sel.indices) sel.log_prob_sum += std::log(policy.probs[idx]);
  return sel;
}

SelectedSentences sample_k(const SelectionPolicy& policy, size_t k, Rng& rng,
                           bool with_replacement) {
  if (k < 1) throw ConfigError("sample_k: K must be >= 1");
  const size_t t_count = policy.sentence_count();
  SelectedSentences sel;

  if (with_replacement) {
    for (size_t draw = 0; draw < k; ++draw) {
      const real r = static_cast<real>(rng.uniform());
      real cum = 0;
      size_t pick = t_count - 1;
      for (size_t t = 0; t < t_count; ++t) {
        cum += policy.probs[t];
        if (r < cum) {
          pick = t;
          break;
        }
      }
      sel.indices.push_back(pick);
      sel.log_prob_sum += std::log(policy.probs[pick]);
    }
    return sel;
  }

  if (k >= t_count) {
    sel.indices.resize(t_count);
    std::iota(sel.indices.begin(), sel.indices.end(), 0);
    for (size_t t = 0; t < t_count; ++t) sel.log_prob_sum += std::log(policy.probs[t]);
    return sel;
  }

  std::vector<bool> taken(t_count, false);
  for (size_t draw = 0; draw < k; ++draw) {
    real mass = 0;
    for (size_t t = 0; t < t_count; ++t) {
      if (!taken[t]) mass += policy.probs[t];
    }
    const real r = static_cast<real>(rng.uniform()) * mass;
    real cum = 0;
    size_t pick = t_count;
    for (size_t t = 0; t < t_count; ++t) {
      if (taken[t]) continue;
      cum += policy.probs[t];
      if (r < cum) {
        pick = t;
        break;
      }
      pick = t;  // fp fallback: the last unselected index
    }
    taken[pick] = true;
    sel.indices.push_back(pick);
    sel.log_prob_sum += std::log(policy.probs[pick]);
  }
  return sel;
}

void policy_backward(Model& model, const Query& query, const EncodedDocument& doc,
                     const PolicyCache& cache, std::span<const real> dscores,
                     bool update_embeddings) {
  const size_t t_count = cache.policy.sentence_count();
  const size_t hidden = model.cfg.hidden_dim;
  Tensor& emb_grad = model.selector_embeddings().grad;

  std::vector<real> dh_q(hidden, 0);
  std::vector<real> dh_u(hidden);
  std::vector<real> dbow(std::max(model.cfg.embed_dim, hidden));
  for (size_t t = 0; t < t_count; ++t) {
    if (dscores[t] == 0) continue;
    std::fill(dh_u.begin(), dh_u.end(), 0);
    cosine_backward(cache.h_q, cache.h_u[t], dscores[t], dh_q, dh_u);
    std::fill(dbow.begin(), dbow.begin() + model.cfg.embed_dim, 0);
    std::span<real> dbow_u(dbow.data(), model.cfg.embed_dim);
    affine_tanh_backward(model.sel_Wu.value, cache.bow_u[t], cache.h_u[t], dh_u,
                         model.sel_Wu.grad, model.sel_bu.grad,
                         update_embeddings ? dbow_u : std::span<real>());
    if (update_embeddings) bow_backward(doc.sentences[t], dbow_u, emb_grad);
  }

  std::fill(dbow.begin(), dbow.begin() + model.cfg.embed_dim, 0);
  std::span<real> dbow_q(dbow.data(), model.cfg.embed_dim);
  affine_tanh_backward(model.sel_Wq.value, cache.bow_q, cache.h_q, dh_q, model.sel_Wq.grad,
                       model.sel_bq.grad, update_embeddings ? dbow_q : std::span<real>());
  if (update_embeddings) bow_backward(query.tokens, dbow_q, emb_grad);
}

void policy_grad(Model& model, const Query& query, const EncodedDocument& doc,
                 const PolicyCache& cache, const SelectedSentences& selected, real reward,
                 bool update_embeddings) {
  if (reward == 0 || selected.indices.empty()) return;
  const size_t t_count = cache.policy.sentence_count();
  // d/dc_j of sum_k log softmax(c)_{i_k} is count_j - K * p_j.
  std::vector<real> dscores(t_count, 0);
  for (size_t idx : selected.indices) dscores[idx] += 1;
  const real k_sel = static_cast<real>(selected.indices.size());
  for (size_t j = 0; j < t_count; ++j) {
    dscores[j] = -reward * (dscores[j] - k_sel * cache.policy.probs[j]);
  }
  policy_backward(model, query, doc, cache, dscores, update_embeddings);
}

}  // namespace rltm
