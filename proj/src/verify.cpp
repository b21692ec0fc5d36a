#include "rltm/verify.hpp"

#include <algorithm>
#include <cmath>

#include "rltm/grad_check.hpp"
#include "rltm/matcher.hpp"
#include "rltm/rng.hpp"
#include "rltm/selector.hpp"

namespace rltm {

namespace {

// Random model at a generic point: scaled weights keep the cosine stack away
// from degenerate tiny norms, random biases break the exact-zero ReLU and
// pooling plateaus where finite differences straddle kinks.
Model random_instance(MatcherKind kind, size_t embed_dim, size_t hidden_dim, size_t kernel_count,
                      size_t conv_maps, uint64_t seed) {
  ModelConfig cfg;
  cfg.vocab_size = 40;
  cfg.embed_dim = embed_dim;
  cfg.hidden_dim = hidden_dim;
  cfg.kernel_count = kernel_count;
  cfg.conv_maps = conv_maps;
  cfg.matcher = kind;
  cfg.query_cap = 6;
  cfg.sentence_len_cap = 10;
  cfg.sentence_cap = 8;
  cfg.pool_rows = 2;
  cfg.pool_cols = 3;
  Model model = Model::create(cfg, seed);
  Rng rng(substream_seed(seed, 0xc0));
  for (ParamTensor* p : model.params()) {
    if (p->value.rank() == 1) {
      for (auto& x : p->value.v) x = static_cast<real>(rng.uniform(-0.3, 0.3));
    } else {
      for (auto& x : p->value.v) x *= 10;
    }
  }
  return model;
}

std::vector<TokenId> random_ids(Rng& rng, size_t max_len, size_t vocab) {
  std::vector<TokenId> ids(1 + rng.uniform_index(max_len));
  for (auto& id : ids) id = static_cast<TokenId>(2 + rng.uniform_index(vocab - 2));
  return ids;
}

}  // namespace

std::vector<ModelGradCheckResult> model_grad_checks(MatcherKind kind, size_t embed_dim,
                                                    size_t hidden_dim, size_t kernel_count,
                                                    size_t conv_maps, int seeds, int probes,
                                                    uint64_t base_seed) {
  double worst_selector = 0, worst_psi = 0, worst_triple = 0;

  for (int s = 0; s < seeds; ++s) {
    const uint64_t seed = substream_seed(base_seed, s);
    Model model = random_instance(kind, embed_dim, hidden_dim, kernel_count, conv_maps, seed);
    Rng rng(substream_seed(seed, 1));

    Query query;
    query.query_id = "gq";
    query.tokens = random_ids(rng, 4, model.cfg.vocab_size);
    EncodedDocument pos, neg;
    pos.doc_id = "gp";
    pos.title = random_ids(rng, 4, model.cfg.vocab_size);
    neg.doc_id = "gn";
    neg.title = random_ids(rng, 4, model.cfg.vocab_size);
    const size_t t_pos = 2 + rng.uniform_index(3), t_neg = 2 + rng.uniform_index(3);
    for (size_t t = 0; t < t_pos; ++t) pos.sentences.push_back(random_ids(rng, 6, 40));
    for (size_t t = 0; t < t_neg; ++t) neg.sentences.push_back(random_ids(rng, 6, 40));

    // selector: loss = sum_k log pi(u_k | q, d+)
    SelectedSentences sel;
    sel.indices = {0, t_pos - 1};
    auto eval_selector = [&](bool with_grad) {
      const PolicyCache cache = compute_policy(model, query, pos);
      if (with_grad) policy_grad(model, query, pos, cache, sel, -1, true);
      double loss = 0;
      for (size_t idx : sel.indices) loss += std::log(cache.policy.probs[idx]);
      return loss;
    };
    worst_selector = std::max(
        worst_selector,
        grad_check(eval_selector, model.selector_params(true), probes, seed).max_rel_error);

    // matcher: loss = psi(q, u)
    auto eval_psi = [&](bool with_grad) {
      PsiCache cache;
      const real score = psi(model, query.tokens, pos.sentences[0], cache);
      if (with_grad) psi_backward(model, query.tokens, pos.sentences[0], cache, 1.0, true);
      return static_cast<double>(score);
    };
    worst_psi = std::max(
        worst_psi, grad_check(eval_psi, model.matcher_params(true), probes, seed).max_rel_error);

    // full triple loss: c * (sum log pi+ + sum log pi-) + (s+ - s-), with the
    // log-probability weight held constant as in the REINFORCE update
    const real weight = 0.7;
    SelectedSentences sel_neg;
    sel_neg.indices = {t_neg - 1};
    auto eval_triple = [&](bool with_grad) {
      const PolicyCache cache_pos = compute_policy(model, query, pos);
      const PolicyCache cache_neg = compute_policy(model, query, neg);
      std::vector<PsiCache> caches(2 + sel.indices.size() + sel_neg.indices.size());
      size_t c = 0;
      double s_plus = psi(model, query.tokens, pos.title, caches[c++]);
      for (size_t idx : sel.indices) {
        s_plus += psi(model, query.tokens, pos.sentences[idx], caches[c++]);
      }
      double s_minus = psi(model, query.tokens, neg.title, caches[c++]);
      for (size_t idx : sel_neg.indices) {
        s_minus += psi(model, query.tokens, neg.sentences[idx], caches[c++]);
      }
      double loss = s_plus - s_minus;
      for (size_t idx : sel.indices) loss += weight * std::log(cache_pos.policy.probs[idx]);
      for (size_t idx : sel_neg.indices) loss += weight * std::log(cache_neg.policy.probs[idx]);
      if (with_grad) {
        policy_grad(model, query, pos, cache_pos, sel, -weight, true);
        policy_grad(model, query, neg, cache_neg, sel_neg, -weight, true);
        c = 0;
        psi_backward(model, query.tokens, pos.title, caches[c++], 1.0, true);
        for (size_t idx : sel.indices) {
          psi_backward(model, query.tokens, pos.sentences[idx], caches[c++], 1.0, true);
        }
        psi_backward(model, query.tokens, neg.title, caches[c++], -1.0, true);
        for (size_t idx : sel_neg.indices) {
          psi_backward(model, query.tokens, neg.sentences[idx], caches[c++], -1.0, true);
        }
      }
      return loss;
    };
    worst_triple =
        std::max(worst_triple, grad_check(eval_triple, model.params(), probes, seed).max_rel_error);
  }

  return {{"selector", worst_selector}, {"psi", worst_psi}, {"triple", worst_triple}};
}

}  // namespace rltm
