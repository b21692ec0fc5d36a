#include "rltm/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rltm/baselines.hpp"
#include "rltm/ops.hpp"

namespace rltm {

MatchingMatrix matching_matrix(const Tensor& embeddings, std::span<const TokenId> query_ids,
                               std::span<const TokenId> sentence_ids, size_t query_cap,
                               size_t sentence_cap) {
  MatchingMatrix mm;
  mm.q_len = std::min(query_ids.size(), query_cap);
  mm.s_len = std::min(sentence_ids.size(), sentence_cap);
  mm.q_mask.resize(mm.q_len);
  mm.s_mask.resize(mm.s_len);
  mm.m = Tensor::zeros({query_cap, sentence_cap});

  const size_t dim = embeddings.dim(1);
  std::vector<real> q_norm(mm.q_len), s_norm(mm.s_len);
  for (size_t i = 0; i < mm.q_len; ++i) {
    mm.q_mask[i] = query_ids[i] != kPadId;
    const real* e = embeddings.row(query_ids[i]);
    real sq = 0;
    for (size_t d = 0; d < dim; ++d) sq += e[d] * e[d];
    q_norm[i] = std::sqrt(sq);
  }
  for (size_t j = 0; j < mm.s_len; ++j) {
    mm.s_mask[j] = sentence_ids[j] != kPadId;
    const real* e = embeddings.row(sentence_ids[j]);
    real sq = 0;
    for (size_t d = 0; d < dim; ++d) sq += e[d] * e[d];
    s_norm[j] = std::sqrt(sq);
  }
  for (size_t i = 0; i < mm.q_len; ++i) {
    if (!mm.q_mask[i]) continue;
    const real* eq = embeddings.row(query_ids[i]);
    real* out = mm.m.row(i);
    for (size_t j = 0; j < mm.s_len; ++j) {
      if (!mm.s_mask[j]) continue;
      const real* es = embeddings.row(sentence_ids[j]);
      real dot = 0;
      for (size_t d = 0; d < dim; ++d) dot += eq[d] * es[d];
      out[j] = dot / (q_norm[i] * s_norm[j] + kCosineEps);
    }
  }
  return mm;
}

static void matrix_backward(Model& model, std::span<const TokenId> query_ids,
                            std::span<const TokenId> sentence_ids, const MatchingMatrix& mm,
                            const Tensor& dm) {
  Tensor& emb_grad = model.embeddings.grad;
  const Tensor& emb = model.embeddings.value;
  const size_t dim = emb.dim(1);
  for (size_t i = 0; i < mm.q_len; ++i) {
    if (!mm.q_mask[i]) continue;
    for (size_t j = 0; j < mm.s_len; ++j) {
      if (!mm.s_mask[j]) continue;
      const real g = dm.at(i, j);
      if (g == 0) continue;
      cosine_backward(std::span<const real>(emb.row(query_ids[i]), dim),
                      std::span<const real>(emb.row(sentence_ids[j]), dim), g,
                      std::span<real>(emb_grad.row(query_ids[i]), dim),
                      std::span<real>(emb_grad.row(sentence_ids[j]), dim));
    }
  }
}

real knrm_psi(const Model& model, std::span<const TokenId> query_ids,
              std::span<const TokenId> sentence_ids, PsiCache& cache) {
  const ModelConfig& cfg = model.cfg;
  cache.mm = matching_matrix(model.embeddings.value, query_ids, sentence_ids, cfg.query_cap,
                             cfg.sentence_len_cap);
  const MatchingMatrix& mm = cache.mm;
  const size_t nk = model.bank.size();
  cache.kernel_sums = Tensor::zeros({cfg.query_cap, nk});
  cache.phi.assign(nk, 0);

  for (size_t i = 0; i < mm.q_len; ++i) {
    if (!mm.q_mask[i]) continue;
    const real* row = mm.m.row(i);
    real* sums = cache.kernel_sums.row(i);
    for (size_t j = 0; j < mm.s_len; ++j) {
      if (!mm.s_mask[j]) continue;
      const real x = row[j];
      for (size_t k = 0; k < nk; ++k) {
        sums[k] += gaussian_kernel(x, model.bank.mus[k], model.bank.sigmas[k]);
      }
    }
    for (size_t k = 0; k < nk; ++k) cache.phi[k] += std::log(sums[k] + kKnrmLogEps);
  }

  real score = model.knrm_b.value.at(0);
  for (size_t k = 0; k < nk; ++k) score += model.knrm_w.value.at(0, k) * cache.phi[k];
  cache.score = score;
  return score;
}

void knrm_psi_backward(Model& model, std::span<const TokenId> query_ids,
                       std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                       bool update_embeddings) {
  const MatchingMatrix& mm = cache.mm;
  const size_t nk = model.bank.size();

  model.knrm_b.grad.at(0) += dscore;
  for (size_t k = 0; k < nk; ++k) model.knrm_w.grad.at(0, k) += dscore * cache.phi[k];
  if (!update_embeddings) return;

  Tensor dm = Tensor::zeros(cache.mm.m.shape);
  for (size_t i = 0; i < mm.q_len; ++i) {
    if (!mm.q_mask[i]) continue;
    const real* row = mm.m.row(i);
    const real* sums = cache.kernel_sums.row(i);
    real* drow = dm.row(i);
    for (size_t j = 0; j < mm.s_len; ++j) {
      if (!mm.s_mask[j]) continue;
      real acc = 0;
      for (size_t k = 0; k < nk; ++k) {
        const real dphi = dscore * model.knrm_w.value.at(0, k);
        acc += dphi / (sums[k] + kKnrmLogEps) *
               gaussian_kernel_dx(row[j], model.bank.mus[k], model.bank.sigmas[k]);
      }
      drow[j] = acc;
    }
  }
  matrix_backward(model, query_ids, sentence_ids, mm, dm);
}

real mp_psi(const Model& model, std::span<const TokenId> query_ids,
            std::span<const TokenId> sentence_ids, PsiCache& cache) {
  const ModelConfig& cfg = model.cfg;
  cache.mm = matching_matrix(model.embeddings.value, query_ids, sentence_ids, cfg.query_cap,
                             cfg.sentence_len_cap);
  cache.conv_out = conv2d_valid_forward(cache.mm.m, model.conv_kernels.value, model.conv_bias.value);
  cache.pooled =
      dynamic_max_pool_forward(cache.conv_out, cfg.pool_rows, cfg.pool_cols, cache.pool_argmax);
  cache.h1.assign(cfg.hidden_dim, 0);
  affine_tanh_forward(model.mp_W1.value, model.mp_b1.value, cache.pooled.v, cache.h1);
  real score = 0;
  affine_forward(model.mp_W2.value, model.mp_b2.value, cache.h1, std::span<real>(&score, 1));
  cache.score = score;
  return score;
}

void mp_psi_backward(Model& model, std::span<const TokenId> query_ids,
                     std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                     bool update_embeddings) {
  const ModelConfig& cfg = model.cfg;
  std::vector<real> dh1(cfg.hidden_dim, 0);
  affine_backward(model.mp_W2.value, cache.h1, std::span<const real>(&dscore, 1), model.mp_W2.grad,
                  model.mp_b2.grad, dh1);

  Tensor dpooled = Tensor::zeros(cache.pooled.shape);
  affine_tanh_backward(model.mp_W1.value, cache.pooled.v, cache.h1, dh1, model.mp_W1.grad,
                       model.mp_b1.grad, dpooled.v);

  Tensor dconv = Tensor::zeros(cache.conv_out.shape);
  dynamic_max_pool_backward(dpooled, cache.pool_argmax, dconv);

  Tensor dm = Tensor::zeros(cache.mm.m.shape);
  conv2d_valid_backward(cache.mm.m, model.conv_kernels.value, cache.conv_out, dconv,
                        model.conv_kernels.grad, model.conv_bias.grad, dm);
  if (update_embeddings) matrix_backward(model, query_ids, sentence_ids, cache.mm, dm);
}

real psi(const Model& model, std::span<const TokenId> query_ids,
         std::span<const TokenId> sentence_ids, PsiCache& cache) {
  return model.cfg.matcher == MatcherKind::knrm ? knrm_psi(model, query_ids, sentence_ids, cache)
                                                : mp_psi(model, query_ids, sentence_ids, cache);
}

void psi_backward(Model& model, std::span<const TokenId> query_ids,
                  std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                  bool update_embeddings) {
  if (model.cfg.matcher == MatcherKind::knrm) {
    knrm_psi_backward(model, query_ids, sentence_ids, cache, dscore, update_embeddings);
  } else {
    mp_psi_backward(model, query_ids, sentence_ids, cache, dscore, update_embeddings);
  }
}

real aggregate(std::span<const real> scores) {
  if (scores.empty()) throw DimensionError("aggregate: empty score list");
  real s = 0;
  for (real x : scores) s += x;
  return s;
}

ScoreMode score_mode_from_string(const std::string& s) {
  if (s == "topk") return ScoreMode::topk;
  if (s == "sampled") return ScoreMode::sampled;
  if (s == "fulldoc") return ScoreMode::fulldoc;
  if (s == "firstk") return ScoreMode::firstk;
  if (s == "random") return ScoreMode::random;
  throw ConfigError("unknown score mode '" + s + "'");
}

std::string to_string(ScoreMode mode) {
  switch (mode) {
    case ScoreMode::topk: return "topk";
    case ScoreMode::sampled: return "sampled";
    case ScoreMode::fulldoc: return "fulldoc";
    case ScoreMode::firstk: return "firstk";
    case ScoreMode::random: return "random";
  }
  return "?";
}

static SelectedSentences pick_sentences(const Model& model, const Query& query,
                                        const EncodedDocument& doc, ScoreMode mode, size_t k,
                                        Rng* rng) {
  switch (mode) {
    case ScoreMode::topk:
      return select_topk(compute_policy(model, query, doc).policy, k);
    case ScoreMode::sampled: {
      if (!rng) throw ConfigError("score_document: sampled mode needs an rng");
      return sample_k(compute_policy(model, query, doc).policy, k, *rng);
    }
    case ScoreMode::fulldoc: {
      SelectedSentences sel;
      sel.indices.resize(doc.sentence_count());
      std::iota(sel.indices.begin(), sel.indices.end(), 0);
      return sel;
    }
    case ScoreMode::firstk:
      return select_firstk(doc, k);
    case ScoreMode::random:
      if (!rng) throw ConfigError("score_document: random mode needs an rng");
      return select_random(doc, k, *rng);
  }
  throw ConfigError("score_document: bad mode");
}

ScoredDocument score_document(const Model& model, const Query& query, const EncodedDocument& doc,
                              ScoreMode mode, size_t k, Rng* rng) {
  ScoredDocument result;
  if (doc.sentence_count() > 0) {
    result.selected = pick_sentences(model, query, doc, mode, k, rng);
  }
  PsiCache cache;
  result.psi_values.push_back(psi(model, query.tokens, doc.title, cache));
  for (size_t idx : result.selected.indices) {
    result.psi_values.push_back(psi(model, query.tokens, doc.sentences[idx], cache));
  }
  result.score = aggregate(result.psi_values);
  return result;
}

}  // namespace rltm
