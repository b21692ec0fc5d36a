#pragma once

#include <span>
#include <vector>

#include "rltm/corpus.hpp"
#include "rltm/model.hpp"
#include "rltm/rng.hpp"
#include "rltm/selector.hpp"
#include "rltm/tensor.hpp"

namespace rltm {

// Term-level cosine similarities between a query and one sentence, zero-padded
// to the configured caps so convolution shapes stay static. Entries whose row
// or column is PAD (or beyond the real length) are masked to exact 0.
struct MatchingMatrix {
  size_t q_len = 0;  // real query positions
  size_t s_len = 0;  // real sentence positions
  std::vector<uint8_t> q_mask;  // non-PAD flags over [0, q_len)
  std::vector<uint8_t> s_mask;
  Tensor m;  // query_cap x sentence_len_cap
};

MatchingMatrix matching_matrix(const Tensor& embeddings, std::span<const TokenId> query_ids,
                               std::span<const TokenId> sentence_ids, size_t query_cap,
                               size_t sentence_cap);

inline constexpr real kKnrmLogEps = 1e-10;

// Forward intermediates for one sentence-level match, reusable across calls.
struct PsiCache {
  MatchingMatrix mm;
  // K-NRM
  Tensor kernel_sums;  // query_cap x kernel_count, soft-TF per row
  std::vector<real> phi;
  // MatchPyramid
  Tensor conv_out;
  Tensor pooled;
  std::vector<size_t> pool_argmax;
  std::vector<real> h1;
  real score = 0;
};

// Soft-TF kernel pooling: per valid query row i, K_k(i) sums the k-th Gaussian
// kernel over valid columns; phi_k = sum_i log(K_k(i) + eps); score is an
// affine map of phi. A fully masked matrix scores exactly the bias.
real knrm_psi(const Model& model, std::span<const TokenId> query_ids,
              std::span<const TokenId> sentence_ids, PsiCache& cache);

void knrm_psi_backward(Model& model, std::span<const TokenId> query_ids,
                       std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                       bool update_embeddings);

// Convolution (ReLU) over the padded matrix, dynamic max pooling to a fixed
// grid, then a tanh hidden layer and a linear scalar head.
real mp_psi(const Model& model, std::span<const TokenId> query_ids,
            std::span<const TokenId> sentence_ids, PsiCache& cache);

void mp_psi_backward(Model& model, std::span<const TokenId> query_ids,
                     std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                     bool update_embeddings);

// Dispatch on the configured matcher kind.
real psi(const Model& model, std::span<const TokenId> query_ids,
         std::span<const TokenId> sentence_ids, PsiCache& cache);

void psi_backward(Model& model, std::span<const TokenId> query_ids,
                  std::span<const TokenId> sentence_ids, const PsiCache& cache, real dscore,
                  bool update_embeddings);

// Aggregation over the selected sentences' scores. Throws on an empty list;
// the title score is always present by contract.
real aggregate(std::span<const real> scores);

enum class ScoreMode { topk, sampled, fulldoc, firstk, random };

ScoreMode score_mode_from_string(const std::string& s);
std::string to_string(ScoreMode mode);

struct ScoredDocument {
  real score = 0;
  SelectedSentences selected;     // body sentence indices (title excluded)
  std::vector<real> psi_values;   // title first, then the selected sentences
};

// Whole-document relevance: psi on the title plus the body sentences picked by
// the given mode, aggregated by summation. Documents with empty bodies score
// title-only. rng is required for sampled/random modes.
ScoredDocument score_document(const Model& model, const Query& query, const EncodedDocument& doc,
                              ScoreMode mode, size_t k, Rng* rng = nullptr);

}  // namespace rltm
