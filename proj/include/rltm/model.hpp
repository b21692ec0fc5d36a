#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rltm/tensor.hpp"

namespace rltm {

enum class MatcherKind { knrm, matchpyramid };

MatcherKind matcher_kind_from_string(const std::string& s);
std::string to_string(MatcherKind kind);

// Gaussian kernel centers and widths for the soft-TF pooling layer: one
// exact-match kernel at mu=1 plus evenly spaced soft bins.
struct KernelBank {
  std::vector<real> mus;
  std::vector<real> sigmas;

  static KernelBank make(size_t count);
  size_t size() const { return mus.size(); }
};

struct ModelConfig {
  size_t vocab_size = 0;
  size_t embed_dim = 128;
  size_t hidden_dim = 128;
  MatcherKind matcher = MatcherKind::knrm;
  size_t kernel_count = 11;
  size_t conv_maps = 128;
  size_t conv_kh = 2;   // window along the query axis
  size_t conv_kw = 4;   // window along the sentence axis
  size_t pool_rows = 4;
  size_t pool_cols = 8;
  size_t query_cap = 16;
  size_t sentence_len_cap = 64;
  size_t sentence_cap = 64;
  size_t k_sentences = 5;  // K body sentences selected besides the title
  bool share_embeddings = true;

  void validate() const;
};

// Every learnable tensor of the selector + matcher stack. Embeddings are
// shared between the two by default; a separate selector table is allocated
// when share_embeddings is off.
struct Model {
  ModelConfig cfg;
  KernelBank bank;

  ParamTensor embeddings;      // vocab x embed
  ParamTensor sel_embeddings;  // vocab x embed, only when !share_embeddings
  ParamTensor sel_Wq, sel_bq, sel_Wu, sel_bu;

  // K-NRM head
  ParamTensor knrm_w, knrm_b;

  // MatchPyramid stack
  ParamTensor conv_kernels, conv_bias, mp_W1, mp_b1, mp_W2, mp_b2;

  static Model create(const ModelConfig& cfg, uint64_t init_seed);

  const ParamTensor& selector_embeddings() const {
    return cfg.share_embeddings ? embeddings : sel_embeddings;
  }
  ParamTensor& selector_embeddings() {
    return cfg.share_embeddings ? embeddings : sel_embeddings;
  }

  std::vector<ParamTensor*> params();
  std::vector<ParamTensor*> selector_params(bool include_embeddings);
  std::vector<ParamTensor*> matcher_params(bool include_embeddings);

  void zero_grads();
};

// Versioned binary checkpoint: config hash, seed, vocabulary hash, model
// dimensions, then every named tensor. Loading validates shapes and the
// vocabulary hash.
void save_checkpoint(const std::string& path, const Model& model, uint64_t vocab_hash,
                     uint64_t config_hash, uint64_t seed);

struct Checkpoint {
  Model model;
  uint64_t vocab_hash = 0;
  uint64_t config_hash = 0;
  uint64_t seed = 0;
};

Checkpoint load_checkpoint(const std::string& path, uint64_t expected_vocab_hash);

}  // namespace rltm
