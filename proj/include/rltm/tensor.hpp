#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rltm/error.hpp"

namespace rltm {

#ifdef RLTM_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

// Dense row-major array. Rank 1 and 2 cover almost everything; convolution
// kernels use rank 3 (map, kh, kw) and feature maps rank 3 (map, row, col).
struct Tensor {
  std::vector<size_t> shape;
  std::vector<real> v;

  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape);

  size_t size() const { return v.size(); }
  size_t dim(size_t i) const { return shape[i]; }
  size_t rank() const { return shape.size(); }

  real& at(size_t i) { return v[i]; }
  real at(size_t i) const { return v[i]; }
  real& at(size_t i, size_t j) { return v[i * shape[1] + j]; }
  real at(size_t i, size_t j) const { return v[i * shape[1] + j]; }
  real& at(size_t i, size_t j, size_t k) { return v[(i * shape[1] + j) * shape[2] + k]; }
  real at(size_t i, size_t j, size_t k) const { return v[(i * shape[1] + j) * shape[2] + k]; }

  real* row(size_t i) { return v.data() + i * shape[1]; }
  const real* row(size_t i) const { return v.data() + i * shape[1]; }

  void fill(real x);
  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

// A learnable tensor: value plus gradient slot and Adam moment estimates,
// all sharing one shape.
struct ParamTensor {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  int64_t step_count = 0;

  ParamTensor() = default;
  ParamTensor(std::string name, std::vector<size_t> shape);

  void zero_grad() { grad.fill(0); }
};

struct AdamConfig {
  real learning_rate = 1e-3;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real epsilon = 1e-8;

  void validate() const;
};

// One Adam update with bias correction. Zeroes the gradient afterwards and
// increments step_count. Throws NumericError on a non-finite gradient.
void adam_step(ParamTensor& param, const AdamConfig& config);

real global_grad_norm(const std::vector<ParamTensor*>& params);

// Rescales all gradients so their global L2 norm is at most max_norm.
// max_norm <= 0 disables clipping.
void clip_global_grad_norm(const std::vector<ParamTensor*>& params, real max_norm);

void scale_grads(const std::vector<ParamTensor*>& params, real factor);

}  // namespace rltm
