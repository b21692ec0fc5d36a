#pragma once

#include <span>
#include <vector>

#include "rltm/tensor.hpp"

namespace rltm {

// --- dense layers ----------------------------------------------------------

// h = tanh(W x + b). W is (out x in), b and h are length out.
void affine_tanh_forward(const Tensor& W, const Tensor& b, std::span<const real> x,
                         std::span<real> h);

// Accumulates gradients given upstream dh and the cached output h.
// dx may be empty when the input gradient is not needed.
void affine_tanh_backward(const Tensor& W, std::span<const real> x, std::span<const real> h,
                          std::span<const real> dh, Tensor& dW, Tensor& db, std::span<real> dx);

// y = W x + b, no activation.
void affine_forward(const Tensor& W, const Tensor& b, std::span<const real> x, std::span<real> y);

void affine_backward(const Tensor& W, std::span<const real> x, std::span<const real> dy,
                     Tensor& dW, Tensor& db, std::span<real> dx);

// --- cosine similarity ------------------------------------------------------

// Guard against zero vectors: cos(a, b) = a.b / (|a||b| + kCosineEps).
inline constexpr real kCosineEps = 1e-12;

real cosine(std::span<const real> a, std::span<const real> b);

// Accumulates d(cos)/da and d(cos)/db scaled by upstream dc.
void cosine_backward(std::span<const real> a, std::span<const real> b, real dc,
                     std::span<real> da, std::span<real> db);

// --- softmax ----------------------------------------------------------------

// Max-shifted softmax. Throws DimensionError on empty input.
std::vector<real> softmax(std::span<const real> scores);

// --- convolution ------------------------------------------------------------

// Valid cross-correlation of a single-channel input with M kernels, plus bias
// and ReLU. input is (H x W), kernels (M x kh x kw), bias length M; the output
// is (M x H-kh+1 x W-kw+1). Throws DimensionError when a kernel window exceeds
// the input.
Tensor conv2d_valid_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias);

void conv2d_valid_backward(const Tensor& input, const Tensor& kernels, const Tensor& out,
                           const Tensor& dout, Tensor& dkernels, Tensor& dbias, Tensor& dinput);

// --- dynamic max pooling -----------------------------------------------------

// Partitions each (H x W) map into an out_rows x out_cols grid of rectangular
// cells with boundaries at floor(i*H/out_rows) and emits per-cell maxima.
// argmax records the flat input position per output (first occurrence on ties)
// for the backward pass.
Tensor dynamic_max_pool_forward(const Tensor& maps, size_t out_rows, size_t out_cols,
                                std::vector<size_t>& argmax);

void dynamic_max_pool_backward(const Tensor& dout, const std::vector<size_t>& argmax,
                               Tensor& dmaps);

// --- RBF kernel ---------------------------------------------------------------

// exp(-(x-mu)^2 / (2 sigma^2)). Throws ConfigError when sigma <= 0.
real gaussian_kernel(real x, real mu, real sigma);

// d/dx of gaussian_kernel at x.
real gaussian_kernel_dx(real x, real mu, real sigma);

}  // namespace rltm
