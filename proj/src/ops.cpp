#include "rltm/ops.hpp"

#include <algorithm>
#include <cmath>

namespace rltm {

static void check_affine_shapes(const Tensor& W, const Tensor& b, size_t x_len, size_t out_len) {
  if (W.rank() != 2) throw DimensionError("affine: W must be rank 2");
  if (W.dim(1) != x_len) throw DimensionError("affine: W columns do not match input length");
  if (W.dim(0) != b.size() || W.dim(0) != out_len) {
    throw DimensionError("affine: output length does not match W rows / bias");
  }
}

void affine_tanh_forward(const Tensor& W, const Tensor& b, std::span<const real> x,
                         std::span<real> h) {
  check_affine_shapes(W, b, x.size(), h.size());
  const size_t out = W.dim(0), in = W.dim(1);
  for (size_t i = 0; i < out; ++i) {
    const real* w = W.row(i);
    real acc = b.at(i);
    for (size_t j = 0; j < in; ++j) acc += w[j] * x[j];
    h[i] = std::tanh(acc);
  }
}

void affine_tanh_backward(const Tensor& W, std::span<const real> x, std::span<const real> h,
                          std::span<const real> dh, Tensor& dW, Tensor& db, std::span<real> dx) {
  const size_t out = W.dim(0), in = W.dim(1);
  for (size_t i = 0; i < out; ++i) {
    const real dpre = dh[i] * (1 - h[i] * h[i]);
    db.at(i) += dpre;
    real* dw = dW.row(i);
    const real* w = W.row(i);
    for (size_t j = 0; j < in; ++j) {
      dw[j] += dpre * x[j];
      if (!dx.empty()) dx[j] += dpre * w[j];
    }
  }
}

void affine_forward(const Tensor& W, const Tensor& b, std::span<const real> x, std::span<real> y) {
  check_affine_shapes(W, b, x.size(), y.size());
  const size_t out = W.dim(0), in = W.dim(1);
  for (size_t i = 0; i < out; ++i) {
    const real* w = W.row(i);
    real acc = b.at(i);
    for (size_t j = 0; j < in; ++j) acc += w[j] * x[j];
    y[i] = acc;
  }
}

void affine_backward(const Tensor& W, std::span<const real> x, std::span<const real> dy,
                     Tensor& dW, Tensor& db, std::span<real> dx) {
  const size_t out = W.dim(0), in = W.dim(1);
  for (size_t i = 0; i < out; ++i) {
    const real g = dy[i];
    db.at(i) += g;
    real* dw = dW.row(i);
    const real* w = W.row(i);
    for (size_t j = 0; j < in; ++j) {
      dw[j] += g * x[j];
      if (!dx.empty()) dx[j] += g * w[j];
    }
  }
}

real cosine(std::span<const real> a, std::span<const real> b) {
  if (a.size() != b.size()) throw DimensionError("cosine: length mismatch");
  real dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb) + kCosineEps);
}

void cosine_backward(std::span<const real> a, std::span<const real> b, real dc,
                     std::span<real> da, std::span<real> db) {
  real dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const real norm_a = std::sqrt(na);
  const real norm_b = std::sqrt(nb);
  const real denom = norm_a * norm_b + kCosineEps;
  // c = dot/denom; the norm-derivative terms vanish with the dot product, so a
  // zero vector contributes only the direct b/denom path.
  const real fa = (dot == 0 || norm_a == 0) ? 0 : dot * norm_b / (norm_a * denom * denom);
  const real fb = (dot == 0 || norm_b == 0) ? 0 : dot * norm_a / (norm_b * denom * denom);
  for (size_t i = 0; i < a.size(); ++i) {
    da[i] += dc * (b[i] / denom - fa * a[i]);
    db[i] += dc * (a[i] / denom - fb * b[i]);
  }
}

std::vector<real> softmax(std::span<const real> scores) {
  if (scores.empty()) throw DimensionError("softmax: empty input");
  const real m = *std::max_element(scores.begin(), scores.end());
  std::vector<real> p(scores.size());
  real sum = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    p[i] = std::exp(scores[i] - m);
    sum += p[i];
  }
  for (real& x : p) x /= sum;
  return p;
}

Tensor conv2d_valid_forward(const Tensor& input, const Tensor& kernels, const Tensor& bias) {
  if (input.rank() != 2 || kernels.rank() != 3) {
    throw DimensionError("conv2d_valid: input must be rank 2, kernels rank 3");
  }
  const size_t h = input.dim(0), w = input.dim(1);
  const size_t maps = kernels.dim(0), kh = kernels.dim(1), kw = kernels.dim(2);
  if (kh > h || kw > w) throw DimensionError("conv2d_valid: kernel window exceeds input");
  if (bias.size() != maps) throw DimensionError("conv2d_valid: bias length mismatch");
  const size_t oh = h - kh + 1, ow = w - kw + 1;
  Tensor out = Tensor::zeros({maps, oh, ow});
  for (size_t m = 0; m < maps; ++m) {
    const real* k = kernels.v.data() + m * kh * kw;
    const real bm = bias.at(m);
    for (size_t i = 0; i < oh; ++i) {
      for (size_t j = 0; j < ow; ++j) {
        real acc = bm;
        for (size_t a = 0; a < kh; ++a) {
          const real* in_row = input.row(i + a) + j;
          const real* k_row = k + a * kw;
          for (size_t c = 0; c < kw; ++c) acc += k_row[c] * in_row[c];
        }
        out.at(m, i, j) = acc > 0 ? acc : 0;
      }
    }
  }
  return out;
}

void conv2d_valid_backward(const Tensor& input, const Tensor& kernels, const Tensor& out,
                           const Tensor& dout, Tensor& dkernels, Tensor& dbias, Tensor& dinput) {
  const size_t maps = kernels.dim(0), kh = kernels.dim(1), kw = kernels.dim(2);
  const size_t oh = out.dim(1), ow = out.dim(2);
  for (size_t m = 0; m < maps; ++m) {
    const real* k = kernels.v.data() + m * kh * kw;
    real* dk = dkernels.v.data() + m * kh * kw;
    for (size_t i = 0; i < oh; ++i) {
      for (size_t j = 0; j < ow; ++j) {
        if (out.at(m, i, j) <= 0) continue;  // ReLU gate
        const real g = dout.at(m, i, j);
        if (g == 0) continue;
        dbias.at(m) += g;
        for (size_t a = 0; a < kh; ++a) {
          const real* in_row = input.row(i + a) + j;
          real* din_row = dinput.row(i + a) + j;
          real* dk_row = dk + a * kw;
          const real* k_row = k + a * kw;
          for (size_t c = 0; c < kw; ++c) {
            dk_row[c] += g * in_row[c];
            din_row[c] += g * k_row[c];
          }
        }
      }
    }
  }
}

Tensor dynamic_max_pool_forward(const Tensor& maps, size_t out_rows, size_t out_cols,
                                std::vector<size_t>& argmax) {
  if (maps.rank() != 3) throw DimensionError("dynamic_max_pool: maps must be rank 3");
  if (out_rows < 1 || out_cols < 1) throw DimensionError("dynamic_max_pool: grid must be >= 1x1");
  const size_t n = maps.dim(0), h = maps.dim(1), w = maps.dim(2);
  if (out_rows > h || out_cols > w) {
    throw DimensionError("dynamic_max_pool: output grid larger than input map");
  }
  Tensor out = Tensor::zeros({n, out_rows, out_cols});
  argmax.assign(out.size(), 0);
  size_t flat = 0;
  for (size_t m = 0; m < n; ++m) {
    for (size_t i = 0; i < out_rows; ++i) {
      const size_t r0 = i * h / out_rows, r1 = (i + 1) * h / out_rows;
      for (size_t j = 0; j < out_cols; ++j) {
        const size_t c0 = j * w / out_cols, c1 = (j + 1) * w / out_cols;
        real best = maps.at(m, r0, c0);
        size_t best_pos = (m * h + r0) * w + c0;
        for (size_t r = r0; r < r1; ++r) {
          for (size_t c = c0; c < c1; ++c) {
            const real x = maps.at(m, r, c);
            if (x > best) {
              best = x;
              best_pos = (m * h + r) * w + c;
            }
          }
        }
        out.v[flat] = best;
        argmax[flat] = best_pos;
        ++flat;
      }
    }
  }
  return out;
}

void dynamic_max_pool_backward(const Tensor& dout, const std::vector<size_t>& argmax,
                               Tensor& dmaps) {
  for (size_t i = 0; i < dout.size(); ++i) dmaps.v[argmax[i]] += dout.v[i];
}

real gaussian_kernel(real x, real mu, real sigma) {
  if (!(sigma > 0)) throw ConfigError("gaussian_kernel: sigma must be > 0");
  const real d = x - mu;
  return std::exp(-d * d / (2 * sigma * sigma));
}

real gaussian_kernel_dx(real x, real mu, real sigma) {
  const real d = x - mu;
  return gaussian_kernel(x, mu, sigma) * (-d / (sigma * sigma));
}

}  // namespace rltm
