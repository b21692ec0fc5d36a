#include "rltm/tensor.hpp"

#include <cmath>

namespace rltm {

Tensor Tensor::zeros(std::vector<size_t> shape) {
  Tensor t;
  size_t n = 1;
  for (size_t d : shape) n *= d;
  t.shape = std::move(shape);
  t.v.assign(n, 0);
  return t;
}

void Tensor::fill(real x) {
  for (auto& e : v) e = x;
}

bool Tensor::all_finite() const {
  for (real e : v) {
    if (!std::isfinite(e)) return false;
  }
  return true;
}

ParamTensor::ParamTensor(std::string name_, std::vector<size_t> shape) : name(std::move(name_)) {
  value = Tensor::zeros(shape);
  grad = Tensor::zeros(shape);
  adam_m = Tensor::zeros(shape);
  adam_v = Tensor::zeros(std::move(shape));
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0)) throw ConfigError("adam: learning_rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("adam: beta1 must be in [0, 1)");
  if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam: beta2 must be in [0, 1)");
  if (!(epsilon > 0)) throw ConfigError("adam: epsilon must be > 0");
}

void adam_step(ParamTensor& param, const AdamConfig& config) {
  if (!param.grad.all_finite()) {
    throw NumericError("adam_step: non-finite gradient in tensor '" + param.name + "'");
  }
  param.step_count += 1;
  const real t = static_cast<real>(param.step_count);
  const real bc1 = 1 - std::pow(config.beta1, t);
  const real bc2 = 1 - std::pow(config.beta2, t);
  for (size_t i = 0; i < param.value.size(); ++i) {
    const real g = param.grad.v[i];
    param.adam_m.v[i] = config.beta1 * param.adam_m.v[i] + (1 - config.beta1) * g;
    param.adam_v.v[i] = config.beta2 * param.adam_v.v[i] + (1 - config.beta2) * g * g;
    const real m_hat = param.adam_m.v[i] / bc1;
    const real v_hat = param.adam_v.v[i] / bc2;
    param.value.v[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
  }
  if (!param.value.all_finite()) {
    throw NumericError("adam_step: non-finite value in tensor '" + param.name + "' after update");
  }
  param.zero_grad();
}

real global_grad_norm(const std::vector<ParamTensor*>& params) {
  real sq = 0;
  for (const ParamTensor* p : params) {
    for (real g : p->grad.v) sq += g * g;
  }
  return std::sqrt(sq);
}

void clip_global_grad_norm(const std::vector<ParamTensor*>& params, real max_norm) {
  if (max_norm <= 0) return;
  const real norm = global_grad_norm(params);
  if (norm <= max_norm) return;
  scale_grads(params, max_norm / norm);
}

void scale_grads(const std::vector<ParamTensor*>& params, real factor) {
  for (ParamTensor* p : params) {
    for (real& g : p->grad.v) g *= factor;
  }
}

}  // namespace rltm
