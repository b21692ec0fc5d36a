#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rltm/tensor.hpp"

namespace rltm {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_tensor;
  size_t worst_index = 0;
  double analytic = 0;
  double numeric = 0;
  size_t probes_checked = 0;
  size_t probes_skipped = 0;  // coordinates where finite differences are invalid
};

inline constexpr double kGradCheckStep = 1e-5;

// Central differences of a double-precision loss carry ~1e-10 of cancellation
// noise at this step size; coordinates whose true gradient sits below this
// floor compare against it instead of each other.
inline constexpr double kGradCheckNoiseFloor = 1e-3;

// Compares analytic gradients against central finite differences of a scalar
// loss. eval(true) must recompute the loss and fill every gradient slot from
// zeroed gradients; eval(false) must compute the loss without touching
// gradients. Probes `probes` random coordinates per tensor (all of them when a
// tensor is smaller). Relative error uses max(|analytic|, |numeric|,
// kGradCheckNoiseFloor) as the denominator.
//
// Coordinates where the two one-sided slopes disagree by more than 1% of the
// slope scale are skipped and counted in probes_skipped: there the loss has a
// kink (ReLU gate, pooling argmax switch) or curvature beyond what the step
// resolves, so central differences measure nothing about the gradient.
GradCheckResult grad_check(const std::function<double(bool with_grad)>& eval,
                           const std::vector<ParamTensor*>& params, int probes, uint64_t seed);

}  // namespace rltm
