#include "rltm/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "rltm/rng.hpp"

namespace rltm {

GradCheckResult grad_check(const std::function<double(bool with_grad)>& eval,
                           const std::vector<ParamTensor*>& params, int probes, uint64_t seed) {
  for (ParamTensor* p : params) p->zero_grad();
  const double base = eval(true);

  Rng rng(seed);
  GradCheckResult result;
  for (ParamTensor* p : params) {
    const size_t n = p->value.size();
    if (n == 0) continue;
    std::vector<size_t> coords;
    if (static_cast<size_t>(probes) >= n) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int k = 0; k < probes; ++k) coords.push_back(rng.uniform_index(n));
    }
    for (size_t idx : coords) {
      const real saved = p->value.v[idx];
      p->value.v[idx] = saved + static_cast<real>(kGradCheckStep);
      const double plus = eval(false);
      p->value.v[idx] = saved - static_cast<real>(kGradCheckStep);
      const double minus = eval(false);
      p->value.v[idx] = saved;

      const double numeric = (plus - minus) / (2 * kGradCheckStep);
      const double analytic = p->grad.v[idx];

      // one-sided slope disagreement marks a kink or unresolvable curvature
      const double slope_fwd = (plus - base) / kGradCheckStep;
      const double slope_bwd = (base - minus) / kGradCheckStep;
      const double slope_scale =
          std::max({std::abs(slope_fwd), std::abs(slope_bwd), kGradCheckNoiseFloor});
      if (std::abs(slope_fwd - slope_bwd) > 0.01 * slope_scale) {
        ++result.probes_skipped;
        continue;
      }
      ++result.probes_checked;

      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckNoiseFloor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = p->name;
        result.worst_index = idx;
        result.analytic = analytic;
        result.numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace rltm
