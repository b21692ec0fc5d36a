#pragma once

#include <string>
#include <vector>

#include "rltm/model.hpp"

namespace rltm {

struct ModelGradCheckResult {
  std::string component;  // "selector", "psi", "triple"
  double max_rel_error = 0;
};

// End-to-end gradient fidelity harness: builds small randomized models at
// generic parameter points and compares every analytic backward against
// central finite differences. Components per matcher kind:
//   selector - d(sum_k log pi(u_k)) over the policy stack
//   psi      - d(psi(q, u)) over the matcher stack
//   triple   - the combined training loss on one triple, a constant-weighted
//              log-probability term plus the raw score gap
// Each result is the max relative error across all seeds.
std::vector<ModelGradCheckResult> model_grad_checks(MatcherKind kind, size_t embed_dim,
                                                    size_t hidden_dim, size_t kernel_count,
                                                    size_t conv_maps, int seeds, int probes,
                                                    uint64_t base_seed);

}  // namespace rltm
