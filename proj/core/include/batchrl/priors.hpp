#pragma once

#include <span>
#include <vector>

#include "batchrl/conditioning.hpp"
#include "batchrl/dataset.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/policy_eval.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

// Per-step advantage filter decision. step_index is the 1-based position t
// inside the snippet, matching nstep_return's convention; weight is 1 iff
// advantage >= 0.
struct AdvantageWeight {
  int snippet_index = 0;
  int step_index = 0;
  double advantage = 0.0;
  int weight = 0;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Negative mean log-likelihood of observed actions under the prior head.
// Runs over steps 1..N-1 of each snippet (the final step only contributes
// its observation as a bootstrap state), so that the advantage-weighted
// variant with all weights 1 reduces to this loss exactly.
LossGrad bm_loss_and_grad(std::span<const TrajectorySnippet> batch,
                          const ParamSet& prior, const TaskEncoding& enc);

// Unit-step advantage filter: compares each step's n-step return (bootstrap
// value at the snippet's final observation, target critic) against the value
// estimate at the step's own state.
std::vector<AdvantageWeight> abm_weights(std::span<const TrajectorySnippet> batch,
                                         const CriticPair& critics,
                                         const ParamSet& policy, double gamma,
                                         int M, Rng& rng, const TaskEncoding& enc);

// Negative weighted mean log-likelihood, normalized by the number of
// weight-1 steps. All weights zero yields loss 0 with zero gradient.
LossGrad abm_loss_and_grad(std::span<const TrajectorySnippet> batch,
                           std::span<const AdvantageWeight> weights,
                           const ParamSet& prior, const TaskEncoding& enc);

}  // namespace batchrl
