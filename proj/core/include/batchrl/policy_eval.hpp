#pragma once

#include <span>
#include <vector>

#include "batchrl/conditioning.hpp"
#include "batchrl/dataset.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

// Online critic plus its delayed target copy.
struct CriticPair {
  ParamSet online;
  ParamSet target;
  int steps_since_sync = 0;
};

CriticPair make_critic_pair(const ParamSet& initial);

// Monte-Carlo value estimate: mean of target-critic evaluations at M actions
// sampled from the policy at this observation.
double estimate_value(const ParamSet& critic_target, const ParamSet& policy,
                      std::span<const double> observation, int M, Rng& rng,
                      const TaskEncoding& enc);

struct TdResult {
  double loss = 0.0;
  std::vector<double> grad_phi;
};

// Mean squared TD error over every transition in the batch. Targets
// r + gamma * V(s') are built from the target critic and the given policy
// and treated as constants; grad_phi is exact for the online critic.
// Terminal transitions bootstrap with V(s') = 0.
TdResult td_loss_and_grad(std::span<const TrajectorySnippet> batch,
                          const CriticPair& critics, const ParamSet& policy,
                          double gamma, int M, Rng& rng, const TaskEncoding& enc);

// Counts one learner step; copies online into target exactly when the
// counter reaches the period, then resets it.
void maybe_sync(CriticPair& critics, int period);

}  // namespace batchrl
