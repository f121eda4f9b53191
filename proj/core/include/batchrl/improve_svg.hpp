#pragma once

#include <span>
#include <vector>

#include "batchrl/conditioning.hpp"
#include "batchrl/dataset.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

struct SvgPolicyResult {
  double objective = 0.0;          // to be ascended
  std::vector<double> grad_theta;  // d objective / d theta
  double mean_kl = 0.0;            // KL(pi_theta || pi_prior), batch mean
};

// Reparameterized value objective with the Lagrangian KL penalty:
//   mean_s [ (1/M) sum_j Q(s, mean + std*xi_j) + eta * (epsilon - KL(pi || prior)) ]
// Gradients flow through the sampled actions and the closed-form KL; the
// prior and critic parameters receive none.
SvgPolicyResult svg_policy_loss_and_grad(std::span<const TrajectorySnippet> batch,
                                         const ParamSet& policy,
                                         const ParamSet& prior,
                                         const ParamSet& critic_target, double eta,
                                         double epsilon, int M, Rng& rng,
                                         const TaskEncoding& enc);

// Mean over batch states of (epsilon - KL(pi_theta || pi_prior)): the
// eta-gradient of the relaxed objective. Descending it shrinks eta while the
// constraint is slack and grows it when violated.
double svg_eta_grad(std::span<const TrajectorySnippet> batch, const ParamSet& policy,
                    const ParamSet& prior, double epsilon, const TaskEncoding& enc);

}  // namespace batchrl
