#pragma once

#include <span>
#include <vector>

#include "batchrl/conditioning.hpp"
#include "batchrl/dataset.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

// Dual variables are kept at or above this floor after every update.
inline constexpr double kDualFloor = 0.001;

// Temperature and trust-region multipliers, each with its own Adam moments.
struct DualState {
  double eta = 3.0;
  double alpha = 1.0;
  double alpha_mu = 1.0;
  double alpha_sigma = 1.0;
  ScalarAdam eta_opt, alpha_opt, alpha_mu_opt, alpha_sigma_opt;
};

// softmax(q / eta) over the M samples of one state; max-subtracted for
// numerical stability, sums to 1.
std::vector<double> nonparam_weights(std::span<const double> q_values, double eta);

struct DualEval {
  double value = 0.0;
  double grad_eta = 0.0;
};

// Sample-based dual for the temperature:
//   g(eta) = eta*epsilon + mean_s [ eta * log( (1/M) sum_j exp(q_sj/eta) ) ]
// with the exact analytic eta-derivative. Convex in eta.
DualEval dual_value_and_grad(std::span<const std::vector<double>> q_per_state,
                             double eta, double epsilon);

// Trust-region configuration: a single combined KL bound, or decoupled
// bounds on the mean-shift and variance terms of the closed-form KL.
struct TrustRegion {
  bool decoupled = false;
  double eps_trust = 0.05;
  double eps_mu = 5e-3;
  double eps_sigma = 1e-5;
};

// Per-state proposal actions and their target-critic values, shared by the
// temperature dual and the policy update within one learner step.
struct MpoSamples {
  std::vector<std::vector<double>> policy_inputs;         // S x policy_in
  std::vector<std::vector<std::vector<double>>> actions;  // S x M x A
  std::vector<std::vector<double>> q;                     // S x M
};

// Draws M actions per batch state from the proposal network and evaluates
// the target critic at each.
MpoSamples make_mpo_samples(std::span<const TrajectorySnippet> batch,
                            const ParamSet& proposal, const ParamSet& critic_target,
                            int M, Rng& rng, const TaskEncoding& enc);

struct MpoPolicyResult {
  double loss = 0.0;                // -weighted log-likelihood + alpha * KL
  std::vector<double> grad_theta;   // d loss / d theta
  double grad_alpha = 0.0;          // mean KL - eps_trust
  double grad_alpha_mu = 0.0;
  double grad_alpha_sigma = 0.0;
  double mean_kl = 0.0;             // KL(pi_old || pi_theta), batch mean
  double mean_kl_mu = 0.0;
  double mean_kl_sigma = 0.0;
};

// Weighted maximum likelihood over the proposal samples (weights
// softmax(q/eta)) with the Lagrangian trust term alpha * KL(pi_old || pi).
MpoPolicyResult mpo_policy_loss_and_grad(const MpoSamples& samples,
                                         const DualState& dual,
                                         const ParamSet& policy,
                                         const ParamSet& policy_old,
                                         const TrustRegion& trust);

// One Adam descent step on the dual g(eta); pass dg/deta. Projects eta back
// to >= kDualFloor.
void eta_step(DualState& dual, double grad_eta, double lr);

// One Adam step on the trust multiplier; pass grad_alpha from
// mpo_policy_loss_and_grad (mean KL minus the bound). Alpha rises while the
// constraint is violated and decays when slack; projected to >= kDualFloor.
void alpha_step(DualState& dual, double grad_alpha, double lr);
void alpha_step_decoupled(DualState& dual, double grad_alpha_mu,
                          double grad_alpha_sigma, double lr);

}  // namespace batchrl
