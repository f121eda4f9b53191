#include "batchrl/priors.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "batchrl/gaussian.hpp"

namespace batchrl {

namespace {

// Shared body: accumulate -sum(coeff * log pi(a_t | s_t)) and its gradient,
// then normalize by `norm`.
LossGrad weighted_nll(std::span<const TrajectorySnippet> batch,
                      const ParamSet& prior, const TaskEncoding& enc,
                      const std::vector<double>& coeffs, double norm) {
  LossGrad out;
  out.grad.assign(prior.values.size(), 0.0);
  std::vector<double> raw_grad;
  std::size_t k = 0;
  for (const TrajectorySnippet& snippet : batch) {
    for (int t = 1; t <= snippet.length() - 1; ++t, ++k) {
      const double c = coeffs[k];
      if (c == 0.0) continue;
      const Transition& step = snippet.steps[t - 1];
      const std::vector<double> pin = enc.policy_input(step.observation);
      const std::vector<double> raw = forward(prior, pin);
      const GaussianHead head = make_head(raw);
      out.loss += -c * log_prob(head, step.action);

      HeadGrad hg = log_prob_grad(head, step.action);
      const double scale = -c / norm;
      for (double& v : hg.d_mean) v *= scale;
      for (double& v : hg.d_std) v *= scale;
      raw_grad.assign(raw.size(), 0.0);
      head_grad_to_raw(raw, hg, raw_grad);
      backward_accumulate(prior, pin, raw_grad, out.grad, {});
    }
  }
  out.loss /= norm;
  if (!std::isfinite(out.loss))
    throw std::runtime_error("prior loss is non-finite");
  return out;
}

std::size_t count_weighted_steps(std::span<const TrajectorySnippet> batch) {
  std::size_t n = 0;
  for (const TrajectorySnippet& s : batch) {
    if (s.length() < 2)
      throw std::invalid_argument("prior loss: snippet shorter than 2 steps");
    n += static_cast<std::size_t>(s.length()) - 1;
  }
  return n;
}

}  // namespace

LossGrad bm_loss_and_grad(std::span<const TrajectorySnippet> batch,
                          const ParamSet& prior, const TaskEncoding& enc) {
  if (batch.empty()) throw std::invalid_argument("bm_loss_and_grad: empty batch");
  const std::size_t n = count_weighted_steps(batch);
  const std::vector<double> ones(n, 1.0);
  return weighted_nll(batch, prior, enc, ones, static_cast<double>(n));
}

std::vector<AdvantageWeight> abm_weights(std::span<const TrajectorySnippet> batch,
                                         const CriticPair& critics,
                                         const ParamSet& policy, double gamma,
                                         int M, Rng& rng, const TaskEncoding& enc) {
  std::vector<AdvantageWeight> out;
  for (std::size_t si = 0; si < batch.size(); ++si) {
    const TrajectorySnippet& snippet = batch[si];
    if (snippet.length() < 2)
      throw std::invalid_argument("abm_weights: snippet shorter than 2 steps");
    const double v_boot = estimate_value(
        critics.target, policy, snippet.steps.back().observation, M, rng, enc);
    for (int t = 1; t <= snippet.length() - 1; ++t) {
      const double ret = nstep_return(snippet, t, gamma, v_boot, enc.task_index);
      const double v_t = estimate_value(critics.target, policy,
                                        snippet.steps[t - 1].observation, M, rng, enc);
      AdvantageWeight w;
      w.snippet_index = static_cast<int>(si);
      w.step_index = t;
      w.advantage = ret - v_t;
      w.weight = w.advantage >= 0.0 ? 1 : 0;
      out.push_back(w);
    }
  }
  return out;
}

LossGrad abm_loss_and_grad(std::span<const TrajectorySnippet> batch,
                           std::span<const AdvantageWeight> weights,
                           const ParamSet& prior, const TaskEncoding& enc) {
  if (batch.empty()) throw std::invalid_argument("abm_loss_and_grad: empty batch");
  const std::size_t n = count_weighted_steps(batch);
  if (weights.size() != n)
    throw std::invalid_argument("abm_loss_and_grad: weights not aligned with batch");

  std::vector<double> coeffs(n);
  std::size_t n_active = 0;
  for (std::size_t i = 0; i < n; ++i) {
    coeffs[i] = weights[i].weight ? 1.0 : 0.0;
    n_active += weights[i].weight ? 1 : 0;
  }
  if (n_active == 0) {
    std::cerr << "warning: all advantage weights are zero; skipping prior update\n";
    LossGrad out;
    out.grad.assign(prior.values.size(), 0.0);
    return out;
  }
  return weighted_nll(batch, prior, enc, coeffs, static_cast<double>(n_active));
}

}  // namespace batchrl
