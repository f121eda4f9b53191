#include "batchrl/policy_eval.hpp"

#include <cmath>
#include <stdexcept>

#include "batchrl/gaussian.hpp"

namespace batchrl {

CriticPair make_critic_pair(const ParamSet& initial) {
  return CriticPair{initial, initial, 0};
}

double estimate_value(const ParamSet& critic_target, const ParamSet& policy,
                      std::span<const double> observation, int M, Rng& rng,
                      const TaskEncoding& enc) {
  if (M < 1) throw std::invalid_argument("estimate_value: M must be >= 1");
  const std::vector<double> pin = enc.policy_input(observation);
  const GaussianHead head = make_head(forward(policy, pin));
  const int adim = head.dim();

  // Critic input is [conditioned observation, action]; only the action
  // suffix changes between samples.
  std::vector<double> cin(pin.size() + adim);
  std::copy(pin.begin(), pin.end(), cin.begin());
  double out = 0.0;
  double acc = 0.0;
  for (int j = 0; j < M; ++j) {
    for (int d = 0; d < adim; ++d)
      cin[pin.size() + d] = head.mean[d] + head.std[d] * rng.normal();
    forward(critic_target, cin, std::span<double>(&out, 1));
    acc += out;
  }
  return acc / M;
}

TdResult td_loss_and_grad(std::span<const TrajectorySnippet> batch,
                          const CriticPair& critics, const ParamSet& policy,
                          double gamma, int M, Rng& rng, const TaskEncoding& enc) {
  if (batch.empty()) throw std::invalid_argument("td_loss_and_grad: empty batch");
  TdResult res;
  res.grad_phi.assign(critics.online.values.size(), 0.0);

  std::size_t count = 0;
  double q = 0.0;
  for (const TrajectorySnippet& snippet : batch) {
    for (const Transition& t : snippet.steps) {
      const double v_next =
          t.terminal ? 0.0
                     : estimate_value(critics.target, policy, t.next_observation,
                                      M, rng, enc);
      const double target = t.rewards.at(enc.task_index) + gamma * v_next;
      const std::vector<double> cin = enc.critic_input(t.observation, t.action);
      forward(critics.online, cin, std::span<double>(&q, 1));
      const double residual = q - target;
      res.loss += residual * residual;
      const double upstream = 2.0 * residual;
      backward_accumulate(critics.online, cin, std::span<const double>(&upstream, 1),
                          res.grad_phi, {});
      ++count;
    }
  }
  res.loss /= static_cast<double>(count);
  for (double& g : res.grad_phi) g /= static_cast<double>(count);
  if (!std::isfinite(res.loss))
    throw std::runtime_error("td_loss_and_grad: non-finite loss");
  return res;
}

void maybe_sync(CriticPair& critics, int period) {
  critics.steps_since_sync += 1;
  if (critics.steps_since_sync >= period) {
    critics.target = critics.online;
    critics.steps_since_sync = 0;
  }
}

}  // namespace batchrl
