#include "batchrl/improve_svg.hpp"

#include <cmath>
#include <stdexcept>

#include "batchrl/gaussian.hpp"

namespace batchrl {

SvgPolicyResult svg_policy_loss_and_grad(std::span<const TrajectorySnippet> batch,
                                         const ParamSet& policy,
                                         const ParamSet& prior,
                                         const ParamSet& critic_target, double eta,
                                         double epsilon, int M, Rng& rng,
                                         const TaskEncoding& enc) {
  if (batch.empty()) throw std::invalid_argument("svg: empty batch");
  if (eta <= 0.0) throw std::invalid_argument("svg: eta must be > 0");
  if (M < 1) throw std::invalid_argument("svg: M must be >= 1");

  SvgPolicyResult res;
  res.grad_theta.assign(policy.values.size(), 0.0);

  std::size_t n_states = 0;
  for (const TrajectorySnippet& s : batch) n_states += s.steps.size();
  const double inv_s = 1.0 / static_cast<double>(n_states);

  std::vector<double> noise, cin, cin_grad, raw_grad;
  for (const TrajectorySnippet& snippet : batch) {
    for (const Transition& step : snippet.steps) {
      const std::vector<double> pin = enc.policy_input(step.observation);
      const std::vector<double> raw = forward(policy, pin);
      const GaussianHead head = make_head(raw);
      const GaussianHead prior_head = make_head(forward(prior, pin));
      const int adim = head.dim();

      cin.resize(pin.size() + adim);
      std::copy(pin.begin(), pin.end(), cin.begin());
      noise.resize(adim);

      HeadGrad acc;
      acc.d_mean.assign(adim, 0.0);
      acc.d_std.assign(adim, 0.0);
      double q_mean = 0.0;
      double q = 0.0;
      for (int j = 0; j < M; ++j) {
        for (int d = 0; d < adim; ++d) {
          noise[d] = rng.normal();
          cin[pin.size() + d] = head.mean[d] + head.std[d] * noise[d];
        }
        forward(critic_target, cin, std::span<double>(&q, 1));
        q_mean += q;
        // Only the critic's input gradient is needed; its action slice is
        // dQ/da, which reparameterization turns into head gradients.
        cin_grad.assign(cin.size(), 0.0);
        const double upstream = 1.0;
        backward_accumulate(critic_target, cin,
                            std::span<const double>(&upstream, 1), {}, cin_grad);
        for (int d = 0; d < adim; ++d) {
          const double dq_da = cin_grad[pin.size() + d];
          acc.d_mean[d] += dq_da / M;
          acc.d_std[d] += dq_da * noise[d] / M;
        }
      }
      q_mean /= M;

      const double kl_s = kl(head, prior_head);
      res.mean_kl += inv_s * kl_s;
      res.objective += inv_s * (q_mean + eta * (epsilon - kl_s));

      const HeadGrad gkl = kl_grad_p(head, prior_head);
      for (int d = 0; d < adim; ++d) {
        acc.d_mean[d] = inv_s * (acc.d_mean[d] - eta * gkl.d_mean[d]);
        acc.d_std[d] = inv_s * (acc.d_std[d] - eta * gkl.d_std[d]);
      }
      raw_grad.assign(raw.size(), 0.0);
      head_grad_to_raw(raw, acc, raw_grad);
      backward_accumulate(policy, pin, raw_grad, res.grad_theta, {});
    }
  }
  if (!std::isfinite(res.objective))
    throw std::runtime_error("svg_policy_loss_and_grad: non-finite objective");
  return res;
}

double svg_eta_grad(std::span<const TrajectorySnippet> batch, const ParamSet& policy,
                    const ParamSet& prior, double epsilon, const TaskEncoding& enc) {
  if (batch.empty()) throw std::invalid_argument("svg_eta_grad: empty batch");
  double acc = 0.0;
  std::size_t n_states = 0;
  for (const TrajectorySnippet& snippet : batch) {
    for (const Transition& step : snippet.steps) {
      const std::vector<double> pin = enc.policy_input(step.observation);
      const GaussianHead head = make_head(forward(policy, pin));
      const GaussianHead prior_head = make_head(forward(prior, pin));
      acc += epsilon - kl(head, prior_head);
      ++n_states;
    }
  }
  return acc / static_cast<double>(n_states);
}

}  // namespace batchrl
