#include "batchrl/improve_mpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "batchrl/gaussian.hpp"

namespace batchrl {

std::vector<double> nonparam_weights(std::span<const double> q_values, double eta) {
  if (q_values.empty()) throw std::invalid_argument("nonparam_weights: empty q");
  if (eta <= 0.0) throw std::invalid_argument("nonparam_weights: eta must be > 0");
  const double qmax = *std::max_element(q_values.begin(), q_values.end());
  std::vector<double> w(q_values.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < q_values.size(); ++j) {
    w[j] = std::exp((q_values[j] - qmax) / eta);
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

DualEval dual_value_and_grad(std::span<const std::vector<double>> q_per_state,
                             double eta, double epsilon) {
  if (eta <= 0.0) throw std::invalid_argument("dual_value_and_grad: eta must be > 0");
  if (q_per_state.empty())
    throw std::invalid_argument("dual_value_and_grad: no states");
  const double n_states = static_cast<double>(q_per_state.size());

  DualEval out;
  out.value = eta * epsilon;
  out.grad_eta = epsilon;
  for (const std::vector<double>& q : q_per_state) {
    const double m = static_cast<double>(q.size());
    const double qmax = *std::max_element(q.begin(), q.end());
    double sum_exp = 0.0, shifted_mean = 0.0;
    for (double qi : q) {
      const double e = std::exp((qi - qmax) / eta);
      sum_exp += e;
      shifted_mean += e * (qi - qmax);
    }
    shifted_mean /= sum_exp;  // softmax-weighted mean of (q - qmax)
    const double log_tail = std::log(sum_exp / m);
    // eta * log-mean-exp written as qmax + eta * log_tail so the constant-q
    // case stays exact: value collapses to qmax, gradient to epsilon.
    out.value += (qmax + eta * log_tail) / n_states;
    out.grad_eta += (log_tail - shifted_mean / eta) / n_states;
  }
  return out;
}

MpoSamples make_mpo_samples(std::span<const TrajectorySnippet> batch,
                            const ParamSet& proposal, const ParamSet& critic_target,
                            int M, Rng& rng, const TaskEncoding& enc) {
  if (M < 1) throw std::invalid_argument("make_mpo_samples: M must be >= 1");
  MpoSamples s;
  for (const TrajectorySnippet& snippet : batch) {
    for (const Transition& step : snippet.steps) {
      std::vector<double> pin = enc.policy_input(step.observation);
      const GaussianHead head = make_head(forward(proposal, pin));
      const int adim = head.dim();
      std::vector<double> cin(pin.size() + adim);
      std::copy(pin.begin(), pin.end(), cin.begin());

      std::vector<std::vector<double>> actions(M);
      std::vector<double> q(M);
      double out = 0.0;
      for (int j = 0; j < M; ++j) {
        actions[j].resize(adim);
        for (int d = 0; d < adim; ++d) {
          actions[j][d] = head.mean[d] + head.std[d] * rng.normal();
          cin[pin.size() + d] = actions[j][d];
        }
        forward(critic_target, cin, std::span<double>(&out, 1));
        q[j] = out;
      }
      s.policy_inputs.push_back(std::move(pin));
      s.actions.push_back(std::move(actions));
      s.q.push_back(std::move(q));
    }
  }
  return s;
}

MpoPolicyResult mpo_policy_loss_and_grad(const MpoSamples& samples,
                                         const DualState& dual,
                                         const ParamSet& policy,
                                         const ParamSet& policy_old,
                                         const TrustRegion& trust) {
  const std::size_t n_states = samples.policy_inputs.size();
  if (n_states == 0)
    throw std::invalid_argument("mpo_policy_loss_and_grad: no states");

  MpoPolicyResult res;
  res.grad_theta.assign(policy.values.size(), 0.0);
  const double inv_s = 1.0 / static_cast<double>(n_states);

  std::vector<double> raw_grad;
  for (std::size_t i = 0; i < n_states; ++i) {
    const std::vector<double>& pin = samples.policy_inputs[i];
    const std::vector<double> raw = forward(policy, pin);
    const GaussianHead head = make_head(raw);
    const GaussianHead head_old = make_head(forward(policy_old, pin));
    const std::vector<double> w = nonparam_weights(samples.q[i], dual.eta);

    HeadGrad acc;
    acc.d_mean.assign(head.dim(), 0.0);
    acc.d_std.assign(head.dim(), 0.0);
    for (std::size_t j = 0; j < w.size(); ++j) {
      const std::vector<double>& a = samples.actions[i][j];
      res.loss -= inv_s * w[j] * log_prob(head, a);
      const HeadGrad g = log_prob_grad(head, a);
      for (int d = 0; d < head.dim(); ++d) {
        acc.d_mean[d] -= inv_s * w[j] * g.d_mean[d];
        acc.d_std[d] -= inv_s * w[j] * g.d_std[d];
      }
    }

    const double kl_mu = kl_mean_part(head_old, head);
    const double kl_sigma = kl_sigma_part(head_old, head);
    res.mean_kl_mu += inv_s * kl_mu;
    res.mean_kl_sigma += inv_s * kl_sigma;
    res.mean_kl += inv_s * (kl_mu + kl_sigma);

    if (trust.decoupled) {
      const HeadGrad gmu = kl_mean_part_grad_q(head_old, head);
      const HeadGrad gsig = kl_sigma_part_grad_q(head_old, head);
      res.loss += inv_s * (dual.alpha_mu * kl_mu + dual.alpha_sigma * kl_sigma);
      for (int d = 0; d < head.dim(); ++d) {
        acc.d_mean[d] += inv_s * (dual.alpha_mu * gmu.d_mean[d] +
                                  dual.alpha_sigma * gsig.d_mean[d]);
        acc.d_std[d] += inv_s * (dual.alpha_mu * gmu.d_std[d] +
                                 dual.alpha_sigma * gsig.d_std[d]);
      }
    } else {
      const HeadGrad gkl = kl_grad_q(head_old, head);
      res.loss += inv_s * dual.alpha * (kl_mu + kl_sigma);
      for (int d = 0; d < head.dim(); ++d) {
        acc.d_mean[d] += inv_s * dual.alpha * gkl.d_mean[d];
        acc.d_std[d] += inv_s * dual.alpha * gkl.d_std[d];
      }
    }

    raw_grad.assign(raw.size(), 0.0);
    head_grad_to_raw(raw, acc, raw_grad);
    backward_accumulate(policy, pin, raw_grad, res.grad_theta, {});
  }

  if (!std::isfinite(res.loss) || !std::isfinite(res.mean_kl))
    throw std::runtime_error("mpo_policy_loss_and_grad: non-finite loss or KL");
  res.grad_alpha = res.mean_kl - trust.eps_trust;
  res.grad_alpha_mu = res.mean_kl_mu - trust.eps_mu;
  res.grad_alpha_sigma = res.mean_kl_sigma - trust.eps_sigma;
  return res;
}

void eta_step(DualState& dual, double grad_eta, double lr) {
  dual.eta += scalar_adam_delta(dual.eta_opt, grad_eta, lr);
  dual.eta = std::max(dual.eta, kDualFloor);
}

void alpha_step(DualState& dual, double grad_alpha, double lr) {
  // The multiplier descends alpha * (eps_trust - KL), i.e. rises while the
  // constraint is violated.
  dual.alpha += scalar_adam_delta(dual.alpha_opt, -grad_alpha, lr);
  dual.alpha = std::max(dual.alpha, kDualFloor);
}

void alpha_step_decoupled(DualState& dual, double grad_alpha_mu,
                          double grad_alpha_sigma, double lr) {
  dual.alpha_mu += scalar_adam_delta(dual.alpha_mu_opt, -grad_alpha_mu, lr);
  dual.alpha_mu = std::max(dual.alpha_mu, kDualFloor);
  dual.alpha_sigma += scalar_adam_delta(dual.alpha_sigma_opt, -grad_alpha_sigma, lr);
  dual.alpha_sigma = std::max(dual.alpha_sigma, kDualFloor);
}

}  // namespace batchrl
