#include "batchrl/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "batchrl/dataset.hpp"
#include "batchrl/improve_mpo.hpp"
#include "batchrl/improve_svg.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/policy_eval.hpp"
#include "batchrl/priors.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

namespace {

constexpr double kFdStep = 1e-5;

// Guarded relative error: tiny components are compared against a floor tied
// to the gradient's overall scale, so near-zero entries do not blow up the
// ratio through finite-difference roundoff.
double max_rel_err(std::span<const double> analytic, std::span<const double> fd) {
  double scale = 1.0;
  for (double v : fd) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(fd[i]), 1e-6 * scale);
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

std::vector<double> fd_grad(const std::function<double(const ParamSet&)>& f,
                            const ParamSet& params) {
  std::vector<double> g(params.values.size());
  ParamSet p = params;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double saved = p.values[i];
    p.values[i] = saved + kFdStep;
    const double hi = f(p);
    p.values[i] = saved - kFdStep;
    const double lo = f(p);
    p.values[i] = saved;
    g[i] = (hi - lo) / (2.0 * kFdStep);
  }
  return g;
}

Architecture random_arch(Rng& rng, int in_dim, int out_dim) {
  Architecture a;
  a.layer_widths = {in_dim};
  const int n_hidden = 1 + static_cast<int>(rng.uniform_index(2));
  for (int l = 0; l < n_hidden; ++l)
    a.layer_widths.push_back(3 + static_cast<int>(rng.uniform_index(4)));
  a.output_dim = out_dim;
  a.first_layer_norm = rng.uniform() < 0.5;
  return a;
}

ParamSet random_net(Rng& rng, int in_dim, int out_dim) {
  ParamSet p = init_params(random_arch(rng, in_dim, out_dim), rng);
  for (double& v : p.values) v += 0.3 * rng.normal();
  return p;
}

// Tiny random dataset: one episode, one task, random everything.
Dataset random_dataset(Rng& rng, int obs_dim, int act_dim, int len) {
  Dataset ds;
  ds.header.observation_dim = obs_dim;
  ds.header.action_dim = act_dim;
  ds.header.task_ids = {"t0"};
  ds.header.environment_name = "gradcheck";
  auto rand_vec = [&](int n) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
  };
  std::vector<double> obs = rand_vec(obs_dim);
  for (int i = 0; i < len; ++i) {
    Transition t;
    t.observation = obs;
    t.action = rand_vec(act_dim);
    t.rewards = {rng.normal()};
    t.next_observation = rand_vec(obs_dim);
    t.episode_id = 0;
    t.step_index = i;
    obs = t.next_observation;
    ds.transitions.push_back(std::move(t));
  }
  return ds;
}

struct Fixture {
  Dataset dataset;
  std::vector<TrajectorySnippet> batch;
  TaskEncoding enc;
  int obs_dim, act_dim;

  explicit Fixture(Rng& rng) {
    obs_dim = 2 + static_cast<int>(rng.uniform_index(2));
    act_dim = 1 + static_cast<int>(rng.uniform_index(2));
    const int n = 2 + static_cast<int>(rng.uniform_index(2));  // snippet length
    dataset = random_dataset(rng, obs_dim, act_dim, 2 * n);
    batch.push_back({std::span<const Transition>(dataset.transitions).subspan(0, n), {}});
    batch.push_back({std::span<const Transition>(dataset.transitions).subspan(n, n), {}});
  }
};

double check_nn(Rng& rng) {
  const int in_dim = 2 + static_cast<int>(rng.uniform_index(3));
  const int out_dim = 1 + static_cast<int>(rng.uniform_index(3));
  ParamSet net = random_net(rng, in_dim, out_dim);
  std::vector<double> input(in_dim), upstream(out_dim);
  for (double& v : input) v = rng.normal();
  for (double& v : upstream) v = rng.normal();

  const BackwardResult analytic = backward(net, input, upstream);
  const auto loss = [&](const ParamSet& p) {
    const std::vector<double> out = forward(p, input);
    double acc = 0.0;
    for (int i = 0; i < out_dim; ++i) acc += upstream[i] * out[i];
    return acc;
  };
  double err = max_rel_err(analytic.param_grad, fd_grad(loss, net));

  // Input gradient via the same contraction, perturbing the input.
  std::vector<double> fd_in(in_dim);
  std::vector<double> x = input;
  for (int i = 0; i < in_dim; ++i) {
    const double saved = x[i];
    x[i] = saved + kFdStep;
    const std::vector<double> hi = forward(net, x);
    x[i] = saved - kFdStep;
    const std::vector<double> lo = forward(net, x);
    x[i] = saved;
    double acc = 0.0;
    for (int k = 0; k < out_dim; ++k) acc += upstream[k] * (hi[k] - lo[k]);
    fd_in[i] = acc / (2.0 * kFdStep);
  }
  return std::max(err, max_rel_err(analytic.input_grad, fd_in));
}

double check_td(Rng& rng) {
  Fixture fx(rng);
  const int cin = fx.enc.critic_input_dim(fx.obs_dim, fx.act_dim);
  CriticPair critics;
  critics.online = random_net(rng, cin, 1);
  critics.target = random_net(rng, cin, 1);
  const ParamSet policy = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  const std::uint64_t eval_seed = rng.next_u64();

  Rng r0(eval_seed);
  const TdResult res =
      td_loss_and_grad(fx.batch, critics, policy, 0.9, 4, r0, fx.enc);
  const auto loss = [&](const ParamSet& p) {
    CriticPair c = critics;
    c.online = p;
    Rng r(eval_seed);
    return td_loss_and_grad(fx.batch, c, policy, 0.9, 4, r, fx.enc).loss;
  };
  return max_rel_err(res.grad_phi, fd_grad(loss, critics.online));
}

double check_bm(Rng& rng) {
  Fixture fx(rng);
  const ParamSet prior = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  const LossGrad res = bm_loss_and_grad(fx.batch, prior, fx.enc);
  const auto loss = [&](const ParamSet& p) {
    return bm_loss_and_grad(fx.batch, p, fx.enc).loss;
  };
  return max_rel_err(res.grad, fd_grad(loss, prior));
}

double check_abm(Rng& rng) {
  Fixture fx(rng);
  const int cin = fx.enc.critic_input_dim(fx.obs_dim, fx.act_dim);
  CriticPair critics;
  critics.online = random_net(rng, cin, 1);
  critics.target = random_net(rng, cin, 1);
  const ParamSet policy = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  ParamSet prior = random_net(rng, fx.obs_dim, 2 * fx.act_dim);

  Rng rw(rng.next_u64());
  const std::vector<AdvantageWeight> weights =
      abm_weights(fx.batch, critics, policy, 0.95, 4, rw, fx.enc);
  const LossGrad res = abm_loss_and_grad(fx.batch, weights, prior, fx.enc);
  if (std::all_of(weights.begin(), weights.end(),
                  [](const AdvantageWeight& w) { return w.weight == 0; }))
    return 0.0;
  const auto loss = [&](const ParamSet& p) {
    return abm_loss_and_grad(fx.batch, weights, p, fx.enc).loss;
  };
  return max_rel_err(res.grad, fd_grad(loss, prior));
}

double check_mpo_policy(Rng& rng) {
  Fixture fx(rng);
  const int cin = fx.enc.critic_input_dim(fx.obs_dim, fx.act_dim);
  const ParamSet critic = random_net(rng, cin, 1);
  const ParamSet proposal = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  ParamSet policy = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  const ParamSet policy_old = random_net(rng, fx.obs_dim, 2 * fx.act_dim);

  Rng rs(rng.next_u64());
  const MpoSamples samples =
      make_mpo_samples(fx.batch, proposal, critic, 5, rs, fx.enc);
  DualState dual;
  dual.eta = 0.3 + rng.uniform();
  dual.alpha = 0.5 + rng.uniform();
  dual.alpha_mu = 0.5 + rng.uniform();
  dual.alpha_sigma = 0.5 + rng.uniform();
  TrustRegion trust;
  trust.decoupled = rng.uniform() < 0.5;

  const MpoPolicyResult res =
      mpo_policy_loss_and_grad(samples, dual, policy, policy_old, trust);
  const auto loss = [&](const ParamSet& p) {
    return mpo_policy_loss_and_grad(samples, dual, p, policy_old, trust).loss;
  };
  return max_rel_err(res.grad_theta, fd_grad(loss, policy));
}

double check_mpo_dual(Rng& rng) {
  const int n_states = 2 + static_cast<int>(rng.uniform_index(3));
  const int m = 3 + static_cast<int>(rng.uniform_index(4));
  std::vector<std::vector<double>> q(n_states);
  for (auto& qs : q) {
    qs.resize(m);
    for (double& v : qs) v = 2.0 * rng.normal();
  }
  const double eta = 0.05 + 3.0 * rng.uniform();
  const double epsilon = 0.1;

  const DualEval de = dual_value_and_grad(q, eta, epsilon);
  const double hi = dual_value_and_grad(q, eta + kFdStep, epsilon).value;
  const double lo = dual_value_and_grad(q, eta - kFdStep, epsilon).value;
  const double fd = (hi - lo) / (2.0 * kFdStep);
  const double analytic[1] = {de.grad_eta};
  const double numeric[1] = {fd};
  return max_rel_err(analytic, numeric);
}

double check_svg(Rng& rng) {
  Fixture fx(rng);
  const int cin = fx.enc.critic_input_dim(fx.obs_dim, fx.act_dim);
  const ParamSet critic = random_net(rng, cin, 1);
  const ParamSet prior = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  ParamSet policy = random_net(rng, fx.obs_dim, 2 * fx.act_dim);
  const double eta = 0.2 + rng.uniform();
  const std::uint64_t eval_seed = rng.next_u64();

  Rng r0(eval_seed);
  const SvgPolicyResult res = svg_policy_loss_and_grad(fx.batch, policy, prior,
                                                       critic, eta, 0.1, 4, r0, fx.enc);
  const auto objective = [&](const ParamSet& p) {
    Rng r(eval_seed);
    return svg_policy_loss_and_grad(fx.batch, p, prior, critic, eta, 0.1, 4, r, fx.enc)
        .objective;
  };
  return max_rel_err(res.grad_theta, fd_grad(objective, policy));
}

}  // namespace

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const GradCheckEntry& e : entries) w = std::max(w, e.max_rel_err);
  return w;
}

GradCheckReport run_gradcheck(int instances_per_loss, std::uint64_t seed) {
  struct Family {
    const char* name;
    double (*check)(Rng&);
  };
  const Family families[] = {
      {"nn_backward", check_nn},       {"td_loss", check_td},
      {"bm_loss", check_bm},           {"abm_loss", check_abm},
      {"mpo_policy_loss", check_mpo_policy}, {"mpo_dual_eta", check_mpo_dual},
      {"svg_policy_loss", check_svg},
  };

  GradCheckReport report;
  Rng root(seed);
  for (const Family& fam : families) {
    GradCheckEntry entry;
    entry.name = fam.name;
    for (int i = 0; i < instances_per_loss; ++i) {
      Rng rng = root.derive(Rng::mix(std::hash<std::string>{}(fam.name)) + i);
      entry.max_rel_err = std::max(entry.max_rel_err, fam.check(rng));
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace batchrl
