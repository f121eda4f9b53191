#include "batchrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "batchrl/gaussian.hpp"
#include "batchrl/improve_svg.hpp"
#include "batchrl/policy_eval.hpp"
#include "batchrl/priors.hpp"

namespace batchrl {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

double mean_policy_prior_kl(std::span<const TrajectorySnippet> batch,
                            const ParamSet& policy, const ParamSet& prior,
                            const TaskEncoding& enc) {
  double acc = 0.0;
  std::size_t n = 0;
  for (const TrajectorySnippet& snippet : batch) {
    for (const Transition& step : snippet.steps) {
      const std::vector<double> pin = enc.policy_input(step.observation);
      acc += kl(make_head(forward(policy, pin)), make_head(forward(prior, pin)));
      ++n;
    }
  }
  return acc / static_cast<double>(n);
}

}  // namespace

std::string to_string(Algorithm a) { return a == Algorithm::Mpo ? "mpo" : "svg"; }

std::string to_string(PriorKind p) {
  switch (p) {
    case PriorKind::Bm: return "bm";
    case PriorKind::Abm: return "abm";
    case PriorKind::None: return "none";
  }
  return "?";
}

Algorithm algorithm_from_string(const std::string& s) {
  if (s == "mpo") return Algorithm::Mpo;
  if (s == "svg") return Algorithm::Svg;
  throw std::invalid_argument("unknown algorithm: " + s);
}

PriorKind prior_kind_from_string(const std::string& s) {
  if (s == "bm") return PriorKind::Bm;
  if (s == "abm") return PriorKind::Abm;
  if (s == "none") return PriorKind::None;
  throw std::invalid_argument("unknown prior kind: " + s);
}

namespace {

nlohmann::json config_to_json(const TrainConfig& c) {
  return nlohmann::json{{"algorithm", to_string(c.algorithm)},
                        {"prior_kind", to_string(c.prior_kind)},
                        {"epsilon", c.epsilon},
                        {"trust_decoupled", c.trust_decoupled},
                        {"eps_trust", c.eps_trust},
                        {"eps_mu", c.eps_mu},
                        {"eps_sigma", c.eps_sigma},
                        {"gamma", c.gamma},
                        {"m_samples", c.m_samples},
                        {"batch_size", c.batch_size},
                        {"snippet_len", c.snippet_len},
                        {"target_period", c.target_period},
                        {"learning_rate", c.learning_rate},
                        {"dual_learning_rate", c.dual_learning_rate},
                        {"total_steps", c.total_steps},
                        {"eval_every", c.eval_every},
                        {"eval_episodes", c.eval_episodes},
                        {"seed", c.seed},
                        {"multitask", c.multitask},
                        {"policy_hidden", c.policy_hidden},
                        {"prior_hidden", c.prior_hidden},
                        {"critic_hidden", c.critic_hidden},
                        {"first_layer_norm", c.first_layer_norm},
                        {"eta_init", c.eta_init},
                        {"alpha_init", c.alpha_init},
                        {"task", c.task},
                        {"dataset_path", c.dataset_path},
                        {"out_dir", c.out_dir}};
}

void config_from_json(const nlohmann::json& j, TrainConfig& c) {
  if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j["algorithm"]);
  if (j.contains("prior_kind")) c.prior_kind = prior_kind_from_string(j["prior_kind"]);
  if (j.contains("epsilon")) c.epsilon = j["epsilon"];
  if (j.contains("trust_decoupled")) c.trust_decoupled = j["trust_decoupled"];
  if (j.contains("eps_trust")) c.eps_trust = j["eps_trust"];
  if (j.contains("eps_mu")) c.eps_mu = j["eps_mu"];
  if (j.contains("eps_sigma")) c.eps_sigma = j["eps_sigma"];
  if (j.contains("gamma")) c.gamma = j["gamma"];
  if (j.contains("m_samples")) c.m_samples = j["m_samples"];
  if (j.contains("batch_size")) c.batch_size = j["batch_size"];
  if (j.contains("snippet_len")) c.snippet_len = j["snippet_len"];
  if (j.contains("target_period")) c.target_period = j["target_period"];
  if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"];
  if (j.contains("dual_learning_rate")) c.dual_learning_rate = j["dual_learning_rate"];
  if (j.contains("total_steps")) c.total_steps = j["total_steps"];
  if (j.contains("eval_every")) c.eval_every = j["eval_every"];
  if (j.contains("eval_episodes")) c.eval_episodes = j["eval_episodes"];
  if (j.contains("seed")) c.seed = j["seed"];
  if (j.contains("multitask")) c.multitask = j["multitask"];
  if (j.contains("policy_hidden"))
    c.policy_hidden = j["policy_hidden"].get<std::vector<int>>();
  if (j.contains("prior_hidden"))
    c.prior_hidden = j["prior_hidden"].get<std::vector<int>>();
  if (j.contains("critic_hidden"))
    c.critic_hidden = j["critic_hidden"].get<std::vector<int>>();
  if (j.contains("first_layer_norm")) c.first_layer_norm = j["first_layer_norm"];
  if (j.contains("eta_init")) c.eta_init = j["eta_init"];
  if (j.contains("alpha_init")) c.alpha_init = j["alpha_init"];
  if (j.contains("task")) c.task = j["task"];
  if (j.contains("dataset_path")) c.dataset_path = j["dataset_path"];
  if (j.contains("out_dir")) c.out_dir = j["out_dir"];
}

}  // namespace

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("load_config: cannot open " + path.string());
  nlohmann::json j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded())
    throw std::runtime_error("load_config: malformed JSON in " + path.string());
  TrainConfig c;
  config_from_json(j, c);
  return c;
}

void save_config(const std::filesystem::path& path, const TrainConfig& config) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("save_config: cannot open " + path.string());
  os << config_to_json(config).dump(2) << '\n';
}

void apply_override(TrainConfig& c, const std::string& key, const std::string& value) {
  if (key == "algorithm") c.algorithm = algorithm_from_string(value);
  else if (key == "prior_kind") c.prior_kind = prior_kind_from_string(value);
  else if (key == "epsilon") c.epsilon = std::stod(value);
  else if (key == "trust_decoupled") c.trust_decoupled = (value == "true" || value == "1");
  else if (key == "eps_trust") c.eps_trust = std::stod(value);
  else if (key == "eps_mu") c.eps_mu = std::stod(value);
  else if (key == "eps_sigma") c.eps_sigma = std::stod(value);
  else if (key == "gamma") c.gamma = std::stod(value);
  else if (key == "m_samples") c.m_samples = std::stoi(value);
  else if (key == "batch_size") c.batch_size = std::stoi(value);
  else if (key == "snippet_len") c.snippet_len = std::stoi(value);
  else if (key == "target_period") c.target_period = std::stoi(value);
  else if (key == "learning_rate") c.learning_rate = std::stod(value);
  else if (key == "dual_learning_rate") c.dual_learning_rate = std::stod(value);
  else if (key == "total_steps") c.total_steps = std::stol(value);
  else if (key == "eval_every") c.eval_every = std::stol(value);
  else if (key == "eval_episodes") c.eval_episodes = std::stoi(value);
  else if (key == "seed") c.seed = std::stoull(value);
  else if (key == "multitask") c.multitask = (value == "true" || value == "1");
  else if (key == "policy_hidden") c.policy_hidden = parse_int_list(value);
  else if (key == "prior_hidden") c.prior_hidden = parse_int_list(value);
  else if (key == "critic_hidden") c.critic_hidden = parse_int_list(value);
  else if (key == "first_layer_norm") c.first_layer_norm = (value == "true" || value == "1");
  else if (key == "eta_init") c.eta_init = std::stod(value);
  else if (key == "alpha_init") c.alpha_init = std::stod(value);
  else if (key == "task") c.task = value;
  else if (key == "dataset_path") c.dataset_path = value;
  else if (key == "out_dir") c.out_dir = value;
  else throw std::invalid_argument("unknown config key: " + key);
}

void validate_config(const TrainConfig& c) {
  if (!(c.gamma > 0.0 && c.gamma < 1.0))
    throw std::invalid_argument("config: gamma must be in (0, 1)");
  if (c.epsilon < 0.0) throw std::invalid_argument("config: epsilon must be >= 0");
  if (c.m_samples < 1 || c.batch_size < 1 || c.snippet_len < 2 ||
      c.target_period < 1 || c.total_steps < 0 || c.eval_every < 1 ||
      c.eval_episodes < 0)
    throw std::invalid_argument("config: counts must be positive");
  if (c.learning_rate <= 0.0 || c.dual_learning_rate <= 0.0)
    throw std::invalid_argument("config: learning rates must be positive");
  if (c.task.empty()) throw std::invalid_argument("config: task must be set");
  if (c.dataset_path.empty())
    throw std::invalid_argument("config: dataset_path must be set");
  if (c.out_dir.empty()) throw std::invalid_argument("config: out_dir must be set");
  if (c.epsilon == 0.0 && c.prior_kind != PriorKind::Abm)
    throw std::invalid_argument(
        "config: epsilon = 0 (prior-only) requires prior_kind = abm");
}

std::string metrics_csv_header() {
  return "step,td_loss,prior_loss,policy_objective,eta,alpha,"
         "mean_kl_policy_prior,weight_fraction,eval_return_mean,eval_return_std";
}

std::string metrics_csv_row(const MetricsRow& r) {
  std::string out = std::to_string(r.step);
  for (double v : {r.td_loss, r.prior_loss, r.policy_objective, r.eta, r.alpha,
                   r.mean_kl_policy_prior, r.weight_fraction, r.eval_return_mean,
                   r.eval_return_std})
    out += "," + fmt(v);
  return out;
}

EvalStats evaluate(const ParamSet& policy, const Environment& env, int n_episodes,
                   std::uint64_t seed, const std::string& task_id,
                   const TaskEncoding& enc) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes must be >= 1");
  const TaskSpec& task = env.task(task_id);
  if (enc.policy_input_dim(env.observation_dim()) != policy.arch.input_dim())
    throw std::invalid_argument("evaluate: checkpoint does not match environment");

  Rng root(seed);
  EvalStats stats;
  stats.episodes = n_episodes;
  std::vector<double> returns(n_episodes);
  for (int e = 0; e < n_episodes; ++e) {
    Rng rng = root.derive(static_cast<std::uint64_t>(e));
    EnvState state = initial_state(env, rng);
    std::vector<double> obs = observe(env, state);
    double ret = 0.0;
    for (int step = 0; step < env.episode_len; ++step) {
      const GaussianHead head = make_head(forward(policy, enc.policy_input(obs)));
      auto [next_state, next_obs] = env_step(env, state, head.mean);
      ret += task_reward(env, obs, head.mean, next_obs, task);
      state = std::move(next_state);
      obs = next_obs;
    }
    returns[e] = ret;
  }
  stats.min = returns[0];
  stats.max = returns[0];
  double sum = 0.0;
  for (double r : returns) {
    sum += r;
    stats.min = std::min(stats.min, r);
    stats.max = std::max(stats.max, r);
  }
  stats.mean = sum / n_episodes;
  double var = 0.0;
  for (double r : returns) var += (r - stats.mean) * (r - stats.mean);
  stats.stddev = n_episodes > 1 ? std::sqrt(var / (n_episodes - 1)) : 0.0;
  return stats;
}

const MetricsRow& TrainResult::final_row() const {
  if (metrics.empty()) throw std::runtime_error("no metrics rows recorded");
  return metrics.back();
}

namespace {

struct Accumulators {
  double td = 0.0, prior = 0.0, objective = 0.0, wf = 0.0;
  long n = 0, n_wf = 0;

  void reset() { *this = Accumulators{}; }
};

void write_dual(const std::filesystem::path& path, const DualState& dual) {
  std::ofstream os(path);
  os << nlohmann::json{{"eta", dual.eta},
                       {"alpha", dual.alpha},
                       {"alpha_mu", dual.alpha_mu},
                       {"alpha_sigma", dual.alpha_sigma}}
            .dump()
     << '\n';
}

struct TrainContext {
  TrainConfig config;
  Dataset dataset;
  TaskEncoding enc;  // task_index set to the optimized task
  std::filesystem::path out;

  Architecture policy_arch, critic_arch;

  void setup(const TrainConfig& cfg) {
    config = cfg;
    validate_config(config);
    dataset = read_dataset(config.dataset_path);
    if (dataset.transitions.empty())
      throw std::runtime_error("train: dataset has no transitions");

    enc.n_tasks = static_cast<int>(dataset.header.task_ids.size());
    enc.task_index = dataset.header.task_index(config.task);
    enc.append_onehot = config.multitask;

    const int obs_dim = dataset.header.observation_dim;
    const int act_dim = dataset.header.action_dim;
    policy_arch.layer_widths = {enc.policy_input_dim(obs_dim)};
    policy_arch.layer_widths.insert(policy_arch.layer_widths.end(),
                                    config.policy_hidden.begin(),
                                    config.policy_hidden.end());
    policy_arch.output_dim = 2 * act_dim;
    policy_arch.first_layer_norm = config.first_layer_norm;
    critic_arch.layer_widths = {enc.critic_input_dim(obs_dim, act_dim)};
    critic_arch.layer_widths.insert(critic_arch.layer_widths.end(),
                                    config.critic_hidden.begin(),
                                    config.critic_hidden.end());
    critic_arch.output_dim = 1;
    critic_arch.first_layer_norm = config.first_layer_norm;

    out = config.out_dir;
    std::filesystem::create_directories(out);
    save_config(out / "config.json", config);
  }

  Architecture prior_arch_for(int act_dim) const {
    Architecture a;
    a.layer_widths = {policy_arch.layer_widths.front()};
    a.layer_widths.insert(a.layer_widths.end(), config.prior_hidden.begin(),
                          config.prior_hidden.end());
    a.output_dim = 2 * act_dim;
    a.first_layer_norm = config.first_layer_norm;
    return a;
  }

  TaskEncoding step_encoding(long step) const {
    if (!config.multitask) return enc;
    return enc.with_task(static_cast<int>((step - 1) % enc.n_tasks));
  }

  EvalStats run_eval(const ParamSet& deployed, long step) const {
    // A fresh environment instance per evaluation; the learner itself never
    // holds one.
    const Environment env = env_by_name(dataset.header.environment_name);
    const std::uint64_t eval_seed =
        Rng(config.seed).derive(0xe7a1u + static_cast<std::uint64_t>(step)).seed();
    return evaluate(deployed, env, config.eval_episodes, eval_seed, config.task, enc);
  }
};

}  // namespace

TrainResult train_prior_only(const TrainConfig& cfg) {
  TrainContext ctx;
  ctx.setup(cfg);
  const TrainConfig& config = ctx.config;
  if (config.prior_kind != PriorKind::Abm)
    throw std::invalid_argument("train_prior_only: prior_kind must be abm");

  const int act_dim = ctx.dataset.header.action_dim;
  Rng root(config.seed);
  Rng rng_init = root.derive(0);
  Rng rng_train = root.derive(1);

  ParamSet prior = init_params_zero_output(ctx.prior_arch_for(act_dim), rng_init);
  ParamSet prior_target = prior;
  CriticPair critics = make_critic_pair(init_params_zero_output(ctx.critic_arch, rng_init));
  AdamState prior_opt = make_adam(prior.values.size(), config.learning_rate);
  AdamState critic_opt = make_adam(critics.online.values.size(), config.learning_rate);
  DualState dual;
  dual.eta = config.eta_init > 0.0 ? config.eta_init : 3.0;
  dual.alpha = config.alpha_init;

  SnippetSampler sampler(ctx.dataset, config.snippet_len);

  auto save_all = [&] {
    // The deployed policy is the prior itself.
    save_params(ctx.out / "policy.net", prior);
    save_params(ctx.out / "prior.net", prior);
    save_params(ctx.out / "critic_online.net", critics.online);
    save_params(ctx.out / "critic_target.net", critics.target);
    write_dual(ctx.out / "dual.json", dual);
  };
  save_all();

  std::ofstream metrics(ctx.out / "metrics.csv");
  metrics << metrics_csv_header() << '\n';

  TrainResult result;
  result.out_dir = ctx.out;
  Accumulators acc;
  std::vector<TrajectorySnippet> batch;

  for (long i = 1; i <= config.total_steps; ++i) {
    try {
      batch = sampler.sample_batch(rng_train, config.batch_size);
      const TaskEncoding enc_step = ctx.step_encoding(i);

      const std::vector<AdvantageWeight> weights =
          abm_weights(batch, critics, prior_target, config.gamma, config.m_samples,
                      rng_train, enc_step);
      double wf = 0.0;
      for (const AdvantageWeight& w : weights) wf += w.weight;
      acc.wf += wf / static_cast<double>(weights.size());
      acc.n_wf += 1;

      const LossGrad lg = abm_loss_and_grad(batch, weights, prior, enc_step);
      adam_step(prior_opt, prior, lg.grad);
      acc.prior += lg.loss;

      const TdResult td = td_loss_and_grad(batch, critics, prior_target, config.gamma,
                                           config.m_samples, rng_train, enc_step);
      adam_step(critic_opt, critics.online, td.grad_phi);
      acc.td += td.loss;
      acc.n += 1;

      maybe_sync(critics, config.target_period);
      if (critics.steps_since_sync == 0) prior_target = prior;
    } catch (const std::exception& e) {
      std::cerr << "train_prior_only: aborting at step " << i << ": " << e.what()
                << "\n";
      result.aborted = true;
      break;
    }
    result.steps_done = i;

    if (i % config.eval_every == 0) {
      MetricsRow row;
      row.step = i;
      row.td_loss = acc.td / std::max(1L, acc.n);
      row.prior_loss = acc.prior / std::max(1L, acc.n);
      row.policy_objective = 0.0;
      row.eta = dual.eta;
      row.alpha = dual.alpha;
      row.mean_kl_policy_prior = 0.0;
      row.weight_fraction = acc.wf / std::max(1L, acc.n_wf);
      if (config.eval_episodes > 0) {
        const EvalStats es = ctx.run_eval(prior, i);
        row.eval_return_mean = es.mean;
        row.eval_return_std = es.stddev;
      }
      metrics << metrics_csv_row(row) << '\n';
      metrics.flush();
      result.metrics.push_back(row);
      save_all();
      acc.reset();
    }
  }
  save_all();
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  if (cfg.epsilon == 0.0) return train_prior_only(cfg);

  TrainContext ctx;
  ctx.setup(cfg);
  const TrainConfig& config = ctx.config;

  const int act_dim = ctx.dataset.header.action_dim;
  Rng root(config.seed);
  Rng rng_init = root.derive(0);
  Rng rng_train = root.derive(1);

  ParamSet policy = init_params_zero_output(ctx.policy_arch, rng_init);
  ParamSet policy_target = policy;
  ParamSet prior = init_params_zero_output(ctx.prior_arch_for(act_dim), rng_init);
  CriticPair critics = make_critic_pair(init_params_zero_output(ctx.critic_arch, rng_init));

  AdamState policy_opt = make_adam(policy.values.size(), config.learning_rate);
  AdamState prior_opt = make_adam(prior.values.size(), config.learning_rate);
  AdamState critic_opt = make_adam(critics.online.values.size(), config.learning_rate);

  DualState dual;
  dual.eta = config.eta_init > 0.0
                 ? config.eta_init
                 : (config.algorithm == Algorithm::Mpo ? 3.0 : 1.0);
  dual.alpha = config.alpha_init;
  dual.alpha_mu = config.alpha_init;
  dual.alpha_sigma = config.alpha_init;
  if (config.algorithm == Algorithm::Svg && config.prior_kind == PriorKind::None)
    dual.eta = kDualFloor;  // effectively unconstrained

  const TrustRegion trust{config.trust_decoupled, config.eps_trust, config.eps_mu,
                          config.eps_sigma};
  SnippetSampler sampler(ctx.dataset, config.snippet_len);

  auto save_all = [&] {
    save_params(ctx.out / "policy.net", policy);
    if (config.prior_kind != PriorKind::None)
      save_params(ctx.out / "prior.net", prior);
    save_params(ctx.out / "critic_online.net", critics.online);
    save_params(ctx.out / "critic_target.net", critics.target);
    write_dual(ctx.out / "dual.json", dual);
  };
  save_all();

  std::ofstream metrics(ctx.out / "metrics.csv");
  metrics << metrics_csv_header() << '\n';

  TrainResult result;
  result.out_dir = ctx.out;
  Accumulators acc;
  std::vector<TrajectorySnippet> batch;

  for (long i = 1; i <= config.total_steps; ++i) {
    try {
      batch = sampler.sample_batch(rng_train, config.batch_size);
      const TaskEncoding enc_step = ctx.step_encoding(i);

      // Prior model gradient.
      if (config.prior_kind == PriorKind::Bm) {
        const LossGrad lg = bm_loss_and_grad(batch, prior, enc_step);
        adam_step(prior_opt, prior, lg.grad);
        acc.prior += lg.loss;
      } else if (config.prior_kind == PriorKind::Abm) {
        const std::vector<AdvantageWeight> weights =
            abm_weights(batch, critics, policy_target, config.gamma,
                        config.m_samples, rng_train, enc_step);
        double wf = 0.0;
        for (const AdvantageWeight& w : weights) wf += w.weight;
        acc.wf += wf / static_cast<double>(weights.size());
        acc.n_wf += 1;
        const LossGrad lg = abm_loss_and_grad(batch, weights, prior, enc_step);
        adam_step(prior_opt, prior, lg.grad);
        acc.prior += lg.loss;
      }

      // Critic TD gradient; targets follow the (frozen) target policy.
      const TdResult td =
          td_loss_and_grad(batch, critics, policy_target, config.gamma,
                           config.m_samples, rng_train, enc_step);
      adam_step(critic_opt, critics.online, td.grad_phi);
      acc.td += td.loss;

      // Policy and dual gradients.
      if (config.algorithm == Algorithm::Mpo) {
        const ParamSet& proposal =
            config.prior_kind == PriorKind::None ? policy_target : prior;
        const MpoSamples samples = make_mpo_samples(
            batch, proposal, critics.target, config.m_samples, rng_train, enc_step);
        const DualEval de = dual_value_and_grad(samples.q, dual.eta, config.epsilon);
        const MpoPolicyResult mp =
            mpo_policy_loss_and_grad(samples, dual, policy, policy_target, trust);
        adam_step(policy_opt, policy, mp.grad_theta);
        eta_step(dual, de.grad_eta, config.dual_learning_rate);
        if (config.trust_decoupled)
          alpha_step_decoupled(dual, mp.grad_alpha_mu, mp.grad_alpha_sigma,
                               config.dual_learning_rate);
        else
          alpha_step(dual, mp.grad_alpha, config.dual_learning_rate);
        acc.objective += -mp.loss;
      } else {
        const bool constrained = config.prior_kind != PriorKind::None;
        const ParamSet& reference = constrained ? prior : policy_target;
        const SvgPolicyResult sv = svg_policy_loss_and_grad(
            batch, policy, reference, critics.target, dual.eta,
            constrained ? config.epsilon : 0.0, config.m_samples, rng_train,
            enc_step);
        std::vector<double> descent(sv.grad_theta.size());
        for (std::size_t k = 0; k < descent.size(); ++k) descent[k] = -sv.grad_theta[k];
        adam_step(policy_opt, policy, descent);
        if (constrained)
          eta_step(dual, config.epsilon - sv.mean_kl, config.dual_learning_rate);
        acc.objective += sv.objective;
      }
      acc.n += 1;

      maybe_sync(critics, config.target_period);
      if (critics.steps_since_sync == 0) policy_target = policy;
    } catch (const std::exception& e) {
      std::cerr << "train: aborting at step " << i << ": " << e.what() << "\n";
      result.aborted = true;
      break;
    }
    result.steps_done = i;

    if (i % config.eval_every == 0) {
      MetricsRow row;
      row.step = i;
      row.td_loss = acc.td / std::max(1L, acc.n);
      row.prior_loss = acc.prior / std::max(1L, acc.n);
      row.policy_objective = acc.objective / std::max(1L, acc.n);
      row.eta = dual.eta;
      row.alpha = dual.alpha;
      row.mean_kl_policy_prior =
          config.prior_kind == PriorKind::None
              ? 0.0
              : mean_policy_prior_kl(batch, policy, prior, ctx.enc);
      row.weight_fraction =
          acc.n_wf > 0 ? acc.wf / static_cast<double>(acc.n_wf) : 0.0;
      if (config.eval_episodes > 0) {
        const EvalStats es = ctx.run_eval(policy, i);
        row.eval_return_mean = es.mean;
        row.eval_return_std = es.stddev;
      }
      metrics << metrics_csv_row(row) << '\n';
      metrics.flush();
      result.metrics.push_back(row);
      save_all();
      acc.reset();
    }
  }
  save_all();
  return result;
}

}  // namespace batchrl
