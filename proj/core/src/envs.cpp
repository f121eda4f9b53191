#include "batchrl/envs.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace batchrl {

namespace {

constexpr double kControllerGain = 4.0;

double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

const TaskSpec& Environment::task(const std::string& id) const {
  for (const TaskSpec& t : tasks)
    if (t.id == id) return t;
  throw std::invalid_argument("unknown task '" + id + "' in env " + name);
}

std::vector<std::string> Environment::task_ids() const {
  std::vector<std::string> ids;
  ids.reserve(tasks.size());
  for (const TaskSpec& t : tasks) ids.push_back(t.id);
  return ids;
}

double stol(double v, double eps_tol, double r_scale) {
  const double av = std::abs(v);
  if (av < eps_tol) return 1.0;
  const double k = std::atanh(std::sqrt(0.95)) / r_scale;
  const double th = std::tanh(k * av);
  return 1.0 - th * th;
}

double btol(double v, double eps_tol) { return std::abs(v) < eps_tol ? 1.0 : 0.0; }

std::vector<double> observe(const Environment&, const EnvState& state) {
  return state.position;
}

EnvState initial_state(const Environment& env, Rng& rng) {
  EnvState s;
  s.position.resize(env.dim);
  for (int d = 0; d < env.dim; ++d)
    s.position[d] = rng.uniform(env.box_lo[d], env.box_hi[d]);
  s.velocity.assign(env.dim, 0.0);
  s.step_count = 0;
  return s;
}

std::pair<EnvState, std::vector<double>> env_step(const Environment& env,
                                                  const EnvState& state,
                                                  std::span<const double> action) {
  if (static_cast<int>(action.size()) != env.dim)
    throw std::invalid_argument("env_step: action dimension mismatch");
  EnvState next = state;
  for (int d = 0; d < env.dim; ++d) {
    const double a = std::clamp(action[d], -env.action_limit, env.action_limit);
    next.velocity[d] = a;
    next.position[d] =
        std::clamp(state.position[d] + a * env.dt, env.box_lo[d], env.box_hi[d]);
  }
  next.step_count = state.step_count + 1;
  return {next, observe(env, next)};
}

double task_reward(const Environment& env, std::span<const double>,
                   std::span<const double>, std::span<const double> next_observation,
                   const TaskSpec& task) {
  if (static_cast<int>(next_observation.size()) != env.dim)
    throw std::invalid_argument("task_reward: observation dimension mismatch");
  const double d = distance(next_observation, task.goal);
  switch (task.kind) {
    case RewardKind::ShapedStol:
      return stol(d, task.eps_tol, task.r_scale);
    case RewardKind::BinaryBtol:
      return btol(d, task.eps_tol);
    case RewardKind::Composite:
      // Gate on being inside the wider region, shaped within it.
      return btol(d, task.r_scale) * stol(d, task.eps_tol, task.r_scale);
  }
  throw std::logic_error("task_reward: unhandled reward kind");
}

std::vector<double> scripted_policy(const Environment& env,
                                    std::span<const double> observation,
                                    const Persona& persona, Rng& rng) {
  const TaskSpec& task = env.task(persona.target_task);
  std::vector<double> action(env.dim);
  for (int d = 0; d < env.dim; ++d) {
    action[d] = persona.competence * kControllerGain * (task.goal[d] - observation[d]);
    if (persona.noise_std > 0.0) action[d] += persona.noise_std * rng.normal();
  }
  return action;
}

Dataset generate_dataset(const Environment& env, std::span<const Persona> personas,
                         std::span<const double> weights, int n_episodes,
                         int episode_len, std::uint64_t seed) {
  if (personas.empty() || personas.size() != weights.size())
    throw std::invalid_argument("generate_dataset: personas/weights mismatch");
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("generate_dataset: mixture weights must sum to 1");

  Dataset ds;
  ds.header.observation_dim = env.observation_dim();
  ds.header.action_dim = env.action_dim();
  ds.header.task_ids = env.task_ids();
  ds.header.environment_name = env.name;
  ds.header.generator_seed = static_cast<std::int64_t>(seed);
  ds.transitions.reserve(static_cast<std::size_t>(n_episodes) * episode_len);

  Rng root(seed);
  for (int ep = 0; ep < n_episodes; ++ep) {
    Rng rng = root.derive(static_cast<std::uint64_t>(ep));
    const double u = rng.uniform();
    std::size_t persona_idx = 0;
    double acc = 0.0;
    for (std::size_t i = 0; i < personas.size(); ++i) {
      acc += weights[i];
      if (u < acc) {
        persona_idx = i;
        break;
      }
      persona_idx = i;
    }
    const Persona& persona = personas[persona_idx];

    EnvState state = initial_state(env, rng);
    std::vector<double> obs = observe(env, state);
    for (int step = 0; step < episode_len; ++step) {
      const std::vector<double> action = scripted_policy(env, obs, persona, rng);
      auto [next_state, next_obs] = env_step(env, state, action);
      Transition t;
      t.observation = obs;
      t.action = action;
      t.next_observation = next_obs;
      t.rewards.resize(env.tasks.size());
      for (std::size_t k = 0; k < env.tasks.size(); ++k)
        t.rewards[k] = task_reward(env, obs, action, next_obs, env.tasks[k]);
      t.terminal = false;  // fixed-horizon episodes, no absorbing states
      t.episode_id = ep;
      t.step_index = step;
      ds.transitions.push_back(std::move(t));
      state = std::move(next_state);
      obs = next_obs;
    }
  }
  return ds;
}

Environment two_goal_point_mass() {
  Environment env;
  env.name = "two-goal-point-mass";
  env.dim = 2;
  env.box_lo = {-1.0, -1.0};
  env.box_hi = {1.0, 1.0};
  env.dt = 0.05;
  env.episode_len = 200;
  env.action_limit = 1.0;
  env.tasks = {
      {"reach_a", {0.7, 0.7}, RewardKind::ShapedStol, 0.05, 0.5},
      {"reach_b", {-0.7, -0.7}, RewardKind::ShapedStol, 0.05, 0.5},
  };
  return env;
}

Environment corridor_lift() {
  Environment env;
  env.name = "corridor-lift";
  env.dim = 1;
  env.box_lo = {0.0};
  env.box_hi = {1.0};
  env.dt = 0.05;
  env.episode_len = 200;
  env.action_limit = 1.0;
  env.tasks = {
      {"reach", {0.8}, RewardKind::ShapedStol, 0.05, 0.4},
      {"hold", {0.8}, RewardKind::Composite, 0.02, 0.1},
  };
  return env;
}

Environment env_by_name(const std::string& name) {
  if (name == "two-goal-point-mass") return two_goal_point_mass();
  if (name == "corridor-lift") return corridor_lift();
  throw std::invalid_argument("unknown environment: " + name);
}

}  // namespace batchrl
