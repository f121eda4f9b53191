#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "batchrl/dataset.hpp"
#include "batchrl/rng.hpp"

namespace batchrl {

struct EnvState {
  std::vector<double> position;
  std::vector<double> velocity;  // last applied (clamped) command
  int step_count = 0;
};

enum class RewardKind { ShapedStol, BinaryBtol, Composite };

struct TaskSpec {
  std::string id;
  std::vector<double> goal;
  RewardKind kind = RewardKind::ShapedStol;
  double eps_tol = 0.05;
  double r_scale = 0.5;
};

// Scripted behavior: proportional controller toward its task's goal, scaled
// by competence, plus Gaussian action noise.
struct Persona {
  std::string name;
  std::string target_task;
  double noise_std = 0.0;
  double competence = 1.0;
};

// Deterministic velocity-controlled box world.
struct Environment {
  std::string name;
  int dim = 2;
  std::vector<double> box_lo, box_hi;
  double dt = 0.05;
  int episode_len = 200;
  double action_limit = 1.0;
  std::vector<TaskSpec> tasks;

  int observation_dim() const { return dim; }
  int action_dim() const { return dim; }
  const TaskSpec& task(const std::string& id) const;
  std::vector<std::string> task_ids() const;
};

// Shaped tolerance: 1 inside |v| < eps_tol, else 1 - tanh^2(atanh(sqrt(0.95))/r * |v|).
double stol(double v, double eps_tol, double r_scale);

// Binary tolerance: 1 iff |v| < eps_tol (strict).
double btol(double v, double eps_tol);

std::vector<double> observe(const Environment& env, const EnvState& state);

EnvState initial_state(const Environment& env, Rng& rng);

// position += clamp(action) * dt, clipped to the box. Returns the new state
// and its observation.
std::pair<EnvState, std::vector<double>> env_step(const Environment& env,
                                                  const EnvState& state,
                                                  std::span<const double> action);

double task_reward(const Environment& env, std::span<const double> observation,
                   std::span<const double> action,
                   std::span<const double> next_observation, const TaskSpec& task);

std::vector<double> scripted_policy(const Environment& env,
                                    std::span<const double> observation,
                                    const Persona& persona, Rng& rng);

// Rolls out n_episodes, sampling a persona per episode by the given mixture
// weights, recording rewards for every declared task. Reproducible by seed.
Dataset generate_dataset(const Environment& env, std::span<const Persona> personas,
                         std::span<const double> weights, int n_episodes,
                         int episode_len, std::uint64_t seed);

// Canonical environments.
Environment two_goal_point_mass();
Environment corridor_lift();
Environment env_by_name(const std::string& name);

}  // namespace batchrl
