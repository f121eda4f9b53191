#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "batchrl/conditioning.hpp"
#include "batchrl/dataset.hpp"
#include "batchrl/envs.hpp"
#include "batchrl/improve_mpo.hpp"
#include "batchrl/nn.hpp"

namespace batchrl {

enum class Algorithm { Mpo, Svg };
enum class PriorKind { Bm, Abm, None };

std::string to_string(Algorithm a);
std::string to_string(PriorKind p);
Algorithm algorithm_from_string(const std::string& s);
PriorKind prior_kind_from_string(const std::string& s);

struct TrainConfig {
  Algorithm algorithm = Algorithm::Mpo;
  PriorKind prior_kind = PriorKind::Abm;

  // KL budget of the improvement step; 0 selects the prior-only variant
  // (no RL policy, the deployed policy is the advantage-weighted prior).
  double epsilon = 0.1;

  bool trust_decoupled = false;
  double eps_trust = 0.05;
  double eps_mu = 5e-3;
  double eps_sigma = 1e-5;

  double gamma = 0.99;
  int m_samples = 20;
  int batch_size = 64;
  int snippet_len = 10;
  int target_period = 200;
  double learning_rate = 2e-4;
  double dual_learning_rate = 0.05;
  long total_steps = 20000;
  long eval_every = 1000;
  int eval_episodes = 10;
  std::uint64_t seed = 1;
  bool multitask = false;

  std::vector<int> policy_hidden = {64, 64};
  std::vector<int> prior_hidden = {64, 64};
  std::vector<int> critic_hidden = {64, 64, 64};
  bool first_layer_norm = true;

  // 0 = per-algorithm default (3 for MPO, 1 for SVG).
  double eta_init = 0.0;
  double alpha_init = 1.0;

  std::string task;
  std::string dataset_path;
  std::string out_dir;
};

TrainConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const TrainConfig& config);
// Applies "key=value" with the same keys as the config file; throws on
// unknown keys or malformed values.
void apply_override(TrainConfig& config, const std::string& key,
                    const std::string& value);
void validate_config(const TrainConfig& config);

struct MetricsRow {
  long step = 0;
  double td_loss = 0.0;
  double prior_loss = 0.0;
  double policy_objective = 0.0;
  double eta = 0.0;
  double alpha = 0.0;
  double mean_kl_policy_prior = 0.0;
  double weight_fraction = 0.0;  // share of advantage weights equal to 1
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

struct EvalStats {
  double mean = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
  int episodes = 0;
};

// Deterministic-evaluation rollouts: the policy mean is executed, episode
// seeds derive from `seed`. Returns undiscounted-return statistics.
EvalStats evaluate(const ParamSet& policy, const Environment& env, int n_episodes,
                   std::uint64_t seed, const std::string& task_id,
                   const TaskEncoding& enc);

struct TrainResult {
  std::vector<MetricsRow> metrics;
  bool aborted = false;
  long steps_done = 0;
  std::filesystem::path out_dir;

  const MetricsRow& final_row() const;
};

// Runs the full learner loop over a frozen dataset: per step one gradient
// update each for prior, critic, policy and duals, with periodic target
// sync. Dispatches to the prior-only variant when epsilon == 0.
TrainResult train(const TrainConfig& config);

// epsilon = 0 variant: alternates advantage-weighted prior updates with
// policy evaluation of the prior; the deployed policy is the prior itself.
TrainResult train_prior_only(const TrainConfig& config);

}  // namespace batchrl
