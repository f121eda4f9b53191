#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "batchrl/rng.hpp"

namespace batchrl {

// One environment step. rewards is aligned with DatasetHeader.task_ids.
struct Transition {
  std::vector<double> observation;
  std::vector<double> action;
  std::vector<double> rewards;
  std::vector<double> next_observation;
  bool terminal = false;
  std::int64_t episode_id = 0;
  std::int64_t step_index = 0;
};

struct DatasetHeader {
  int observation_dim = 0;
  int action_dim = 0;
  std::vector<std::string> task_ids;
  std::string environment_name;
  std::int64_t generator_seed = 0;

  // Index of a task id; throws on unknown ids.
  int task_index(const std::string& task_id) const;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Transition> transitions;
};

// Fixed-length window into a dataset's transition array. Steps are
// consecutive within one episode; steps[k] carries (s_k, a_k, r_k, s_{k+1}).
struct TrajectorySnippet {
  std::span<const Transition> steps;
  std::optional<int> source_task;

  int length() const { return static_cast<int>(steps.size()); }
};

// File format: one JSON header line, then one fixed-width record per
// transition, every field a little-endian 64-bit float. Round trips are
// bit-exact.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

// Checks header/transition consistency (dims, reward vector lengths, episode
// step numbering). Throws on violation.
void validate_dataset(const Dataset& dataset);

using RewardFn = std::function<double(
    std::span<const double> observation, std::span<const double> action,
    std::span<const double> next_observation, const std::string& task_id)>;

// Evaluates reward_fn on every transition for each given task id, appending
// new reward channels (or overwriting existing ones). All other fields are
// untouched.
void relabel_rewards(Dataset& dataset, const RewardFn& reward_fn,
                     const std::vector<std::string>& task_ids);

// Precomputed valid snippet start points (no episode-boundary crossing).
class SnippetSampler {
public:
  SnippetSampler(const Dataset& dataset, int snippet_len);

  TrajectorySnippet sample(Rng& rng) const;
  std::vector<TrajectorySnippet> sample_batch(Rng& rng, int batch_size) const;

  int snippet_len() const { return snippet_len_; }
  std::size_t n_start_points() const { return starts_.size(); }

private:
  const Dataset* dataset_;
  int snippet_len_;
  std::vector<std::size_t> starts_;
};

// Uniform over valid starts; deterministic given the rng state.
std::vector<TrajectorySnippet> sample_snippets(const Dataset& dataset, Rng& rng,
                                               int batch_size, int snippet_len);

// Discounted reward sum from 1-based step t through the snippet, plus the
// bootstrap term gamma^(N-t) * v_boot at the snippet's final observation.
// Valid t range is [1, N-1]; the final step contributes only its observation.
double nstep_return(const TrajectorySnippet& snippet, int t, double gamma,
                    double v_boot, int task_index);

}  // namespace batchrl
