// batchrl command line: dataset generation, offline training, policy
// evaluation and the finite-difference gradient check.

#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "batchrl/envs.hpp"
#include "batchrl/gradcheck.hpp"
#include "batchrl/trainer.hpp"

namespace {

using namespace batchrl;

Persona parse_persona(const std::string& spec, int index, double* weight_out) {
  Persona p;
  p.name = "persona" + std::to_string(index);
  *weight_out = -1.0;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("persona spec needs key=value pairs: " + item);
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "task") p.target_task = value;
    else if (key == "competence") p.competence = std::stod(value);
    else if (key == "noise") p.noise_std = std::stod(value);
    else if (key == "name") p.name = value;
    else if (key == "weight") *weight_out = std::stod(value);
    else throw std::invalid_argument("unknown persona key: " + key);
  }
  if (p.target_task.empty())
    throw std::invalid_argument("persona spec needs task=<task-id>: " + spec);
  return p;
}

int cmd_gen_data(const std::string& env_name,
                 const std::vector<std::string>& persona_specs, int episodes,
                 int episode_len, std::uint64_t seed, const std::string& out) {
  const Environment env = env_by_name(env_name);
  std::vector<Persona> personas;
  std::vector<double> weights;
  for (std::size_t i = 0; i < persona_specs.size(); ++i) {
    double w;
    personas.push_back(parse_persona(persona_specs[i], static_cast<int>(i), &w));
    weights.push_back(w);
  }
  bool any_weight = false;
  for (double w : weights) any_weight |= (w >= 0.0);
  if (!any_weight)
    weights.assign(personas.size(), 1.0 / static_cast<double>(personas.size()));

  const int len = episode_len > 0 ? episode_len : env.episode_len;
  const Dataset ds = generate_dataset(env, personas, weights, episodes, len, seed);
  write_dataset(out, ds);
  std::cout << "wrote " << ds.transitions.size() << " transitions ("
            << episodes << " episodes) to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path,
              const std::vector<std::string>& overrides) {
  TrainConfig config;
  if (!config_path.empty()) config = load_config(config_path);
  for (const std::string& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override needs key=value: " + kv);
    apply_override(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const TrainResult result = train(config);
  if (result.aborted) {
    std::cerr << "error: training aborted at step " << result.steps_done
              << "; last-good checkpoints kept in " << result.out_dir.string()
              << "\n";
    return 3;
  }
  std::cout << "trained " << result.steps_done << " steps; outputs in "
            << result.out_dir.string() << "\n";
  if (!result.metrics.empty()) {
    const MetricsRow& r = result.final_row();
    std::printf("final eval return: %.4f +- %.4f\n", r.eval_return_mean,
                r.eval_return_std);
  }
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& env_name,
             int episodes, std::uint64_t seed, const std::string& task) {
  const Environment env = env_by_name(env_name);
  const ParamSet policy = load_params(checkpoint);

  TaskEncoding enc;
  enc.n_tasks = static_cast<int>(env.tasks.size());
  enc.task_index = env.task(task).id == task
                       ? static_cast<int>(&env.task(task) - env.tasks.data())
                       : 0;
  // Multi-task checkpoints carry the task one-hot in their input width.
  if (policy.arch.input_dim() == env.observation_dim() + enc.n_tasks)
    enc.append_onehot = true;
  else if (policy.arch.input_dim() != env.observation_dim())
    throw std::invalid_argument("checkpoint input width matches neither plain nor "
                                "task-conditioned observations");

  const EvalStats stats = evaluate(policy, env, episodes, seed, task, enc);
  std::printf("episodes=%d mean=%.6f std=%.6f min=%.6f max=%.6f\n", stats.episodes,
              stats.mean, stats.stddev, stats.min, stats.max);
  return 0;
}

int cmd_gradcheck(int instances, std::uint64_t seed) {
  const GradCheckReport report = run_gradcheck(instances, seed);
  for (const GradCheckEntry& e : report.entries)
    std::printf("%-18s max relative error %.3e\n", e.name.c_str(), e.max_rel_err);
  if (!report.all_within(1e-4)) {
    std::cerr << "error: gradient check failed (worst " << report.worst() << ")\n";
    return 2;
  }
  std::printf("all gradients within 1e-4 of central finite differences\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline RL with behavior-model priors"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a logged dataset");
  std::string env_name = "two-goal-point-mass";
  std::vector<std::string> persona_specs;
  int episodes = 200;
  int episode_len = 0;
  std::uint64_t seed = 1;
  std::string out = "dataset.bin";
  gen->add_option("--env", env_name, "Environment name");
  gen->add_option("--persona", persona_specs,
                  "Persona spec: task=ID[,competence=C][,noise=S][,weight=W][,name=N]")
      ->required();
  gen->add_option("--episodes", episodes, "Number of episodes");
  gen->add_option("--episode-len", episode_len, "Steps per episode (0 = env default)");
  gen->add_option("--seed", seed, "Generator seed");
  gen->add_option("--out", out, "Output dataset path");

  auto* tr = app.add_subcommand("train", "Train from a frozen dataset");
  std::string config_path;
  std::vector<std::string> overrides;
  tr->add_option("--config", config_path, "JSON config file");
  tr->add_option("--set", overrides, "Config override key=value (wins over file)");

  auto* ev = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  std::string checkpoint;
  std::string eval_env = "two-goal-point-mass";
  int eval_episodes = 20;
  std::uint64_t eval_seed = 7;
  std::string task;
  ev->add_option("--checkpoint", checkpoint, "Policy checkpoint")->required();
  ev->add_option("--env", eval_env, "Environment name");
  ev->add_option("--episodes", eval_episodes, "Evaluation episodes");
  ev->add_option("--seed", eval_seed, "Evaluation seed");
  ev->add_option("--task", task, "Task id to score")->required();

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  int instances = 50;
  std::uint64_t gc_seed = 2024;
  gc->add_option("--instances", instances, "Random instances per loss family");
  gc->add_option("--seed", gc_seed, "Suite seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen_data(env_name, persona_specs, episodes, episode_len, seed, out);
    if (tr->parsed()) return cmd_train(config_path, overrides);
    if (ev->parsed()) return cmd_eval(checkpoint, eval_env, eval_episodes, eval_seed, task);
    if (gc->parsed()) return cmd_gradcheck(instances, gc_seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
