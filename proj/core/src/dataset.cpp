#include "batchrl/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace batchrl {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void write_f64_le(std::ostream& os, double x) {
  const auto bits = std::bit_cast<std::uint64_t>(x);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

double read_f64_le(std::istream& is) {
  char buf[8];
  is.read(buf, 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return std::bit_cast<double>(bits);
}

std::size_t record_width(const DatasetHeader& h) {
  return static_cast<std::size_t>(h.observation_dim) * 2 + h.action_dim +
         h.task_ids.size() + 3;  // terminal, episode_id, step_index
}

}  // namespace

int DatasetHeader::task_index(const std::string& task_id) const {
  const auto it = std::find(task_ids.begin(), task_ids.end(), task_id);
  if (it == task_ids.end())
    throw std::invalid_argument("unknown task id: " + task_id);
  return static_cast<int>(it - task_ids.begin());
}

void validate_dataset(const Dataset& dataset) {
  const DatasetHeader& h = dataset.header;
  require(h.observation_dim > 0 && h.action_dim > 0,
          "dataset: non-positive dimensions in header");
  require(!h.task_ids.empty(), "dataset: header declares no tasks");
  for (std::size_t i = 0; i < h.task_ids.size(); ++i)
    for (std::size_t j = i + 1; j < h.task_ids.size(); ++j)
      require(h.task_ids[i] != h.task_ids[j], "dataset: duplicate task id");
  for (std::size_t i = 0; i < dataset.transitions.size(); ++i) {
    const Transition& t = dataset.transitions[i];
    require(static_cast<int>(t.observation.size()) == h.observation_dim &&
                static_cast<int>(t.next_observation.size()) == h.observation_dim,
            "dataset: transition " + std::to_string(i) + " observation dim mismatch");
    require(static_cast<int>(t.action.size()) == h.action_dim,
            "dataset: transition " + std::to_string(i) + " action dim mismatch");
    require(t.rewards.size() == h.task_ids.size(),
            "dataset: transition " + std::to_string(i) + " reward vector mismatch");
    for (double v : t.observation)
      require(std::isfinite(v), "dataset: non-finite observation");
    for (double v : t.action) require(std::isfinite(v), "dataset: non-finite action");
    if (i > 0) {
      const Transition& prev = dataset.transitions[i - 1];
      if (t.episode_id == prev.episode_id)
        require(t.step_index == prev.step_index + 1,
                "dataset: non-consecutive step_index inside episode");
    }
  }
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  validate_dataset(dataset);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_dataset: cannot open " + path.string());
  nlohmann::json header{{"observation_dim", dataset.header.observation_dim},
                        {"action_dim", dataset.header.action_dim},
                        {"task_ids", dataset.header.task_ids},
                        {"environment_name", dataset.header.environment_name},
                        {"generator_seed", dataset.header.generator_seed},
                        {"n_transitions", dataset.transitions.size()}};
  os << header.dump() << '\n';
  for (const Transition& t : dataset.transitions) {
    for (double v : t.observation) write_f64_le(os, v);
    for (double v : t.action) write_f64_le(os, v);
    for (double v : t.rewards) write_f64_le(os, v);
    for (double v : t.next_observation) write_f64_le(os, v);
    write_f64_le(os, t.terminal ? 1.0 : 0.0);
    write_f64_le(os, static_cast<double>(t.episode_id));
    write_f64_le(os, static_cast<double>(t.step_index));
  }
  if (!os) throw std::runtime_error("write_dataset: write failed " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_dataset: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("read_dataset: missing header in " + path.string());
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded())
    throw std::runtime_error("read_dataset: malformed header in " + path.string());

  Dataset out;
  out.header.observation_dim = header.at("observation_dim").get<int>();
  out.header.action_dim = header.at("action_dim").get<int>();
  out.header.task_ids = header.at("task_ids").get<std::vector<std::string>>();
  out.header.environment_name = header.at("environment_name").get<std::string>();
  out.header.generator_seed = header.at("generator_seed").get<std::int64_t>();
  const auto n = header.at("n_transitions").get<std::size_t>();

  const std::size_t width = record_width(out.header);
  out.transitions.resize(n);
  std::vector<double> rec(width);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < width; ++k) rec[k] = read_f64_le(is);
    if (!is)
      throw std::runtime_error("read_dataset: truncated record in " + path.string());
    Transition& t = out.transitions[i];
    auto at = rec.begin();
    t.observation.assign(at, at + out.header.observation_dim);
    at += out.header.observation_dim;
    t.action.assign(at, at + out.header.action_dim);
    at += out.header.action_dim;
    t.rewards.assign(at, at + out.header.task_ids.size());
    at += out.header.task_ids.size();
    t.next_observation.assign(at, at + out.header.observation_dim);
    at += out.header.observation_dim;
    t.terminal = (*at++ != 0.0);
    t.episode_id = static_cast<std::int64_t>(*at++);
    t.step_index = static_cast<std::int64_t>(*at++);
  }
  validate_dataset(out);
  return out;
}

void relabel_rewards(Dataset& dataset, const RewardFn& reward_fn,
                     const std::vector<std::string>& task_ids) {
  for (const std::string& task : task_ids) {
    int idx;
    const auto it = std::find(dataset.header.task_ids.begin(),
                              dataset.header.task_ids.end(), task);
    if (it == dataset.header.task_ids.end()) {
      dataset.header.task_ids.push_back(task);
      idx = static_cast<int>(dataset.header.task_ids.size()) - 1;
      for (Transition& t : dataset.transitions) t.rewards.push_back(0.0);
    } else {
      idx = static_cast<int>(it - dataset.header.task_ids.begin());
    }
    for (std::size_t i = 0; i < dataset.transitions.size(); ++i) {
      Transition& t = dataset.transitions[i];
      const double r = reward_fn(t.observation, t.action, t.next_observation, task);
      if (!std::isfinite(r))
        throw std::runtime_error(
            "relabel_rewards: non-finite reward for task '" + task +
            "' at transition " + std::to_string(i) + " (episode " +
            std::to_string(t.episode_id) + ", step " +
            std::to_string(t.step_index) + ")");
      t.rewards[idx] = r;
    }
  }
}

SnippetSampler::SnippetSampler(const Dataset& dataset, int snippet_len)
    : dataset_(&dataset), snippet_len_(snippet_len) {
  require(snippet_len >= 2, "snippet length must be at least 2");
  const auto& ts = dataset.transitions;
  const std::size_t n = ts.size();
  for (std::size_t i = 0; i + snippet_len <= n; ++i) {
    bool ok = true;
    for (int k = 1; k < snippet_len; ++k) {
      if (ts[i + k].episode_id != ts[i].episode_id) {
        ok = false;
        break;
      }
    }
    if (ok) starts_.push_back(i);
  }
  if (starts_.empty())
    throw std::invalid_argument(
        "no episode long enough for snippet length " + std::to_string(snippet_len));
}

TrajectorySnippet SnippetSampler::sample(Rng& rng) const {
  const std::size_t start = starts_[rng.uniform_index(starts_.size())];
  TrajectorySnippet snip;
  snip.steps = std::span<const Transition>(dataset_->transitions)
                   .subspan(start, snippet_len_);
  return snip;
}

std::vector<TrajectorySnippet> SnippetSampler::sample_batch(Rng& rng,
                                                            int batch_size) const {
  std::vector<TrajectorySnippet> out;
  out.reserve(batch_size);
  for (int i = 0; i < batch_size; ++i) out.push_back(sample(rng));
  return out;
}

std::vector<TrajectorySnippet> sample_snippets(const Dataset& dataset, Rng& rng,
                                               int batch_size, int snippet_len) {
  return SnippetSampler(dataset, snippet_len).sample_batch(rng, batch_size);
}

double nstep_return(const TrajectorySnippet& snippet, int t, double gamma,
                    double v_boot, int task_index) {
  const int n = snippet.length();
  require(t >= 1 && t <= n - 1, "nstep_return: t out of range [1, N-1]");
  double acc = 0.0;
  double discount = 1.0;
  for (int j = t - 1; j <= n - 2; ++j) {
    acc += discount * snippet.steps[j].rewards.at(task_index);
    discount *= gamma;
  }
  return acc + discount * v_boot;  // discount = gamma^(N-t) here
}

}  // namespace batchrl
