#pragma once

#include <span>
#include <vector>

namespace batchrl {

// How observations are presented to the networks. In single-task mode inputs
// pass through unchanged; in multi-task mode a task one-hot is appended to
// the observation for policy, prior and critic alike.
struct TaskEncoding {
  int n_tasks = 1;
  int task_index = 0;
  bool append_onehot = false;

  int policy_input_dim(int obs_dim) const {
    return obs_dim + (append_onehot ? n_tasks : 0);
  }
  int critic_input_dim(int obs_dim, int action_dim) const {
    return policy_input_dim(obs_dim) + action_dim;
  }

  std::vector<double> policy_input(std::span<const double> obs) const {
    std::vector<double> x(obs.begin(), obs.end());
    if (append_onehot) {
      x.resize(obs.size() + n_tasks, 0.0);
      x[obs.size() + task_index] = 1.0;
    }
    return x;
  }

  std::vector<double> critic_input(std::span<const double> obs,
                                   std::span<const double> action) const {
    std::vector<double> x = policy_input(obs);
    x.insert(x.end(), action.begin(), action.end());
    return x;
  }

  TaskEncoding with_task(int task) const {
    TaskEncoding e = *this;
    e.task_index = task;
    return e;
  }
};

}  // namespace batchrl
