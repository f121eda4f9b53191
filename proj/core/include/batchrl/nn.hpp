#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "batchrl/rng.hpp"

namespace batchrl {

enum class Activation { Elu };

// Fully-connected net shape. layer_widths[0] is the input width, the
// remaining entries are hidden-layer widths; the linear output layer is
// described by output_dim. first_layer_norm normalizes the first hidden
// layer's pre-activations (zero mean, unit variance across units, then a
// learned scale and offset) before the activation.
struct Architecture {
  std::vector<int> layer_widths;
  int output_dim = 1;
  Activation activation = Activation::Elu;
  bool first_layer_norm = false;

  int input_dim() const { return layer_widths.front(); }
  int n_hidden() const { return static_cast<int>(layer_widths.size()) - 1; }
  bool operator==(const Architecture&) const = default;
};

void validate(const Architecture& arch);
std::size_t param_count(const Architecture& arch);

// One function approximator: flat parameter vector plus its shape.
struct ParamSet {
  std::vector<double> values;
  Architecture arch;
};

ParamSet zero_params(const Architecture& arch);

// Fan-in-scaled uniform weights, zero biases, layer-norm scale 1 / offset 0.
ParamSet init_params(const Architecture& arch, Rng& rng);

// init_params with the output layer zeroed: fresh critics predict exactly 0
// and fresh policy heads sit at mean 0, std softplus(0).
ParamSet init_params_zero_output(const Architecture& arch, Rng& rng);

std::vector<double> forward(const ParamSet& params, std::span<const double> input);
void forward(const ParamSet& params, std::span<const double> input, std::span<double> output);

struct BackwardResult {
  std::vector<double> param_grad;
  std::vector<double> input_grad;
};

// Exact gradients of (upstream_grad . forward(params, input)) with respect
// to the parameters and the input.
BackwardResult backward(const ParamSet& params, std::span<const double> input,
                        std::span<const double> upstream_grad);

// Accumulating form for hot loops; param_grad_acc must have param_count
// entries and is added to. input_grad_acc may be empty to skip input grads.
void backward_accumulate(const ParamSet& params, std::span<const double> input,
                         std::span<const double> upstream_grad,
                         std::span<double> param_grad_acc,
                         std::span<double> input_grad_acc);

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long step_count = 0;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_hat = 1e-8;
};

AdamState make_adam(std::size_t n_params, double learning_rate);

// In-place Adam update with bias correction. Rejects non-finite gradients.
void adam_step(AdamState& state, ParamSet& params, std::span<const double> grad);

// Scalar Adam for dual variables (temperature, trust multipliers).
struct ScalarAdam {
  double first_moment = 0.0;
  double second_moment = 0.0;
  long step_count = 0;
};

// Returns the descent delta -lr * mhat / (sqrt(vhat) + eps) and advances the
// moment estimates.
double scalar_adam_delta(ScalarAdam& state, double grad, double learning_rate,
                         double beta1 = 0.9, double beta2 = 0.999,
                         double eps_hat = 1e-8);

// Checkpoint format: one plain-text JSON header line naming the architecture,
// then the flat parameter vector as little-endian 64-bit floats.
void save_params(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_params(const std::filesystem::path& path);

}  // namespace batchrl
