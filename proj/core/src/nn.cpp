#include "batchrl/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace batchrl {

namespace {

constexpr double kLayerNormEps = 1e-6;

inline double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
inline double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

// Per-call scratch; thread_local keeps forward/backward callable from
// concurrent workers without shared mutable state.
struct Scratch {
  std::vector<std::vector<double>> acts;  // acts[0] = input copy, then hidden
  std::vector<std::vector<double>> pre;   // pre-activations per hidden layer
  std::vector<double> ln_hat;             // normalized first-layer units
  std::vector<double> delta;              // backprop buffer
  std::vector<double> delta_next;
};

thread_local Scratch tls_scratch;

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Runs the forward pass, recording intermediates needed for backward.
// Returns the layer-norm inverse stddev (0 when unused).
double run_forward(const ParamSet& params, std::span<const double> input,
                   Scratch& s, std::span<double> output) {
  const Architecture& arch = params.arch;
  const int n_hidden = arch.n_hidden();
  require(static_cast<int>(input.size()) == arch.input_dim(),
          "forward: input width does not match architecture");
  require(static_cast<int>(output.size()) == arch.output_dim,
          "forward: output span width does not match architecture");

  s.acts.resize(n_hidden + 1);
  s.pre.resize(n_hidden);
  s.acts[0].assign(input.begin(), input.end());

  const double* p = params.values.data();
  double inv_std = 0.0;
  int prev = arch.input_dim();
  for (int l = 0; l < n_hidden; ++l) {
    const int width = arch.layer_widths[l + 1];
    auto& z = s.pre[l];
    z.resize(width);
    for (int i = 0; i < width; ++i) {
      const double* w = p + static_cast<std::size_t>(i) * prev;
      double acc = 0.0;
      for (int j = 0; j < prev; ++j) acc += w[j] * s.acts[l][j];
      z[i] = acc;
    }
    p += static_cast<std::size_t>(width) * prev;
    for (int i = 0; i < width; ++i) z[i] += p[i];
    p += width;

    auto& a = s.acts[l + 1];
    a.resize(width);
    if (l == 0 && arch.first_layer_norm) {
      double mean = 0.0;
      for (int i = 0; i < width; ++i) mean += z[i];
      mean /= width;
      double var = 0.0;
      for (int i = 0; i < width; ++i) {
        const double d = z[i] - mean;
        var += d * d;
      }
      var /= width;
      inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
      s.ln_hat.resize(width);
      const double* scale = p;
      const double* offset = p + width;
      for (int i = 0; i < width; ++i) {
        s.ln_hat[i] = (z[i] - mean) * inv_std;
        a[i] = elu(scale[i] * s.ln_hat[i] + offset[i]);
      }
      p += 2 * static_cast<std::size_t>(width);
    } else {
      for (int i = 0; i < width; ++i) a[i] = elu(z[i]);
    }
    prev = width;
  }

  for (int i = 0; i < arch.output_dim; ++i) {
    const double* w = p + static_cast<std::size_t>(i) * prev;
    double acc = 0.0;
    for (int j = 0; j < prev; ++j) acc += w[j] * s.acts[n_hidden][j];
    output[i] = acc;
  }
  p += static_cast<std::size_t>(arch.output_dim) * prev;
  for (int i = 0; i < arch.output_dim; ++i) output[i] += p[i];
  return inv_std;
}

}  // namespace

void validate(const Architecture& arch) {
  require(!arch.layer_widths.empty(), "architecture: layer_widths empty");
  for (int w : arch.layer_widths)
    require(w >= 1, "architecture: non-positive layer width");
  require(arch.output_dim >= 1, "architecture: output_dim < 1");
}

std::size_t param_count(const Architecture& arch) {
  validate(arch);
  std::size_t count = 0;
  int prev = arch.layer_widths[0];
  for (int l = 1; l < static_cast<int>(arch.layer_widths.size()); ++l) {
    const int width = arch.layer_widths[l];
    count += static_cast<std::size_t>(width) * prev + width;
    if (l == 1 && arch.first_layer_norm) count += 2 * static_cast<std::size_t>(width);
    prev = width;
  }
  count += static_cast<std::size_t>(arch.output_dim) * prev + arch.output_dim;
  return count;
}

ParamSet zero_params(const Architecture& arch) {
  ParamSet out;
  out.arch = arch;
  out.values.assign(param_count(arch), 0.0);
  return out;
}

ParamSet init_params(const Architecture& arch, Rng& rng) {
  ParamSet out = zero_params(arch);
  double* p = out.values.data();
  int prev = arch.layer_widths[0];
  for (int l = 1; l < static_cast<int>(arch.layer_widths.size()); ++l) {
    const int width = arch.layer_widths[l];
    const double bound = 1.0 / std::sqrt(static_cast<double>(prev));
    for (int i = 0; i < width * prev; ++i) p[i] = rng.uniform(-bound, bound);
    p += static_cast<std::size_t>(width) * prev;
    p += width;  // biases stay zero
    if (l == 1 && arch.first_layer_norm) {
      for (int i = 0; i < width; ++i) p[i] = 1.0;  // scale
      p += 2 * static_cast<std::size_t>(width);    // offsets stay zero
    }
    prev = width;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(prev));
  for (int i = 0; i < arch.output_dim * prev; ++i) p[i] = rng.uniform(-bound, bound);
  return out;
}

ParamSet init_params_zero_output(const Architecture& arch, Rng& rng) {
  ParamSet p = init_params(arch, rng);
  const std::size_t out_block =
      static_cast<std::size_t>(arch.output_dim) * arch.layer_widths.back() +
      arch.output_dim;
  std::fill(p.values.end() - out_block, p.values.end(), 0.0);
  return p;
}

void forward(const ParamSet& params, std::span<const double> input,
             std::span<double> output) {
  require(params.values.size() == param_count(params.arch),
          "forward: parameter vector size does not match architecture");
  run_forward(params, input, tls_scratch, output);
}

std::vector<double> forward(const ParamSet& params, std::span<const double> input) {
  std::vector<double> out(params.arch.output_dim);
  forward(params, input, out);
  return out;
}

void backward_accumulate(const ParamSet& params, std::span<const double> input,
                         std::span<const double> upstream_grad,
                         std::span<double> param_grad_acc,
                         std::span<double> input_grad_acc) {
  const Architecture& arch = params.arch;
  require(params.values.size() == param_count(params.arch),
          "backward: parameter vector size does not match architecture");
  require(static_cast<int>(upstream_grad.size()) == arch.output_dim,
          "backward: upstream_grad width does not match output_dim");
  require(param_grad_acc.empty() || param_grad_acc.size() == params.values.size(),
          "backward: param_grad accumulator has wrong size");
  require(input_grad_acc.empty() ||
              static_cast<int>(input_grad_acc.size()) == arch.input_dim(),
          "backward: input_grad accumulator has wrong size");
  if (param_grad_acc.empty() && input_grad_acc.empty()) return;

  Scratch& s = tls_scratch;
  std::vector<double> out(arch.output_dim);
  const double inv_std = run_forward(params, input, s, out);

  const int n_hidden = arch.n_hidden();

  // Parameter block offsets, innermost layer last.
  std::vector<std::size_t> w_off(n_hidden + 1), b_off(n_hidden + 1);
  std::size_t ln_off = 0;
  {
    std::size_t at = 0;
    int prev = arch.input_dim();
    for (int l = 0; l < n_hidden; ++l) {
      const int width = arch.layer_widths[l + 1];
      w_off[l] = at;
      at += static_cast<std::size_t>(width) * prev;
      b_off[l] = at;
      at += width;
      if (l == 0 && arch.first_layer_norm) {
        ln_off = at;
        at += 2 * static_cast<std::size_t>(width);
      }
      prev = width;
    }
    w_off[n_hidden] = at;
    b_off[n_hidden] = at + static_cast<std::size_t>(arch.output_dim) * prev;
  }

  const bool want_params = !param_grad_acc.empty();

  // Output layer.
  const int last_width = arch.layer_widths.back();
  s.delta.assign(last_width, 0.0);
  {
    const double* w = params.values.data() + w_off[n_hidden];
    const auto& a = s.acts[n_hidden];
    for (int i = 0; i < arch.output_dim; ++i) {
      const double u = upstream_grad[i];
      const double* wi = w + static_cast<std::size_t>(i) * last_width;
      if (want_params) {
        param_grad_acc[b_off[n_hidden] + i] += u;
        double* gwi = param_grad_acc.data() + w_off[n_hidden] +
                      static_cast<std::size_t>(i) * last_width;
        for (int j = 0; j < last_width; ++j) {
          gwi[j] += u * a[j];
          s.delta[j] += u * wi[j];
        }
      } else {
        for (int j = 0; j < last_width; ++j) s.delta[j] += u * wi[j];
      }
    }
  }

  // Hidden layers, back to front. s.delta holds dL/d(activation of layer l).
  for (int l = n_hidden - 1; l >= 0; --l) {
    const int width = arch.layer_widths[l + 1];
    const int prev = arch.layer_widths[l];
    auto& dz = s.delta_next;
    dz.resize(width);

    if (l == 0 && arch.first_layer_norm) {
      const double* scale = params.values.data() + ln_off;
      // Through elu, then the learned affine, then normalization.
      double mean_dhat = 0.0, mean_dhat_hat = 0.0;
      for (int i = 0; i < width; ++i) {
        const double dy = s.delta[i] * elu_grad(scale[i] * s.ln_hat[i] +
                                                params.values[ln_off + width + i]);
        if (want_params) {
          param_grad_acc[ln_off + i] += dy * s.ln_hat[i];
          param_grad_acc[ln_off + width + i] += dy;
        }
        const double dhat = dy * scale[i];
        dz[i] = dhat;
        mean_dhat += dhat;
        mean_dhat_hat += dhat * s.ln_hat[i];
      }
      mean_dhat /= width;
      mean_dhat_hat /= width;
      for (int i = 0; i < width; ++i)
        dz[i] = inv_std * (dz[i] - mean_dhat - s.ln_hat[i] * mean_dhat_hat);
    } else {
      for (int i = 0; i < width; ++i) dz[i] = s.delta[i] * elu_grad(s.pre[l][i]);
    }

    const double* w = params.values.data() + w_off[l];
    const auto& a_prev = s.acts[l];
    const bool want_upstream = l > 0 || !input_grad_acc.empty();

    if (want_upstream) s.delta.assign(prev, 0.0);
    for (int i = 0; i < width; ++i) {
      const double d = dz[i];
      const double* wi = w + static_cast<std::size_t>(i) * prev;
      if (want_params) {
        param_grad_acc[b_off[l] + i] += d;
        double* gwi =
            param_grad_acc.data() + w_off[l] + static_cast<std::size_t>(i) * prev;
        for (int j = 0; j < prev; ++j) gwi[j] += d * a_prev[j];
      }
      if (want_upstream) {
        for (int j = 0; j < prev; ++j) s.delta[j] += d * wi[j];
      }
    }
    if (l == 0 && !input_grad_acc.empty()) {
      for (int j = 0; j < prev; ++j) input_grad_acc[j] += s.delta[j];
    }
  }

  // Degenerate case: no hidden layers, input grad comes from the output layer.
  if (n_hidden == 0 && !input_grad_acc.empty()) {
    for (int j = 0; j < arch.input_dim(); ++j) input_grad_acc[j] += s.delta[j];
  }
}

BackwardResult backward(const ParamSet& params, std::span<const double> input,
                        std::span<const double> upstream_grad) {
  BackwardResult res;
  res.param_grad.assign(params.values.size(), 0.0);
  res.input_grad.assign(params.arch.input_dim(), 0.0);
  backward_accumulate(params, input, upstream_grad, res.param_grad, res.input_grad);
  return res;
}

AdamState make_adam(std::size_t n_params, double learning_rate) {
  AdamState st;
  st.first_moment.assign(n_params, 0.0);
  st.second_moment.assign(n_params, 0.0);
  st.learning_rate = learning_rate;
  return st;
}

void adam_step(AdamState& state, ParamSet& params, std::span<const double> grad) {
  require(grad.size() == params.values.size(), "adam_step: gradient size mismatch");
  require(state.first_moment.size() == params.values.size(),
          "adam_step: state size mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i]))
      throw std::invalid_argument("adam_step: non-finite gradient at index " +
                                  std::to_string(i));
  }
  state.step_count += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = state.beta1 * m + (1.0 - state.beta1) * grad[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = m / c1;
    const double vhat = v / c2;
    params.values[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.eps_hat);
  }
}

double scalar_adam_delta(ScalarAdam& state, double grad, double learning_rate,
                         double beta1, double beta2, double eps_hat) {
  if (!std::isfinite(grad))
    throw std::invalid_argument("scalar_adam_delta: non-finite gradient");
  state.step_count += 1;
  state.first_moment = beta1 * state.first_moment + (1.0 - beta1) * grad;
  state.second_moment = beta2 * state.second_moment + (1.0 - beta2) * grad * grad;
  const double mhat =
      state.first_moment /
      (1.0 - std::pow(beta1, static_cast<double>(state.step_count)));
  const double vhat =
      state.second_moment /
      (1.0 - std::pow(beta2, static_cast<double>(state.step_count)));
  return -learning_rate * mhat / (std::sqrt(vhat) + eps_hat);
}

namespace {

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

}  // namespace

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  validate(params.arch);
  require(params.values.size() == param_count(params.arch),
          "save_params: parameter vector size does not match architecture");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_params: cannot open " + path.string());
  nlohmann::json header{{"layer_widths", params.arch.layer_widths},
                        {"output_dim", params.arch.output_dim},
                        {"activation", "elu"},
                        {"first_layer_norm", params.arch.first_layer_norm}};
  os << header.dump() << '\n';
  for (double v : params.values) write_f64_le(os, v);
  if (!os) throw std::runtime_error("save_params: write failed for " + path.string());
}

ParamSet load_params(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_params: cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_params: missing header in " + path.string());
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded())
    throw std::runtime_error("load_params: malformed header in " + path.string());
  if (header.value("activation", "elu") != std::string("elu"))
    throw std::runtime_error("load_params: unknown activation in " + path.string());
  ParamSet out;
  out.arch.layer_widths = header.at("layer_widths").get<std::vector<int>>();
  out.arch.output_dim = header.at("output_dim").get<int>();
  out.arch.first_layer_norm = header.at("first_layer_norm").get<bool>();
  validate(out.arch);
  const std::size_t n = param_count(out.arch);
  out.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = read_f64_le(is);
    if (!is)
      throw std::runtime_error("load_params: truncated parameter data in " +
                               path.string());
  }
  return out;
}

}  // namespace batchrl
