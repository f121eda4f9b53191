#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "batchrl/nn.hpp"
#include "testutil.hpp"

using namespace batchrl;

namespace {

// Independent straight-line re-implementation of the forward map, used as an
// oracle. Reads the flat vector with its own cursor arithmetic.
std::vector<double> oracle_forward(const ParamSet& p, const std::vector<double>& x0) {
  const Architecture& a = p.arch;
  std::size_t cur = 0;
  std::vector<double> x = x0;
  for (std::size_t l = 1; l < a.layer_widths.size(); ++l) {
    const int rows = a.layer_widths[l];
    const int cols = a.layer_widths[l - 1];
    std::vector<double> z(rows, 0.0);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) z[i] += p.values[cur + i * cols + j] * x[j];
    cur += static_cast<std::size_t>(rows) * cols;
    for (int i = 0; i < rows; ++i) z[i] += p.values[cur + i];
    cur += rows;
    if (l == 1 && a.first_layer_norm) {
      double mean = 0.0;
      for (double v : z) mean += v;
      mean /= rows;
      double var = 0.0;
      for (double v : z) var += (v - mean) * (v - mean);
      var /= rows;
      const double denom = std::sqrt(var + 1e-6);
      for (int i = 0; i < rows; ++i) {
        const double hat = (z[i] - mean) / denom;
        z[i] = p.values[cur + i] * hat + p.values[cur + rows + i];
      }
      cur += 2 * static_cast<std::size_t>(rows);
    }
    for (int i = 0; i < rows; ++i)
      z[i] = z[i] > 0.0 ? z[i] : std::exp(z[i]) - 1.0;
    x = z;
  }
  const int rows = a.output_dim;
  const int cols = a.layer_widths.back();
  std::vector<double> out(rows, 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[i] += p.values[cur + i * cols + j] * x[j];
  cur += static_cast<std::size_t>(rows) * cols;
  for (int i = 0; i < rows; ++i) out[i] += p.values[cur + i];
  return out;
}

}  // namespace

TEST_CASE("param_count matches independent enumeration for many shapes") {
  Rng rng(3);
  for (int it = 0; it < 50; ++it) {
    Architecture a;
    a.layer_widths = {1 + static_cast<int>(rng.uniform_index(6))};
    const int nh = static_cast<int>(rng.uniform_index(4));
    for (int l = 0; l < nh; ++l)
      a.layer_widths.push_back(1 + static_cast<int>(rng.uniform_index(6)));
    a.output_dim = 1 + static_cast<int>(rng.uniform_index(4));
    a.first_layer_norm = rng.uniform() < 0.5;

    std::size_t expect = 0;
    for (std::size_t l = 1; l < a.layer_widths.size(); ++l) {
      expect += static_cast<std::size_t>(a.layer_widths[l]) * a.layer_widths[l - 1] +
                a.layer_widths[l];
      if (l == 1 && a.first_layer_norm) expect += 2 * a.layer_widths[1];
    }
    expect += static_cast<std::size_t>(a.output_dim) * a.layer_widths.back() +
              a.output_dim;
    CHECK(param_count(a) == expect);
  }
}

TEST_CASE("zero-weight network maps any input to zero") {
  Architecture a{{3, 8, 5}, 4, Activation::Elu, true};
  const ParamSet p = zero_params(a);
  const std::vector<double> in{1.0, -2.0, 0.5};
  for (double v : forward(p, in)) CHECK(v == 0.0);
}

TEST_CASE("identity-initialized single linear layer passes input through") {
  Architecture a{{2}, 2, Activation::Elu, false};
  ParamSet p = zero_params(a);
  p.values[0] = 1.0;  // W = I, row-major 2x2
  p.values[3] = 1.0;
  const std::vector<double> out = forward(p, std::vector<double>{1.0, 2.0});
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 2.0);
}

TEST_CASE("forward matches the straight-line oracle to 1e-12") {
  Rng rng(17);
  for (int it = 0; it < 30; ++it) {
    const bool ln = rng.uniform() < 0.5;
    const ParamSet p = testutil::rough_net(rng, 4, 3, {7, 5}, ln);
    std::vector<double> x(4);
    for (double& v : x) v = rng.normal();
    const std::vector<double> got = forward(p, x);
    const std::vector<double> want = oracle_forward(p, x);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-12);
  }
}

TEST_CASE("forward is deterministic bit-for-bit") {
  Rng rng(29);
  const ParamSet p = testutil::rough_net(rng, 5, 2, {6, 6}, true);
  std::vector<double> x(5);
  for (double& v : x) v = rng.normal();
  const std::vector<double> a = forward(p, x);
  const std::vector<double> b = forward(p, x);
  CHECK(a == b);
}

TEST_CASE("dimension mismatches are rejected") {
  Architecture a{{3, 4}, 2, Activation::Elu, false};
  const ParamSet p = zero_params(a);
  CHECK_THROWS_AS((void)forward(p, std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)backward(p, std::vector<double>{1.0, 2.0, 3.0},
                                 std::vector<double>{1.0}),
                  std::invalid_argument);
}

TEST_CASE("backward of a constant network") {
  Architecture a{{2, 3}, 2, Activation::Elu, false};
  const ParamSet p = zero_params(a);
  const std::vector<double> in{0.0, 1.5};
  const std::vector<double> up{2.0, -1.0};
  const BackwardResult res = backward(p, in, up);

  // Output bias gradient equals the upstream gradient.
  const std::size_t out_bias_at = param_count(a) - a.output_dim;
  CHECK(res.param_grad[out_bias_at] == 2.0);
  CHECK(res.param_grad[out_bias_at + 1] == -1.0);
  // First-layer weight grads vanish where the input is zero (column 0).
  for (int row = 0; row < 3; ++row) CHECK(res.param_grad[row * 2 + 0] == 0.0);
}

TEST_CASE("zero upstream gradient yields zero gradients everywhere") {
  Rng rng(31);
  const ParamSet p = testutil::rough_net(rng, 3, 2, {5}, true);
  std::vector<double> x{0.3, -0.2, 0.9};
  const BackwardResult res = backward(p, x, std::vector<double>{0.0, 0.0});
  for (double g : res.param_grad) CHECK(g == 0.0);
  for (double g : res.input_grad) CHECK(g == 0.0);
}

TEST_CASE("backward matches central finite differences on 100 random draws") {
  Rng rng(41);
  double worst = 0.0;
  for (int it = 0; it < 100; ++it) {
    const int in_dim = 2 + static_cast<int>(rng.uniform_index(3));
    const int out_dim = 1 + static_cast<int>(rng.uniform_index(3));
    std::vector<int> hidden;
    const int nh = static_cast<int>(rng.uniform_index(3));
    for (int l = 0; l < nh; ++l)
      hidden.push_back(2 + static_cast<int>(rng.uniform_index(5)));
    const ParamSet p =
        testutil::rough_net(rng, in_dim, out_dim, hidden, rng.uniform() < 0.5);
    std::vector<double> x(in_dim), up(out_dim);
    for (double& v : x) v = rng.normal();
    for (double& v : up) v = rng.normal();

    const BackwardResult res = backward(p, x, up);
    const auto loss = [&](const ParamSet& q) {
      const std::vector<double> out = forward(q, x);
      double acc = 0.0;
      for (int i = 0; i < out_dim; ++i) acc += up[i] * out[i];
      return acc;
    };
    worst = std::max(worst,
                     testutil::max_rel_err(res.param_grad, testutil::fd_grad(loss, p)));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("adam leaves parameters unchanged for zero gradient") {
  Rng rng(51);
  ParamSet p = testutil::rough_net(rng, 3, 2, {4}, false);
  const std::vector<double> before = p.values;
  AdamState st = make_adam(p.values.size(), 1e-3);
  adam_step(st, p, std::vector<double>(p.values.size(), 0.0));
  CHECK(p.values == before);
  CHECK(st.step_count == 1);
}

TEST_CASE("first adam step has closed form -lr * g / (|g| + eps)") {
  Architecture a{{1}, 1, Activation::Elu, false};
  ParamSet p = zero_params(a);
  AdamState st = make_adam(p.values.size(), 0.01);
  std::vector<double> g(p.values.size(), 0.0);
  g[0] = 3.7;
  adam_step(st, p, g);
  const double expect = -0.01 * 3.7 / (3.7 + st.eps_hat);
  CHECK(p.values[0] == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("two adam steps reproduce a hand-computed trace") {
  // 2-parameter problem, lr 0.1, standard betas; trace computed from the
  // update equations directly.
  Architecture a{{2}, 1, Activation::Elu, false};  // 3 params: w0 w1 b
  ParamSet p = zero_params(a);
  AdamState st = make_adam(3, 0.1);
  const std::vector<double> g1{1.0, -2.0, 0.0};
  const std::vector<double> g2{0.5, 1.0, 0.0};

  double m[3] = {0, 0, 0}, v[3] = {0, 0, 0}, ref[3] = {0, 0, 0};
  auto hand_step = [&](const std::vector<double>& g, int t) {
    for (int i = 0; i < 3; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      const double mhat = m[i] / (1.0 - std::pow(0.9, t));
      const double vhat = v[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    }
  };
  hand_step(g1, 1);
  hand_step(g2, 2);

  adam_step(st, p, g1);
  adam_step(st, p, g2);
  for (int i = 0; i < 3; ++i) CHECK(p.values[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("non-finite gradients are rejected with a diagnostic") {
  Architecture a{{2}, 1, Activation::Elu, false};
  ParamSet p = zero_params(a);
  AdamState st = make_adam(p.values.size(), 0.01);
  std::vector<double> g(p.values.size(), 0.0);
  g[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(adam_step(st, p, g), "adam_step: non-finite gradient at index 1",
                       std::invalid_argument);
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(61);
  const ParamSet p = testutil::rough_net(rng, 4, 6, {8, 3}, true);
  const auto path = std::filesystem::temp_directory_path() / "batchrl_nn_test.net";
  save_params(path, p);
  const ParamSet q = load_params(path);
  CHECK(q.arch == p.arch);
  CHECK(q.values == p.values);
  std::filesystem::remove(path);
}

TEST_CASE("malformed checkpoint header is rejected") {
  const auto path = std::filesystem::temp_directory_path() / "batchrl_nn_bad.net";
  std::ofstream(path) << "this is not json\n";
  CHECK_THROWS_AS((void)load_params(path), std::runtime_error);
  std::filesystem::remove(path);
}
