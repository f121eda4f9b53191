#include <benchmark/benchmark.h>

#include "batchrl/dataset.hpp"
#include "batchrl/improve_mpo.hpp"
#include "batchrl/improve_svg.hpp"
#include "batchrl/nn.hpp"
#include "batchrl/policy_eval.hpp"
#include "batchrl/priors.hpp"
#include "batchrl/rng.hpp"

using namespace batchrl;

namespace {

ParamSet bench_net(int in, int out, std::vector<int> hidden, std::uint64_t seed) {
  Architecture a;
  a.layer_widths = {in};
  a.layer_widths.insert(a.layer_widths.end(), hidden.begin(), hidden.end());
  a.output_dim = out;
  a.first_layer_norm = true;
  Rng rng(seed);
  return init_params(a, rng);
}

Dataset bench_dataset(int obs_dim, int act_dim, int len) {
  Dataset ds;
  ds.header.observation_dim = obs_dim;
  ds.header.action_dim = act_dim;
  ds.header.task_ids = {"t0"};
  ds.header.environment_name = "bench";
  Rng rng(7);
  for (int i = 0; i < len; ++i) {
    Transition t;
    t.observation.resize(obs_dim);
    t.action.resize(act_dim);
    t.next_observation.resize(obs_dim);
    for (double& v : t.observation) v = rng.normal();
    for (double& v : t.action) v = rng.normal();
    for (double& v : t.next_observation) v = rng.normal();
    t.rewards = {rng.uniform()};
    t.episode_id = 0;
    t.step_index = i;
    ds.transitions.push_back(std::move(t));
  }
  return ds;
}

std::vector<TrajectorySnippet> bench_batch(const Dataset& ds, int n, int len) {
  std::vector<TrajectorySnippet> out;
  for (int i = 0; i < n; ++i)
    out.push_back(
        {std::span<const Transition>(ds.transitions).subspan(i * len, len), {}});
  return out;
}

void BM_Forward(benchmark::State& state) {
  const ParamSet net = bench_net(6, 1, {static_cast<int>(state.range(0)),
                                        static_cast<int>(state.range(0)),
                                        static_cast<int>(state.range(0))},
                                 1);
  std::vector<double> in(6, 0.3), out(1);
  for (auto _ : state) {
    forward(net, in, out);
    benchmark::DoNotOptimize(out[0]);
  }
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Arg(256);

void BM_Backward(benchmark::State& state) {
  const ParamSet net = bench_net(6, 1, {static_cast<int>(state.range(0)),
                                        static_cast<int>(state.range(0)),
                                        static_cast<int>(state.range(0))},
                                 2);
  std::vector<double> in(6, 0.3), up{1.0}, grad(net.values.size(), 0.0);
  for (auto _ : state) {
    backward_accumulate(net, in, up, grad, {});
    benchmark::DoNotOptimize(grad[0]);
  }
}
BENCHMARK(BM_Backward)->Arg(32)->Arg(64)->Arg(256);

void BM_TdStep(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 2, 160);
  const auto batch = bench_batch(ds, 16, 10);
  CriticPair critics = make_critic_pair(bench_net(6, 1, {32, 32, 32}, 3));
  const ParamSet policy = bench_net(4, 4, {32, 32}, 4);
  Rng rng(5);
  for (auto _ : state) {
    const TdResult res =
        td_loss_and_grad(batch, critics, policy, 0.99, 20, rng, TaskEncoding{});
    benchmark::DoNotOptimize(res.loss);
  }
}
BENCHMARK(BM_TdStep);

void BM_MpoPolicyStep(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 2, 160);
  const auto batch = bench_batch(ds, 16, 10);
  const ParamSet critic = bench_net(6, 1, {32, 32, 32}, 3);
  const ParamSet prior = bench_net(4, 4, {32, 32}, 4);
  const ParamSet policy = bench_net(4, 4, {32, 32}, 5);
  Rng rng(6);
  const MpoSamples samples =
      make_mpo_samples(batch, prior, critic, 20, rng, TaskEncoding{});
  DualState dual;
  const TrustRegion trust;
  for (auto _ : state) {
    const MpoPolicyResult res =
        mpo_policy_loss_and_grad(samples, dual, policy, prior, trust);
    benchmark::DoNotOptimize(res.loss);
  }
}
BENCHMARK(BM_MpoPolicyStep);

void BM_SvgPolicyStep(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 2, 160);
  const auto batch = bench_batch(ds, 16, 10);
  const ParamSet critic = bench_net(6, 1, {32, 32, 32}, 3);
  const ParamSet prior = bench_net(4, 4, {32, 32}, 4);
  const ParamSet policy = bench_net(4, 4, {32, 32}, 5);
  Rng rng(8);
  for (auto _ : state) {
    const SvgPolicyResult res = svg_policy_loss_and_grad(
        batch, policy, prior, critic, 1.0, 0.2, 20, rng, TaskEncoding{});
    benchmark::DoNotOptimize(res.objective);
  }
}
BENCHMARK(BM_SvgPolicyStep);

void BM_SampleSnippets(benchmark::State& state) {
  const Dataset ds = bench_dataset(4, 2, 4000);
  const SnippetSampler sampler(ds, 10);
  Rng rng(9);
  for (auto _ : state) {
    const auto batch = sampler.sample_batch(rng, 16);
    benchmark::DoNotOptimize(batch.size());
  }
}
BENCHMARK(BM_SampleSnippets);

}  // namespace

BENCHMARK_MAIN();
