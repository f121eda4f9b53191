#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "batchrl/dataset.hpp"
#include "testutil.hpp"

using namespace batchrl;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Dataset episodes_dataset(const std::vector<int>& lengths) {
  Dataset ds;
  ds.header.observation_dim = 1;
  ds.header.action_dim = 1;
  ds.header.task_ids = {"t0"};
  ds.header.environment_name = "test";
  int ep = 0;
  for (int len : lengths) {
    for (int i = 0; i < len; ++i) {
      Transition t;
      t.observation = {double(ep) + 0.01 * i};
      t.action = {0.0};
      t.rewards = {1.0};
      t.next_observation = {double(ep) + 0.01 * (i + 1)};
      t.episode_id = ep;
      t.step_index = i;
      ds.transitions.push_back(t);
    }
    ++ep;
  }
  return ds;
}

}  // namespace

TEST_CASE("nstep_return matches the worked examples") {
  Dataset ds = episodes_dataset({3});
  TrajectorySnippet snip{std::span<const Transition>(ds.transitions), {}};

  SUBCASE("gamma 1, unit rewards, zero bootstrap") {
    CHECK(nstep_return(snip, 1, 1.0, 0.0, 0) == 2.0);
  }
  SUBCASE("gamma 0.5 with bootstrap 4") {
    ds.transitions[0].rewards = {1.0};
    ds.transitions[1].rewards = {2.0};
    CHECK(nstep_return(snip, 1, 0.5, 4.0, 0) == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("gamma 0 collapses to the step reward") {
    ds.transitions[0].rewards = {7.5};
    CHECK(nstep_return(snip, 1, 0.0, 123.0, 0) == 7.5);
    CHECK(nstep_return(snip, 2, 0.0, 123.0, 0) == 1.0);
  }
  SUBCASE("t out of range is rejected") {
    CHECK_THROWS_AS((void)nstep_return(snip, 0, 0.9, 0.0, 0), std::invalid_argument);
    CHECK_THROWS_AS((void)nstep_return(snip, 3, 0.9, 0.0, 0), std::invalid_argument);
  }
}

TEST_CASE("nstep_return is linear in v_boot with slope gamma^(N-t)") {
  Rng rng(5);
  Dataset ds = testutil::random_dataset(rng, 2, 1, 6);
  TrajectorySnippet snip{std::span<const Transition>(ds.transitions), {}};
  const double gamma = 0.8;
  for (int t = 1; t <= 5; ++t) {
    const double r0 = nstep_return(snip, t, gamma, 0.0, 0);
    const double r1 = nstep_return(snip, t, gamma, 1.0, 0);
    const double r5 = nstep_return(snip, t, gamma, 5.0, 0);
    const double slope = r1 - r0;
    CHECK(slope == doctest::Approx(std::pow(gamma, 6 - t)).epsilon(1e-12));
    CHECK(r5 == doctest::Approx(r0 + 5.0 * slope).epsilon(1e-12));
  }
}

TEST_CASE("round trip: empty, single, and bulk byte-compare") {
  const auto dir = std::filesystem::temp_directory_path();
  SUBCASE("empty transition list") {
    Dataset ds = episodes_dataset({});
    const auto p = dir / "batchrl_ds_empty.bin";
    write_dataset(p, ds);
    const Dataset back = read_dataset(p);
    CHECK(back.transitions.empty());
    CHECK(back.header.task_ids == ds.header.task_ids);
    std::filesystem::remove(p);
  }
  SUBCASE("single transition is identical") {
    Rng rng(7);
    Dataset ds = testutil::random_dataset(rng, 3, 2, 1);
    ds.transitions[0].terminal = true;
    const auto p = dir / "batchrl_ds_one.bin";
    write_dataset(p, ds);
    const Dataset back = read_dataset(p);
    const Transition& a = ds.transitions[0];
    const Transition& b = back.transitions[0];
    CHECK(a.observation == b.observation);
    CHECK(a.action == b.action);
    CHECK(a.rewards == b.rewards);
    CHECK(a.next_observation == b.next_observation);
    CHECK(a.terminal == b.terminal);
    CHECK(a.episode_id == b.episode_id);
    CHECK(a.step_index == b.step_index);
    std::filesystem::remove(p);
  }
  SUBCASE("10^4 transitions re-serialize byte-identically") {
    Rng rng(11);
    Dataset ds = testutil::random_dataset(rng, 4, 2, 10000);
    const auto p1 = dir / "batchrl_ds_a.bin";
    const auto p2 = dir / "batchrl_ds_b.bin";
    write_dataset(p1, ds);
    write_dataset(p2, read_dataset(p1));
    CHECK(slurp(p1) == slurp(p2));
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
  }
}

TEST_CASE("relabel_rewards") {
  Rng rng(13);
  Dataset ds = testutil::random_dataset(rng, 2, 1, 50);

  SUBCASE("constant zero adds a zero channel") {
    relabel_rewards(ds, [](auto, auto, auto, const std::string&) { return 0.0; },
                    {"new_task"});
    CHECK(ds.header.task_ids.back() == "new_task");
    for (const Transition& t : ds.transitions) CHECK(t.rewards.at(1) == 0.0);
  }
  SUBCASE("rewriting a channel with its stored value is the identity") {
    const Dataset before = ds;
    relabel_rewards(
        ds,
        [&](std::span<const double> obs, auto, auto, const std::string&) {
          // Recover the stored reward by matching the transition.
          for (const Transition& t : before.transitions)
            if (t.observation == std::vector<double>(obs.begin(), obs.end()))
              return t.rewards[0];
          return -1e9;
        },
        {"t0"});
    for (std::size_t i = 0; i < ds.transitions.size(); ++i)
      CHECK(ds.transitions[i].rewards == before.transitions[i].rewards);
  }
  SUBCASE("non-finite reward names the transition") {
    CHECK_THROWS_WITH_AS(
        relabel_rewards(
            ds, [](auto, auto, auto, const std::string&) { return std::nan(""); },
            {"bad"}),
        doctest::Contains("transition 0"), std::runtime_error);
  }
}

TEST_CASE("sample_snippets") {
  SUBCASE("one episode of exactly length N returns the unique snippet") {
    Dataset ds = episodes_dataset({4});
    Rng rng(17);
    for (int i = 0; i < 20; ++i) {
      const auto batch = sample_snippets(ds, rng, 1, 4);
      CHECK(batch[0].steps.data() == ds.transitions.data());
      CHECK(batch[0].length() == 4);
    }
  }
  SUBCASE("episode of length N+1 splits starts 50/50") {
    Dataset ds = episodes_dataset({5});
    SnippetSampler sampler(ds, 4);
    CHECK(sampler.n_start_points() == 2);
    Rng rng(19);
    int first = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
      if (sampler.sample(rng).steps.data() == ds.transitions.data()) ++first;
    CHECK(std::abs(first / double(n) - 0.5) <= 0.02);
  }
  SUBCASE("same seed twice gives identical sequences, two seeds differ") {
    Dataset ds = episodes_dataset({10, 7, 3});
    Rng a(23), b(23), c(24);
    bool equal = true, differ = false;
    for (int i = 0; i < 200; ++i) {
      const auto sa = sample_snippets(ds, a, 1, 3)[0].steps.data();
      equal &= (sa == sample_snippets(ds, b, 1, 3)[0].steps.data());
      differ |= (sa != sample_snippets(ds, c, 1, 3)[0].steps.data());
    }
    CHECK(equal);
    CHECK(differ);
  }
  SUBCASE("no valid start points is an error") {
    Dataset ds = episodes_dataset({2, 2, 2});
    Rng rng(29);
    CHECK_THROWS_AS((void)sample_snippets(ds, rng, 1, 3), std::invalid_argument);
  }
}

TEST_CASE("snippets never cross episode boundaries (random layouts)") {
  Rng rng(31);
  for (int it = 0; it < 50; ++it) {
    std::vector<int> lengths;
    const int n_ep = 1 + static_cast<int>(rng.uniform_index(6));
    for (int e = 0; e < n_ep; ++e)
      lengths.push_back(1 + static_cast<int>(rng.uniform_index(8)));
    Dataset ds = episodes_dataset(lengths);
    const int n = 2 + static_cast<int>(rng.uniform_index(3));
    bool any_fits = false;
    for (int len : lengths) any_fits |= (len >= n);
    if (!any_fits) continue;

    const auto batch = sample_snippets(ds, rng, 64, n);
    for (const TrajectorySnippet& s : batch) {
      for (int k = 1; k < s.length(); ++k) {
        CHECK(s.steps[k].episode_id == s.steps[0].episode_id);
        CHECK(s.steps[k].step_index == s.steps[k - 1].step_index + 1);
      }
    }
  }
}

TEST_CASE("header rejects unknown task ids") {
  Dataset ds = episodes_dataset({3});
  CHECK(ds.header.task_index("t0") == 0);
  CHECK_THROWS_AS((void)ds.header.task_index("nope"), std::invalid_argument);
}
