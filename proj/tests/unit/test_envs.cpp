#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "batchrl/envs.hpp"
#include "testutil.hpp"

using namespace batchrl;

TEST_CASE("stol: tolerance plateau, exact 0.05 at r_scale, monotone") {
  CHECK(stol(0.0, 0.02, 0.15) == 1.0);
  CHECK(std::abs(stol(0.15, 0.02, 0.15) - 0.05) <= 1e-12);
  CHECK(std::abs(stol(-0.15, 0.02, 0.15) - 0.05) <= 1e-12);

  double prev = 2.0;
  for (int i = 0; i < 1000; ++i) {
    const double v = 3.0 * i / 999.0;
    const double r = stol(v, 0.05, 0.5);
    CHECK(r >= 0.0);
    CHECK(r <= 1.0);
    CHECK(r <= prev + 1e-15);
    prev = r;
  }
}

TEST_CASE("btol: strict inequality at the edge") {
  CHECK(btol(0.0, 0.03) == 1.0);
  CHECK(btol(0.03, 0.03) == 0.0);
  CHECK(btol(-0.03, 0.03) == 0.0);
  CHECK(btol(0.5, 0.03) == 0.0);
  CHECK(btol(0.0299, 0.03) == 1.0);
}

TEST_CASE("env_step: zero action, wall clamp, hand-integrated trajectory") {
  const Environment env = two_goal_point_mass();
  EnvState s;
  s.position = {0.2, -0.3};
  s.velocity = {0.0, 0.0};

  SUBCASE("zero action leaves the position unchanged") {
    const auto [s2, obs] = env_step(env, s, std::vector<double>{0.0, 0.0});
    CHECK(s2.position == s.position);
    CHECK(s2.step_count == 1);
  }
  SUBCASE("pushing past the wall stops at the boundary") {
    s.position = {0.99, 0.0};
    const auto [s2, obs] = env_step(env, s, std::vector<double>{1.0, 0.0});
    CHECK(s2.position[0] == 1.0);
    // and over-limit commands are clamped to the action limit
    const auto [s3, obs3] = env_step(env, s, std::vector<double>{50.0, 0.0});
    CHECK(s3.position[0] == 1.0);
    CHECK(s3.velocity[0] == env.action_limit);
  }
  SUBCASE("fixed action sequence matches hand integration") {
    const std::vector<std::vector<double>> actions = {
        {0.5, -0.2}, {-0.1, 0.4}, {1.0, 1.0}, {-0.3, -0.9}};
    EnvState cur = s;
    double x = 0.2, y = -0.3;
    for (const auto& a : actions) {
      const auto [nxt, obs] = env_step(env, cur, a);
      x += a[0] * env.dt;
      y += a[1] * env.dt;
      CHECK(nxt.position[0] == doctest::Approx(x).epsilon(1e-15));
      CHECK(nxt.position[1] == doctest::Approx(y).epsilon(1e-15));
      cur = nxt;
    }
  }
  SUBCASE("dynamics are action-affine on interior states") {
    const std::vector<double> a1{0.2, -0.1}, a2{0.3, 0.25}, sum{0.5, 0.15};
    const auto [sa, o1] = env_step(env, s, a1);
    const auto [sb, o2] = env_step(env, s, a2);
    const auto [sc, o3] = env_step(env, s, sum);
    for (int d = 0; d < 2; ++d) {
      const double da = sa.position[d] - s.position[d];
      const double db = sb.position[d] - s.position[d];
      const double dc = sc.position[d] - s.position[d];
      CHECK(dc == doctest::Approx(da + db).epsilon(1e-12));
    }
  }
}

TEST_CASE("task_reward composes stol/btol on goal distance") {
  const Environment env = two_goal_point_mass();
  const TaskSpec& reach_a = env.task("reach_a");

  SUBCASE("at goal the shaped reward is 1") {
    const std::vector<double> at_goal{0.7, 0.7};
    CHECK(task_reward(env, at_goal, std::vector<double>{0, 0}, at_goal, reach_a) == 1.0);
  }
  SUBCASE("distance r_scale gives 0.05") {
    const std::vector<double> obs{0.7 - reach_a.r_scale, 0.7};
    CHECK(task_reward(env, obs, std::vector<double>{0, 0}, obs, reach_a) ==
          doctest::Approx(0.05).epsilon(1e-12));
  }
  SUBCASE("composite reward is the btol gate times the stol shaping") {
    const Environment cl = corridor_lift();
    const TaskSpec& hold = cl.task("hold");
    for (double x : {0.8, 0.79, 0.75, 0.72, 0.69, 0.5}) {
      const std::vector<double> obs{x};
      const double d = std::abs(x - hold.goal[0]);
      const double expect = btol(d, hold.r_scale) * stol(d, hold.eps_tol, hold.r_scale);
      CHECK(task_reward(cl, obs, std::vector<double>{0}, obs, hold) ==
            doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("scripted_policy") {
  const Environment env = two_goal_point_mass();
  Rng rng(3);

  SUBCASE("zero competence means zero action") {
    const Persona p{"idle", "reach_a", 0.0, 0.0};
    const auto a = scripted_policy(env, std::vector<double>{-0.4, 0.9}, p, rng);
    CHECK(a == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("noiseless expert at the goal does nothing") {
    const Persona p{"expert", "reach_a", 0.0, 1.0};
    const auto a = scripted_policy(env, std::vector<double>{0.7, 0.7}, p, rng);
    CHECK(a == std::vector<double>{0.0, 0.0});
  }
  SUBCASE("expert persona solves its own task over 20 seeded episodes") {
    const Persona expert{"expert", "reach_a", 0.05, 1.0};
    const TaskSpec& task = env.task("reach_a");
    std::vector<double> returns;
    Rng root(77);
    for (int e = 0; e < 20; ++e) {
      Rng err = root.derive(e);
      EnvState s = initial_state(env, err);
      std::vector<double> obs = observe(env, s);
      double ret = 0.0;
      for (int step = 0; step < env.episode_len; ++step) {
        const auto a = scripted_policy(env, obs, expert, err);
        auto [nxt, nobs] = env_step(env, s, a);
        ret += task_reward(env, obs, a, nobs, task);
        s = std::move(nxt);
        obs = nobs;
      }
      returns.push_back(ret);
    }
    double mean = 0.0, best = returns[0];
    for (double r : returns) {
      mean += r;
      best = std::max(best, r);
    }
    mean /= returns.size();
    CHECK(mean >= 0.9 * best);
  }
}

TEST_CASE("generate_dataset") {
  const Environment env = two_goal_point_mass();
  const Persona ea{"expert_a", "reach_a", 0.1, 1.0};
  const Persona eb{"expert_b", "reach_b", 0.1, 1.0};

  SUBCASE("single persona, one 5-step episode") {
    const Dataset ds =
        generate_dataset(env, std::vector<Persona>{ea}, std::vector<double>{1.0}, 1, 5, 9);
    CHECK(ds.transitions.size() == 5);
    for (const Transition& t : ds.transitions) CHECK(t.episode_id == 0);
    CHECK(ds.header.task_ids == std::vector<std::string>{"reach_a", "reach_b"});
  }
  SUBCASE("50/50 mixture over 1000 episodes lands within the binomial bound") {
    const Dataset ds = generate_dataset(env, std::vector<Persona>{ea, eb},
                                        std::vector<double>{0.5, 0.5}, 1000, 3, 11);
    // Count episodes whose first action points toward goal A.
    int toward_a = 0;
    for (std::size_t i = 0; i < ds.transitions.size(); i += 3) {
      const Transition& t = ds.transitions[i];
      const double da = (0.7 - t.observation[0]) + (0.7 - t.observation[1]);
      const double proj = t.action[0] + t.action[1];
      toward_a += (proj * da > 0.0) ? 1 : 0;
    }
    CHECK(toward_a >= 450);
    CHECK(toward_a <= 550);
  }
  SUBCASE("identical seeds produce byte-identical files") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto p1 = dir / "batchrl_env_a.bin";
    const auto p2 = dir / "batchrl_env_b.bin";
    write_dataset(p1, generate_dataset(env, std::vector<Persona>{ea, eb},
                                       std::vector<double>{0.5, 0.5}, 20, 10, 31));
    write_dataset(p2, generate_dataset(env, std::vector<Persona>{ea, eb},
                                       std::vector<double>{0.5, 0.5}, 20, 10, 31));
    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
  }
  SUBCASE("stored rewards equal direct re-evaluation") {
    const Dataset ds = generate_dataset(env, std::vector<Persona>{ea, eb},
                                        std::vector<double>{0.5, 0.5}, 10, 20, 13);
    for (const Transition& t : ds.transitions)
      for (std::size_t k = 0; k < env.tasks.size(); ++k)
        CHECK(t.rewards[k] ==
              task_reward(env, t.observation, t.action, t.next_observation,
                          env.tasks[k]));
  }
}
