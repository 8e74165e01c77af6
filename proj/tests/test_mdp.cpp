#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <vector>

#include "doctest.h"

#include "hovd/mdp.hpp"

using hovd::PolicyParams;
using hovd::PolicyTable;
using hovd::TabularMdp;

TEST_SUITE("mdp") {

TEST_CASE("generated transition rows are distributions") {
  for (const double alpha : {0.001, 0.5, 5.0}) {
    const TabularMdp mdp = hovd::generate_random_mdp(6, 3, 0.9, 10, alpha, 42);
    CHECK_NOTHROW(mdp.validate());
    for (int x = 0; x < mdp.num_states; ++x) {
      for (int a = 0; a < mdp.num_actions; ++a) {
        double sum = 0.0;
        for (const double p : mdp.transition_row(x, a)) {
          CHECK(p >= 0.0);
          sum += p;
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
    for (const double r : mdp.rewards) {
      CHECK(r >= 0.0);
      CHECK(r < 1.0);
    }
  }
}

TEST_CASE("tiny concentration yields near-deterministic rows") {
  const TabularMdp mdp = hovd::generate_random_mdp(8, 4, 0.8, 20, 0.001, 7);
  int peaked = 0;
  for (int x = 0; x < mdp.num_states; ++x) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      const auto row = mdp.transition_row(x, a);
      if (*std::max_element(row.begin(), row.end()) > 0.99) {
        ++peaked;
      }
    }
  }
  // With alpha = 1e-3 essentially every row concentrates on one successor.
  CHECK(peaked >= 30);
}

TEST_CASE("generation is deterministic in the seed") {
  const TabularMdp a = hovd::generate_random_mdp(5, 3, 0.9, 10, 0.3, 11);
  const TabularMdp b = hovd::generate_random_mdp(5, 3, 0.9, 10, 0.3, 11);
  const TabularMdp c = hovd::generate_random_mdp(5, 3, 0.9, 10, 0.3, 12);
  CHECK(a.transitions == b.transitions);
  CHECK(a.rewards == b.rewards);
  CHECK(a.transitions != c.transitions);
}

TEST_CASE("goal-indexed rewards") {
  const TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 5, 0.5, 3, 4);
  CHECK(mdp.num_goals == 4);
  CHECK(mdp.rewards.size() == 3u * 2u * 4u);
  CHECK(mdp.reward(1, 0, 2) == mdp.rewards[(1 * 2 + 0) * 4 + 2]);
}

TEST_CASE("softmax policies normalize and match their Taylor2 version") {
  PolicyParams theta;
  theta.num_states = 2;
  theta.num_actions = 3;
  theta.values = {0.3, -1.0, 0.5, 2.0, 2.0, -0.7};
  for (int x = 0; x < 2; ++x) {
    const std::vector<double> p = hovd::policy_probs(theta, x);
    double sum = 0.0;
    for (const double v : p) {
      CHECK(v > 0.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    const auto pt = hovd::policy_probs_taylor2(theta, x);
    double grad_sum = 0.0;
    for (int a = 0; a < 3; ++a) {
      CHECK(pt[static_cast<std::size_t>(a)].value() ==
            doctest::Approx(p[static_cast<std::size_t>(a)]).epsilon(1e-14));
      for (int i = 0; i < theta.dim(); ++i) {
        grad_sum += pt[static_cast<std::size_t>(a)].grad(i);
      }
    }
    // Probabilities sum to one, so their parameter derivatives cancel.
    CHECK(grad_sum == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("uniform logits give uniform probabilities") {
  PolicyParams theta;
  theta.num_states = 1;
  theta.num_actions = 4;
  theta.values = {0.0, 0.0, 0.0, 0.0};
  for (const double p : hovd::policy_probs(theta, 0)) {
    CHECK(p == 0.25);
  }
}

TEST_CASE("l1 distance averages per-state action gaps") {
  PolicyTable p;
  p.num_states = 1;
  p.num_actions = 2;
  p.probs = {0.5, 0.5};
  PolicyTable q = p;
  q.probs = {0.8, 0.2};
  CHECK(hovd::l1_distance(p, q) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("off-policy pair interpolates from on-policy to concentrated") {
  std::mt19937_64 rng = hovd::make_stream({9, 1});
  const hovd::OffPolicyPair onpolicy = hovd::make_offpolicy_pair(4, 5, 0.0, rng);
  CHECK(hovd::l1_distance(hovd::policy_table(onpolicy.theta), onpolicy.behavior) ==
        doctest::Approx(0.0).epsilon(1e-12));

  std::mt19937_64 rng2 = hovd::make_stream({9, 2});
  const hovd::OffPolicyPair skewed = hovd::make_offpolicy_pair(4, 5, 0.9, rng2);
  const PolicyTable target = hovd::policy_table(skewed.theta);
  for (int x = 0; x < 4; ++x) {
    const int astar = skewed.deterministic_actions[static_cast<std::size_t>(x)];
    CHECK(target.at(x, astar) == doctest::Approx(0.92).epsilon(1e-9));
    CHECK(skewed.behavior.at(x, astar) == 0.2);
  }
}

TEST_CASE("trajectories record behavior log-probabilities and a tail pair") {
  const TabularMdp mdp = hovd::generate_random_mdp(4, 3, 0.9, 6, 0.5, 21);
  const PolicyTable mu = hovd::uniform_policy(4, 3);
  std::mt19937_64 rng = hovd::make_stream({21, 5});
  const hovd::Trajectory traj = hovd::sample_trajectory(mdp, mu, -1, rng);
  CHECK(traj.steps.size() == 6);
  for (const auto& step : traj.steps) {
    CHECK(step.state >= 0);
    CHECK(step.state < 4);
    CHECK(step.action >= 0);
    CHECK(step.action < 3);
    CHECK(step.behavior_logprob == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-14));
  }
  CHECK(traj.steps[0].state == mdp.start_state);
  CHECK(traj.final_state >= 0);
  CHECK(traj.final_state < 4);
  CHECK(traj.final_action >= 0);
  CHECK(traj.final_action < 3);

  std::mt19937_64 rng_again = hovd::make_stream({21, 5});
  const hovd::Trajectory twin = hovd::sample_trajectory(mdp, mu, -1, rng_again);
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    CHECK(traj.steps[t].state == twin.steps[t].state);
    CHECK(traj.steps[t].action == twin.steps[t].action);
    CHECK(traj.steps[t].reward == twin.steps[t].reward);
  }
  CHECK(traj.final_action == twin.final_action);
}

TEST_CASE("stable hash separates axes and orders") {
  CHECK(hovd::stable_hash({1, 2}) != hovd::stable_hash({2, 1}));
  CHECK(hovd::stable_hash({1, 2}) != hovd::stable_hash({1, 3}));
  CHECK(hovd::stable_hash({1, 2}) == hovd::stable_hash({1, 2}));
  CHECK(hovd::double_bits(0.5) != hovd::double_bits(0.25));
}

TEST_CASE("JSON round-trip preserves every field bit for bit") {
  const TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.85, 7, 0.2, 31, 2);
  const std::string text = hovd::mdp_to_json(mdp);
  const TabularMdp back = hovd::mdp_from_json(text);
  CHECK(back.num_states == mdp.num_states);
  CHECK(back.num_actions == mdp.num_actions);
  CHECK(back.num_goals == mdp.num_goals);
  CHECK(back.gamma == mdp.gamma);
  CHECK(back.horizon == mdp.horizon);
  CHECK(back.start_state == mdp.start_state);
  CHECK(back.transitions == mdp.transitions);
  CHECK(back.rewards == mdp.rewards);

  const std::string path = "test_mdp_roundtrip.json";
  hovd::save_mdp(mdp, path);
  const TabularMdp loaded = hovd::load_mdp(path);
  CHECK(loaded.transitions == mdp.transitions);
  std::remove(path.c_str());
}

TEST_CASE("validate rejects malformed tables") {
  TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 5, 0.5, 1);
  mdp.transitions[0] += 0.5;
  CHECK_THROWS_AS(mdp.validate(), std::invalid_argument);
}

}  // TEST_SUITE
