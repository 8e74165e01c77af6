#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "hovd/estimators.hpp"
#include "hovd/mdp.hpp"
#include "hovd/metagrad.hpp"
#include "hovd/oracle.hpp"

using hovd::MetaConfig;
using hovd::PolicyParams;
using hovd::TabularMdp;

namespace {

PolicyParams fixed_params(int num_states, int num_actions, std::uint64_t seed) {
  PolicyParams theta;
  theta.num_states = num_states;
  theta.num_actions = num_actions;
  theta.values.resize(static_cast<std::size_t>(num_states * num_actions));
  std::mt19937_64 rng = hovd::make_stream({seed, 0x74686574ULL});
  std::normal_distribution<double> normal(0.0, 0.4);
  for (double& v : theta.values) {
    v = normal(rng);
  }
  return theta;
}

double norm2(const std::vector<double>& a) {
  double acc = 0.0;
  for (const double x : a) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_SUITE("metagrad") {

TEST_CASE("zero inner step reduces the meta objective to the plain value") {
  const TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 4, 0.5, 300);
  const PolicyParams theta = fixed_params(3, 2, 300);
  const hovd::DerivativeReport plain = hovd::exact_value_dp(mdp, theta);
  CHECK(hovd::exact_post_adaptation_value(mdp, theta, 0.0, -1) ==
        doctest::Approx(plain.value).epsilon(1e-12));
  const std::vector<double> meta = hovd::exact_meta_gradient(mdp, theta, 0.0);
  for (std::size_t i = 0; i < meta.size(); ++i) {
    CHECK(meta[i] == doctest::Approx(plain.grad[i]).epsilon(1e-10));
  }
}

TEST_CASE("exact meta gradient matches finite differences of the meta objective") {
  const TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.9, 3, 0.5, 301);
  const PolicyParams theta = fixed_params(2, 2, 301);
  const double eta = 0.05;
  const std::vector<double> analytic = hovd::exact_meta_gradient(mdp, theta, eta);
  const double h = 1e-5;
  const double scale = std::max(norm2(analytic), 1e-12);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    PolicyParams plus = theta;
    PolicyParams minus = theta;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (hovd::exact_post_adaptation_value(mdp, plus, eta, -1) -
                       hovd::exact_post_adaptation_value(mdp, minus, eta, -1)) /
                      (2.0 * h);
    CHECK(std::abs(fd - analytic[i]) / scale <= 1e-4);
  }
}

TEST_CASE("adaptation moves parameters along the sampled inner gradient") {
  const TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 4, 0.5, 302);
  const PolicyParams theta = fixed_params(3, 2, 302);
  MetaConfig config;
  config.eta = 0.1;
  const hovd::PolicyTable pi = hovd::policy_table(theta);
  std::mt19937_64 rng = hovd::make_stream({302, 1});
  std::vector<hovd::Trajectory> rollouts;
  for (int i = 0; i < 8; ++i) {
    rollouts.push_back(hovd::sample_trajectory(mdp, pi, -1, rng));
  }
  const hovd::InnerUpdate update = hovd::inner_update(mdp, theta, -1, rollouts, config);
  REQUIRE(update.objective.grad.size() == theta.values.size());
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    CHECK(update.theta_prime.values[i] ==
          doctest::Approx(theta.values[i] + 0.1 * update.objective.grad[i]).epsilon(1e-12));
  }
}

TEST_CASE("sampled meta gradient is deterministic in the seed") {
  const TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.9, 3, 0.5, 303, 2);
  const PolicyParams theta = fixed_params(2, 2, 303);
  MetaConfig config;
  config.seed = 99;
  config.inner_trajectories = 5;
  const std::vector<double> a = hovd::meta_gradient_estimate(mdp, theta, config);
  const std::vector<double> b = hovd::meta_gradient_estimate(mdp, theta, config);
  CHECK(a == b);
  config.seed = 100;
  const std::vector<double> c = hovd::meta_gradient_estimate(mdp, theta, config);
  CHECK(a != c);
}

TEST_CASE("decorrelating the inner batch removes the plug-in bias") {
  const TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.9, 3, 0.5, 304);
  const PolicyParams theta = fixed_params(2, 2, 304);
  const hovd::PluginBiasProbe probe =
      hovd::plugin_bias_probe(mdp, theta, -1, 0.6, 1, 12000, true, 17);
  CHECK(probe.batch == 1);
  CHECK(probe.repetitions == 12000);
  CHECK(probe.exact_norm > 0.0);
  CHECK(probe.stderr_norm > 0.0);
  CHECK(probe.bias_norm <= 3.0 * probe.stderr_norm);
}

TEST_CASE("the correlated inner batch shows a detectable plug-in bias") {
  // Same probe parameters as above; only the decorrelation flag differs.
  const TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.9, 3, 0.5, 304);
  const PolicyParams theta = fixed_params(2, 2, 304);
  const hovd::PluginBiasProbe probe =
      hovd::plugin_bias_probe(mdp, theta, -1, 0.6, 1, 12000, false, 17);
  CHECK(probe.bias_norm > 3.0 * probe.stderr_norm);
}

TEST_CASE("short meta-training run improves the adapted value") {
  const TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 4, 0.5, 305, 3);
  MetaConfig config;
  config.seed = 7;
  config.eta = 0.1;
  config.outer_lr = 0.3;
  config.inner_trajectories = 10;
  config.iterations = 8;
  const std::vector<hovd::MetaTrainRecord> records = hovd::meta_train_demo(mdp, config);
  REQUIRE(records.size() == 8);
  for (const auto& rec : records) {
    CHECK(std::isfinite(rec.pre_value));
    CHECK(rec.post_value >= rec.pre_value - 1e-9);
    CHECK(rec.meta_grad_norm >= 0.0);
  }
  CHECK(records.back().post_value > records.front().post_value);
}

}  // TEST_SUITE
