#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hovd/taylor2.hpp"

namespace hovd {

// Finite MDP with deterministic rewards, a fixed start state, a fixed horizon
// and discount factor. Rewards are optionally indexed by a goal (task id) so
// one MDP can define a family of tasks sharing its dynamics; num_goals == 0
// means a single plain reward table.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  int num_goals = 0;
  double gamma = 1.0;
  int horizon = 1;
  int start_state = 0;
  // transitions[(x * num_actions + a) * num_states + y] = P(y | x, a)
  std::vector<double> transitions;
  // rewards[x * num_actions + a] or rewards[(x * num_actions + a) * num_goals + g]
  std::vector<double> rewards;

  std::span<const double> transition_row(int x, int a) const {
    return {transitions.data() +
                (static_cast<std::size_t>(x) * num_actions + a) * static_cast<std::size_t>(num_states),
            static_cast<std::size_t>(num_states)};
  }

  double reward(int x, int a, int goal = -1) const;

  // Throws std::invalid_argument when sizes, probability rows, gamma, horizon
  // or the start state are inconsistent.
  void validate() const;
};

// Policy logits, one real parameter per (state, action), flattened x-major:
// index(x, a) = x * num_actions + a. The policy is the per-state softmax.
struct PolicyParams {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;

  int dim() const { return num_states * num_actions; }
  int index(int x, int a) const { return x * num_actions + a; }
  double at(int x, int a) const { return values[static_cast<std::size_t>(index(x, a))]; }
  double& at(int x, int a) { return values[static_cast<std::size_t>(index(x, a))]; }
};

// Explicit per-state action distributions, same flattening as PolicyParams.
struct PolicyTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> probs;

  double at(int x, int a) const {
    return probs[static_cast<std::size_t>(x) * num_actions + a];
  }
  std::span<const double> row(int x) const {
    return {probs.data() + static_cast<std::size_t>(x) * num_actions,
            static_cast<std::size_t>(num_actions)};
  }
};

struct TrajectoryStep {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  // log of the behavior policy's probability of the taken action.
  double behavior_logprob = 0.0;
};

// A horizon-length rollout. final_state is the state reached after the last
// step; final_action is one extra behavior-sampled action at final_state. It
// collects no reward and exists so estimators that bootstrap a critic value
// for the tail have a state-action pair to evaluate it at.
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int final_state = 0;
  int final_action = 0;
};

// Target policy logits plus the behavior policy they were built against.
struct OffPolicyPair {
  PolicyParams theta;
  PolicyTable behavior;
  // The deterministic policy mixed into the behavior to move the target away
  // from it; one action per state.
  std::vector<int> deterministic_actions;
};

// --- deterministic RNG streams ---

// SplitMix64 step; the generator behind all stream derivation.
std::uint64_t splitmix64_next(std::uint64_t& state);

// Order-sensitive stable hash of a key list. Used to derive independent,
// reproducible RNG substreams from (master seed, axis value, seed index,
// trajectory index) style coordinates.
std::uint64_t stable_hash(std::initializer_list<std::uint64_t> keys);

// mt19937_64 seeded from stable_hash of the keys.
std::mt19937_64 make_stream(std::initializer_list<std::uint64_t> keys);

// Bit pattern of a double, for hashing real-valued sweep coordinates.
std::uint64_t double_bits(double x);

// --- construction ---

// Random MDP: each transition row is Dirichlet(alpha) (sampled in log space
// so that very small alpha, which concentrates rows near vertices, does not
// underflow to an all-zero row), rewards are Uniform[0, 1] per (x, a) or per
// (x, a, goal), start state 0. Same seed, same MDP, bit for bit.
TabularMdp generate_random_mdp(int num_states, int num_actions, double gamma, int horizon,
                               double alpha, std::uint64_t seed, int num_goals = 0);

// Uniform behavior over actions.
PolicyTable uniform_policy(int num_states, int num_actions);

// Softmax probabilities of state x under the logits.
std::vector<double> policy_probs(const PolicyParams& theta, int x);

// Full softmax table over all states.
PolicyTable policy_table(const PolicyParams& theta);

// Softmax row of state x with logits seeded as the differentiation variables,
// so gradients and Hessians are taken with respect to all of theta. Only the
// block of state x is nonzero in the derivatives.
std::vector<Taylor2Scalar> policy_probs_taylor2(const PolicyParams& theta, int x);

// Behavior = uniform; target = softmax logits of the mixture
// (1 - epsilon) * uniform + epsilon * deterministic, with probabilities
// floored at 1e-6 and renormalized before taking logs. epsilon = 0 gives the
// on-policy pair, epsilon -> 1 approaches a deterministic target. The
// deterministic action per state is drawn from rng.
OffPolicyPair make_offpolicy_pair(int num_states, int num_actions, double epsilon,
                                  std::mt19937_64& rng);

// Total variation style distance: mean over states of the L1 distance between
// action distributions, sum_x sum_a |p(a|x) - q(a|x)| / num_states.
double l1_distance(const PolicyTable& p, const PolicyTable& q);

// Roll out horizon steps from the start state under the behavior policy.
// Throws std::invalid_argument if the behavior lacks full support on some
// visited state (importance ratios would be undefined).
Trajectory sample_trajectory(const TabularMdp& mdp, const PolicyTable& behavior, int goal,
                             std::mt19937_64& rng);

// --- serialization ---

std::string mdp_to_json(const TabularMdp& mdp);
TabularMdp mdp_from_json(const std::string& text);
void save_mdp(const TabularMdp& mdp, const std::string& path);
TabularMdp load_mdp(const std::string& path);

}  // namespace hovd
