#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hovd/mdp.hpp"
#include "hovd/taylor2.hpp"

namespace hovd {

// Fixed action-value table used as the control-variate critic inside the
// doubly-robust and Taylor-expansion estimators. The table itself never
// depends on the policy parameters being differentiated.
struct CriticTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> q;

  double at(int x, int a) const { return q[static_cast<std::size_t>(x) * num_actions + a]; }

  static CriticTable zero(int num_states, int num_actions) {
    CriticTable c;
    c.num_states = num_states;
    c.num_actions = num_actions;
    c.q.assign(static_cast<std::size_t>(num_states) * num_actions, 0.0);
    return c;
  }
};

enum class EstimatorKind { StepIs, Dr, TruncatedDr, Taypo, SubsampledTaypo, Mixture };

enum class CriticKind { Zero, ExactQMu, ExactQPi };

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::Dr;
  // Expansion order for Taypo / SubsampledTaypo; 0, 1 and 2 are implemented.
  int taylor_order = 1;
  // Importance-ratio cap for TruncatedDr; infinity disables truncation.
  double rho_bar = 1.0;
  // Mixture weight on the order-2 estimate for Mixture.
  double beta = 0.3;
  CriticKind critic = CriticKind::ExactQMu;
  // When set, DR starts its recursion from Q(x_T, pi(x_T)) and the Taylor
  // estimators extend tail returns with the critic at (x_T, a_T) instead of
  // treating the trajectory end as absorbing.
  bool bootstrap_terminal = false;
  // When set, the Taylor expansion weighs its ratio factors with exact
  // behavior advantages (Q - V, attached to the context) instead of the
  // trajectory's own tail returns, and its zeroth-order term becomes the
  // behavior state value at the start. The state-value baseline has zero
  // expectation against every ratio factor, so value, gradient and Hessian
  // expectations are unchanged while the variance drops sharply; requires
  // the context to carry the tables.
  bool taypo_advantage = false;
};

// Parses "step-is", "dr", "truncated-dr", "taypo-K", "subsampled-taypo-K" or
// "mixture" (K a nonnegative integer). Throws std::invalid_argument otherwise.
EstimatorConfig parse_estimator_name(const std::string& name);
std::string estimator_display_name(const EstimatorConfig& config);

const char* critic_kind_name(CriticKind kind);
CriticKind parse_critic_name(const std::string& name);

// Everything about (theta, gamma, critic) the per-trajectory evaluators need,
// precomputed once so evaluating many trajectories does not repeat softmax
// derivative work: the full softmax table in Taylor2 form and the critic
// averaged under the target policy per state, Q(x, pi_theta(x)).
struct EvalContext {
  int dim = 0;
  double gamma = 1.0;
  int num_states = 0;
  int num_actions = 0;
  bool bootstrap_terminal = false;
  CriticTable critic;
  std::vector<Taylor2Scalar> probs;      // num_states * num_actions, x-major
  std::vector<Taylor2Scalar> critic_pi;  // per state

  // Optional exact behavior values for the expansion estimators: action
  // values laid out [t][x][a] for t = 0..behavior_horizon-1 (remaining
  // horizon decreasing with t) and state values laid out [t][x] for
  // t = 0..behavior_horizon (a zero row at the horizon). Empty unless
  // attached.
  int behavior_horizon = 0;
  std::vector<double> behavior_q;
  std::vector<double> behavior_v;

  const Taylor2Scalar& prob(int x, int a) const {
    return probs[static_cast<std::size_t>(x) * num_actions + a];
  }

  bool has_behavior_values() const { return behavior_horizon > 0; }

  double behavior_q_at(int t, int x, int a) const {
    return behavior_q[(static_cast<std::size_t>(t) * num_states + x) * num_actions + a];
  }

  double behavior_v_at(int t, int x) const {
    return behavior_v[static_cast<std::size_t>(t) * num_states + x];
  }
};

EvalContext make_eval_context(const PolicyParams& theta, double gamma, const CriticTable& critic,
                              bool bootstrap_terminal = false);

// Installs time-indexed behavior action values (flat [t][x][a], horizon
// slices) and state values (flat [t][x], horizon + 1 slices) on the context
// for estimators that request them via taypo_advantage. Throws
// std::invalid_argument on shape mismatch.
void attach_behavior_values(EvalContext& ctx, int horizon, std::vector<double> q,
                            std::vector<double> v);

// Importance ratio pi_theta(a_t | x_t) / mu(a_t | x_t) at step t, carrying
// derivatives with respect to theta. The behavior probability comes from the
// trajectory record and is a constant.
Taylor2Scalar is_ratio(const EvalContext& ctx, const Trajectory& traj, int t);
Taylor2Scalar is_ratio(const PolicyParams& theta, const Trajectory& traj, int t);

// Step-wise importance sampling: sum_t gamma^t (prod_{s<=t} rho_s) r_t.
Taylor2Scalar eval_step_is(const EvalContext& ctx, const Trajectory& traj);

// Doubly-robust estimate via the backward recursion
//   V_t = Q(x_t, pi(x_t)) + rho_t (r_t + gamma V_{t+1} - Q(x_t, a_t)),
// V_horizon = 0 (or the bootstrapped critic value when configured).
Taylor2Scalar eval_dr(const EvalContext& ctx, const Trajectory& traj);

// Same recursion with rho replaced by min(rho, rho_bar). The truncated branch
// contributes no derivative (the cap is a constant); ties at the cap truncate.
Taylor2Scalar eval_dr_truncated(const EvalContext& ctx, const Trajectory& traj, double rho_bar);

// Order-K Taylor expansion of the off-policy estimate around the behavior
// policy, K in {0, 1, 2}:
//   K=0: the constant term Q^(start),
//   K=1: + sum_t gamma^t (rho_t - 1) Q^(t),
//   K=2: + sum_t sum_{s>t} gamma^s (rho_t - 1)(rho_s - 1) Q^(s).
// With advantage false, Q^(t) is the trajectory's tail return from step t and
// Q^(start) the full return; with advantage true, Q^(t) is the attached exact
// behavior advantage Q(t, x_t, a_t) - V(t, x_t) and Q^(start) the behavior
// state value at the start. Both weightings have the same value, gradient
// and Hessian expectations (the baseline is mean-zero against each ratio
// factor); the advantage weighting has far lower variance. The order-2 term
// is the literal double sum, so cost grows as horizon^2.
Taylor2Scalar eval_taypo(const EvalContext& ctx, const Trajectory& traj, int order,
                         bool advantage = false);

// (1 - beta) * order-1 + beta * order-2. beta of exactly 0 or 1 returns the
// corresponding pure estimate.
Taylor2Scalar eval_mixture(const EvalContext& ctx, const Trajectory& traj, double beta,
                           bool advantage = false);

// One sampled-time-index realization of each increment order 0..order on a
// given trajectory: order k draws times t_1 < ... < t_k with t_1 and the gaps
// geometric in gamma, and reweights so the expectation over the time draw
// equals the exact order-k increment of this trajectory. Chains whose last
// index falls beyond the horizon contribute zero.
std::vector<Taylor2Scalar> taypo_chain_increments(const EvalContext& ctx, const Trajectory& traj,
                                                  int order, std::mt19937_64& rng);

struct SubsampledTaypoResult {
  // Monte Carlo mean of each increment order 0..order over the chains.
  std::vector<Taylor2Scalar> increments;
  // partial_sums[k] = sum of increments 0..k; the order-K estimate is
  // partial_sums[order].
  std::vector<Taylor2Scalar> partial_sums;
};

// Averages taypo_chain_increments over num_chains trajectories drawn from the
// sampler, one time-index chain per trajectory.
SubsampledTaypoResult eval_taypo_subsampled(const EvalContext& ctx,
                                            const std::function<Trajectory(std::mt19937_64&)>& sampler,
                                            int order, int num_chains, std::mt19937_64& rng);

// Dispatch on config.kind. rng is consulted only by SubsampledTaypo (one
// chain on the given trajectory).
Taylor2Scalar eval_estimator(const EvalContext& ctx, const Trajectory& traj,
                             const EstimatorConfig& config, std::mt19937_64& rng);

// Value, gradient and Hessian of the doubly-robust estimate computed by the
// closed-form backward recursions over analytic softmax derivatives, with no
// Taylor2 arithmetic involved. Independent implementation used to cross-check
// the forward-mode path.
struct DrDerivatives {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> hess;  // dense row-major dim x dim
};

DrDerivatives dr_derivatives_analytic(const PolicyParams& theta, double gamma,
                                      const CriticTable& critic, const Trajectory& traj,
                                      bool bootstrap_terminal = false);

}  // namespace hovd
