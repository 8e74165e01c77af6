#pragma once

#include <string>
#include <vector>

#include "hovd/estimators.hpp"
#include "hovd/mdp.hpp"
#include "hovd/taylor2.hpp"

namespace hovd {

// Exact value of a start-state objective together with its gradient and
// Hessian with respect to the policy logits. hess is dense row-major
// dim x dim and symmetric.
struct DerivativeReport {
  double value = 0.0;
  std::vector<double> grad;
  std::vector<double> hess;
  std::string method;
};

DerivativeReport report_from_taylor2(const Taylor2Scalar& x, std::string method);

// V^pi(start) for the finite horizon, by backward dynamic programming carried
// out in Taylor2 arithmetic: exact up to rounding, cost polynomial in the
// MDP size.
DerivativeReport exact_value_dp(const TabularMdp& mdp, const PolicyParams& theta, int goal = -1);

// Same quantity by brute-force enumeration of every action/state sequence.
// Exponential in the horizon; refuses to start when (num_actions *
// num_states)^horizon exceeds max_paths. Exists purely to cross-check the
// dynamic program through a second, independent route.
DerivativeReport exact_value_enumeration(const TabularMdp& mdp, const PolicyParams& theta,
                                         int goal = -1, double max_paths = 1e6);

// Remaining-horizon action values of a fixed policy:
//   q(t, x, a) = E[ sum_{s=t}^{horizon-1} gamma^(s-t) r_s | x_t = x, a_t = a ],
//   v(t, x)    = sum_a policy(a | x) q(t, x, a),  v(horizon, x) = 0.
struct FiniteHorizonTables {
  int num_states = 0;
  int num_actions = 0;
  int horizon = 0;
  std::vector<double> q;  // [t][x][a]
  std::vector<double> v;  // [t][x], t up to and including horizon

  double q_at(int t, int x, int a) const {
    return q[(static_cast<std::size_t>(t) * num_states + x) * num_actions + a];
  }
  double v_at(int t, int x) const {
    return v[static_cast<std::size_t>(t) * num_states + x];
  }
};

FiniteHorizonTables exact_q_table(const TabularMdp& mdp, const PolicyTable& policy, int goal = -1);

// The full-horizon (t = 0) slice, used as the stationary critic table fed to
// the estimators.
CriticTable stationary_critic(const FiniteHorizonTables& tables);

// Builds the critic table an estimator configuration asks for.
CriticTable resolve_critic(const TabularMdp& mdp, CriticKind kind, const PolicyParams& theta,
                           const PolicyTable& behavior, int goal = -1);

// Computes the exact remaining-horizon behavior tables and installs them on
// the context for estimators running with taypo_advantage.
void attach_exact_behavior_values(EvalContext& ctx, const TabularMdp& mdp,
                                  const PolicyTable& behavior, int goal = -1);

// E_mu[estimate] with the expectation taken exactly, by enumerating every
// trajectory the behavior policy can produce and weighting each evaluated
// estimate by its probability. The estimate keeps its Taylor2 derivatives, so
// this also yields the exact expected gradient and Hessian of the estimator.
// Randomized estimators (SubsampledTaypo) have no per-trajectory closed form
// and are rejected.
DerivativeReport exact_expected_estimate(const TabularMdp& mdp, const PolicyParams& theta,
                                         const PolicyTable& behavior,
                                         const EstimatorConfig& config, int goal = -1,
                                         double max_paths = 1e6);

// Exact expected Taylor-expansion increments of the off-policy value around
// the behavior policy,
//   U_k = E_mu[ sum_{t_1 < ... < t_k} gamma^(t_k) prod_i (rho_(t_i) - 1)
//               q(t_k, x_(t_k), a_(t_k)) ],
// with q the remaining-horizon table of the behavior policy and U_0 = V^mu.
// partial_sums[k] = sum_{j <= k} U_j is the order-k expanded value; the
// order-horizon partial sum recovers V^pi exactly.
struct IncrementTable {
  std::vector<double> increments;
  std::vector<double> partial_sums;
};

IncrementTable exact_increments(const TabularMdp& mdp, const PolicyParams& theta,
                                const PolicyTable& behavior, int max_order, int goal = -1,
                                double max_paths = 1e6);

double exact_increment(const TabularMdp& mdp, const PolicyParams& theta,
                       const PolicyTable& behavior, int order, int goal = -1,
                       double max_paths = 1e6);

double taylor_partial_sum(const TabularMdp& mdp, const PolicyParams& theta,
                          const PolicyTable& behavior, int order, int goal = -1,
                          double max_paths = 1e6);

}  // namespace hovd
