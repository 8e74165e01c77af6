#include "hovd/oracle.hpp"

#include <cmath>
#include <stdexcept>

namespace hovd {

namespace {

void check_enumeration_budget(const TabularMdp& mdp, double max_paths) {
  const double paths = std::pow(
      static_cast<double>(mdp.num_actions) * static_cast<double>(mdp.num_states),
      static_cast<double>(mdp.horizon));
  if (paths > max_paths) {
    throw std::invalid_argument(
        "enumeration would visit about " + std::to_string(paths) +
        " trajectories, over the budget of " + std::to_string(max_paths) +
        "; shrink the state/action space or the horizon");
  }
}

}  // namespace

DerivativeReport report_from_taylor2(const Taylor2Scalar& x, std::string method) {
  DerivativeReport report;
  report.value = x.value();
  report.grad = x.grad_vector();
  report.hess = x.hess_dense();
  report.method = std::move(method);
  return report;
}

DerivativeReport exact_value_dp(const TabularMdp& mdp, const PolicyParams& theta, int goal) {
  const int dim = theta.dim();
  const int x_count = mdp.num_states;
  const int a_count = mdp.num_actions;

  std::vector<std::vector<Taylor2Scalar>> pi(static_cast<std::size_t>(x_count));
  for (int x = 0; x < x_count; ++x) {
    pi[static_cast<std::size_t>(x)] = policy_probs_taylor2(theta, x);
  }

  // values[x] = V(t, x); start at the terminal level and walk backward.
  std::vector<Taylor2Scalar> values(static_cast<std::size_t>(x_count),
                                    Taylor2Scalar::constant(0.0, dim));
  std::vector<Taylor2Scalar> next(static_cast<std::size_t>(x_count),
                                  Taylor2Scalar::constant(0.0, dim));
  Taylor2Scalar expected_next = Taylor2Scalar::constant(0.0, dim);
  Taylor2Scalar action_value = Taylor2Scalar::constant(0.0, dim);
  for (int t = mdp.horizon; t-- > 0;) {
    for (int x = 0; x < x_count; ++x) {
      Taylor2Scalar& out = next[static_cast<std::size_t>(x)];
      out = Taylor2Scalar::constant(0.0, dim);
      for (int a = 0; a < a_count; ++a) {
        expected_next = Taylor2Scalar::constant(0.0, dim);
        const std::span<const double> row = mdp.transition_row(x, a);
        for (int y = 0; y < x_count; ++y) {
          if (row[static_cast<std::size_t>(y)] != 0.0) {
            expected_next.add_scaled(values[static_cast<std::size_t>(y)],
                                     row[static_cast<std::size_t>(y)]);
          }
        }
        action_value = expected_next;
        action_value *= mdp.gamma;
        action_value += mdp.reward(x, a, goal);
        action_value *= pi[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
        out += action_value;
      }
    }
    values.swap(next);
  }
  return report_from_taylor2(values[static_cast<std::size_t>(mdp.start_state)], "dp");
}

namespace {

struct EnumerationState {
  const TabularMdp* mdp = nullptr;
  int goal = -1;
  std::vector<std::vector<Taylor2Scalar>> pi;
  Taylor2Scalar total;
};

void enumerate_value_paths(EnumerationState& st, int x, int t, const Taylor2Scalar& path_prob,
                           double const_prob, double ret, double discount) {
  const TabularMdp& mdp = *st.mdp;
  if (t == mdp.horizon) {
    st.total.add_scaled(path_prob, const_prob * ret);
    return;
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    Taylor2Scalar branch_prob = path_prob;
    branch_prob *= st.pi[static_cast<std::size_t>(x)][static_cast<std::size_t>(a)];
    const double branch_ret = ret + discount * mdp.reward(x, a, st.goal);
    const std::span<const double> row = mdp.transition_row(x, a);
    for (int y = 0; y < mdp.num_states; ++y) {
      const double p = row[static_cast<std::size_t>(y)];
      if (p != 0.0) {
        enumerate_value_paths(st, y, t + 1, branch_prob, const_prob * p, branch_ret,
                              discount * mdp.gamma);
      }
    }
  }
}

}  // namespace

DerivativeReport exact_value_enumeration(const TabularMdp& mdp, const PolicyParams& theta,
                                         int goal, double max_paths) {
  check_enumeration_budget(mdp, max_paths);
  const int dim = theta.dim();
  EnumerationState st;
  st.mdp = &mdp;
  st.goal = goal;
  st.pi.resize(static_cast<std::size_t>(mdp.num_states));
  for (int x = 0; x < mdp.num_states; ++x) {
    st.pi[static_cast<std::size_t>(x)] = policy_probs_taylor2(theta, x);
  }
  st.total = Taylor2Scalar::constant(0.0, dim);
  enumerate_value_paths(st, mdp.start_state, 0, Taylor2Scalar::constant(1.0, dim), 1.0, 0.0, 1.0);
  return report_from_taylor2(st.total, "enumeration");
}

FiniteHorizonTables exact_q_table(const TabularMdp& mdp, const PolicyTable& policy, int goal) {
  if (policy.num_states != mdp.num_states || policy.num_actions != mdp.num_actions) {
    throw std::invalid_argument("exact_q_table: policy table shape mismatch");
  }
  FiniteHorizonTables tables;
  tables.num_states = mdp.num_states;
  tables.num_actions = mdp.num_actions;
  tables.horizon = mdp.horizon;
  const std::size_t xa = static_cast<std::size_t>(mdp.num_states) * mdp.num_actions;
  tables.q.assign(static_cast<std::size_t>(mdp.horizon) * xa, 0.0);
  tables.v.assign(static_cast<std::size_t>(mdp.horizon + 1) * mdp.num_states, 0.0);
  for (int t = mdp.horizon; t-- > 0;) {
    for (int x = 0; x < mdp.num_states; ++x) {
      double vx = 0.0;
      for (int a = 0; a < mdp.num_actions; ++a) {
        double next = 0.0;
        const std::span<const double> row = mdp.transition_row(x, a);
        for (int y = 0; y < mdp.num_states; ++y) {
          next += row[static_cast<std::size_t>(y)] * tables.v_at(t + 1, y);
        }
        const double qxa = mdp.reward(x, a, goal) + mdp.gamma * next;
        tables.q[(static_cast<std::size_t>(t) * mdp.num_states + x) * mdp.num_actions + a] = qxa;
        vx += policy.at(x, a) * qxa;
      }
      tables.v[static_cast<std::size_t>(t) * mdp.num_states + x] = vx;
    }
  }
  return tables;
}

CriticTable stationary_critic(const FiniteHorizonTables& tables) {
  CriticTable critic;
  critic.num_states = tables.num_states;
  critic.num_actions = tables.num_actions;
  const std::size_t xa = static_cast<std::size_t>(tables.num_states) * tables.num_actions;
  critic.q.assign(tables.q.begin(), tables.q.begin() + static_cast<std::ptrdiff_t>(xa));
  return critic;
}

CriticTable resolve_critic(const TabularMdp& mdp, CriticKind kind, const PolicyParams& theta,
                           const PolicyTable& behavior, int goal) {
  switch (kind) {
    case CriticKind::Zero:
      return CriticTable::zero(mdp.num_states, mdp.num_actions);
    case CriticKind::ExactQMu:
      return stationary_critic(exact_q_table(mdp, behavior, goal));
    case CriticKind::ExactQPi:
      return stationary_critic(exact_q_table(mdp, policy_table(theta), goal));
  }
  throw std::invalid_argument("resolve_critic: unknown critic kind");
}

void attach_exact_behavior_values(EvalContext& ctx, const TabularMdp& mdp,
                                  const PolicyTable& behavior, int goal) {
  FiniteHorizonTables tables = exact_q_table(mdp, behavior, goal);
  attach_behavior_values(ctx, tables.horizon, std::move(tables.q), std::move(tables.v));
}

namespace {

struct ExpectedEstimateState {
  const TabularMdp* mdp = nullptr;
  const EstimatorConfig* config = nullptr;
  const EvalContext* ctx = nullptr;
  const PolicyTable* behavior = nullptr;
  int goal = -1;
  Trajectory traj;
  Taylor2Scalar total;
  std::mt19937_64 dummy_rng;
};

void enumerate_expected_estimate(ExpectedEstimateState& st, int x, int t, double prob) {
  const TabularMdp& mdp = *st.mdp;
  if (t == mdp.horizon) {
    st.traj.final_state = x;
    if (st.config->bootstrap_terminal) {
      // The tail bootstrap reads one extra behavior-sampled action; take its
      // expectation explicitly.
      for (int a = 0; a < mdp.num_actions; ++a) {
        const double pa = st.behavior->at(x, a);
        if (pa != 0.0) {
          st.traj.final_action = a;
          st.total.add_scaled(eval_estimator(*st.ctx, st.traj, *st.config, st.dummy_rng),
                              prob * pa);
        }
      }
    } else {
      st.traj.final_action = 0;
      st.total.add_scaled(eval_estimator(*st.ctx, st.traj, *st.config, st.dummy_rng), prob);
    }
    return;
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    const double pa = st.behavior->at(x, a);
    if (pa == 0.0) {
      continue;
    }
    TrajectoryStep step;
    step.state = x;
    step.action = a;
    step.reward = mdp.reward(x, a, st.goal);
    step.behavior_logprob = std::log(pa);
    st.traj.steps.push_back(step);
    const std::span<const double> row = mdp.transition_row(x, a);
    for (int y = 0; y < mdp.num_states; ++y) {
      const double p = row[static_cast<std::size_t>(y)];
      if (p != 0.0) {
        enumerate_expected_estimate(st, y, t + 1, prob * pa * p);
      }
    }
    st.traj.steps.pop_back();
  }
}

}  // namespace

DerivativeReport exact_expected_estimate(const TabularMdp& mdp, const PolicyParams& theta,
                                         const PolicyTable& behavior,
                                         const EstimatorConfig& config, int goal,
                                         double max_paths) {
  if (config.kind == EstimatorKind::SubsampledTaypo) {
    throw std::invalid_argument(
        "exact_expected_estimate: the subsampled estimator is randomized given the trajectory "
        "and has no closed-form expectation here");
  }
  check_enumeration_budget(mdp, max_paths);
  const CriticTable critic = resolve_critic(mdp, config.critic, theta, behavior, goal);
  EvalContext ctx = make_eval_context(theta, mdp.gamma, critic, config.bootstrap_terminal);
  if (config.taypo_advantage) {
    attach_exact_behavior_values(ctx, mdp, behavior, goal);
  }

  ExpectedEstimateState st;
  st.mdp = &mdp;
  st.config = &config;
  st.ctx = &ctx;
  st.behavior = &behavior;
  st.goal = goal;
  st.traj.steps.reserve(static_cast<std::size_t>(mdp.horizon));
  st.total = Taylor2Scalar::constant(0.0, theta.dim());
  enumerate_expected_estimate(st, mdp.start_state, 0, 1.0);
  return report_from_taylor2(st.total, "expected-estimate");
}

namespace {

struct IncrementState {
  const TabularMdp* mdp = nullptr;
  const PolicyTable* behavior = nullptr;
  const FiniteHorizonTables* tables = nullptr;
  const PolicyTable* target = nullptr;
  int max_order = 0;
  std::vector<double> totals;
  // Per-path scratch: elementary symmetric sums of (rho - 1) over the prefix.
  std::vector<double> esym;
};

// Walks behavior trajectory prefixes, accumulating for each expansion order k
//   sum over time subsets t_1 < ... < t_k of
//   gamma^(t_k) prod (rho - 1) q(t_k, x_(t_k), a_(t_k))
// via prefix elementary symmetric sums. Each subset term depends only on the
// prefix up to its largest element, so it is added once at that depth with
// the prefix probability; the recursion then carries the updated symmetric
// sums to deeper levels.
void enumerate_increments(IncrementState& st, int x, int t, double prob, double discount) {
  const TabularMdp& mdp = *st.mdp;
  if (t == mdp.horizon) {
    return;
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    const double mu = st.behavior->at(x, a);
    if (mu == 0.0) {
      continue;
    }
    const double rho_m1 = st.target->at(x, a) / mu - 1.0;
    const double q_here = st.tables->q_at(t, x, a);

    // Contributions of subsets whose largest element is this step.
    std::vector<double> saved(st.esym);
    for (int k = 1; k <= st.max_order && k <= t + 1; ++k) {
      st.totals[static_cast<std::size_t>(k)] +=
          prob * mu * discount * q_here * rho_m1 * st.esym[static_cast<std::size_t>(k - 1)];
    }
    for (int k = std::min(st.max_order, t + 1); k >= 1; --k) {
      st.esym[static_cast<std::size_t>(k)] += rho_m1 * st.esym[static_cast<std::size_t>(k - 1)];
    }

    const std::span<const double> row = mdp.transition_row(x, a);
    for (int y = 0; y < mdp.num_states; ++y) {
      const double p = row[static_cast<std::size_t>(y)];
      if (p != 0.0) {
        enumerate_increments(st, y, t + 1, prob * mu * p, discount * mdp.gamma);
      }
    }
    st.esym = saved;
  }
}

}  // namespace

IncrementTable exact_increments(const TabularMdp& mdp, const PolicyParams& theta,
                                const PolicyTable& behavior, int max_order, int goal,
                                double max_paths) {
  if (max_order < 0) {
    throw std::invalid_argument("exact_increments: negative order");
  }
  check_enumeration_budget(mdp, max_paths);
  const FiniteHorizonTables tables = exact_q_table(mdp, behavior, goal);
  const PolicyTable target = policy_table(theta);

  IncrementState st;
  st.mdp = &mdp;
  st.behavior = &behavior;
  st.tables = &tables;
  st.target = &target;
  st.max_order = max_order;
  st.totals.assign(static_cast<std::size_t>(max_order) + 1, 0.0);
  st.esym.assign(static_cast<std::size_t>(max_order) + 1, 0.0);
  st.esym[0] = 1.0;
  // The walk accumulates the order >= 1 sums; order 0 is V^mu at the start
  // state, available directly from the tables.
  enumerate_increments(st, mdp.start_state, 0, 1.0, 1.0);
  st.totals[0] = tables.v_at(0, mdp.start_state);

  IncrementTable result;
  result.increments = st.totals;
  result.partial_sums.resize(st.totals.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < st.totals.size(); ++k) {
    acc += st.totals[k];
    result.partial_sums[k] = acc;
  }
  return result;
}

double exact_increment(const TabularMdp& mdp, const PolicyParams& theta,
                       const PolicyTable& behavior, int order, int goal, double max_paths) {
  return exact_increments(mdp, theta, behavior, order, goal, max_paths)
      .increments[static_cast<std::size_t>(order)];
}

double taylor_partial_sum(const TabularMdp& mdp, const PolicyParams& theta,
                          const PolicyTable& behavior, int order, int goal, double max_paths) {
  return exact_increments(mdp, theta, behavior, order, goal, max_paths)
      .partial_sums[static_cast<std::size_t>(order)];
}

}  // namespace hovd
