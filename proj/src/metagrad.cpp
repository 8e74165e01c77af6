#include "hovd/metagrad.hpp"

#include <cmath>
#include <stdexcept>

namespace hovd {

namespace {

std::vector<int> goal_list(const TabularMdp& mdp) {
  if (mdp.num_goals == 0) {
    return {-1};
  }
  std::vector<int> goals(static_cast<std::size_t>(mdp.num_goals));
  for (int g = 0; g < mdp.num_goals; ++g) {
    goals[static_cast<std::size_t>(g)] = g;
  }
  return goals;
}

// out += coef * (dense symmetric m) * v
void add_matvec(const std::vector<double>& m, const std::vector<double>& v, double coef,
                std::vector<double>& out) {
  const std::size_t d = v.size();
  for (std::size_t i = 0; i < d; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      acc += m[i * d + j] * v[j];
    }
    out[i] += coef * acc;
  }
}

// Score-function gradient estimate at theta with the exact remaining-horizon
// advantage of pi_theta as the weight:
//   sum_t gamma^t grad log pi(a_t | x_t) (q(t, x_t, a_t) - v(t, x_t)).
void add_score_function_gradient(const TabularMdp& mdp, const PolicyParams& theta,
                                 const FiniteHorizonTables& tables, const Trajectory& traj,
                                 double coef, std::vector<double>& out) {
  const int a_count = theta.num_actions;
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(theta.num_states));
  double discount = 1.0;
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const TrajectoryStep& step = traj.steps[t];
    auto& pi = rows[static_cast<std::size_t>(step.state)];
    if (pi.empty()) {
      pi = policy_probs(theta, step.state);
    }
    const double advantage =
        tables.q_at(static_cast<int>(t), step.state, step.action) -
        tables.v_at(static_cast<int>(t), step.state);
    const double w = coef * discount * advantage;
    const std::size_t base = static_cast<std::size_t>(step.state) * a_count;
    for (int b = 0; b < a_count; ++b) {
      out[base + b] += w * ((b == step.action ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)]);
    }
    discount *= mdp.gamma;
  }
}

PolicyParams step_params(const PolicyParams& theta, const std::vector<double>& direction,
                         double scale) {
  PolicyParams out = theta;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    out.values[i] += scale * direction[i];
  }
  return out;
}

}  // namespace

InnerUpdate inner_update(const TabularMdp& mdp, const PolicyParams& theta, int goal,
                         const std::vector<Trajectory>& rollouts, const MetaConfig& config) {
  if (rollouts.empty()) {
    throw std::invalid_argument("inner_update: need at least one rollout");
  }
  const PolicyTable behavior = policy_table(theta);
  const CriticTable critic =
      resolve_critic(mdp, config.inner_estimator.critic, theta, behavior, goal);
  const EvalContext ctx =
      make_eval_context(theta, mdp.gamma, critic, config.inner_estimator.bootstrap_terminal);
  std::mt19937_64 rng(0);  // consulted only by the subsampled estimator kind
  Taylor2Scalar mean = Taylor2Scalar::constant(0.0, theta.dim());
  for (const Trajectory& traj : rollouts) {
    mean += eval_estimator(ctx, traj, config.inner_estimator, rng);
  }
  mean *= 1.0 / static_cast<double>(rollouts.size());

  InnerUpdate update;
  update.objective = report_from_taylor2(mean, "inner-estimate");
  update.theta_prime = step_params(theta, update.objective.grad, config.eta);
  return update;
}

std::vector<double> meta_gradient_estimate(const TabularMdp& mdp, const PolicyParams& theta,
                                           const MetaConfig& config) {
  const std::vector<int> goals = goal_list(mdp);
  const std::size_t d = static_cast<std::size_t>(theta.dim());
  const PolicyTable behavior = policy_table(theta);
  std::vector<double> total(d, 0.0);

  for (std::size_t gi = 0; gi < goals.size(); ++gi) {
    const int goal = goals[gi];
    std::mt19937_64 rng =
        make_stream({config.seed, 0x7461736bULL, static_cast<std::uint64_t>(gi)});

    std::vector<Trajectory> rollouts;
    rollouts.reserve(static_cast<std::size_t>(config.inner_trajectories));
    for (int i = 0; i < config.inner_trajectories; ++i) {
      rollouts.push_back(sample_trajectory(mdp, behavior, goal, rng));
    }
    const InnerUpdate update = inner_update(mdp, theta, goal, rollouts, config);

    const PolicyTable adapted = policy_table(update.theta_prime);
    const FiniteHorizonTables tables = exact_q_table(mdp, adapted, goal);
    std::vector<double> outer(d, 0.0);
    const double weight = 1.0 / static_cast<double>(config.inner_trajectories);
    for (int i = 0; i < config.inner_trajectories; ++i) {
      const Trajectory traj = sample_trajectory(mdp, adapted, goal, rng);
      add_score_function_gradient(mdp, update.theta_prime, tables, traj, weight, outer);
    }

    // (I + eta * sampled Hessian) * outer gradient
    for (std::size_t i = 0; i < d; ++i) {
      total[i] += outer[i];
    }
    add_matvec(update.objective.hess, outer, config.eta, total);
  }
  for (double& x : total) {
    x /= static_cast<double>(goals.size());
  }
  return total;
}

std::vector<double> exact_meta_gradient(const TabularMdp& mdp, const PolicyParams& theta,
                                        double eta) {
  const std::vector<int> goals = goal_list(mdp);
  const std::size_t d = static_cast<std::size_t>(theta.dim());
  std::vector<double> total(d, 0.0);
  for (int goal : goals) {
    const DerivativeReport inner = exact_value_dp(mdp, theta, goal);
    const PolicyParams theta_prime = step_params(theta, inner.grad, eta);
    const DerivativeReport outer = exact_value_dp(mdp, theta_prime, goal);
    for (std::size_t i = 0; i < d; ++i) {
      total[i] += outer.grad[i];
    }
    add_matvec(inner.hess, outer.grad, eta, total);
  }
  for (double& x : total) {
    x /= static_cast<double>(goals.size());
  }
  return total;
}

double exact_post_adaptation_value(const TabularMdp& mdp, const PolicyParams& theta, double eta,
                                   int goal) {
  const DerivativeReport inner = exact_value_dp(mdp, theta, goal);
  const PolicyParams theta_prime = step_params(theta, inner.grad, eta);
  const FiniteHorizonTables tables = exact_q_table(mdp, policy_table(theta_prime), goal);
  return tables.v_at(0, mdp.start_state);
}

PluginBiasProbe plugin_bias_probe(const TabularMdp& mdp, const PolicyParams& theta, int goal,
                                  double eta, int batch, int repetitions, bool exact_inner,
                                  std::uint64_t seed) {
  if (batch < 1 || repetitions < 2) {
    throw std::invalid_argument("plugin_bias_probe: need batch >= 1 and repetitions >= 2");
  }
  const std::size_t d = static_cast<std::size_t>(theta.dim());

  const DerivativeReport inner_exact = exact_value_dp(mdp, theta, goal);
  const PolicyParams theta_prime_exact = step_params(theta, inner_exact.grad, eta);
  const DerivativeReport outer_exact = exact_value_dp(mdp, theta_prime_exact, goal);
  std::vector<double> exact(outer_exact.grad);
  add_matvec(inner_exact.hess, outer_exact.grad, eta, exact);

  MetaConfig config;
  config.eta = eta;
  config.inner_trajectories = batch;
  const PolicyTable behavior = policy_table(theta);

  std::vector<double> mean(d, 0.0);
  std::vector<double> m2(d, 0.0);  // running sum of squared deviations
  for (int rep = 0; rep < repetitions; ++rep) {
    std::mt19937_64 rng =
        make_stream({seed, 0x70726f6265ULL, static_cast<std::uint64_t>(rep)});
    std::vector<Trajectory> rollouts;
    rollouts.reserve(static_cast<std::size_t>(batch));
    for (int i = 0; i < batch; ++i) {
      rollouts.push_back(sample_trajectory(mdp, behavior, goal, rng));
    }
    const InnerUpdate update = inner_update(mdp, theta, goal, rollouts, config);
    const PolicyParams& eval_point =
        exact_inner ? theta_prime_exact : update.theta_prime;
    const DerivativeReport outer = exact_value_dp(mdp, eval_point, goal);
    std::vector<double> estimate(outer.grad);
    add_matvec(update.objective.hess, outer.grad, eta, estimate);

    // Welford accumulation per component.
    for (std::size_t i = 0; i < d; ++i) {
      const double delta = estimate[i] - mean[i];
      mean[i] += delta / static_cast<double>(rep + 1);
      m2[i] += delta * (estimate[i] - mean[i]);
    }
  }

  PluginBiasProbe probe;
  probe.batch = batch;
  probe.repetitions = repetitions;
  double bias_sq = 0.0;
  double stderr_sq = 0.0;
  double exact_sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    const double b = mean[i] - exact[i];
    bias_sq += b * b;
    const double var = m2[i] / static_cast<double>(repetitions - 1);
    stderr_sq += var / static_cast<double>(repetitions);
    exact_sq += exact[i] * exact[i];
  }
  probe.bias_norm = std::sqrt(bias_sq);
  probe.stderr_norm = std::sqrt(stderr_sq);
  probe.exact_norm = std::sqrt(exact_sq);
  return probe;
}

std::vector<MetaTrainRecord> meta_train_demo(const TabularMdp& mdp, const MetaConfig& config) {
  PolicyParams theta;
  theta.num_states = mdp.num_states;
  theta.num_actions = mdp.num_actions;
  theta.values.assign(static_cast<std::size_t>(theta.dim()), 0.0);

  const std::vector<int> goals = goal_list(mdp);
  std::vector<MetaTrainRecord> records;
  records.reserve(static_cast<std::size_t>(config.iterations));
  for (int iter = 0; iter < config.iterations; ++iter) {
    MetaTrainRecord record;
    record.iteration = iter;
    for (int goal : goals) {
      const FiniteHorizonTables tables = exact_q_table(mdp, policy_table(theta), goal);
      record.pre_value += tables.v_at(0, mdp.start_state);
      record.post_value += exact_post_adaptation_value(mdp, theta, config.eta, goal);
    }
    record.pre_value /= static_cast<double>(goals.size());
    record.post_value /= static_cast<double>(goals.size());

    MetaConfig step_config = config;
    step_config.seed = stable_hash({config.seed, static_cast<std::uint64_t>(iter)});
    const std::vector<double> meta_grad = meta_gradient_estimate(mdp, theta, step_config);
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < meta_grad.size(); ++i) {
      theta.values[i] += config.outer_lr * meta_grad[i];
      norm_sq += meta_grad[i] * meta_grad[i];
    }
    record.meta_grad_norm = std::sqrt(norm_sq);
    records.push_back(record);
  }
  return records;
}

}  // namespace hovd
