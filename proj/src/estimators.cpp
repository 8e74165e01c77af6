#include "hovd/estimators.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace hovd {

namespace {

int parse_order_suffix(const std::string& name, const std::string& prefix) {
  const std::string digits = name.substr(prefix.size());
  if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
    throw std::invalid_argument("unknown estimator name: " + name);
  }
  return std::stoi(digits);
}

}  // namespace

EstimatorConfig parse_estimator_name(const std::string& name) {
  EstimatorConfig config;
  if (name == "step-is") {
    config.kind = EstimatorKind::StepIs;
  } else if (name == "dr") {
    config.kind = EstimatorKind::Dr;
  } else if (name == "truncated-dr") {
    config.kind = EstimatorKind::TruncatedDr;
  } else if (name == "mixture") {
    config.kind = EstimatorKind::Mixture;
  } else if (name.rfind("subsampled-taypo-", 0) == 0) {
    config.kind = EstimatorKind::SubsampledTaypo;
    config.taylor_order = parse_order_suffix(name, "subsampled-taypo-");
  } else if (name.rfind("taypo-", 0) == 0) {
    config.kind = EstimatorKind::Taypo;
    config.taylor_order = parse_order_suffix(name, "taypo-");
  } else {
    throw std::invalid_argument("unknown estimator name: " + name);
  }
  return config;
}

std::string estimator_display_name(const EstimatorConfig& config) {
  switch (config.kind) {
    case EstimatorKind::StepIs:
      return "step-is";
    case EstimatorKind::Dr:
      return "dr";
    case EstimatorKind::TruncatedDr:
      return "truncated-dr";
    case EstimatorKind::Taypo:
      return "taypo-" + std::to_string(config.taylor_order);
    case EstimatorKind::SubsampledTaypo:
      return "subsampled-taypo-" + std::to_string(config.taylor_order);
    case EstimatorKind::Mixture:
      return "mixture";
  }
  return "unknown";
}

const char* critic_kind_name(CriticKind kind) {
  switch (kind) {
    case CriticKind::Zero:
      return "zero";
    case CriticKind::ExactQMu:
      return "exact-q-mu";
    case CriticKind::ExactQPi:
      return "exact-q-pi";
  }
  return "unknown";
}

CriticKind parse_critic_name(const std::string& name) {
  if (name == "zero") {
    return CriticKind::Zero;
  }
  if (name == "exact-q-mu") {
    return CriticKind::ExactQMu;
  }
  if (name == "exact-q-pi") {
    return CriticKind::ExactQPi;
  }
  throw std::invalid_argument("unknown critic name: " + name);
}

EvalContext make_eval_context(const PolicyParams& theta, double gamma, const CriticTable& critic,
                              bool bootstrap_terminal) {
  if (critic.num_states != theta.num_states || critic.num_actions != theta.num_actions) {
    throw std::invalid_argument("make_eval_context: critic table shape mismatch");
  }
  EvalContext ctx;
  ctx.dim = theta.dim();
  ctx.gamma = gamma;
  ctx.num_states = theta.num_states;
  ctx.num_actions = theta.num_actions;
  ctx.bootstrap_terminal = bootstrap_terminal;
  ctx.critic = critic;
  ctx.probs.reserve(static_cast<std::size_t>(ctx.dim));
  for (int x = 0; x < theta.num_states; ++x) {
    std::vector<Taylor2Scalar> row = policy_probs_taylor2(theta, x);
    for (auto& p : row) {
      ctx.probs.push_back(std::move(p));
    }
  }
  ctx.critic_pi.reserve(static_cast<std::size_t>(theta.num_states));
  for (int x = 0; x < theta.num_states; ++x) {
    Taylor2Scalar acc = Taylor2Scalar::constant(0.0, ctx.dim);
    for (int a = 0; a < theta.num_actions; ++a) {
      acc.add_scaled(ctx.prob(x, a), critic.at(x, a));
    }
    ctx.critic_pi.push_back(std::move(acc));
  }
  return ctx;
}

void attach_behavior_values(EvalContext& ctx, int horizon, std::vector<double> q,
                            std::vector<double> v) {
  const std::size_t xa = static_cast<std::size_t>(ctx.num_states) * ctx.num_actions;
  if (horizon < 1 || q.size() != static_cast<std::size_t>(horizon) * xa ||
      v.size() != static_cast<std::size_t>(horizon + 1) * ctx.num_states) {
    throw std::invalid_argument("attach_behavior_values: table shape mismatch");
  }
  ctx.behavior_horizon = horizon;
  ctx.behavior_q = std::move(q);
  ctx.behavior_v = std::move(v);
}

Taylor2Scalar is_ratio(const EvalContext& ctx, const Trajectory& traj, int t) {
  const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(t)];
  Taylor2Scalar ratio = ctx.prob(step.state, step.action);
  ratio *= std::exp(-step.behavior_logprob);
  return ratio;
}

Taylor2Scalar is_ratio(const PolicyParams& theta, const Trajectory& traj, int t) {
  const TrajectoryStep& step = traj.steps[static_cast<std::size_t>(t)];
  const std::vector<Taylor2Scalar> row = policy_probs_taylor2(theta, step.state);
  Taylor2Scalar ratio = row[static_cast<std::size_t>(step.action)];
  ratio *= std::exp(-step.behavior_logprob);
  return ratio;
}

Taylor2Scalar eval_step_is(const EvalContext& ctx, const Trajectory& traj) {
  Taylor2Scalar value = Taylor2Scalar::constant(0.0, ctx.dim);
  Taylor2Scalar rho_prod = Taylor2Scalar::constant(1.0, ctx.dim);
  double discount = 1.0;
  for (const TrajectoryStep& step : traj.steps) {
    rho_prod *= ctx.prob(step.state, step.action);
    rho_prod *= std::exp(-step.behavior_logprob);
    value.add_scaled(rho_prod, discount * step.reward);
    discount *= ctx.gamma;
  }
  return value;
}

Taylor2Scalar eval_dr(const EvalContext& ctx, const Trajectory& traj) {
  return eval_dr_truncated(ctx, traj, std::numeric_limits<double>::infinity());
}

Taylor2Scalar eval_dr_truncated(const EvalContext& ctx, const Trajectory& traj, double rho_bar) {
  Taylor2Scalar value = ctx.bootstrap_terminal ? ctx.critic_pi[static_cast<std::size_t>(traj.final_state)]
                                               : Taylor2Scalar::constant(0.0, ctx.dim);
  for (std::size_t t = traj.steps.size(); t-- > 0;) {
    const TrajectoryStep& step = traj.steps[t];
    const double inv_mu = std::exp(-step.behavior_logprob);
    // value currently holds V_{t+1}; turn it into the temporal-difference
    // term r_t + gamma V_{t+1} - Q(x_t, a_t), then apply the (possibly
    // truncated) ratio and add the critic's policy value at x_t.
    value *= ctx.gamma;
    value += step.reward - ctx.critic.at(step.state, step.action);
    const Taylor2Scalar& prob = ctx.prob(step.state, step.action);
    if (prob.value() * inv_mu >= rho_bar) {
      value *= rho_bar;
    } else {
      value *= prob;
      value *= inv_mu;
    }
    value += ctx.critic_pi[static_cast<std::size_t>(step.state)];
  }
  return value;
}

namespace {

// Tail returns: qhat[t] = sum_{s >= t} gamma^(s-t) r_s, optionally extended
// with the critic at the trajectory's final state-action pair.
std::vector<double> tail_returns(const EvalContext& ctx, const Trajectory& traj) {
  const std::size_t horizon = traj.steps.size();
  std::vector<double> qhat(horizon + 1, 0.0);
  if (ctx.bootstrap_terminal) {
    qhat[horizon] = ctx.critic.at(traj.final_state, traj.final_action);
  }
  for (std::size_t t = horizon; t-- > 0;) {
    qhat[t] = traj.steps[t].reward + ctx.gamma * qhat[t + 1];
  }
  return qhat;
}

}  // namespace

Taylor2Scalar eval_taypo(const EvalContext& ctx, const Trajectory& traj, int order,
                         bool advantage) {
  if (order < 0 || order > 2) {
    throw std::invalid_argument("eval_taypo: only expansion orders 0, 1 and 2 are implemented");
  }
  std::vector<double> qhat;
  double base = 0.0;
  if (advantage) {
    if (!ctx.has_behavior_values()) {
      throw std::invalid_argument(
          "eval_taypo: advantage weighting requested but no behavior values are attached");
    }
    if (traj.steps.size() > static_cast<std::size_t>(ctx.behavior_horizon)) {
      throw std::invalid_argument("eval_taypo: trajectory longer than the attached tables");
    }
    qhat.reserve(traj.steps.size());
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
      const TrajectoryStep& step = traj.steps[t];
      const int time = static_cast<int>(t);
      qhat.push_back(ctx.behavior_q_at(time, step.state, step.action) -
                     ctx.behavior_v_at(time, step.state));
    }
    base = ctx.behavior_v_at(0, traj.steps.front().state);
  } else {
    qhat = tail_returns(ctx, traj);
    base = qhat[0];
  }
  Taylor2Scalar value = Taylor2Scalar::constant(base, ctx.dim);
  if (order == 0) {
    return value;
  }
  const std::size_t horizon = traj.steps.size();
  std::vector<Taylor2Scalar> rho_m1;
  rho_m1.reserve(horizon);
  double discount = 1.0;
  for (std::size_t t = 0; t < horizon; ++t) {
    Taylor2Scalar r = is_ratio(ctx, traj, static_cast<int>(t));
    r -= 1.0;
    value.add_scaled(r, discount * qhat[t]);
    discount *= ctx.gamma;
    if (order == 2) {
      rho_m1.push_back(std::move(r));
    }
  }
  if (order == 2) {
    Taylor2Scalar pair = Taylor2Scalar::constant(0.0, ctx.dim);
    for (std::size_t t = 0; t + 1 < horizon; ++t) {
      double s_discount = std::pow(ctx.gamma, static_cast<double>(t + 1));
      for (std::size_t s = t + 1; s < horizon; ++s) {
        pair = rho_m1[t];
        pair *= rho_m1[s];
        value.add_scaled(pair, s_discount * qhat[s]);
        s_discount *= ctx.gamma;
      }
    }
  }
  return value;
}

Taylor2Scalar eval_mixture(const EvalContext& ctx, const Trajectory& traj, double beta,
                           bool advantage) {
  if (beta == 0.0) {
    return eval_taypo(ctx, traj, 1, advantage);
  }
  if (beta == 1.0) {
    return eval_taypo(ctx, traj, 2, advantage);
  }
  Taylor2Scalar value = eval_taypo(ctx, traj, 1, advantage);
  value *= 1.0 - beta;
  value.add_scaled(eval_taypo(ctx, traj, 2, advantage), beta);
  return value;
}

std::vector<Taylor2Scalar> taypo_chain_increments(const EvalContext& ctx, const Trajectory& traj,
                                                  int order, std::mt19937_64& rng) {
  if (order < 0) {
    throw std::invalid_argument("taypo_chain_increments: negative order");
  }
  if (!(ctx.gamma < 1.0)) {
    throw std::invalid_argument("taypo_chain_increments: time sampling requires gamma < 1");
  }
  const std::vector<double> qhat = tail_returns(ctx, traj);
  const std::size_t horizon = traj.steps.size();
  std::vector<Taylor2Scalar> increments(static_cast<std::size_t>(order) + 1,
                                        Taylor2Scalar::constant(0.0, ctx.dim));
  increments[0] += qhat[0];

  // Draw the whole chain up front so the generator advances by the same
  // amount regardless of where the chain lands: t_1 geometric in gamma, then
  // strictly increasing with geometric gaps.
  std::geometric_distribution<long> geom(1.0 - ctx.gamma);
  std::vector<long> times(static_cast<std::size_t>(order));
  long t = 0;
  for (int k = 0; k < order; ++k) {
    t += (k == 0 ? 0 : 1) + geom(rng);
    times[static_cast<std::size_t>(k)] = t;
  }

  // The sampled chain has density (1-gamma)^k gamma^(t_k - (k-1)) on the
  // prefix of length k; reweighting the integrand gamma^(t_k) Q^(t_k)
  // prod(rho-1) by its inverse leaves gamma^(k-1) / (1-gamma)^k.
  Taylor2Scalar prod = Taylor2Scalar::constant(1.0, ctx.dim);
  double correction = 1.0;
  for (int k = 1; k <= order; ++k) {
    const long tk = times[static_cast<std::size_t>(k - 1)];
    if (tk >= static_cast<long>(horizon)) {
      break;
    }
    Taylor2Scalar r = is_ratio(ctx, traj, static_cast<int>(tk));
    r -= 1.0;
    prod *= r;
    correction *= (k == 1 ? 1.0 : ctx.gamma) / (1.0 - ctx.gamma);
    increments[static_cast<std::size_t>(k)] = prod;
    increments[static_cast<std::size_t>(k)] *= correction * qhat[static_cast<std::size_t>(tk)];
  }
  return increments;
}

SubsampledTaypoResult eval_taypo_subsampled(
    const EvalContext& ctx, const std::function<Trajectory(std::mt19937_64&)>& sampler, int order,
    int num_chains, std::mt19937_64& rng) {
  if (num_chains < 1) {
    throw std::invalid_argument("eval_taypo_subsampled: need at least one chain");
  }
  SubsampledTaypoResult result;
  result.increments.assign(static_cast<std::size_t>(order) + 1,
                           Taylor2Scalar::constant(0.0, ctx.dim));
  for (int chain = 0; chain < num_chains; ++chain) {
    const Trajectory traj = sampler(rng);
    const std::vector<Taylor2Scalar> inc = taypo_chain_increments(ctx, traj, order, rng);
    for (std::size_t k = 0; k < inc.size(); ++k) {
      result.increments[k] += inc[k];
    }
  }
  for (auto& inc : result.increments) {
    inc *= 1.0 / static_cast<double>(num_chains);
  }
  result.partial_sums.reserve(result.increments.size());
  Taylor2Scalar acc = Taylor2Scalar::constant(0.0, ctx.dim);
  for (const auto& inc : result.increments) {
    acc += inc;
    result.partial_sums.push_back(acc);
  }
  return result;
}

Taylor2Scalar eval_estimator(const EvalContext& ctx, const Trajectory& traj,
                             const EstimatorConfig& config, std::mt19937_64& rng) {
  switch (config.kind) {
    case EstimatorKind::StepIs:
      return eval_step_is(ctx, traj);
    case EstimatorKind::Dr:
      return eval_dr(ctx, traj);
    case EstimatorKind::TruncatedDr:
      return eval_dr_truncated(ctx, traj, config.rho_bar);
    case EstimatorKind::Taypo:
      return eval_taypo(ctx, traj, config.taylor_order, config.taypo_advantage);
    case EstimatorKind::Mixture:
      return eval_mixture(ctx, traj, config.beta, config.taypo_advantage);
    case EstimatorKind::SubsampledTaypo: {
      const std::vector<Taylor2Scalar> inc =
          taypo_chain_increments(ctx, traj, config.taylor_order, rng);
      Taylor2Scalar acc = Taylor2Scalar::constant(0.0, ctx.dim);
      for (const auto& term : inc) {
        acc += term;
      }
      return acc;
    }
  }
  throw std::invalid_argument("eval_estimator: unknown estimator kind");
}

namespace {

// Analytic softmax derivative pieces for the state block of x, all with
// respect to the full flattened parameter vector but nonzero only inside the
// block. pi is the softmax row of x, q the critic row.

double dot(const std::vector<double>& pi, std::span<const double> q) {
  double acc = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    acc += pi[a] * q[a];
  }
  return acc;
}

}  // namespace

DrDerivatives dr_derivatives_analytic(const PolicyParams& theta, double gamma,
                                      const CriticTable& critic, const Trajectory& traj,
                                      bool bootstrap_terminal) {
  if (critic.num_states != theta.num_states || critic.num_actions != theta.num_actions) {
    throw std::invalid_argument("dr_derivatives_analytic: critic table shape mismatch");
  }
  const int dim = theta.dim();
  const int a_count = theta.num_actions;
  const std::size_t d = static_cast<std::size_t>(dim);

  // Softmax rows are needed repeatedly; compute each visited state's row once.
  std::vector<std::vector<double>> pi_rows(static_cast<std::size_t>(theta.num_states));
  const auto pi_row = [&](int x) -> const std::vector<double>& {
    auto& row = pi_rows[static_cast<std::size_t>(x)];
    if (row.empty()) {
      row = policy_probs(theta, x);
    }
    return row;
  };

  const auto critic_row = [&](int x) {
    return std::span<const double>(critic.q.data() + static_cast<std::size_t>(x) * a_count,
                                   static_cast<std::size_t>(a_count));
  };

  // Value, gradient and Hessian of Q(x, pi(x)) for a state, accumulated into
  // dense buffers scaled by coef.
  const auto add_qpi_grad = [&](int x, double coef, std::vector<double>& out) {
    const std::vector<double>& pi = pi_row(x);
    const std::span<const double> q = critic_row(x);
    const double qdot = dot(pi, q);
    const std::size_t base = static_cast<std::size_t>(x) * a_count;
    for (int b = 0; b < a_count; ++b) {
      out[base + b] += coef * pi[static_cast<std::size_t>(b)] * (q[static_cast<std::size_t>(b)] - qdot);
    }
  };
  const auto add_qpi_hess = [&](int x, double coef, std::vector<double>& out) {
    const std::vector<double>& pi = pi_row(x);
    const std::span<const double> q = critic_row(x);
    const double qdot = dot(pi, q);
    const std::size_t base = static_cast<std::size_t>(x) * a_count;
    for (int b = 0; b < a_count; ++b) {
      const double pb = pi[static_cast<std::size_t>(b)];
      const double qb = q[static_cast<std::size_t>(b)];
      for (int c = 0; c < a_count; ++c) {
        const double pc = pi[static_cast<std::size_t>(c)];
        const double qc = q[static_cast<std::size_t>(c)];
        double h = -pb * pc * (qb + qc - 2.0 * qdot);
        if (b == c) {
          h += pb * (qb - qdot);
        }
        out[(base + b) * d + (base + c)] += coef * h;
      }
    }
  };

  DrDerivatives result;
  result.grad.assign(d, 0.0);
  result.hess.assign(d * d, 0.0);
  double value = 0.0;
  std::vector<double> grad(d, 0.0);
  std::vector<double> hess(d * d, 0.0);
  if (bootstrap_terminal) {
    const int x = traj.final_state;
    value = dot(pi_row(x), critic_row(x));
    add_qpi_grad(x, 1.0, grad);
    add_qpi_hess(x, 1.0, hess);
  }

  std::vector<double> score(d, 0.0);
  std::vector<double> new_grad(d, 0.0);
  for (std::size_t t = traj.steps.size(); t-- > 0;) {
    const TrajectoryStep& step = traj.steps[t];
    const int x = step.state;
    const int a = step.action;
    const std::vector<double>& pi = pi_row(x);
    const double rho = pi[static_cast<std::size_t>(a)] * std::exp(-step.behavior_logprob);
    const double delta = step.reward + gamma * value - critic.at(x, a);
    const std::size_t base = static_cast<std::size_t>(x) * a_count;

    // score = grad log pi(a | x), nonzero only in the block of x.
    std::fill(score.begin(), score.end(), 0.0);
    for (int b = 0; b < a_count; ++b) {
      score[base + b] = (b == a ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)];
    }

    // Hessian update first: it reads the incoming gradient (level t+1).
    const double g_rho = gamma * rho;
    for (double& h : hess) {
      h *= g_rho;
    }
    // rho * delta * (hess log pi + score score^T), block-local.
    for (int b = 0; b < a_count; ++b) {
      const double pb = pi[static_cast<std::size_t>(b)];
      for (int c = 0; c < a_count; ++c) {
        const double pc = pi[static_cast<std::size_t>(c)];
        const double hlog = -pb * ((b == c ? 1.0 : 0.0) - pc);
        const double souter = score[base + b] * score[base + c];
        hess[(base + b) * d + (base + c)] += rho * delta * (hlog + souter);
      }
    }
    // gamma * rho * (g s^T + s g^T); s is block sparse, g dense.
    for (std::size_t i = 0; i < d; ++i) {
      const double gi = grad[i];
      if (gi != 0.0) {
        for (int b = 0; b < a_count; ++b) {
          hess[i * d + (base + b)] += g_rho * gi * score[base + b];
          hess[(base + b) * d + i] += g_rho * score[base + b] * gi;
        }
      }
    }
    add_qpi_hess(x, 1.0, hess);

    // Gradient: grad Q(x, pi(x)) + rho delta score + gamma rho grad_{t+1}.
    std::fill(new_grad.begin(), new_grad.end(), 0.0);
    add_qpi_grad(x, 1.0, new_grad);
    for (std::size_t i = 0; i < d; ++i) {
      new_grad[i] += rho * delta * score[i] + g_rho * grad[i];
    }
    grad.swap(new_grad);

    value = dot(pi, critic_row(x)) + rho * delta;
  }

  result.value = value;
  result.grad = std::move(grad);
  result.hess = std::move(hess);
  return result;
}

}  // namespace hovd
