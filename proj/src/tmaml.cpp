#include "hovd/tmaml.hpp"

#include <cmath>
#include <stdexcept>

namespace hovd {

namespace {

void check_baseline(const BaselineTable& baseline, int num_states) {
  if (baseline.b.size() != static_cast<std::size_t>(num_states)) {
    throw std::invalid_argument("baseline table size does not match the state count");
  }
}

}  // namespace

Taylor2Scalar eval_tmaml_objective(const PolicyParams& theta, const Trajectory& traj,
                                   const BaselineTable& baseline) {
  check_baseline(baseline, theta.num_states);
  const int dim = theta.dim();

  // Softmax rows of the visited states, computed once each.
  std::vector<std::vector<Taylor2Scalar>> rows(static_cast<std::size_t>(theta.num_states));
  const auto row = [&](int x) -> const std::vector<Taylor2Scalar>& {
    auto& r = rows[static_cast<std::size_t>(x)];
    if (r.empty()) {
      r = policy_probs_taylor2(theta, x);
    }
    return r;
  };

  Taylor2Scalar objective = Taylor2Scalar::constant(0.0, dim);
  Taylor2Scalar prod = Taylor2Scalar::constant(1.0, dim);
  Taylor2Scalar term = Taylor2Scalar::constant(0.0, dim);
  for (const TrajectoryStep& step : traj.steps) {
    const Taylor2Scalar& p = row(step.state)[static_cast<std::size_t>(step.action)];
    // rho = pi / stop_gradient(pi); its value is exactly 1.
    Taylor2Scalar rho = p;
    rho *= 1.0 / p.value();
    prod *= rho;
    // (1 - prod) * (1 - rho) * b
    term = 1.0 - prod;
    term *= 1.0 - rho;
    objective.add_scaled(term, baseline.at(step.state));
  }
  return objective;
}

std::vector<double> tmaml_hessian_closed_form(const PolicyParams& theta, const Trajectory& traj,
                                              const BaselineTable& baseline) {
  check_baseline(baseline, theta.num_states);
  const std::size_t d = static_cast<std::size_t>(theta.dim());
  const int a_count = theta.num_actions;

  std::vector<std::vector<double>> rows(static_cast<std::size_t>(theta.num_states));
  const auto row = [&](int x) -> const std::vector<double>& {
    auto& r = rows[static_cast<std::size_t>(x)];
    if (r.empty()) {
      r = policy_probs(theta, x);
    }
    return r;
  };

  std::vector<double> hess(d * d, 0.0);
  std::vector<double> cumulative(d, 0.0);  // C_t = sum of scores up to t
  std::vector<double> score(d, 0.0);
  for (const TrajectoryStep& step : traj.steps) {
    const std::vector<double>& pi = row(step.state);
    const std::size_t base = static_cast<std::size_t>(step.state) * a_count;
    std::fill(score.begin(), score.end(), 0.0);
    for (int b = 0; b < a_count; ++b) {
      score[base + b] = (b == step.action ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)];
    }
    for (std::size_t i = 0; i < d; ++i) {
      cumulative[i] += score[i];
    }
    const double w = baseline.at(step.state);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        hess[i * d + j] += w * (cumulative[i] * score[j] + score[i] * cumulative[j]);
      }
    }
  }
  return hess;
}

namespace {

struct TmamlEnumState {
  const TabularMdp* mdp = nullptr;
  const PolicyParams* theta = nullptr;
  const BaselineTable* baseline = nullptr;
  const PolicyTable* policy = nullptr;
  Trajectory traj;
  std::vector<double> expected_hessian;
  std::vector<double> cross_term;
};

void enumerate_tmaml(TmamlEnumState& st, int x, int t, double prob) {
  const TabularMdp& mdp = *st.mdp;
  if (t == mdp.horizon) {
    st.traj.final_state = x;
    const Taylor2Scalar j = eval_tmaml_objective(*st.theta, st.traj, *st.baseline);
    const std::vector<double> h = j.hess_dense();
    const std::vector<double> closed_form =
        tmaml_hessian_closed_form(*st.theta, st.traj, *st.baseline);
    const std::size_t d = static_cast<std::size_t>(st.theta->dim());
    for (std::size_t i = 0; i < d * d; ++i) {
      st.expected_hessian[i] += prob * h[i];
    }
    // Split the closed form into same-time score outer products and strict
    // time cross terms; the latter integrate to zero over trajectories.
    const int a_count = st.theta->num_actions;
    std::vector<double> same(d * d, 0.0);
    for (const TrajectoryStep& step : st.traj.steps) {
      const std::vector<double> pi = policy_probs(*st.theta, step.state);
      const std::size_t base = static_cast<std::size_t>(step.state) * a_count;
      const double w = st.baseline->at(step.state);
      for (int b = 0; b < a_count; ++b) {
        const double sb = (b == step.action ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)];
        for (int c = 0; c < a_count; ++c) {
          const double sc = (c == step.action ? 1.0 : 0.0) - pi[static_cast<std::size_t>(c)];
          same[(base + b) * d + (base + c)] += 2.0 * w * sb * sc;
        }
      }
    }
    for (std::size_t i = 0; i < d * d; ++i) {
      st.cross_term[i] += prob * (closed_form[i] - same[i]);
    }
    return;
  }
  for (int a = 0; a < mdp.num_actions; ++a) {
    const double pa = st.policy->at(x, a);
    if (pa == 0.0) {
      continue;
    }
    TrajectoryStep step;
    step.state = x;
    step.action = a;
    step.reward = mdp.reward(x, a, mdp.num_goals == 0 ? -1 : 0);
    step.behavior_logprob = std::log(pa);
    st.traj.steps.push_back(step);
    const std::span<const double> row = mdp.transition_row(x, a);
    for (int y = 0; y < mdp.num_states; ++y) {
      const double p = row[static_cast<std::size_t>(y)];
      if (p != 0.0) {
        enumerate_tmaml(st, y, t + 1, prob * pa * p);
      }
    }
    st.traj.steps.pop_back();
  }
}

double frobenius_norm(const std::vector<double>& m) {
  double acc = 0.0;
  for (double x : m) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

}  // namespace

TmamlBiasReport tmaml_bias_report(const TabularMdp& mdp, const PolicyParams& theta,
                                  const BaselineTable& baseline, double max_paths) {
  check_baseline(baseline, mdp.num_states);
  const double paths = std::pow(
      static_cast<double>(mdp.num_actions) * static_cast<double>(mdp.num_states),
      static_cast<double>(mdp.horizon));
  if (paths > max_paths) {
    throw std::invalid_argument("tmaml_bias_report: enumeration over budget; shrink the MDP");
  }

  const std::size_t d = static_cast<std::size_t>(theta.dim());
  const PolicyTable policy = policy_table(theta);

  TmamlBiasReport report;
  report.dim = theta.dim();
  report.expected_hessian.assign(d * d, 0.0);
  report.cross_term.assign(d * d, 0.0);

  TmamlEnumState st;
  st.mdp = &mdp;
  st.theta = &theta;
  st.baseline = &baseline;
  st.policy = &policy;
  st.traj.steps.reserve(static_cast<std::size_t>(mdp.horizon));
  st.expected_hessian.assign(d * d, 0.0);
  st.cross_term.assign(d * d, 0.0);
  enumerate_tmaml(st, mdp.start_state, 0, 1.0);
  report.expected_hessian = std::move(st.expected_hessian);
  report.cross_term = std::move(st.cross_term);

  // Same-time score outer products from exact state occupancies: an
  // enumeration-free second route to the expected Hessian.
  report.score_outer.assign(d * d, 0.0);
  std::vector<double> occupancy(static_cast<std::size_t>(mdp.num_states), 0.0);
  occupancy[static_cast<std::size_t>(mdp.start_state)] = 1.0;
  const int a_count = mdp.num_actions;
  for (int t = 0; t < mdp.horizon; ++t) {
    for (int x = 0; x < mdp.num_states; ++x) {
      const double dx = occupancy[static_cast<std::size_t>(x)];
      if (dx == 0.0) {
        continue;
      }
      const std::vector<double> pi = policy_probs(theta, x);
      const std::size_t base = static_cast<std::size_t>(x) * a_count;
      const double w = 2.0 * dx * baseline.at(x);
      for (int a = 0; a < a_count; ++a) {
        const double pa = pi[static_cast<std::size_t>(a)];
        for (int b = 0; b < a_count; ++b) {
          const double sb = (b == a ? 1.0 : 0.0) - pi[static_cast<std::size_t>(b)];
          for (int c = 0; c < a_count; ++c) {
            const double sc = (c == a ? 1.0 : 0.0) - pi[static_cast<std::size_t>(c)];
            report.score_outer[(base + b) * d + (base + c)] += w * pa * sb * sc;
          }
        }
      }
    }
    std::vector<double> next(static_cast<std::size_t>(mdp.num_states), 0.0);
    for (int x = 0; x < mdp.num_states; ++x) {
      const double dx = occupancy[static_cast<std::size_t>(x)];
      if (dx == 0.0) {
        continue;
      }
      const std::vector<double> pi = policy_probs(theta, x);
      for (int a = 0; a < a_count; ++a) {
        const double w = dx * pi[static_cast<std::size_t>(a)];
        if (w == 0.0) {
          continue;
        }
        const std::span<const double> row = mdp.transition_row(x, a);
        for (int y = 0; y < mdp.num_states; ++y) {
          next[static_cast<std::size_t>(y)] += w * row[static_cast<std::size_t>(y)];
        }
      }
    }
    occupancy.swap(next);
  }

  report.expected_hessian_norm = frobenius_norm(report.expected_hessian);
  report.cross_term_norm = frobenius_norm(report.cross_term);
  return report;
}

}  // namespace hovd
