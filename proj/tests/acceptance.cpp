// Acceptance gate: one pass/fail line per criterion, nonzero exit if any
// fail. Criterion runtimes are part of the budget and are enforced.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hovd/estimators.hpp"
#include "hovd/harness.hpp"
#include "hovd/mdp.hpp"
#include "hovd/metagrad.hpp"
#include "hovd/oracle.hpp"
#include "hovd/tmaml.hpp"

namespace {

constexpr std::uint64_t kSeed = 17;

struct Criterion {
  bool ok = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      if (!detail.empty()) {
        detail += "; ";
      }
      detail += "FAILED: " + what;
    }
  }

  void note(const std::string& what) {
    if (!detail.empty()) {
      detail += "; ";
    }
    detail += what;
  }
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

double linf(const std::vector<double>& a) {
  double m = 0.0;
  for (const double x : a) {
    m = std::max(m, std::abs(x));
  }
  return m;
}

double norm2(const std::vector<double>& a) {
  double acc = 0.0;
  for (const double x : a) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

hovd::PolicyParams random_logits(int num_states, int num_actions, double scale,
                                 std::uint64_t seed) {
  hovd::PolicyParams theta;
  theta.num_states = num_states;
  theta.num_actions = num_actions;
  theta.values.resize(static_cast<std::size_t>(num_states * num_actions));
  std::mt19937_64 rng = hovd::make_stream({seed, 0xacce9ULL});
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : theta.values) {
    v = normal(rng);
  }
  return theta;
}

// --- criteria ---

void criterion_dr_unbiased(Criterion& c) {
  const hovd::TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 4, 0.5, kSeed);
  const hovd::EstimatorConfig dr = hovd::parse_estimator_name("dr");
  double worst = 0.0;
  for (const double eps : {0.0, 0.3, 0.7}) {
    std::mt19937_64 rng = hovd::make_stream({kSeed, 1, hovd::double_bits(eps)});
    const hovd::OffPolicyPair pair = hovd::make_offpolicy_pair(3, 2, eps, rng);
    const hovd::DerivativeReport truth = hovd::exact_value_dp(mdp, pair.theta);
    const hovd::DerivativeReport expected =
        hovd::exact_expected_estimate(mdp, pair.theta, pair.behavior, dr);
    worst = std::max(worst, std::abs(expected.value - truth.value));
    worst = std::max(worst, max_abs_diff(expected.grad, truth.grad));
    worst = std::max(worst, max_abs_diff(expected.hess, truth.hess));
  }
  c.require(worst <= 1e-8, "expected DR derivative deviates by " + fmt(worst));
  c.note("max deviation " + fmt(worst) + " over mixtures {0, 0.3, 0.7}");
}

void criterion_taylor_orders(Criterion& c) {
  const hovd::TabularMdp mdp = hovd::generate_random_mdp(3, 2, 0.9, 4, 0.5, kSeed);
  std::mt19937_64 rng = hovd::make_stream({kSeed, 2});
  const hovd::OffPolicyPair pair = hovd::make_offpolicy_pair(3, 2, 0.0, rng);
  const hovd::DerivativeReport truth = hovd::exact_value_dp(mdp, pair.theta);

  const hovd::DerivativeReport order1 = hovd::exact_expected_estimate(
      mdp, pair.theta, pair.behavior, hovd::parse_estimator_name("taypo-1"));
  const double grad1 = max_abs_diff(order1.grad, truth.grad);
  c.require(grad1 <= 1e-8, "order-1 expected gradient off by " + fmt(grad1));

  const hovd::DerivativeReport order2 = hovd::exact_expected_estimate(
      mdp, pair.theta, pair.behavior, hovd::parse_estimator_name("taypo-2"));
  const double hess2 = max_abs_diff(order2.hess, truth.hess);
  c.require(hess2 <= 1e-8, "order-2 expected Hessian off by " + fmt(hess2));

  std::vector<double> bias(order1.hess.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    bias[i] = order1.hess[i] - truth.hess[i];
  }
  const double bias_norm = norm2(bias);
  c.require(bias_norm > 1e-4, "order-1 Hessian bias norm only " + fmt(bias_norm));
  c.note("grad dev " + fmt(grad1) + ", order-2 hess dev " + fmt(hess2) +
         ", order-1 hess bias " + fmt(bias_norm));
}

void criterion_dr_recursions(Criterion& c) {
  double worst = 0.0;
  for (int m = 0; m < 5; ++m) {
    const hovd::TabularMdp mdp = hovd::generate_random_mdp(
        4, 3, 0.9, 6, 0.5, kSeed + 10 + static_cast<std::uint64_t>(m));
    std::mt19937_64 rng = hovd::make_stream({kSeed, 3, static_cast<std::uint64_t>(m)});
    const hovd::OffPolicyPair pair = hovd::make_offpolicy_pair(4, 3, 0.5, rng);
    const hovd::CriticTable critic =
        hovd::resolve_critic(mdp, hovd::CriticKind::ExactQMu, pair.theta, pair.behavior);
    const hovd::EvalContext ctx = hovd::make_eval_context(pair.theta, mdp.gamma, critic, false);
    for (int i = 0; i < 20; ++i) {
      const hovd::Trajectory traj = hovd::sample_trajectory(mdp, pair.behavior, -1, rng);
      const hovd::Taylor2Scalar forward = hovd::eval_dr(ctx, traj);
      const hovd::DrDerivatives analytic =
          hovd::dr_derivatives_analytic(pair.theta, mdp.gamma, critic, traj, false);
      worst = std::max(worst, std::abs(forward.value() - analytic.value));
      worst = std::max(worst, max_abs_diff(forward.grad_vector(), analytic.grad));
      worst = std::max(worst, max_abs_diff(forward.hess_dense(), analytic.hess));
    }
  }
  c.require(worst <= 1e-10, "recursion/forward-mode gap " + fmt(worst));
  c.note("max gap " + fmt(worst) + " over 100 trajectories, 5 MDPs");
}

void criterion_residual_decay(Criterion& c) {
  const hovd::TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.8, 6, 0.5, kSeed + 20);
  std::mt19937_64 rng = hovd::make_stream({kSeed, 4});
  const hovd::OffPolicyPair pair = hovd::make_offpolicy_pair(2, 2, 0.2, rng);
  const double gap = hovd::l1_distance(hovd::policy_table(pair.theta), pair.behavior);
  const double radius = (1.0 - mdp.gamma) / mdp.gamma;
  c.require(gap < radius,
            "policy gap " + fmt(gap) + " not inside the contraction radius " + fmt(radius));

  const hovd::DerivativeReport truth = hovd::exact_value_dp(mdp, pair.theta);
  const hovd::IncrementTable table =
      hovd::exact_increments(mdp, pair.theta, pair.behavior, mdp.horizon);
  double prev = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (std::size_t k = 0; k < table.partial_sums.size(); ++k) {
    const double residual = std::abs(truth.value - table.partial_sums[k]);
    if (residual > prev + 1e-12) {
      monotone = false;
    }
    prev = residual;
  }
  const double final_residual = std::abs(truth.value - table.partial_sums.back());
  c.require(monotone, "residuals increased along the expansion order");
  c.require(final_residual < 1e-6, "full-order residual " + fmt(final_residual));
  c.note("policy gap " + fmt(gap) + ", final residual " + fmt(final_residual));
}

void criterion_surrogate_hessian(Criterion& c) {
  hovd::TabularMdp tiny;
  tiny.num_states = 1;
  tiny.num_actions = 2;
  tiny.gamma = 1.0;
  tiny.horizon = 1;
  tiny.start_state = 0;
  tiny.transitions = {1.0, 1.0};
  tiny.rewards = {0.0, 0.0};
  tiny.validate();
  hovd::PolicyParams uniform;
  uniform.num_states = 1;
  uniform.num_actions = 2;
  uniform.values = {0.0, 0.0};
  const hovd::TmamlBiasReport tiny_report =
      hovd::tmaml_bias_report(tiny, uniform, hovd::BaselineTable::constant(1, 1.0));
  const std::vector<double> want = {0.5, -0.5, -0.5, 0.5};
  const double dev = max_abs_diff(tiny_report.expected_hessian, want);
  c.require(dev <= 1e-10, "closed-case expected Hessian off by " + fmt(dev));
  c.require(tiny_report.cross_term_norm <= 1e-10,
            "cross-term expectation norm " + fmt(tiny_report.cross_term_norm));

  const hovd::TabularMdp mdp = hovd::generate_random_mdp(2, 2, 1.0, 3, 0.5, kSeed + 30);
  const hovd::PolicyParams theta = random_logits(2, 2, 0.5, kSeed + 30);
  const hovd::TmamlBiasReport report =
      hovd::tmaml_bias_report(mdp, theta, hovd::BaselineTable::constant(2, 1.0));
  c.require(report.expected_hessian_norm > 1e-3,
            "generic expected Hessian norm only " + fmt(report.expected_hessian_norm));
  c.require(report.cross_term_norm <= 1e-10,
            "generic cross-term norm " + fmt(report.cross_term_norm));
  c.note("closed-case dev " + fmt(dev) + ", generic Hessian norm " +
         fmt(report.expected_hessian_norm));
}

struct AggStat {
  double mean = 0.0;
  double sem = 0.0;
};

AggStat find_agg(const hovd::SweepResult& result, double sweep_value, const std::string& estimator,
                 int order) {
  AggStat stat;
  bool found = false;
  for (std::size_t i = 0; i + 1 < result.rows.size(); ++i) {
    const hovd::SweepRow& row = result.rows[i];
    if (row.seed == "mean" && row.sweep_value == sweep_value && row.estimator == estimator &&
        row.derivative_order == order) {
      stat.mean = row.accuracy;
      stat.sem = result.rows[i + 1].accuracy;
      found = true;
      break;
    }
  }
  if (!found) {
    throw std::runtime_error("aggregate row missing for " + estimator);
  }
  return stat;
}

double pooled(const AggStat& a, const AggStat& b) {
  return std::sqrt(a.sem * a.sem + b.sem * b.sem);
}

void criterion_mismatch_sweep(Criterion& c) {
  hovd::ExperimentConfig config;
  config.seed = kSeed;
  const hovd::SweepResult result = hovd::run_offpolicy_sweep(config);

  const AggStat t1 = find_agg(result, 0.0, "taypo-1", 2);
  const AggStat t2 = find_agg(result, 0.0, "taypo-2", 2);
  const AggStat dr0 = find_agg(result, 0.0, "dr", 2);
  c.require(t2.mean - t1.mean > 2.0 * pooled(t1, t2),
            "on-policy Hessian: order-2 (" + fmt(t2.mean) + ") does not beat order-1 (" +
                fmt(t1.mean) + ") by 2 pooled sems");
  c.require(dr0.mean - t1.mean > 2.0 * pooled(t1, dr0),
            "on-policy Hessian: dr (" + fmt(dr0.mean) + ") does not beat order-1 (" +
                fmt(t1.mean) + ") by 2 pooled sems");

  for (const double eps : config.epsilon_grid) {
    const AggStat is = find_agg(result, eps, "step-is", 1);
    const AggStat dr = find_agg(result, eps, "dr", 1);
    c.require(is.mean < dr.mean, "gradient: step-is (" + fmt(is.mean) + ") >= dr (" +
                                     fmt(dr.mean) + ") at mixture " + fmt(eps));
  }

  for (const double eps : config.epsilon_grid) {
    if (eps < 0.3) {
      continue;
    }
    const AggStat capped = find_agg(result, eps, "truncated-dr", 2);
    const AggStat dr = find_agg(result, eps, "dr", 2);
    c.require(capped.mean < dr.mean, "Hessian: truncated-dr (" + fmt(capped.mean) +
                                         ") >= dr (" + fmt(dr.mean) + ") at mixture " + fmt(eps));
  }
  c.note("on-policy Hessian means: taypo-1 " + fmt(t1.mean) + ", taypo-2 " + fmt(t2.mean) +
         ", dr " + fmt(dr0.mean));
}

void criterion_sample_crossover(Criterion& c) {
  hovd::ExperimentConfig config;
  config.seed = kSeed;
  config.epsilon = 0.5;
  config.sample_grid = {10, 4000};
  config.estimators = {"taypo-1", "taypo-2"};
  const hovd::SweepResult result = hovd::run_sample_sweep(config);

  const AggStat small1 = find_agg(result, 10.0, "taypo-1", 2);
  const AggStat small2 = find_agg(result, 10.0, "taypo-2", 2);
  c.require(small1.mean >= small2.mean - 2.0 * pooled(small1, small2),
            "at 10 samples order-1 (" + fmt(small1.mean) + ") below order-2 (" +
                fmt(small2.mean) + ") minus 2 pooled sems");

  const AggStat big1 = find_agg(result, 4000.0, "taypo-1", 2);
  const AggStat big2 = find_agg(result, 4000.0, "taypo-2", 2);
  c.require(big2.mean > big1.mean + 2.0 * pooled(big1, big2),
            "at 4000 samples order-2 (" + fmt(big2.mean) + ") does not beat order-1 (" +
                fmt(big1.mean) + ") by 2 pooled sems");
  c.note("Hessian means at N=10: " + fmt(small1.mean) + " vs " + fmt(small2.mean) +
         "; at N=4000: " + fmt(big1.mean) + " vs " + fmt(big2.mean));
}

void criterion_meta_gradient(Criterion& c) {
  const hovd::TabularMdp mdp = hovd::generate_random_mdp(2, 2, 0.9, 3, 0.5, kSeed + 40);
  const hovd::PolicyParams theta = random_logits(2, 2, 0.4, kSeed + 40);
  const double eta = 0.05;
  const std::vector<double> analytic = hovd::exact_meta_gradient(mdp, theta, eta);
  const double h = 1e-5;
  const double scale = std::max(norm2(analytic), 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    hovd::PolicyParams plus = theta;
    hovd::PolicyParams minus = theta;
    plus.values[i] += h;
    minus.values[i] -= h;
    const double fd = (hovd::exact_post_adaptation_value(mdp, plus, eta, -1) -
                       hovd::exact_post_adaptation_value(mdp, minus, eta, -1)) /
                      (2.0 * h);
    worst = std::max(worst, std::abs(fd - analytic[i]) / scale);
  }
  c.require(worst <= 1e-4, "relative deviation " + fmt(worst));
  c.note("max relative deviation from central differences " + fmt(worst));
}

void criterion_autodiff_soundness(Criterion& c) {
  const std::vector<std::string> names = {"step-is", "dr",      "truncated-dr",
                                          "taypo-1", "taypo-2", "mixture"};
  double worst_grad = 0.0;
  double worst_hess = 0.0;
  std::mt19937_64 dummy(0);
  for (int i = 0; i < 100; ++i) {
    const hovd::TabularMdp mdp = hovd::generate_random_mdp(
        2, 2, 0.9, 5, 0.5, kSeed + 50 + static_cast<std::uint64_t>(i % 5));
    std::mt19937_64 rng = hovd::make_stream({kSeed, 5, static_cast<std::uint64_t>(i)});
    const hovd::OffPolicyPair pair = hovd::make_offpolicy_pair(2, 2, 0.4, rng);
    const hovd::CriticTable critic =
        hovd::resolve_critic(mdp, hovd::CriticKind::ExactQMu, pair.theta, pair.behavior);
    const hovd::Trajectory traj = hovd::sample_trajectory(mdp, pair.behavior, -1, rng);

    hovd::EstimatorConfig config =
        hovd::parse_estimator_name(names[static_cast<std::size_t>(i) % names.size()]);
    // Keep the ratio cap clear of the sampled ratios so the capped estimator
    // stays differentiable at the evaluation point.
    config.rho_bar = 5.0;

    const auto value_at = [&](const hovd::PolicyParams& t) {
      const hovd::EvalContext ctx = hovd::make_eval_context(t, mdp.gamma, critic, false);
      return hovd::eval_estimator(ctx, traj, config, dummy).value();
    };

    const hovd::EvalContext ctx =
        hovd::make_eval_context(pair.theta, mdp.gamma, critic, false);
    const hovd::Taylor2Scalar estimate = hovd::eval_estimator(ctx, traj, config, dummy);
    const std::vector<double> grad = estimate.grad_vector();
    const std::vector<double> hess = estimate.hess_dense();
    const int d = pair.theta.dim();

    for (int a = 0; a < d; ++a) {
      for (int b = 0; b < d; ++b) {
        if (estimate.hess(a, b) != estimate.hess(b, a)) {
          c.require(false, "Hessian storage asymmetry");
        }
      }
    }

    const double hg = 1e-5;
    const double gdenom = std::max(linf(grad), 1e-2);
    for (int a = 0; a < d; ++a) {
      hovd::PolicyParams plus = pair.theta;
      hovd::PolicyParams minus = pair.theta;
      plus.values[static_cast<std::size_t>(a)] += hg;
      minus.values[static_cast<std::size_t>(a)] -= hg;
      const double fd = (value_at(plus) - value_at(minus)) / (2.0 * hg);
      worst_grad = std::max(worst_grad,
                            std::abs(fd - grad[static_cast<std::size_t>(a)]) / gdenom);
    }

    const double hh = 1e-4;
    const double hdenom = std::max(linf(hess), 1e-2);
    const double f0 = value_at(pair.theta);
    for (int a = 0; a < d; ++a) {
      for (int b = a; b < d; ++b) {
        double fd = 0.0;
        if (a == b) {
          hovd::PolicyParams plus = pair.theta;
          hovd::PolicyParams minus = pair.theta;
          plus.values[static_cast<std::size_t>(a)] += hh;
          minus.values[static_cast<std::size_t>(a)] -= hh;
          fd = (value_at(plus) - 2.0 * f0 + value_at(minus)) / (hh * hh);
        } else {
          hovd::PolicyParams pp = pair.theta, pm = pair.theta, mp = pair.theta, mm = pair.theta;
          pp.values[static_cast<std::size_t>(a)] += hh;
          pp.values[static_cast<std::size_t>(b)] += hh;
          pm.values[static_cast<std::size_t>(a)] += hh;
          pm.values[static_cast<std::size_t>(b)] -= hh;
          mp.values[static_cast<std::size_t>(a)] -= hh;
          mp.values[static_cast<std::size_t>(b)] += hh;
          mm.values[static_cast<std::size_t>(a)] -= hh;
          mm.values[static_cast<std::size_t>(b)] -= hh;
          fd = (value_at(pp) - value_at(pm) - value_at(mp) + value_at(mm)) / (4.0 * hh * hh);
        }
        worst_hess = std::max(
            worst_hess,
            std::abs(fd - hess[static_cast<std::size_t>(a * d + b)]) / hdenom);
      }
    }
  }
  c.require(worst_grad <= 1e-5, "gradient relative deviation " + fmt(worst_grad));
  c.require(worst_hess <= 1e-3, "Hessian relative deviation " + fmt(worst_hess));
  c.note("worst relative deviation: grad " + fmt(worst_grad) + ", hess " + fmt(worst_hess));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void criterion_determinism(Criterion& c, const std::string& cli_path) {
  if (cli_path.empty()) {
    // Fall back to the library entry point the subcommand wraps.
    hovd::ExperimentConfig config;
    config.seed = 7;
    config.num_states = 4;
    config.num_actions = 3;
    config.horizon = 8;
    config.alpha = 0.5;
    config.num_samples = 50;
    config.num_seeds = 3;
    config.epsilon_grid = {0.0, 0.3, 0.6};
    config.estimators = {"step-is", "dr", "taypo-2"};
    std::vector<std::string> outputs;
    for (const int workers : {1, 4, 8}) {
      config.workers = workers;
      outputs.push_back(hovd::sweep_to_csv(hovd::run_offpolicy_sweep(config)));
    }
    c.require(outputs[0] == outputs[1] && outputs[0] == outputs[2],
              "CSV differs across worker counts (library path)");
    c.note("library path only: the tool binary was not supplied");
    return;
  }

  std::vector<std::string> outputs;
  for (const int workers : {1, 4, 8}) {
    const std::string out = "acceptance_workers_" + std::to_string(workers) + ".csv";
    const std::string cmd = "\"" + cli_path +
                            "\" sweep-offpolicy --seed 7 --num-states 4 --num-actions 3"
                            " --horizon 8 --alpha-dirichlet 0.5 --num-samples 50 --num-seeds 3"
                            " --epsilon-grid 0,0.3,0.6 --estimators step-is,dr,taypo-2"
                            " --workers " +
                            std::to_string(workers) + " --out " + out + " > /dev/null";
    const int rc = std::system(cmd.c_str());
    c.require(rc == 0, "tool invocation failed with code " + std::to_string(rc));
    outputs.push_back(read_file(out));
    std::remove(out.c_str());
  }
  c.require(!outputs[0].empty(), "tool produced an empty CSV");
  c.require(outputs[0] == outputs[1] && outputs[0] == outputs[2],
            "CSV bytes differ across worker counts 1/4/8");
  c.note("three tool runs, " + std::to_string(outputs[0].size()) + " bytes each");
}

}  // namespace

int main(int argc, char** argv) {
  const std::string cli_path = argc > 1 ? argv[1] : "";

  struct Entry {
    int id;
    const char* label;
    double budget_seconds;
    std::function<void(Criterion&)> body;
  };
  const std::vector<Entry> entries = {
      {1, "expected DR gradient and Hessian equal the oracle on- and off-policy", 5.0,
       criterion_dr_unbiased},
      {2, "expansion estimates are unbiased to their order, order-1 Hessian is not", 5.0,
       criterion_taylor_orders},
      {3, "closed-form DR derivative recursions match forward-mode differentiation", 10.0,
       criterion_dr_recursions},
      {4, "expansion residuals decay monotonically inside the contraction radius", 5.0,
       criterion_residual_decay},
      {5, "stop-gradient surrogate keeps its predicted nonzero expected Hessian", 2.0,
       criterion_surrogate_hessian},
      {6, "full-scale mismatch sweep reproduces the expected accuracy ordering", 900.0,
       criterion_mismatch_sweep},
      {7, "sample-size crossover between first- and second-order expansions", 900.0,
       criterion_sample_crossover},
      {8, "meta gradient matches finite differences of the adapted value", 5.0,
       criterion_meta_gradient},
      {9, "forward-mode derivatives match finite differences across estimators", 30.0,
       criterion_autodiff_soundness},
      {10, "sweep CSV bytes are identical across worker counts 1, 4 and 8", 300.0,
       [&cli_path](Criterion& c) { criterion_determinism(c, cli_path); }},
  };

  int failures = 0;
  for (const Entry& entry : entries) {
    Criterion c;
    const auto start = std::chrono::steady_clock::now();
    try {
      entry.body(c);
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (seconds > entry.budget_seconds) {
      c.require(false, "runtime " + fmt(seconds) + " s exceeds the " +
                           fmt(entry.budget_seconds) + " s budget");
    }
    std::printf("[%s] criterion %2d: %s (%s; %.1f s)\n", c.ok ? "PASS" : "FAIL", entry.id,
                entry.label, c.detail.empty() ? "ok" : c.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!c.ok) {
      ++failures;
    }
  }
  if (failures > 0) {
    std::printf("%d of %zu criteria failed\n", failures, entries.size());
    return 1;
  }
  std::printf("all %zu criteria passed\n", entries.size());
  return 0;
}
