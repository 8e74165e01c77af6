#include "hovd/harness.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "hovd/kernels.hpp"
#include "hovd/metagrad.hpp"
#include "hovd/oracle.hpp"
#include "hovd/tmaml.hpp"

namespace hovd {

namespace {

std::string fmt(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

void parallel_for(int workers, std::size_t count, const std::function<void(std::size_t)>& body) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      body(i);
    }
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) {
        return;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) {
          first_error = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  const int n_threads = std::min<std::size_t>(static_cast<std::size_t>(workers), count);
  threads.reserve(static_cast<std::size_t>(n_threads));
  for (int w = 0; w < n_threads; ++w) {
    threads.emplace_back(worker);
  }
  for (auto& t : threads) {
    t.join();
  }
  if (first_error) {
    std::rethrow_exception(first_error);
  }
}

}  // namespace

double cosine_accuracy(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) {
    throw std::invalid_argument("cosine_accuracy: size mismatch");
  }
  double dot = 0.0;
  double n_est = 0.0;
  double n_ref = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    dot += estimate[i] * reference[i];
    n_est += estimate[i] * estimate[i];
    n_ref += reference[i] * reference[i];
  }
  if (n_ref == 0.0) {
    throw std::invalid_argument("cosine_accuracy: reference direction has zero norm");
  }
  if (n_est == 0.0) {
    std::fprintf(stderr, "cosine_accuracy: zero-norm estimate scored as 0\n");
    return 0.0;
  }
  return dot / (std::sqrt(n_est) * std::sqrt(n_ref));
}

namespace {

enum class SweepAxis { Epsilon, Samples };

constexpr std::uint64_t kMdpTag = 0x6d6470ULL;
constexpr std::uint64_t kPairTag = 0x70616972ULL;
constexpr std::uint64_t kEpsilonTag = 0x65707332ULL;
constexpr std::uint64_t kSamplesTag = 0x6e73616dULL;

struct CellResult {
  double l1 = 0.0;
  // [estimator][0] = gradient accuracy, [estimator][1] = Hessian accuracy
  std::vector<std::array<double, 2>> accuracy;
};

CellResult compute_cell(const ExperimentConfig& config,
                        const std::vector<EstimatorConfig>& estimators, SweepAxis axis,
                        double axis_value, int seed_idx) {
  const double eps = axis == SweepAxis::Epsilon ? axis_value : config.epsilon;
  const int n_samples =
      axis == SweepAxis::Samples ? static_cast<int>(axis_value) : config.num_samples;
  const std::uint64_t axis_tag = axis == SweepAxis::Epsilon ? kEpsilonTag : kSamplesTag;
  const std::uint64_t axis_key = axis == SweepAxis::Epsilon
                                     ? double_bits(axis_value)
                                     : static_cast<std::uint64_t>(n_samples);

  const TabularMdp mdp = generate_random_mdp(
      config.num_states, config.num_actions, config.gamma, config.horizon, config.alpha,
      stable_hash({config.seed, kMdpTag, static_cast<std::uint64_t>(seed_idx)}));
  std::mt19937_64 pair_rng =
      make_stream({config.seed, kPairTag, static_cast<std::uint64_t>(seed_idx)});
  const OffPolicyPair pair =
      make_offpolicy_pair(config.num_states, config.num_actions, eps, pair_rng);

  CellResult result;
  result.l1 = l1_distance(policy_table(pair.theta), pair.behavior);

  const DerivativeReport truth = exact_value_dp(mdp, pair.theta);
  const CriticTable critic = resolve_critic(mdp, config.critic, pair.theta, pair.behavior);
  EvalContext ctx = make_eval_context(pair.theta, mdp.gamma, critic, false);
  for (const EstimatorConfig& e : estimators) {
    if (e.taypo_advantage) {
      attach_exact_behavior_values(ctx, mdp, pair.behavior);
      break;
    }
  }

  std::vector<Taylor2Scalar> sums(estimators.size(),
                                  Taylor2Scalar::constant(0.0, pair.theta.dim()));
  for (int j = 0; j < n_samples; ++j) {
    std::mt19937_64 rng = make_stream({config.seed, axis_tag, axis_key,
                                       static_cast<std::uint64_t>(seed_idx),
                                       static_cast<std::uint64_t>(j)});
    const Trajectory traj = sample_trajectory(mdp, pair.behavior, -1, rng);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      sums[e] += eval_estimator(ctx, traj, estimators[e], rng);
    }
  }
  result.accuracy.resize(estimators.size());
  for (std::size_t e = 0; e < estimators.size(); ++e) {
    sums[e] *= 1.0 / static_cast<double>(n_samples);
    result.accuracy[e][0] = cosine_accuracy(sums[e].grad(), truth.grad);
    const std::vector<double> hess = sums[e].hess_dense();
    result.accuracy[e][1] = cosine_accuracy(hess, truth.hess);
  }
  return result;
}

std::vector<EstimatorConfig> build_estimators(const ExperimentConfig& config) {
  if (config.estimators.empty()) {
    throw std::invalid_argument("sweep: no estimators configured");
  }
  std::vector<EstimatorConfig> out;
  out.reserve(config.estimators.size());
  for (const std::string& name : config.estimators) {
    EstimatorConfig e = parse_estimator_name(name);
    e.rho_bar = config.rho_bar;
    e.beta = config.beta;
    e.critic = config.critic;
    // A nonzero critic lets the expansion estimators weight their correction
    // terms with exact behavior advantages; a zero critic leaves them on raw
    // tail returns.
    if (e.kind == EstimatorKind::Taypo || e.kind == EstimatorKind::Mixture) {
      e.taypo_advantage = config.critic != CriticKind::Zero;
    }
    out.push_back(e);
  }
  return out;
}

std::vector<int> emitted_orders(const ExperimentConfig& config) {
  switch (config.derivative_order) {
    case 0:
      return {1, 2};
    case 1:
      return {1};
    case 2:
      return {2};
    default:
      throw std::invalid_argument("sweep: derivative order must be 0 (both), 1 or 2");
  }
}

SweepResult run_sweep(const ExperimentConfig& config, SweepAxis axis) {
  if (config.num_seeds < 1 || config.num_samples < 1) {
    throw std::invalid_argument("sweep: need at least one seed and one sample");
  }
  const std::vector<EstimatorConfig> estimators = build_estimators(config);
  const std::vector<int> orders = emitted_orders(config);
  const char* axis_name = axis == SweepAxis::Epsilon ? "epsilon" : "num_samples";

  std::vector<double> grid;
  if (axis == SweepAxis::Epsilon) {
    grid = config.epsilon_grid;
  } else {
    grid.reserve(config.sample_grid.size());
    for (int n : config.sample_grid) {
      grid.push_back(static_cast<double>(n));
    }
  }
  if (grid.empty()) {
    throw std::invalid_argument("sweep: empty grid");
  }

  const std::size_t n_cells = grid.size() * static_cast<std::size_t>(config.num_seeds);
  std::vector<CellResult> cells(n_cells);
  parallel_for(config.workers, n_cells, [&](std::size_t i) {
    const std::size_t gi = i / static_cast<std::size_t>(config.num_seeds);
    const int seed_idx = static_cast<int>(i % static_cast<std::size_t>(config.num_seeds));
    cells[i] = compute_cell(config, estimators, axis, grid[gi], seed_idx);
  });

  // Per-seed rows in a fixed order, then the aggregate rows.
  SweepResult result;
  const std::string critic_name = critic_kind_name(config.critic);
  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double eps = axis == SweepAxis::Epsilon ? grid[gi] : config.epsilon;
    const int n_samples =
        axis == SweepAxis::Samples ? static_cast<int>(grid[gi]) : config.num_samples;
    for (int s = 0; s < config.num_seeds; ++s) {
      const CellResult& cell = cells[gi * static_cast<std::size_t>(config.num_seeds) +
                                     static_cast<std::size_t>(s)];
      for (std::size_t e = 0; e < estimators.size(); ++e) {
        for (int order : orders) {
          SweepRow row;
          row.sweep_axis = axis_name;
          row.sweep_value = grid[gi];
          row.seed = std::to_string(s);
          row.estimator = config.estimators[e];
          row.critic = critic_name;
          row.derivative_order = order;
          row.accuracy = cell.accuracy[e][static_cast<std::size_t>(order - 1)];
          row.n_samples = n_samples;
          row.epsilon_mixture = eps;
          row.l1_distance = cell.l1;
          result.rows.push_back(std::move(row));
        }
      }
    }
  }

  for (std::size_t gi = 0; gi < grid.size(); ++gi) {
    const double eps = axis == SweepAxis::Epsilon ? grid[gi] : config.epsilon;
    const int n_samples =
        axis == SweepAxis::Samples ? static_cast<int>(grid[gi]) : config.num_samples;
    double l1_mean = 0.0;
    for (int s = 0; s < config.num_seeds; ++s) {
      l1_mean += cells[gi * static_cast<std::size_t>(config.num_seeds) +
                       static_cast<std::size_t>(s)]
                     .l1;
    }
    l1_mean /= static_cast<double>(config.num_seeds);
    for (std::size_t e = 0; e < estimators.size(); ++e) {
      for (int order : orders) {
        double mean = 0.0;
        for (int s = 0; s < config.num_seeds; ++s) {
          mean += cells[gi * static_cast<std::size_t>(config.num_seeds) +
                        static_cast<std::size_t>(s)]
                      .accuracy[e][static_cast<std::size_t>(order - 1)];
        }
        mean /= static_cast<double>(config.num_seeds);
        double var = 0.0;
        for (int s = 0; s < config.num_seeds; ++s) {
          const double d = cells[gi * static_cast<std::size_t>(config.num_seeds) +
                                 static_cast<std::size_t>(s)]
                               .accuracy[e][static_cast<std::size_t>(order - 1)] -
                           mean;
          var += d * d;
        }
        const double stderr_val =
            config.num_seeds > 1
                ? std::sqrt(var / static_cast<double>(config.num_seeds - 1)) /
                      std::sqrt(static_cast<double>(config.num_seeds))
                : 0.0;

        SweepRow row;
        row.sweep_axis = axis_name;
        row.sweep_value = grid[gi];
        row.estimator = config.estimators[e];
        row.critic = critic_name;
        row.derivative_order = order;
        row.n_samples = n_samples;
        row.epsilon_mixture = eps;
        row.l1_distance = l1_mean;
        row.seed = "mean";
        row.accuracy = mean;
        result.rows.push_back(row);
        row.seed = "stderr";
        row.accuracy = stderr_val;
        result.rows.push_back(std::move(row));
      }
    }
  }
  return result;
}

}  // namespace

SweepResult run_offpolicy_sweep(const ExperimentConfig& config) {
  return run_sweep(config, SweepAxis::Epsilon);
}

SweepResult run_sample_sweep(const ExperimentConfig& config) {
  return run_sweep(config, SweepAxis::Samples);
}

std::string sweep_to_csv(const SweepResult& result) {
  std::string out =
      "sweep_axis,sweep_value,seed,estimator,critic,derivative_order,accuracy,n_samples,"
      "epsilon_mixture,l1_distance\n";
  for (const SweepRow& row : result.rows) {
    out += row.sweep_axis;
    out += ',';
    out += fmt(row.sweep_value);
    out += ',';
    out += row.seed;
    out += ',';
    out += row.estimator;
    out += ',';
    out += row.critic;
    out += ',';
    out += std::to_string(row.derivative_order);
    out += ',';
    out += fmt(row.accuracy);
    out += ',';
    out += std::to_string(row.n_samples);
    out += ',';
    out += fmt(row.epsilon_mixture);
    out += ',';
    out += fmt(row.l1_distance);
    out += '\n';
  }
  return out;
}

void write_sweep_csv(const SweepResult& result, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("write_sweep_csv: cannot open " + path + " for writing");
  }
  out << sweep_to_csv(result);
}

void write_gnuplot_script(const ExperimentConfig& config, const std::string& csv_path,
                          const std::string& script_path) {
  std::ofstream out(script_path);
  if (!out) {
    throw std::runtime_error("write_gnuplot_script: cannot open " + script_path + " for writing");
  }
  out << "# Plots the aggregate rows of " << csv_path << ".\n";
  out << "# Mean rows and their stderr rows are adjacent, so the awk filter\n";
  out << "# below pairs them into 'sweep_value mean stderr' triples.\n";
  out << "set datafile separator \",\"\n";
  out << "set key bottom left\n";
  out << "set ylabel \"cosine accuracy\"\n";
  out << "set yrange [-0.2:1.05]\n";
  for (const int order : {1, 2}) {
    if (config.derivative_order != 0 && config.derivative_order != order) {
      continue;
    }
    out << "set xlabel \"sweep value\"\n";
    out << "set title \"" << (order == 1 ? "gradient" : "Hessian") << " estimate accuracy\"\n";
    out << "plot ";
    bool first = true;
    for (const std::string& name : config.estimators) {
      if (!first) {
        out << ", \\\n     ";
      }
      first = false;
      out << "\"< awk -F, '$3==\\\"mean\\\" && $4==\\\"" << name << "\\\" && $6==" << order
          << " {m=$7; v=$2} $3==\\\"stderr\\\" && $4==\\\"" << name << "\\\" && $6==" << order
          << " {print v, m, $7}' " << csv_path << "\" using 1:2:3 with yerrorlines title \""
          << name << "\"";
    }
    out << "\n";
    out << "pause -1 \"press enter for the next plot\"\n";
  }
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  ExperimentConfig config;
  config.seed = j.value("seed", config.seed);
  config.num_states = j.value("num_states", config.num_states);
  config.num_actions = j.value("num_actions", config.num_actions);
  config.gamma = j.value("gamma", config.gamma);
  config.horizon = j.value("horizon", config.horizon);
  config.alpha = j.value("alpha_dirichlet", config.alpha);
  config.num_samples = j.value("num_samples", config.num_samples);
  config.num_seeds = j.value("num_seeds", config.num_seeds);
  config.epsilon = j.value("epsilon", config.epsilon);
  if (j.contains("epsilon_grid")) {
    config.epsilon_grid = j.at("epsilon_grid").get<std::vector<double>>();
  }
  if (j.contains("sample_grid")) {
    config.sample_grid = j.at("sample_grid").get<std::vector<int>>();
  }
  if (j.contains("estimators")) {
    config.estimators = j.at("estimators").get<std::vector<std::string>>();
  }
  if (j.contains("critic")) {
    config.critic = parse_critic_name(j.at("critic").get<std::string>());
  }
  config.derivative_order = j.value("order", config.derivative_order);
  config.rho_bar = j.value("rho_bar", config.rho_bar);
  config.beta = j.value("beta", config.beta);
  config.workers = j.value("workers", config.workers);
  return config;
}

// --- validation suite ---

namespace {

struct Check {
  ValidationEntry entry;

  explicit Check(std::string name) { entry.name = std::move(name); }

  void observe(double err) { entry.max_error = std::max(entry.max_error, std::abs(err)); }

  void finish(double tolerance, std::string details) {
    entry.passed = entry.max_error <= tolerance;
    entry.details = std::move(details);
  }

  // For checks whose point is that a quantity is large, not small.
  void finish_at_least(double observed, double threshold, std::string details) {
    entry.max_error = observed;
    entry.passed = observed >= threshold;
    entry.details = std::move(details);
  }
};

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

double norm2(std::span<const double> a) {
  double acc = 0.0;
  for (double x : a) {
    acc += x * x;
  }
  return std::sqrt(acc);
}

PolicyParams random_logits(int num_states, int num_actions, double scale, std::mt19937_64& rng) {
  PolicyParams theta;
  theta.num_states = num_states;
  theta.num_actions = num_actions;
  theta.values.resize(static_cast<std::size_t>(theta.dim()));
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : theta.values) {
    v = normal(rng);
  }
  return theta;
}

ValidationEntry check_kernel_backends(std::uint64_t seed) {
  Check check("kernel-backends-bitwise");
  const kernels::Ops& scalar = kernels::scalar_ops();
  const kernels::Ops* avx2 = kernels::avx2_ops();
  if (avx2 == nullptr) {
    check.finish(0.0, "no SIMD backend compiled in or supported; scalar only");
    check.entry.passed = true;
    return check.entry;
  }
  std::mt19937_64 rng = make_stream({seed, 0x6b65726eULL});
  std::uniform_real_distribution<double> unif(-2.0, 2.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(rng() % 40);
    const std::size_t p = d * (d + 1) / 2;
    std::vector<double> g(d), u(d), v(d), h1(p), h2(p), x(p), y1(p), y2(p), o1(p), o2(p);
    for (auto* vec : {&g, &u, &v}) {
      for (double& val : *vec) {
        val = unif(rng);
      }
    }
    for (std::size_t i = 0; i < p; ++i) {
      x[i] = unif(rng);
      y1[i] = unif(rng);
      h1[i] = unif(rng);
      y2[i] = y1[i];
      h2[i] = h1[i];
    }
    const double a = unif(rng);
    const double b = unif(rng);
    scalar.axpy(p, a, x.data(), y1.data());
    avx2->axpy(p, a, x.data(), y2.data());
    check.observe(max_abs_diff(y1, y2) == 0.0 ? 0.0 : 1.0);
    scalar.lincomb2(p, a, x.data(), b, h1.data(), o1.data());
    avx2->lincomb2(p, a, x.data(), b, h2.data(), o2.data());
    check.observe(max_abs_diff(o1, o2) == 0.0 ? 0.0 : 1.0);
    scalar.scale(p, b, y1.data());
    avx2->scale(p, b, y2.data());
    check.observe(max_abs_diff(y1, y2) == 0.0 ? 0.0 : 1.0);
    scalar.syr1(d, a, g.data(), h1.data());
    avx2->syr1(d, a, g.data(), h2.data());
    check.observe(max_abs_diff(h1, h2) == 0.0 ? 0.0 : 1.0);
    scalar.syr2(d, b, u.data(), v.data(), h1.data());
    avx2->syr2(d, b, u.data(), v.data(), h2.data());
    check.observe(max_abs_diff(h1, h2) == 0.0 ? 0.0 : 1.0);
  }
  check.finish(0.0, "scalar and avx2 kernels agree bit for bit");
  return check.entry;
}

ValidationEntry check_softmax_derivatives() {
  Check check("softmax-derivative-identities");
  PolicyParams theta;
  theta.num_states = 1;
  theta.num_actions = 2;
  theta.values = {0.0, 0.0};
  const std::vector<Taylor2Scalar> p = policy_probs_taylor2(theta, 0);
  check.observe(p[0].value() - 0.5);
  const Taylor2Scalar lp = log(p[0]);
  check.observe(lp.grad(0) - 0.5);
  check.observe(lp.grad(1) + 0.5);
  check.observe(lp.hess(0, 0) + 0.25);
  check.observe(lp.hess(0, 1) - 0.25);
  check.observe(lp.hess(1, 1) + 0.25);
  Taylor2Scalar total = p[0] + p[1];
  check.observe(total.value() - 1.0);
  for (int i = 0; i < 2; ++i) {
    check.observe(total.grad(i));
    for (int j = 0; j < 2; ++j) {
      check.observe(total.hess(i, j));
    }
  }
  check.finish(1e-12, "uniform two-action softmax: probabilities, log-derivatives, row sums");
  return check.entry;
}

ValidationEntry check_dp_vs_enumeration(std::uint64_t seed) {
  Check check("dp-vs-enumeration");
  std::mt19937_64 rng = make_stream({seed, 0x64703245ULL});
  for (int trial = 0; trial < 3; ++trial) {
    const TabularMdp mdp = generate_random_mdp(3, 2, 0.9, 4, 0.5, stable_hash({seed, 11ULL,
                                               static_cast<std::uint64_t>(trial)}));
    const PolicyParams theta = random_logits(3, 2, 0.7, rng);
    const DerivativeReport dp = exact_value_dp(mdp, theta);
    const DerivativeReport en = exact_value_enumeration(mdp, theta);
    check.observe(dp.value - en.value);
    check.observe(max_abs_diff(dp.grad, en.grad));
    check.observe(max_abs_diff(dp.hess, en.hess));
  }
  check.finish(1e-10, "dynamic program and brute-force enumeration agree");
  return check.entry;
}

ValidationEntry check_estimator_unbiasedness(std::uint64_t seed) {
  Check check("is-dr-unbiased");
  for (const double eps : {0.3, 0.7}) {
    const TabularMdp mdp = generate_random_mdp(3, 2, 0.9, 4, 0.5, stable_hash({seed, 21ULL}));
    std::mt19937_64 rng = make_stream({seed, 22ULL, double_bits(eps)});
    const OffPolicyPair pair = make_offpolicy_pair(3, 2, eps, rng);
    const DerivativeReport truth = exact_value_dp(mdp, pair.theta);
    for (const char* name : {"step-is", "dr"}) {
      EstimatorConfig config = parse_estimator_name(name);
      const DerivativeReport expected =
          exact_expected_estimate(mdp, pair.theta, pair.behavior, config);
      check.observe(expected.value - truth.value);
      check.observe(max_abs_diff(expected.grad, truth.grad));
      check.observe(max_abs_diff(expected.hess, truth.hess));
    }
  }
  check.finish(1e-8, "exact expectations of step-is and dr match the oracle derivatives");
  return check.entry;
}

ValidationEntry check_dr_zero_critic_reduction(std::uint64_t seed) {
  Check check("dr-zero-critic-is-step-is");
  const TabularMdp mdp = generate_random_mdp(3, 2, 0.9, 5, 0.5, stable_hash({seed, 31ULL}));
  std::mt19937_64 rng = make_stream({seed, 32ULL});
  const OffPolicyPair pair = make_offpolicy_pair(3, 2, 0.4, rng);
  const CriticTable zero = CriticTable::zero(3, 2);
  const EvalContext ctx = make_eval_context(pair.theta, mdp.gamma, zero, false);
  for (int i = 0; i < 20; ++i) {
    const Trajectory traj = sample_trajectory(mdp, pair.behavior, -1, rng);
    const Taylor2Scalar dr = eval_dr(ctx, traj);
    const Taylor2Scalar is = eval_step_is(ctx, traj);
    check.observe(dr.value() - is.value());
    check.observe(max_abs_diff(dr.grad(), is.grad()));
    check.observe(max_abs_diff(dr.hess_packed(), is.hess_packed()));
  }
  check.finish(1e-12, "dr with a zero critic reproduces step-is per trajectory");
  return check.entry;
}

ValidationEntry check_taypo_orders(std::uint64_t seed) {
  Check check("taypo-order-unbiasedness");
  const TabularMdp mdp = generate_random_mdp(3, 2, 0.9, 4, 0.5, stable_hash({seed, 41ULL}));
  std::mt19937_64 rng = make_stream({seed, 42ULL});
  const OffPolicyPair pair = make_offpolicy_pair(3, 2, 0.0, rng);  // on-policy
  const DerivativeReport truth = exact_value_dp(mdp, pair.theta);

  EstimatorConfig t1 = parse_estimator_name("taypo-1");
  const DerivativeReport e1 = exact_expected_estimate(mdp, pair.theta, pair.behavior, t1);
  check.observe(e1.value - truth.value);
  check.observe(max_abs_diff(e1.grad, truth.grad));

  EstimatorConfig t2 = parse_estimator_name("taypo-2");
  const DerivativeReport e2 = exact_expected_estimate(mdp, pair.theta, pair.behavior, t2);
  check.observe(e2.value - truth.value);
  check.observe(max_abs_diff(e2.grad, truth.grad));
  check.observe(max_abs_diff(e2.hess, truth.hess));

  std::vector<double> bias(e1.hess.size());
  for (std::size_t i = 0; i < bias.size(); ++i) {
    bias[i] = e1.hess[i] - truth.hess[i];
  }
  const double bias_norm = norm2(bias);
  if (check.entry.max_error <= 1e-8 && bias_norm > 1e-4) {
    check.finish(1e-8, "order-m derivatives unbiased up to the expansion order; order-1 "
                       "Hessian bias norm " +
                           fmt(bias_norm));
  } else {
    check.entry.max_error = std::max(check.entry.max_error, bias_norm > 1e-4 ? 0.0 : 1.0);
    check.finish(1e-8, "expected order-1 Hessian bias norm > 1e-4, got " + fmt(bias_norm));
  }
  return check.entry;
}

ValidationEntry check_dr_recursions(std::uint64_t seed) {
  Check check("dr-derivative-recursions");
  std::mt19937_64 rng = make_stream({seed, 51ULL});
  for (int trial = 0; trial < 5; ++trial) {
    const TabularMdp mdp = generate_random_mdp(4, 3, 0.9, 6, 0.5,
                                               stable_hash({seed, 52ULL,
                                                            static_cast<std::uint64_t>(trial)}));
    const OffPolicyPair pair = make_offpolicy_pair(4, 3, 0.5, rng);
    const CriticTable critic =
        resolve_critic(mdp, CriticKind::ExactQMu, pair.theta, pair.behavior);
    const EvalContext ctx = make_eval_context(pair.theta, mdp.gamma, critic, false);
    for (int i = 0; i < 20; ++i) {
      const Trajectory traj = sample_trajectory(mdp, pair.behavior, -1, rng);
      const Taylor2Scalar auto_diff = eval_dr(ctx, traj);
      const DrDerivatives analytic =
          dr_derivatives_analytic(pair.theta, mdp.gamma, critic, traj, false);
      check.observe(auto_diff.value() - analytic.value);
      check.observe(max_abs_diff(auto_diff.grad_vector(), analytic.grad));
      check.observe(max_abs_diff(auto_diff.hess_dense(), analytic.hess));
    }
  }
  check.finish(1e-10, "closed-form dr gradient/Hessian recursions match forward-mode values");
  return check.entry;
}

ValidationEntry check_residual_decay(std::uint64_t seed) {
  Check check("expansion-residual-decay");
  const TabularMdp mdp = generate_random_mdp(2, 2, 0.8, 6, 0.5, stable_hash({seed, 61ULL}));
  std::mt19937_64 rng = make_stream({seed, 62ULL});
  const OffPolicyPair pair = make_offpolicy_pair(2, 2, 0.2, rng);
  const DerivativeReport truth = exact_value_dp(mdp, pair.theta);
  const IncrementTable table =
      exact_increments(mdp, pair.theta, pair.behavior, mdp.horizon);
  double prev = std::abs(truth.value - table.partial_sums[0]);
  bool monotone = true;
  for (std::size_t k = 1; k < table.partial_sums.size(); ++k) {
    const double residual = std::abs(truth.value - table.partial_sums[k]);
    if (residual > prev + 1e-12) {
      monotone = false;
    }
    prev = residual;
  }
  const double final_residual =
      std::abs(truth.value - table.partial_sums[static_cast<std::size_t>(mdp.horizon)]);
  check.entry.max_error = final_residual;
  check.entry.passed = monotone && final_residual < 1e-6;
  check.entry.details = monotone ? "residuals non-increasing, full-order residual " +
                                       fmt(final_residual)
                                 : "residuals increased along the expansion order";
  return check.entry;
}

ValidationEntry check_subsampled_increments(std::uint64_t seed) {
  Check check("subsampled-increments-unbiased");
  const TabularMdp mdp = generate_random_mdp(2, 2, 0.8, 5, 0.5, stable_hash({seed, 71ULL}));
  std::mt19937_64 rng = make_stream({seed, 72ULL});
  const OffPolicyPair pair = make_offpolicy_pair(2, 2, 0.4, rng);
  const IncrementTable exact = exact_increments(mdp, pair.theta, pair.behavior, 2);
  const CriticTable zero = CriticTable::zero(2, 2);
  const EvalContext ctx = make_eval_context(pair.theta, mdp.gamma, zero, false);

  const int chains = 40000;
  std::vector<double> mean(3, 0.0);
  std::vector<double> m2(3, 0.0);
  for (int c = 0; c < chains; ++c) {
    const Trajectory traj = sample_trajectory(mdp, pair.behavior, -1, rng);
    const std::vector<Taylor2Scalar> inc = taypo_chain_increments(ctx, traj, 2, rng);
    for (int k = 0; k <= 2; ++k) {
      const double x = inc[static_cast<std::size_t>(k)].value();
      const double delta = x - mean[static_cast<std::size_t>(k)];
      mean[static_cast<std::size_t>(k)] += delta / static_cast<double>(c + 1);
      m2[static_cast<std::size_t>(k)] += delta * (x - mean[static_cast<std::size_t>(k)]);
    }
  }
  bool ok = true;
  std::string detail = "per-order |mc - exact| / stderr:";
  for (int k = 0; k <= 2; ++k) {
    const double se = std::sqrt(m2[static_cast<std::size_t>(k)] /
                                static_cast<double>(chains - 1) / static_cast<double>(chains));
    const double diff = std::abs(mean[static_cast<std::size_t>(k)] -
                                 exact.increments[static_cast<std::size_t>(k)]);
    const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : 1e9);
    check.observe(z);
    detail += " " + fmt(z);
    if (z > 3.0) {
      ok = false;
    }
  }
  check.entry.passed = ok;
  check.entry.details = detail;
  return check.entry;
}

ValidationEntry check_tmaml(std::uint64_t seed) {
  Check check("stop-gradient-hessian-audit");
  // One state, two actions, one step, uniform policy, unit baseline: the
  // expected Hessian has the closed form [[0.5, -0.5], [-0.5, 0.5]].
  TabularMdp tiny;
  tiny.num_states = 1;
  tiny.num_actions = 2;
  tiny.gamma = 1.0;
  tiny.horizon = 1;
  tiny.start_state = 0;
  tiny.transitions = {1.0, 1.0};
  tiny.rewards = {0.0, 0.0};
  tiny.validate();
  PolicyParams uniform;
  uniform.num_states = 1;
  uniform.num_actions = 2;
  uniform.values = {0.0, 0.0};
  const TmamlBiasReport tiny_report =
      tmaml_bias_report(tiny, uniform, BaselineTable::constant(1, 1.0));
  const std::vector<double> expected = {0.5, -0.5, -0.5, 0.5};
  check.observe(max_abs_diff(tiny_report.expected_hessian, expected));
  check.observe(tiny_report.cross_term_norm);

  // A generic small MDP: the enumeration route and the occupancy route must
  // agree, the cross terms must vanish, and the Hessian must be clearly
  // nonzero even though the objective's value and gradient are identically 0.
  const TabularMdp mdp = generate_random_mdp(2, 2, 1.0, 3, 0.5, stable_hash({seed, 81ULL}));
  std::mt19937_64 rng = make_stream({seed, 82ULL});
  const PolicyParams theta = random_logits(2, 2, 0.5, rng);
  const TmamlBiasReport report =
      tmaml_bias_report(mdp, theta, BaselineTable::constant(2, 1.0));
  check.observe(max_abs_diff(report.expected_hessian, report.score_outer));
  check.observe(report.cross_term_norm);
  if (report.expected_hessian_norm <= 1e-3) {
    check.entry.max_error = std::max(check.entry.max_error, 1.0);
  }

  std::mt19937_64 traj_rng = make_stream({seed, 83ULL});
  const PolicyTable pi = policy_table(theta);
  for (int i = 0; i < 10; ++i) {
    const Trajectory traj = sample_trajectory(mdp, pi, -1, traj_rng);
    const Taylor2Scalar j = eval_tmaml_objective(theta, traj, BaselineTable::constant(2, 1.0));
    check.observe(j.value());
    check.observe(norm2(j.grad()));
    check.observe(max_abs_diff(j.hess_dense(),
                               tmaml_hessian_closed_form(theta, traj,
                                                         BaselineTable::constant(2, 1.0))));
  }
  check.finish(1e-10, "expected Hessian nonzero and equal to the score outer products; value, "
                      "gradient and time cross terms vanish");
  return check.entry;
}

ValidationEntry check_meta_gradient_fd(std::uint64_t seed) {
  Check check("meta-gradient-finite-difference");
  const TabularMdp mdp = generate_random_mdp(2, 2, 0.9, 3, 0.5, stable_hash({seed, 91ULL}));
  std::mt19937_64 rng = make_stream({seed, 92ULL});
  const PolicyParams theta = random_logits(2, 2, 0.4, rng);
  const double eta = 0.05;
  const std::vector<double> analytic = exact_meta_gradient(mdp, theta, eta);
  const double h = 1e-5;
  double max_rel = 0.0;
  const double scale = std::max(norm2(analytic), 1e-12);
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    PolicyParams plus = theta;
    plus.values[i] += h;
    PolicyParams minus = theta;
    minus.values[i] -= h;
    const double fd = (exact_post_adaptation_value(mdp, plus, eta, -1) -
                       exact_post_adaptation_value(mdp, minus, eta, -1)) /
                      (2.0 * h);
    max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / scale);
  }
  check.entry.max_error = max_rel;
  check.entry.passed = max_rel < 1e-4;
  check.entry.details = "max relative deviation from central differences " + fmt(max_rel);
  return check.entry;
}

}  // namespace

ValidationReport run_validation_suite(std::uint64_t seed) {
  ValidationReport report;
  report.kernel_backend = kernels::active_name();
  report.entries.push_back(check_kernel_backends(seed));
  report.entries.push_back(check_softmax_derivatives());
  report.entries.push_back(check_dp_vs_enumeration(seed));
  report.entries.push_back(check_estimator_unbiasedness(seed));
  report.entries.push_back(check_dr_zero_critic_reduction(seed));
  report.entries.push_back(check_taypo_orders(seed));
  report.entries.push_back(check_dr_recursions(seed));
  report.entries.push_back(check_residual_decay(seed));
  report.entries.push_back(check_subsampled_increments(seed));
  report.entries.push_back(check_tmaml(seed));
  report.entries.push_back(check_meta_gradient_fd(seed));
  report.all_passed = true;
  for (const ValidationEntry& entry : report.entries) {
    report.all_passed = report.all_passed && entry.passed;
  }
  return report;
}

std::string validation_to_json(const ValidationReport& report) {
  nlohmann::json j;
  j["all_passed"] = report.all_passed;
  j["kernel_backend"] = report.kernel_backend;
  j["checks"] = nlohmann::json::array();
  for (const ValidationEntry& entry : report.entries) {
    nlohmann::json e;
    e["name"] = entry.name;
    e["passed"] = entry.passed;
    e["max_error"] = entry.max_error;
    e["details"] = entry.details;
    j["checks"].push_back(e);
  }
  return j.dump(2);
}

}  // namespace hovd
