#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hovd/estimators.hpp"
#include "hovd/harness.hpp"
#include "hovd/mdp.hpp"
#include "hovd/metagrad.hpp"
#include "hovd/oracle.hpp"
#include "hovd/tmaml.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) {
    if (!item.empty()) {
      out.push_back(item);
    }
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open " + path + " for writing");
  }
  out << text;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text << "\n";
  } else {
    write_file(out_path, text + "\n");
    std::cout << "wrote " << out_path << "\n";
  }
}

hovd::PolicyParams seeded_logits(int num_states, int num_actions, double scale,
                                 std::uint64_t seed) {
  hovd::PolicyParams theta;
  theta.num_states = num_states;
  theta.num_actions = num_actions;
  theta.values.resize(static_cast<std::size_t>(theta.dim()));
  std::mt19937_64 rng = hovd::make_stream({seed, 0x6c6f676974ULL});
  std::normal_distribution<double> normal(0.0, scale);
  for (double& v : theta.values) {
    v = normal(rng);
  }
  return theta;
}

nlohmann::json matrix_json(const std::vector<double>& flat, int dim) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < dim; ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < dim; ++j) {
      row.push_back(flat[static_cast<std::size_t>(i * dim + j)]);
    }
    rows.push_back(row);
  }
  return rows;
}

struct SweepCli {
  hovd::ExperimentConfig config;
  std::string critic_name = "exact-q-mu";
  std::string estimators_csv;
  std::string epsilon_grid_csv;
  std::string sample_grid_csv;
  std::string out = "sweep.csv";
  std::string plot;
};

// The optional JSON config is applied before flag parsing, so explicit flags
// always win over file values.
void preload_config(int argc, char** argv, hovd::ExperimentConfig& config) {
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") {
      config = hovd::experiment_config_from_json(read_file(argv[i + 1]));
      return;
    }
  }
}

void add_experiment_options(CLI::App* cmd, SweepCli& cli) {
  auto& config = cli.config;
  cmd->add_option("--config", "JSON file with experiment settings (flags override it)")
      ->expected(1);
  cmd->add_option("--seed", config.seed, "master seed");
  cmd->add_option("--num-states", config.num_states, "number of states");
  cmd->add_option("--num-actions", config.num_actions, "number of actions");
  cmd->add_option("--gamma", config.gamma, "discount factor");
  cmd->add_option("--horizon", config.horizon, "trajectory length");
  cmd->add_option("--alpha-dirichlet", config.alpha, "transition-row Dirichlet concentration");
  cmd->add_option("--epsilon", config.epsilon, "behavior/target mixture weight");
  cmd->add_option("--num-samples", config.num_samples, "trajectories per estimate");
  cmd->add_option("--num-seeds", config.num_seeds, "independent replications");
  cmd->add_option("--estimators", cli.estimators_csv,
                  "comma-separated estimator names (step-is, dr, truncated-dr, taypo-K, "
                  "subsampled-taypo-K, mixture)");
  cmd->add_option("--critic", cli.critic_name, "critic table: zero, exact-q-mu or exact-q-pi");
  cmd->add_option("--order", config.derivative_order,
                  "derivative order to report: 1, 2, or 0 for both");
  cmd->add_option("--rho-bar", config.rho_bar, "importance-ratio cap for truncated-dr");
  cmd->add_option("--beta", config.beta, "mixture weight for the mixture estimator");
  cmd->add_option("--epsilon-grid", cli.epsilon_grid_csv, "comma-separated epsilon grid");
  cmd->add_option("--sample-grid", cli.sample_grid_csv, "comma-separated sample-count grid");
  cmd->add_option("--workers", config.workers, "worker threads (output is identical for any count)");
  cmd->add_option("--out", cli.out, "output CSV path");
  cmd->add_option("--plot", cli.plot, "also write a gnuplot script to this path");
}

void finalize_sweep_cli(SweepCli& cli) {
  if (!cli.estimators_csv.empty()) {
    cli.config.estimators = split_csv(cli.estimators_csv);
  }
  if (!cli.epsilon_grid_csv.empty()) {
    cli.config.epsilon_grid.clear();
    for (const std::string& tok : split_csv(cli.epsilon_grid_csv)) {
      cli.config.epsilon_grid.push_back(std::stod(tok));
    }
  }
  if (!cli.sample_grid_csv.empty()) {
    cli.config.sample_grid.clear();
    for (const std::string& tok : split_csv(cli.sample_grid_csv)) {
      cli.config.sample_grid.push_back(std::stoi(tok));
    }
  }
  cli.config.critic = hovd::parse_critic_name(cli.critic_name);
  // Validate the estimator names up front rather than mid-sweep.
  for (const std::string& name : cli.config.estimators) {
    (void)hovd::parse_estimator_name(name);
  }
}

void run_sweep_command(const SweepCli& cli, bool sample_axis) {
  const hovd::SweepResult result = sample_axis ? hovd::run_sample_sweep(cli.config)
                                               : hovd::run_offpolicy_sweep(cli.config);
  hovd::write_sweep_csv(result, cli.out);
  std::cout << "wrote " << cli.out << " (" << result.rows.size() << " rows)\n";
  if (!cli.plot.empty()) {
    hovd::write_gnuplot_script(cli.config, cli.out, cli.plot);
    std::cout << "wrote " << cli.plot << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Derivative estimation for tabular off-policy evaluation"};
  app.require_subcommand(1);

  // gen-mdp
  auto* gen = app.add_subcommand("gen-mdp", "sample a random tabular MDP and save it as JSON");
  struct {
    std::uint64_t seed = 0;
    int num_states = 10;
    int num_actions = 5;
    int num_goals = 0;
    double gamma = 0.8;
    int horizon = 20;
    double alpha = 0.001;
    std::string out = "mdp.json";
  } gen_cli;
  gen->add_option("--seed", gen_cli.seed, "seed");
  gen->add_option("--num-states", gen_cli.num_states, "number of states");
  gen->add_option("--num-actions", gen_cli.num_actions, "number of actions");
  gen->add_option("--num-goals", gen_cli.num_goals, "goal count for goal-indexed rewards");
  gen->add_option("--gamma", gen_cli.gamma, "discount factor");
  gen->add_option("--horizon", gen_cli.horizon, "trajectory length");
  gen->add_option("--alpha-dirichlet", gen_cli.alpha, "transition-row Dirichlet concentration");
  gen->add_option("--out", gen_cli.out, "output path");

  // sweeps
  SweepCli eps_cli;
  auto* sweep_eps = app.add_subcommand(
      "sweep-offpolicy", "estimate derivative accuracy across behavior/target mismatch levels");
  add_experiment_options(sweep_eps, eps_cli);

  SweepCli n_cli;
  auto* sweep_n = app.add_subcommand(
      "sweep-samples", "estimate derivative accuracy across sample-batch sizes");
  add_experiment_options(sweep_n, n_cli);

  // tmaml-bias
  auto* tmaml = app.add_subcommand(
      "tmaml-bias", "audit the Hessian of the stop-gradient surrogate objective");
  struct {
    std::uint64_t seed = 0;
    int num_states = 3;
    int num_actions = 2;
    int horizon = 4;
    double alpha = 0.5;
    double logit_scale = 0.5;
    std::string out;
  } tmaml_cli;
  tmaml->add_option("--seed", tmaml_cli.seed, "seed");
  tmaml->add_option("--num-states", tmaml_cli.num_states, "number of states");
  tmaml->add_option("--num-actions", tmaml_cli.num_actions, "number of actions");
  tmaml->add_option("--horizon", tmaml_cli.horizon, "trajectory length");
  tmaml->add_option("--alpha-dirichlet", tmaml_cli.alpha, "transition-row concentration");
  tmaml->add_option("--logit-scale", tmaml_cli.logit_scale, "stddev of the sampled policy logits");
  tmaml->add_option("--out", tmaml_cli.out, "output JSON path (stdout when omitted)");

  // plugin-bias
  auto* plugin = app.add_subcommand(
      "plugin-bias", "measure the bias of plugging sampled inner derivatives into a meta-gradient");
  struct {
    std::uint64_t seed = 0;
    int num_states = 3;
    int num_actions = 2;
    double gamma = 0.9;
    int horizon = 4;
    double alpha = 0.5;
    double eta = 0.1;
    int batch = 10;
    int repetitions = 100;
    bool exact_inner = false;
    std::string out;
  } plugin_cli;
  plugin->add_option("--seed", plugin_cli.seed, "seed");
  plugin->add_option("--num-states", plugin_cli.num_states, "number of states");
  plugin->add_option("--num-actions", plugin_cli.num_actions, "number of actions");
  plugin->add_option("--gamma", plugin_cli.gamma, "discount factor");
  plugin->add_option("--horizon", plugin_cli.horizon, "trajectory length");
  plugin->add_option("--alpha-dirichlet", plugin_cli.alpha, "transition-row concentration");
  plugin->add_option("--eta", plugin_cli.eta, "inner adaptation step size");
  plugin->add_option("--batch", plugin_cli.batch, "inner trajectories per repetition");
  plugin->add_option("--repetitions", plugin_cli.repetitions, "independent repetitions");
  plugin->add_flag("--exact-inner", plugin_cli.exact_inner,
                   "evaluate at the exact adapted parameters (bias control)");
  plugin->add_option("--out", plugin_cli.out, "output JSON path (stdout when omitted)");

  // meta-demo
  auto* meta = app.add_subcommand(
      "meta-demo", "run a short meta-training loop with second-order inner estimates");
  struct {
    std::uint64_t seed = 0;
    int num_states = 3;
    int num_actions = 2;
    int num_goals = 3;
    double gamma = 0.9;
    int horizon = 4;
    double alpha = 0.5;
    std::string estimator = "dr";
    std::string out;
  } meta_cli;
  hovd::MetaConfig meta_config;
  meta->add_option("--seed", meta_cli.seed, "seed");
  meta->add_option("--num-states", meta_cli.num_states, "number of states");
  meta->add_option("--num-actions", meta_cli.num_actions, "number of actions");
  meta->add_option("--num-goals", meta_cli.num_goals, "tasks (goal-indexed rewards)");
  meta->add_option("--gamma", meta_cli.gamma, "discount factor");
  meta->add_option("--horizon", meta_cli.horizon, "trajectory length");
  meta->add_option("--alpha-dirichlet", meta_cli.alpha, "transition-row concentration");
  meta->add_option("--eta", meta_config.eta, "inner adaptation step size");
  meta->add_option("--outer-lr", meta_config.outer_lr, "outer gradient step size");
  meta->add_option("--inner-trajectories", meta_config.inner_trajectories,
                   "trajectories per inner/outer batch");
  meta->add_option("--iterations", meta_config.iterations, "outer iterations");
  meta->add_option("--estimator", meta_cli.estimator, "inner estimator name");
  meta->add_option("--out", meta_cli.out, "output JSON path (stdout when omitted)");

  // validate
  auto* validate = app.add_subcommand(
      "validate", "run the built-in consistency checks and report pass/fail");
  struct {
    std::uint64_t seed = 0;
    std::string out;
  } validate_cli;
  validate->add_option("--seed", validate_cli.seed, "seed");
  validate->add_option("--out", validate_cli.out, "output JSON path (stdout gets a summary)");

  try {
    preload_config(argc, argv, eps_cli.config);
    n_cli.config = eps_cli.config;
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) {
      const hovd::TabularMdp mdp =
          hovd::generate_random_mdp(gen_cli.num_states, gen_cli.num_actions, gen_cli.gamma,
                                    gen_cli.horizon, gen_cli.alpha, gen_cli.seed,
                                    gen_cli.num_goals);
      hovd::save_mdp(mdp, gen_cli.out);
      std::cout << "wrote " << gen_cli.out << "\n";
    } else if (sweep_eps->parsed()) {
      finalize_sweep_cli(eps_cli);
      run_sweep_command(eps_cli, false);
    } else if (sweep_n->parsed()) {
      finalize_sweep_cli(n_cli);
      run_sweep_command(n_cli, true);
    } else if (tmaml->parsed()) {
      const hovd::TabularMdp mdp =
          hovd::generate_random_mdp(tmaml_cli.num_states, tmaml_cli.num_actions, 1.0,
                                    tmaml_cli.horizon, tmaml_cli.alpha, tmaml_cli.seed);
      const hovd::PolicyParams theta = seeded_logits(
          tmaml_cli.num_states, tmaml_cli.num_actions, tmaml_cli.logit_scale, tmaml_cli.seed);
      const hovd::TmamlBiasReport report = hovd::tmaml_bias_report(
          mdp, theta, hovd::BaselineTable::constant(tmaml_cli.num_states, 1.0));
      nlohmann::json j;
      j["dim"] = report.dim;
      j["expected_hessian"] = matrix_json(report.expected_hessian, report.dim);
      j["same_time_score_outer"] = matrix_json(report.score_outer, report.dim);
      j["time_cross_terms"] = matrix_json(report.cross_term, report.dim);
      j["expected_hessian_norm"] = report.expected_hessian_norm;
      j["cross_term_norm"] = report.cross_term_norm;
      emit(j.dump(2), tmaml_cli.out);
    } else if (plugin->parsed()) {
      const hovd::TabularMdp mdp = hovd::generate_random_mdp(
          plugin_cli.num_states, plugin_cli.num_actions, plugin_cli.gamma, plugin_cli.horizon,
          plugin_cli.alpha, plugin_cli.seed);
      const hovd::PolicyParams theta =
          seeded_logits(plugin_cli.num_states, plugin_cli.num_actions, 0.5, plugin_cli.seed);
      const hovd::PluginBiasProbe probe = hovd::plugin_bias_probe(
          mdp, theta, -1, plugin_cli.eta, plugin_cli.batch, plugin_cli.repetitions,
          plugin_cli.exact_inner, plugin_cli.seed);
      nlohmann::json j;
      j["batch"] = probe.batch;
      j["repetitions"] = probe.repetitions;
      j["exact_inner"] = plugin_cli.exact_inner;
      j["bias_norm"] = probe.bias_norm;
      j["stderr_norm"] = probe.stderr_norm;
      j["exact_norm"] = probe.exact_norm;
      emit(j.dump(2), plugin_cli.out);
    } else if (meta->parsed()) {
      const hovd::TabularMdp mdp = hovd::generate_random_mdp(
          meta_cli.num_states, meta_cli.num_actions, meta_cli.gamma, meta_cli.horizon,
          meta_cli.alpha, meta_cli.seed, meta_cli.num_goals);
      meta_config.seed = meta_cli.seed;
      meta_config.inner_estimator = hovd::parse_estimator_name(meta_cli.estimator);
      const std::vector<hovd::MetaTrainRecord> records = hovd::meta_train_demo(mdp, meta_config);
      nlohmann::json j = nlohmann::json::array();
      std::printf("%4s %14s %14s %14s\n", "iter", "pre-update", "post-update", "|meta-grad|");
      for (const hovd::MetaTrainRecord& rec : records) {
        std::printf("%4d %14.8f %14.8f %14.8f\n", rec.iteration, rec.pre_value, rec.post_value,
                    rec.meta_grad_norm);
        nlohmann::json e;
        e["iteration"] = rec.iteration;
        e["pre_value"] = rec.pre_value;
        e["post_value"] = rec.post_value;
        e["meta_grad_norm"] = rec.meta_grad_norm;
        j.push_back(e);
      }
      if (!meta_cli.out.empty()) {
        write_file(meta_cli.out, j.dump(2) + "\n");
        std::cout << "wrote " << meta_cli.out << "\n";
      }
    } else if (validate->parsed()) {
      const hovd::ValidationReport report = hovd::run_validation_suite(validate_cli.seed);
      std::printf("kernel backend: %s\n", report.kernel_backend.c_str());
      for (const hovd::ValidationEntry& entry : report.entries) {
        std::printf("%-6s %-36s max_error=%-12.3g %s\n", entry.passed ? "[ok]" : "[FAIL]",
                    entry.name.c_str(), entry.max_error, entry.details.c_str());
      }
      if (!validate_cli.out.empty()) {
        write_file(validate_cli.out, hovd::validation_to_json(report) + "\n");
        std::cout << "wrote " << validate_cli.out << "\n";
      }
      if (!report.all_passed) {
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
