#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hovd/estimators.hpp"
#include "hovd/mdp.hpp"

namespace hovd {

// Settings shared by the two sweep experiments. A sweep cell is one (swept
// value, seed) pair; within a cell an MDP and an off-policy pair are built
// deterministically from the seed, num_samples trajectories are drawn under
// the behavior policy, and every configured estimator is averaged over them
// and compared against the exact derivatives.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  int num_states = 10;
  int num_actions = 5;
  double gamma = 0.8;
  int horizon = 20;
  double alpha = 0.001;  // Dirichlet concentration of the transition rows
  int num_samples = 1000;
  int num_seeds = 10;
  // Mixture coefficient used when it is not the swept axis.
  double epsilon = 0.5;
  std::vector<double> epsilon_grid = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<int> sample_grid = {10, 30, 100, 300, 1000, 3000};
  std::vector<std::string> estimators = {"step-is", "dr", "truncated-dr", "taypo-1", "taypo-2"};
  CriticKind critic = CriticKind::ExactQMu;
  // 1 or 2 restricts the emitted rows to that derivative order; 0 emits both.
  int derivative_order = 0;
  double rho_bar = 1.0;
  double beta = 0.3;
  int workers = 1;
};

ExperimentConfig experiment_config_from_json(const std::string& text);

// One CSV row. seed holds the seed index, or "mean" / "stderr" for the
// aggregate rows of a (sweep value, estimator, order) group.
struct SweepRow {
  std::string sweep_axis;
  double sweep_value = 0.0;
  std::string seed;
  std::string estimator;
  std::string critic;
  int derivative_order = 1;
  double accuracy = 0.0;
  int n_samples = 0;
  double epsilon_mixture = 0.0;
  double l1_distance = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
};

// Cosine similarity x . y / (|x| |y|), the accuracy measure for estimated
// derivative directions. A zero-norm estimate scores 0 (with a note on
// stderr); a zero-norm reference is a caller error and throws.
double cosine_accuracy(std::span<const double> estimate, std::span<const double> reference);

// Accuracy of each estimator's averaged gradient (order 1) and flattened
// Hessian (order 2) against the exact derivatives, as the target policy moves
// away from the uniform behavior policy (epsilon sweep) or as the number of
// sampled trajectories grows (sample-count sweep). Rows come out in a fixed
// order independent of config.workers.
SweepResult run_offpolicy_sweep(const ExperimentConfig& config);
SweepResult run_sample_sweep(const ExperimentConfig& config);

std::string sweep_to_csv(const SweepResult& result);
void write_sweep_csv(const SweepResult& result, const std::string& path);

// Companion gnuplot script that plots the aggregate rows of the CSV (mean
// with stderr bars, one curve per estimator and derivative order).
void write_gnuplot_script(const ExperimentConfig& config, const std::string& csv_path,
                          const std::string& script_path);

// Seeded internal consistency checks: estimator unbiasedness against the
// enumeration oracles, equivalence of the independent derivative routes,
// expansion residual decay, the stop-gradient Hessian audit, the meta
// gradient against finite differences, and kernel backend equivalence.
struct ValidationEntry {
  std::string name;
  bool passed = false;
  double max_error = 0.0;
  std::string details;
};

struct ValidationReport {
  std::vector<ValidationEntry> entries;
  std::string kernel_backend;
  bool all_passed = false;
};

ValidationReport run_validation_suite(std::uint64_t seed);
std::string validation_to_json(const ValidationReport& report);

}  // namespace hovd
