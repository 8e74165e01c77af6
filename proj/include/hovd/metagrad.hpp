#pragma once

#include <cstdint>
#include <vector>

#include "hovd/estimators.hpp"
#include "hovd/mdp.hpp"
#include "hovd/oracle.hpp"

namespace hovd {

// Settings for one-step-adaptation meta-learning on a goal-indexed MDP. The
// meta objective is E_task[ V(theta + eta * grad V(theta; task); task) ]; its
// gradient for one task is (I + eta * hess V(theta)) * grad V(theta'), all at
// theta' = theta + eta * grad V(theta).
struct MetaConfig {
  double eta = 0.1;              // inner (adaptation) step size
  double outer_lr = 0.5;         // meta step size, used by the training demo
  int inner_trajectories = 10;   // rollouts per task for the inner estimate
  int iterations = 20;           // meta steps, used by the training demo
  std::uint64_t seed = 0;
  EstimatorConfig inner_estimator;  // kind Dr by default; evaluated on-policy
};

struct InnerUpdate {
  PolicyParams theta_prime;
  // Value, gradient and Hessian of the sampled inner objective; the Hessian
  // enters the meta gradient's correction term.
  DerivativeReport objective;
};

// theta' = theta + eta * grad of the mean estimate over the given rollouts,
// which must have been sampled under pi_theta (the estimators treat the
// recorded behavior probabilities as the denominator of their ratios).
InnerUpdate inner_update(const TabularMdp& mdp, const PolicyParams& theta, int goal,
                         const std::vector<Trajectory>& rollouts, const MetaConfig& config);

// Sampled meta gradient averaged over all goals: per goal, B on-policy
// rollouts give the inner estimate and theta'; B fresh rollouts under
// pi_theta' give a score-function gradient estimate with the exact
// remaining-horizon advantage as critic; the correction multiplies it by
// (I + eta * sampled Hessian).
std::vector<double> meta_gradient_estimate(const TabularMdp& mdp, const PolicyParams& theta,
                                           const MetaConfig& config);

// The same quantity with every piece exact (oracle gradients and Hessians).
std::vector<double> exact_meta_gradient(const TabularMdp& mdp, const PolicyParams& theta,
                                        double eta);

// V(theta + eta * grad V(theta; goal); goal), exactly. The meta objective for
// one task; finite differences of this function validate the meta gradient.
double exact_post_adaptation_value(const TabularMdp& mdp, const PolicyParams& theta, double eta,
                                   int goal);

// Measures the bias of the plug-in meta gradient: the inner batch produces a
// correlated pair (gradient estimate, Hessian estimate), and both enter the
// meta gradient. The outer gradient is evaluated exactly at the sampled
// adapted parameters, so every deviation from the exact meta gradient is
// attributable to the inner sampling. exact_inner replaces the sampled
// adapted parameters by the exact ones (the Hessian estimate stays sampled),
// which decorrelates the pieces and removes the bias.
struct PluginBiasProbe {
  int batch = 0;
  int repetitions = 0;
  double bias_norm = 0.0;    // | mean estimate - exact meta gradient |
  double stderr_norm = 0.0;  // norm of the per-component standard errors
  double exact_norm = 0.0;
};

PluginBiasProbe plugin_bias_probe(const TabularMdp& mdp, const PolicyParams& theta, int goal,
                                  double eta, int batch, int repetitions, bool exact_inner,
                                  std::uint64_t seed);

struct MetaTrainRecord {
  int iteration = 0;
  // Mean over goals of the exact value before and after one exact adaptation
  // step; the gap between them is what meta training widens.
  double pre_value = 0.0;
  double post_value = 0.0;
  double meta_grad_norm = 0.0;
};

// Small demonstration loop: ascends the sampled meta gradient and records
// exact pre/post-adaptation values per iteration.
std::vector<MetaTrainRecord> meta_train_demo(const TabularMdp& mdp, const MetaConfig& config);

}  // namespace hovd
