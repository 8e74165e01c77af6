#pragma once

#include <vector>

#include "hovd/mdp.hpp"
#include "hovd/taylor2.hpp"

namespace hovd {

// Per-state baseline values b(x).
struct BaselineTable {
  std::vector<double> b;

  double at(int x) const { return b[static_cast<std::size_t>(x)]; }

  static BaselineTable constant(int num_states, double value) {
    BaselineTable table;
    table.b.assign(static_cast<std::size_t>(num_states), value);
    return table;
  }
};

// The correction objective added by trajectory-mirror meta-learning schemes:
//   J = sum_t (1 - prod_{s<=t} rho_s) (1 - rho_t) b(x_t)
// undiscounted, where rho_s = pi_theta(a_s | x_s) / c_s and c_s is the same
// probability frozen at its current numeric value (the stop-gradient of the
// sampling policy). The trajectory is assumed drawn from pi_theta itself, so
// every rho_s has value exactly 1: J and its gradient vanish identically, and
// the interesting object is the Hessian.
Taylor2Scalar eval_tmaml_objective(const PolicyParams& theta, const Trajectory& traj,
                                   const BaselineTable& baseline);

// The same trajectory's Hessian from the closed form
//   sum_t b(x_t) (C_t s_t^T + s_t C_t^T),  C_t = sum_{s<=t} grad log pi_s,
// derived by expanding the product at rho = 1. No Taylor2 arithmetic; used to
// cross-check the forward-mode result. Dense row-major dim x dim.
std::vector<double> tmaml_hessian_closed_form(const PolicyParams& theta, const Trajectory& traj,
                                              const BaselineTable& baseline);

// Expectation pieces of the Hessian under pi_theta, all dense dim x dim.
struct TmamlBiasReport {
  int dim = 0;
  // E[hess J], by enumerating trajectories and differentiating each term.
  std::vector<double> expected_hessian;
  // E[2 sum_t b(x_t) s_t s_t^T], via exact state occupancies. Equal to
  // expected_hessian in expectation: the time cross terms average to zero.
  std::vector<double> score_outer;
  // E[sum_{s<t} b(x_t)(s_s s_t^T + s_t s_s^T)]; zero in expectation.
  std::vector<double> cross_term;
  double expected_hessian_norm = 0.0;
  double cross_term_norm = 0.0;
};

// Enumerates the MDP's trajectories under pi_theta (discounting ignored, the
// objective is undiscounted). The nonzero expected Hessian is the point: a
// stop-gradient objective engineered to vanish in value and gradient still
// curves the landscape it is added to.
TmamlBiasReport tmaml_bias_report(const TabularMdp& mdp, const PolicyParams& theta,
                                  const BaselineTable& baseline, double max_paths = 1e6);

}  // namespace hovd
