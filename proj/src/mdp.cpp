#include "hovd/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace hovd {

double TabularMdp::reward(int x, int a, int goal) const {
  const std::size_t base = static_cast<std::size_t>(x) * num_actions + a;
  if (num_goals == 0) {
    return rewards[base];
  }
  if (goal < 0 || goal >= num_goals) {
    throw std::out_of_range("TabularMdp::reward: goal index out of range");
  }
  return rewards[base * num_goals + goal];
}

void TabularMdp::validate() const {
  if (num_states < 1 || num_actions < 1) {
    throw std::invalid_argument("TabularMdp: need at least one state and one action");
  }
  if (num_goals < 0) {
    throw std::invalid_argument("TabularMdp: negative goal count");
  }
  if (!(gamma > 0.0) || gamma > 1.0) {
    throw std::invalid_argument("TabularMdp: gamma must be in (0, 1]");
  }
  if (horizon < 1) {
    throw std::invalid_argument("TabularMdp: horizon must be at least 1");
  }
  if (start_state < 0 || start_state >= num_states) {
    throw std::invalid_argument("TabularMdp: start state out of range");
  }
  const std::size_t xa = static_cast<std::size_t>(num_states) * num_actions;
  if (transitions.size() != xa * num_states) {
    throw std::invalid_argument("TabularMdp: transition table size mismatch");
  }
  const std::size_t reward_size = num_goals == 0 ? xa : xa * num_goals;
  if (rewards.size() != reward_size) {
    throw std::invalid_argument("TabularMdp: reward table size mismatch");
  }
  for (int x = 0; x < num_states; ++x) {
    for (int a = 0; a < num_actions; ++a) {
      double sum = 0.0;
      for (double p : transition_row(x, a)) {
        if (p < 0.0) {
          throw std::invalid_argument("TabularMdp: negative transition probability");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > 1e-12) {
        throw std::invalid_argument("TabularMdp: transition row does not sum to 1");
      }
    }
  }
}

std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t stable_hash(std::initializer_list<std::uint64_t> keys) {
  std::uint64_t state = 0x5bd1e995u;
  std::uint64_t h = 0;
  for (std::uint64_t k : keys) {
    state ^= k + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h = splitmix64_next(state);
  }
  return h;
}

std::mt19937_64 make_stream(std::initializer_list<std::uint64_t> keys) {
  return std::mt19937_64(stable_hash(keys));
}

std::uint64_t double_bits(double x) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(x));
  std::memcpy(&bits, &x, sizeof(bits));
  return bits;
}

namespace {

// Dirichlet(alpha) row via normalized Gamma(alpha) draws. For alpha < 1 the
// draw is G * U^(1/alpha) with G ~ Gamma(alpha + 1), computed in log space:
// for alpha as small as 1e-3 the direct draw underflows to zero roughly half
// the time, and a whole row of zeros cannot be normalized.
void dirichlet_row(int n, double alpha, std::mt19937_64& rng, double* out) {
  std::vector<double> logx(static_cast<std::size_t>(n));
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    double g = 0.0;
    if (alpha < 1.0) {
      std::gamma_distribution<double> gamma_shifted(alpha + 1.0, 1.0);
      do {
        g = gamma_shifted(rng);
      } while (g == 0.0);
      double u = 0.0;
      do {
        u = unif(rng);
      } while (u == 0.0);
      logx[static_cast<std::size_t>(i)] = std::log(g) + std::log(u) / alpha;
    } else {
      std::gamma_distribution<double> gamma_direct(alpha, 1.0);
      do {
        g = gamma_direct(rng);
      } while (g == 0.0);
      logx[static_cast<std::size_t>(i)] = std::log(g);
    }
  }
  const double m = *std::max_element(logx.begin(), logx.end());
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(logx[static_cast<std::size_t>(i)] - m);
    sum += out[i];
  }
  for (int i = 0; i < n; ++i) {
    out[i] /= sum;
  }
}

int sample_index(std::span<const double> probs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) {
      return static_cast<int>(i);
    }
  }
  // Rounding can leave acc marginally below 1; fall back to the last entry
  // with nonzero probability.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) {
      return static_cast<int>(i);
    }
  }
  throw std::invalid_argument("sample_index: all-zero probability row");
}

}  // namespace

TabularMdp generate_random_mdp(int num_states, int num_actions, double gamma, int horizon,
                               double alpha, std::uint64_t seed, int num_goals) {
  if (num_states < 1 || num_actions < 1) {
    throw std::invalid_argument("generate_random_mdp: need at least one state and one action");
  }
  if (!(alpha > 0.0)) {
    throw std::invalid_argument("generate_random_mdp: alpha must be positive");
  }
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.num_goals = num_goals;
  mdp.gamma = gamma;
  mdp.horizon = horizon;
  mdp.start_state = 0;
  const std::size_t xa = static_cast<std::size_t>(num_states) * num_actions;
  mdp.transitions.resize(xa * num_states);
  mdp.rewards.resize(num_goals == 0 ? xa : xa * num_goals);

  std::mt19937_64 rng = make_stream({0x6d6470ULL, seed});
  for (std::size_t row = 0; row < xa; ++row) {
    dirichlet_row(num_states, alpha, rng, mdp.transitions.data() + row * num_states);
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (double& r : mdp.rewards) {
    r = unif(rng);
  }
  mdp.validate();
  return mdp;
}

PolicyTable uniform_policy(int num_states, int num_actions) {
  PolicyTable table;
  table.num_states = num_states;
  table.num_actions = num_actions;
  table.probs.assign(static_cast<std::size_t>(num_states) * num_actions,
                     1.0 / static_cast<double>(num_actions));
  return table;
}

std::vector<double> policy_probs(const PolicyParams& theta, int x) {
  const int a_count = theta.num_actions;
  std::vector<double> p(static_cast<std::size_t>(a_count));
  double m = theta.at(x, 0);
  for (int a = 1; a < a_count; ++a) {
    m = std::max(m, theta.at(x, a));
  }
  double sum = 0.0;
  for (int a = 0; a < a_count; ++a) {
    p[static_cast<std::size_t>(a)] = std::exp(theta.at(x, a) - m);
    sum += p[static_cast<std::size_t>(a)];
  }
  for (double& v : p) {
    v /= sum;
  }
  return p;
}

PolicyTable policy_table(const PolicyParams& theta) {
  PolicyTable table;
  table.num_states = theta.num_states;
  table.num_actions = theta.num_actions;
  table.probs.resize(static_cast<std::size_t>(theta.num_states) * theta.num_actions);
  for (int x = 0; x < theta.num_states; ++x) {
    const std::vector<double> row = policy_probs(theta, x);
    std::copy(row.begin(), row.end(),
              table.probs.begin() + static_cast<std::size_t>(x) * theta.num_actions);
  }
  return table;
}

std::vector<Taylor2Scalar> policy_probs_taylor2(const PolicyParams& theta, int x) {
  const int dim = theta.dim();
  const int a_count = theta.num_actions;
  // Shifting all logits of the row by a constant leaves the softmax and its
  // derivatives unchanged; shift by the max for a stable exponential.
  double m = theta.at(x, 0);
  for (int a = 1; a < a_count; ++a) {
    m = std::max(m, theta.at(x, a));
  }
  std::vector<Taylor2Scalar> e;
  e.reserve(static_cast<std::size_t>(a_count));
  Taylor2Scalar sum = Taylor2Scalar::constant(0.0, dim);
  for (int a = 0; a < a_count; ++a) {
    Taylor2Scalar logit = Taylor2Scalar::variable(theta.at(x, a), theta.index(x, a), dim);
    e.push_back(exp(logit - m));
    sum += e.back();
  }
  std::vector<Taylor2Scalar> p;
  p.reserve(static_cast<std::size_t>(a_count));
  for (int a = 0; a < a_count; ++a) {
    p.push_back(e[static_cast<std::size_t>(a)] / sum);
  }
  return p;
}

OffPolicyPair make_offpolicy_pair(int num_states, int num_actions, double epsilon,
                                  std::mt19937_64& rng) {
  if (epsilon < 0.0 || epsilon > 1.0) {
    throw std::invalid_argument("make_offpolicy_pair: epsilon must lie in [0, 1]");
  }
  OffPolicyPair pair;
  pair.behavior = uniform_policy(num_states, num_actions);
  pair.deterministic_actions.resize(static_cast<std::size_t>(num_states));
  std::uniform_int_distribution<int> pick(0, num_actions - 1);
  for (int x = 0; x < num_states; ++x) {
    pair.deterministic_actions[static_cast<std::size_t>(x)] = pick(rng);
  }
  pair.theta.num_states = num_states;
  pair.theta.num_actions = num_actions;
  pair.theta.values.resize(static_cast<std::size_t>(num_states) * num_actions);
  const double uniform_mass = (1.0 - epsilon) / static_cast<double>(num_actions);
  constexpr double kFloor = 1e-6;
  for (int x = 0; x < num_states; ++x) {
    double sum = 0.0;
    std::vector<double> p(static_cast<std::size_t>(num_actions));
    for (int a = 0; a < num_actions; ++a) {
      double mass = uniform_mass;
      if (a == pair.deterministic_actions[static_cast<std::size_t>(x)]) {
        mass += epsilon;
      }
      p[static_cast<std::size_t>(a)] = std::max(mass, kFloor);
      sum += p[static_cast<std::size_t>(a)];
    }
    for (int a = 0; a < num_actions; ++a) {
      pair.theta.at(x, a) = std::log(p[static_cast<std::size_t>(a)] / sum);
    }
  }
  return pair;
}

double l1_distance(const PolicyTable& p, const PolicyTable& q) {
  if (p.num_states != q.num_states || p.num_actions != q.num_actions) {
    throw std::invalid_argument("l1_distance: table shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < p.probs.size(); ++i) {
    total += std::abs(p.probs[i] - q.probs[i]);
  }
  return total / static_cast<double>(p.num_states);
}

Trajectory sample_trajectory(const TabularMdp& mdp, const PolicyTable& behavior, int goal,
                             std::mt19937_64& rng) {
  if (behavior.num_states != mdp.num_states || behavior.num_actions != mdp.num_actions) {
    throw std::invalid_argument("sample_trajectory: behavior table shape mismatch");
  }
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(mdp.horizon));
  int x = mdp.start_state;
  for (int t = 0; t < mdp.horizon; ++t) {
    const std::span<const double> row = behavior.row(x);
    for (double p : row) {
      if (!(p > 0.0)) {
        throw std::invalid_argument(
            "sample_trajectory: behavior policy lacks full support on a visited state");
      }
    }
    const int a = sample_index(row, rng);
    TrajectoryStep step;
    step.state = x;
    step.action = a;
    step.reward = mdp.reward(x, a, goal);
    step.behavior_logprob = std::log(behavior.at(x, a));
    traj.steps.push_back(step);
    x = sample_index(mdp.transition_row(x, a), rng);
  }
  traj.final_state = x;
  traj.final_action = sample_index(behavior.row(x), rng);
  return traj;
}

std::string mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["num_states"] = mdp.num_states;
  j["num_actions"] = mdp.num_actions;
  j["num_goals"] = mdp.num_goals;
  j["gamma"] = mdp.gamma;
  j["horizon"] = mdp.horizon;
  j["start_state"] = mdp.start_state;
  j["transitions"] = mdp.transitions;
  j["rewards"] = mdp.rewards;
  return j.dump(2);
}

TabularMdp mdp_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  TabularMdp mdp;
  mdp.num_states = j.at("num_states").get<int>();
  mdp.num_actions = j.at("num_actions").get<int>();
  mdp.num_goals = j.value("num_goals", 0);
  mdp.gamma = j.at("gamma").get<double>();
  mdp.horizon = j.at("horizon").get<int>();
  mdp.start_state = j.value("start_state", 0);
  mdp.transitions = j.at("transitions").get<std::vector<double>>();
  mdp.rewards = j.at("rewards").get<std::vector<double>>();
  mdp.validate();
  return mdp;
}

void save_mdp(const TabularMdp& mdp, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("save_mdp: cannot open " + path + " for writing");
  }
  out << mdp_to_json(mdp) << "\n";
}

TabularMdp load_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_mdp: cannot open " + path);
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return mdp_from_json(buffer.str());
}

}  // namespace hovd
