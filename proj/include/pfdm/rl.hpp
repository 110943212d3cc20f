#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/error.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/parallel.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"
#include "pfdm/stats.hpp"

namespace pfdm {

// Dense state-action value table, row-major by state.
class QTable {
 public:
  QTable() = default;
  QTable(std::size_t n_states, std::size_t n_actions, double init = 0.0)
      : n_states_(n_states), n_actions_(n_actions), q_(n_states * n_actions, init) {
    if (!std::isfinite(init)) throw InvalidInput("QTable: initial value must be finite");
  }

  std::size_t n_states() const { return n_states_; }
  std::size_t n_actions() const { return n_actions_; }

  double& at(std::size_t x, std::size_t u) { return q_[x * n_actions_ + u]; }
  double at(std::size_t x, std::size_t u) const { return q_[x * n_actions_ + u]; }

  std::span<const double> row(std::size_t x) const {
    return std::span<const double>(q_).subspan(x * n_actions_, n_actions_);
  }
  std::span<double> row(std::size_t x) { return std::span<double>(q_).subspan(x * n_actions_, n_actions_); }
  const std::vector<double>& values() const { return q_; }

  // Lowest index among the maximizers.
  std::size_t argmax(std::size_t x) const {
    const auto r = row(x);
    return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  double max(std::size_t x) const { return at(x, argmax(x)); }

  bool operator==(const QTable&) const = default;

 private:
  std::size_t n_states_ = 0;
  std::size_t n_actions_ = 0;
  std::vector<double> q_;
};

// ---------------------------------------------------------------------------
// Finite-horizon dynamic programming.
//
// Returns Q_{k->T} for k = 1..T (element k-1):
//   Q_{T->T}(x, u) = d_T r(x, u)
//   Q_{k->T}(x, u) = d_k r(x, u) + sum_x' P(x' | x, u) max_u' Q_{k+1->T}(x', u')
inline std::vector<QTable> value_iteration(const FiniteMDP& mdp, std::size_t horizon, std::span<const double> discounts) {
  if (horizon < 1) throw InvalidInput("value_iteration: horizon must be >= 1");
  if (discounts.size() != horizon) throw InvalidInput("value_iteration: need one discount per step");
  std::vector<QTable> q(horizon, QTable(mdp.n_states, mdp.n_actions));
  for (std::size_t k = horizon; k-- > 0;) {
    std::vector<double> next_max(mdp.n_states, 0.0);
    if (k + 1 < horizon)
      for (std::size_t y = 0; y < mdp.n_states; ++y) next_max[y] = q[k + 1].max(y);
    for (std::size_t x = 0; x < mdp.n_states; ++x)
      for (std::size_t u = 0; u < mdp.n_actions; ++u) {
        double future = 0.0;
        const auto row = mdp.row(x, u);
        for (std::size_t i = 0; i < row.nnz(); ++i) future += row.probs[i] * next_max[row.cells[i]];
        q[k].at(x, u) = discounts[k] * mdp.reward(x, u) + future;
      }
  }
  return q;
}

// Discounts d_k = gamma^(k-1).
inline std::vector<double> geometric_discounts(double gamma, std::size_t horizon) {
  std::vector<double> d(horizon);
  double g = 1.0;
  for (auto& v : d) {
    v = g;
    g *= gamma;
  }
  return d;
}

// Stationary fixed point Q = r + gamma P max Q, iterated to sup-norm change
// below `tol`.
inline QTable value_iteration_infinite(const FiniteMDP& mdp, double gamma, double tol = 1e-12,
                                       std::size_t max_iter = 1'000'000) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidInput("value_iteration_infinite: gamma must lie in [0, 1)");
  QTable q(mdp.n_states, mdp.n_actions);
  for (std::size_t it = 0; it < max_iter; ++it) {
    QTable next(mdp.n_states, mdp.n_actions);
    double change = 0.0;
    for (std::size_t x = 0; x < mdp.n_states; ++x)
      for (std::size_t u = 0; u < mdp.n_actions; ++u) {
        double future = 0.0;
        const auto row = mdp.row(x, u);
        for (std::size_t i = 0; i < row.nnz(); ++i) future += row.probs[i] * q.max(row.cells[i]);
        next.at(x, u) = mdp.reward(x, u) + gamma * future;
        change = std::max(change, std::abs(next.at(x, u) - q.at(x, u)));
      }
    q = std::move(next);
    if (change < tol) break;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Temporal-difference updates. Both touch only entry (x, u).

inline double q_update(QTable& q, std::size_t x, std::size_t u, double r, std::size_t x_next, double alpha,
                       double gamma) {
  double& e = q.at(x, u);
  e += alpha * (r + gamma * q.max(x_next) - e);
  return e;
}

inline double sarsa_update(QTable& q, std::size_t x, std::size_t u, double r, std::size_t x_next,
                           std::size_t u_next, double alpha, double gamma) {
  double& e = q.at(x, u);
  e += alpha * (r + gamma * q.at(x_next, u_next) - e);
  return e;
}

// ---------------------------------------------------------------------------
// Behavior policies.

struct Behavior {
  enum class Kind { greedy, epsilon_greedy, softmax };
  Kind kind = Kind::epsilon_greedy;
  // epsilon for epsilon-greedy (weight of the uniform component), temperature
  // rho for softmax
  double parameter = 0.9;

  static Behavior greedy() { return {Kind::greedy, 0.0}; }
  static Behavior epsilon_greedy(double eps) { return {Kind::epsilon_greedy, eps}; }
  static Behavior softmax(double rho) { return {Kind::softmax, rho}; }
};

// Action pf at state x: greedy is a delta at argmax, epsilon-greedy mixes it
// with the uniform pf, softmax is proportional to exp(Q(x, u) / rho) over
// actions.
inline DiscretePF behavior_policy(const QTable& q, std::size_t x, const Behavior& b) {
  const std::size_t n = q.n_actions();
  switch (b.kind) {
    case Behavior::Kind::greedy:
      return DiscretePF::delta(n, q.argmax(x));
    case Behavior::Kind::epsilon_greedy:
      return mix(DiscretePF::delta(n, q.argmax(x)), DiscretePF::uniform(n), b.parameter);
    case Behavior::Kind::softmax: {
      if (!(b.parameter > 0.0)) throw InvalidInput("softmax temperature must be positive");
      const auto r = q.row(x);
      const double top = *std::max_element(r.begin(), r.end());
      std::vector<double> w(n);
      for (std::size_t u = 0; u < n; ++u) w[u] = std::exp((r[u] - top) / b.parameter);
      return DiscretePF::from_weights(w);
    }
  }
  throw InvalidInput("unknown behavior policy");
}

// Draws from behavior_policy(q, x, b) without materializing the pf.
inline std::size_t sample_behavior(const QTable& q, std::size_t x, const Behavior& b, Rng& rng) {
  switch (b.kind) {
    case Behavior::Kind::greedy:
      return q.argmax(x);
    case Behavior::Kind::epsilon_greedy:
      if (uniform(rng, 0.0, 1.0) < b.parameter)
        return std::uniform_int_distribution<std::size_t>(0, q.n_actions() - 1)(rng);
      return q.argmax(x);
    case Behavior::Kind::softmax:
      return sample(behavior_policy(q, x, b), rng);
  }
  throw InvalidInput("unknown behavior policy");
}

// ---------------------------------------------------------------------------
// Tabular tasks: anything with n_states(), n_actions(), initial_state(rng),
// cell(state) and step(state, action_cell, rng) -> {next state, reward}.

struct PendulumTask {
  PendulumParams params;
  Grid state_grid;
  Grid action_grid;
  PendulumState start = downward_state();

  using State = PendulumState;
  std::size_t n_states() const { return state_grid.size(); }
  std::size_t n_actions() const { return action_grid.size(); }
  State initial_state(Rng&) const { return start; }
  std::size_t cell(const State& s) const { return pendulum_cell(state_grid, s); }
  // Reward is evaluated on the continuous post-transition state.
  std::pair<State, double> step(const State& s, std::size_t a, Rng& rng) const {
    const double u = action_grid.axis(0).center(a);
    const auto next = pendulum_step(s, u, params, rng);
    return {next, pendulum_reward(next)};
  }
};

struct MdpTask {
  const FiniteMDP* mdp;

  using State = std::size_t;
  std::size_t n_states() const { return mdp->n_states; }
  std::size_t n_actions() const { return mdp->n_actions; }
  State initial_state(Rng& rng) const { return std::uniform_int_distribution<std::size_t>(0, mdp->n_states - 1)(rng); }
  std::size_t cell(const State& s) const { return s; }
  std::pair<State, double> step(const State& s, std::size_t a, Rng& rng) const { return mdp_step(*mdp, s, a, rng); }
};

enum class Algorithm { q_learning, sarsa };

struct TrainConfig {
  double alpha = 0.5;
  double gamma = 0.99;
  Behavior behavior = Behavior::epsilon_greedy(0.9);
  std::size_t episodes = 20000;
  std::size_t steps = 500;
  std::vector<std::size_t> checkpoints{20, 200, 2000, 20000};
  Algorithm algorithm = Algorithm::q_learning;
  double initial_q = 0.0;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("train: alpha must lie in (0, 1)");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("train: gamma must lie in [0, 1]");
    if (behavior.kind == Behavior::Kind::epsilon_greedy && !(behavior.parameter >= 0.0 && behavior.parameter <= 1.0))
      throw InvalidInput("train: epsilon must lie in [0, 1]");
    if (behavior.kind == Behavior::Kind::softmax && !(behavior.parameter > 0.0))
      throw InvalidInput("train: softmax temperature must be positive");
    if (steps < 1) throw InvalidInput("train: steps per episode must be >= 1");
    for (auto c : checkpoints)
      if (c > episodes) throw InvalidInput("train: checkpoint " + std::to_string(c) + " exceeds the episode count");
  }
};

struct Snapshot {
  std::size_t episodes = 0;
  QTable q;
};

struct TrainResult {
  QTable q;
  std::vector<Snapshot> snapshots;
};

// Episode e uses make_rng(seed, e, Stream::training). A snapshot is a copy of
// the table after the checkpoint's episode count.
template <class Task>
TrainResult train(const Task& task, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  TrainResult out;
  out.q = QTable(task.n_states(), task.n_actions(), cfg.initial_q);
  auto checkpoints = cfg.checkpoints;
  std::sort(checkpoints.begin(), checkpoints.end());
  checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
  std::size_t next_cp = 0;
  auto take_snapshots = [&](std::size_t done) {
    while (next_cp < checkpoints.size() && checkpoints[next_cp] == done) {
      out.snapshots.push_back({done, out.q});
      ++next_cp;
    }
  };
  take_snapshots(0);
  for (std::size_t e = 0; e < cfg.episodes; ++e) {
    Rng rng = make_rng(seed, e, Stream::training);
    auto s = task.initial_state(rng);
    std::size_t x = task.cell(s);
    std::size_t u = sample_behavior(out.q, x, cfg.behavior, rng);
    for (std::size_t k = 0; k < cfg.steps; ++k) {
      auto [s_next, r] = task.step(s, u, rng);
      const std::size_t x_next = task.cell(s_next);
      if (cfg.algorithm == Algorithm::q_learning) {
        q_update(out.q, x, u, r, x_next, cfg.alpha, cfg.gamma);
        u = sample_behavior(out.q, x_next, cfg.behavior, rng);
      } else {
        const std::size_t u_next = sample_behavior(out.q, x_next, cfg.behavior, rng);
        sarsa_update(out.q, x, u, r, x_next, u_next, cfg.alpha, cfg.gamma);
        u = u_next;
      }
      s = s_next;
      x = x_next;
    }
    take_snapshots(e + 1);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Closed-loop evaluation on the pendulum. A controller is a const callable
// (PendulumState, Rng&, RolloutLog&) -> torque.

struct GreedyController {
  const QTable* q;
  const Grid* state_grid;
  const Grid* action_grid;
  double operator()(PendulumState s, Rng&, RolloutLog&) const {
    return action_grid->axis(0).center(q->argmax(pendulum_cell(*state_grid, s)));
  }
};

// Samples the action cell from a policy table. An unobserved row falls back
// to the optional second table, then to a uniform torque; each fallback is
// counted once.
struct TableController {
  const PolicyTable* policy;
  const PolicyTable* fallback = nullptr;
  double operator()(PendulumState s, Rng& rng, RolloutLog& log) const {
    const auto x = pendulum_cell(policy->state_grid(), s);
    auto row = policy->row_view(x);
    const auto& ax = policy->action_grid().axis(0);
    if (row.empty()) {
      ++log.fallbacks;
      if (fallback) row = fallback->row_view(x);
      if (row.empty()) return uniform(rng, ax.lower, ax.upper);
    }
    return ax.center(sample(row, rng));
  }
};

struct Trajectory {
  std::vector<double> theta;   // state after step k
  std::vector<double> omega;
  std::vector<double> torque;  // action applied at step k
  std::vector<double> reward;  // reward of the state after step k
};

struct EvalOptions {
  std::size_t n_episodes = 50;
  std::size_t n_steps = 300;
  std::size_t final_window = 100;
  PendulumState start = downward_state();
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct EvalResult {
  std::vector<Trajectory> trajectories;
  SeriesStats theta, omega, torque;
  // per-episode mean reward over the final window, then its mean and std
  std::vector<double> episode_final_reward;
  double final_reward_mean = 0.0;
  double final_reward_std = 0.0;
  // mean |theta| over the final window, averaged over episodes
  double final_abs_theta = 0.0;
  std::size_t fallbacks = 0;
};

template <class Controller>
Trajectory rollout(const PendulumParams& params, const Controller& ctrl, PendulumState start, std::size_t n_steps,
                   Rng& rng, RolloutLog& log) {
  Trajectory t;
  t.theta.reserve(n_steps);
  t.omega.reserve(n_steps);
  t.torque.reserve(n_steps);
  t.reward.reserve(n_steps);
  PendulumState s = start;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double u = ctrl(s, rng, log);
    s = pendulum_step(s, u, params, rng);
    t.theta.push_back(s.theta);
    t.omega.push_back(s.omega);
    t.torque.push_back(u);
    t.reward.push_back(pendulum_reward(s));
  }
  return t;
}

inline EvalResult summarize(std::vector<Trajectory> trajectories, std::size_t final_window) {
  EvalResult res;
  res.trajectories = std::move(trajectories);
  std::vector<std::vector<double>> th, om, tq;
  for (const auto& t : res.trajectories) {
    th.push_back(t.theta);
    om.push_back(t.omega);
    tq.push_back(t.torque);
  }
  res.theta = across_runs(th);
  res.omega = across_runs(om);
  res.torque = across_runs(tq);
  double abs_theta = 0.0;
  for (const auto& t : res.trajectories) {
    const std::size_t n = t.reward.size();
    const std::size_t w = std::min(final_window, n);
    double r = 0.0, a = 0.0;
    for (std::size_t k = n - w; k < n; ++k) {
      r += t.reward[k];
      a += std::abs(t.theta[k]);
    }
    res.episode_final_reward.push_back(w ? r / static_cast<double>(w) : 0.0);
    abs_theta += w ? a / static_cast<double>(w) : 0.0;
  }
  std::tie(res.final_reward_mean, res.final_reward_std) = mean_std(res.episode_final_reward);
  res.final_abs_theta = res.trajectories.empty() ? 0.0 : abs_theta / static_cast<double>(res.trajectories.size());
  return res;
}

// Episode e runs on make_rng(seed, e, Stream::evaluation).
template <class Controller>
EvalResult evaluate(const PendulumParams& params, const Controller& ctrl, const EvalOptions& opt) {
  if (opt.n_episodes < 1 || opt.n_steps < 1) throw InvalidInput("evaluate: episodes and steps must be >= 1");
  std::vector<Trajectory> trajs(opt.n_episodes);
  std::vector<RolloutLog> logs(opt.n_episodes);
  parallel_for(opt.n_episodes, opt.workers, [&](std::size_t e) {
    Rng rng = make_rng(opt.seed, e, Stream::evaluation);
    trajs[e] = rollout(params, ctrl, opt.start, opt.n_steps, rng, logs[e]);
  });
  auto res = summarize(std::move(trajs), opt.final_window);
  for (const auto& l : logs) res.fallbacks += l.fallbacks;
  return res;
}

}  // namespace pfdm
