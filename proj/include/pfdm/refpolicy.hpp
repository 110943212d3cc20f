#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"

namespace pfdm {

// Receding-horizon swing-up controller used to produce reference data.
// Planning cost over a window starting at x_k:
//   sum_{t=k}^{k+H-1} (w_theta theta_t^2 + w_omega omega_t^2)
//     + w_theta_T theta_{k+H}^2 + w_omega_T omega_{k+H}^2
struct MpcConfig {
  std::size_t horizon = 20;
  double w_theta = 1.0;
  double w_omega = 0.1;
  double w_theta_terminal = 1.0;
  double w_omega_terminal = 0.5;
  double u_min = -2.0;
  double u_max = 2.0;
  // cross-entropy method
  std::size_t population = 200;
  std::size_t elites = 20;
  std::size_t iterations = 8;
  double initial_std = 1.0;
  double min_std = 0.05;
  // exploration noise added to the first planned action
  double sigma_u = 0.2;

  void validate(const PendulumParams& p) const {
    if (horizon < 1) throw InvalidInput("mpc: horizon must be >= 1");
    if (w_theta < 0 || w_omega < 0 || w_theta_terminal < 0 || w_omega_terminal < 0)
      throw InvalidInput("mpc: weights must be non-negative");
    if (!(u_min < u_max)) throw InvalidInput("mpc: empty control box");
    if (u_min < p.torque_min || u_max > p.torque_max)
      throw InvalidInput("mpc: planning box must lie inside the torque box");
    if (population < 2 || elites < 1 || elites > population || iterations < 1)
      throw InvalidInput("mpc: invalid CEM sizes");
    if (!(initial_std > 0) || !(min_std >= 0)) throw InvalidInput("mpc: invalid CEM standard deviations");
    if (!(sigma_u >= 0)) throw InvalidInput("mpc: sigma_u must be non-negative");
  }
};

// Cost of an action sequence under the noise-free model.
inline double mpc_cost(PendulumState x, std::span<const double> u, const PendulumParams& p, const MpcConfig& c) {
  double cost = 0.0;
  for (double a : u) {
    cost += c.w_theta * x.theta * x.theta + c.w_omega * x.omega * x.omega;
    x = pendulum_nominal(x, a, p);
  }
  return cost + c.w_theta_terminal * x.theta * x.theta + c.w_omega_terminal * x.omega * x.omega;
}

struct Plan {
  std::vector<double> actions;
  double cost = 0.0;
  // best cost found after each CEM iteration
  std::vector<double> best_history;
};

// Cross-entropy shooting over the planning box. The zero sequence and the
// warm start are always candidates, and the best sequence seen survives
// every iteration, so the returned cost never exceeds the zero sequence's.
inline Plan cem_plan(PendulumState x, const PendulumParams& p, const MpcConfig& c, Rng& rng,
                     std::span<const double> warm_start = {}) {
  const std::size_t H = c.horizon;
  std::vector<double> mean(H, 0.0), stddev(H, c.initial_std);
  if (!warm_start.empty()) {
    if (warm_start.size() != H) throw InvalidInput("cem_plan: warm start has the wrong length");
    std::copy(warm_start.begin(), warm_start.end(), mean.begin());
  }

  Plan best;
  best.actions.assign(H, 0.0);
  best.cost = mpc_cost(x, best.actions, p, c);
  if (!warm_start.empty()) {
    const double wc = mpc_cost(x, mean, p, c);
    if (wc < best.cost) {
      best.cost = wc;
      best.actions = mean;
    }
  }

  std::vector<double> samples(c.population * H), costs(c.population);
  std::vector<std::size_t> order(c.population);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t it = 0; it < c.iterations; ++it) {
    for (std::size_t s = 0; s < c.population; ++s) {
      auto seq = std::span<double>(samples).subspan(s * H, H);
      if (s == 0) {
        std::copy(mean.begin(), mean.end(), seq.begin());
      } else {
        for (std::size_t t = 0; t < H; ++t) seq[t] = std::clamp(mean[t] + stddev[t] * normal(rng), c.u_min, c.u_max);
      }
      costs[s] = mpc_cost(x, seq, p, c);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(c.elites), order.end(),
                      [&](std::size_t a, std::size_t b) { return costs[a] < costs[b] || (costs[a] == costs[b] && a < b); });
    if (costs[order[0]] < best.cost) {
      best.cost = costs[order[0]];
      const auto seq = std::span<const double>(samples).subspan(order[0] * H, H);
      best.actions.assign(seq.begin(), seq.end());
    }
    best.best_history.push_back(best.cost);
    for (std::size_t t = 0; t < H; ++t) {
      double m = 0.0;
      for (std::size_t e = 0; e < c.elites; ++e) m += samples[order[e] * H + t];
      m /= static_cast<double>(c.elites);
      double v = 0.0;
      for (std::size_t e = 0; e < c.elites; ++e) {
        const double d = samples[order[e] * H + t] - m;
        v += d * d;
      }
      mean[t] = m;
      stddev[t] = std::max(std::sqrt(v / static_cast<double>(c.elites)), c.min_std);
    }
  }
  return best;
}

// Replans every step, warm-starting from the previous plan shifted by one.
class MpcController {
 public:
  MpcController(PendulumParams model, MpcConfig cfg) : model_(model.noise_free()), cfg_(cfg) {}

  void reset() { previous_.clear(); }

  // First action of the current plan (no exploration noise).
  double plan(PendulumState x, Rng& rng) {
    std::vector<double> warm;
    if (!previous_.empty()) {
      warm.assign(previous_.begin() + 1, previous_.end());
      warm.push_back(previous_.back());
    }
    auto result = cem_plan(x, model_, cfg_, rng, warm);
    previous_ = std::move(result.actions);
    return previous_.front();
  }

  const MpcConfig& config() const { return cfg_; }

 private:
  PendulumParams model_;
  MpcConfig cfg_;
  std::vector<double> previous_;
};

enum class InitialRule { downward, uniform };

struct ReferenceOptions {
  std::size_t n_episodes = 200;
  std::size_t n_steps = 100;
  std::uint64_t seed = 0;
  InitialRule initial = InitialRule::uniform;
  OutOfRange out_of_range = OutOfRange::map;
  std::size_t workers = 1;
};

struct Reference {
  ConditionalPF g_x;
  PolicyTable g_u;
  Dataset data;
};

// Noisy-MPC rollouts on the reference pendulum. Applied torque is
// clip(first planned action + N(0, sigma_u^2), torque box); the logged
// trajectories then give g_u(u | x) and g_x(x' | x, u) by the histogram filter.
inline Dataset reference_rollouts(const PendulumParams& plant, const MpcConfig& cfg, const ReferenceOptions& opt) {
  cfg.validate(plant);
  plant.validate();
  const PendulumEnv env{plant};
  if (opt.n_episodes < 1 || opt.n_steps < 1) throw InvalidInput("reference: episodes and steps must be >= 1");
  Dataset d;
  d.environment = "pendulum";
  d.seed = opt.seed;
  d.x_dim = 2;
  d.u_dim = 1;
  d.n_steps = opt.n_steps;
  d.episodes.resize(opt.n_episodes);
  parallel_for(opt.n_episodes, opt.workers, [&](std::size_t e) {
    Rng rng = make_rng(opt.seed, e, Stream::reference);
    Rng plan_rng = make_rng(opt.seed, e, Stream::planning);
    MpcController mpc(plant, cfg);
    Episode ep;
    PendulumState x = opt.initial == InitialRule::downward ? downward_state() : PendulumState{};
    if (opt.initial == InitialRule::uniform) {
      const auto x0 = env.sample_initial(rng);
      x = {x0[0], x0[1]};
    }
    ep.x0 = {x.theta, x.omega};
    for (std::size_t k = 0; k < opt.n_steps; ++k) {
      const double planned = mpc.plan(x, plan_rng);
      const double u = std::clamp(planned + gaussian(rng, cfg.sigma_u), plant.torque_min, plant.torque_max);
      x = pendulum_step(x, u, plant, rng);
      ep.actions.push_back(u);
      ep.states.push_back(x.theta);
      ep.states.push_back(x.omega);
    }
    d.episodes[e] = std::move(ep);
  });
  return d;
}

inline Reference build_reference(const PendulumParams& plant, const MpcConfig& cfg, const Grid& state_grid,
                                 const Grid& action_grid, const ReferenceOptions& opt) {
  Reference ref;
  ref.data = reference_rollouts(plant, cfg, opt);
  ref.g_u = estimate_policy(ref.data, state_grid, action_grid, opt.out_of_range);
  ref.g_x = estimate_transitions(ref.data, state_grid, action_grid, opt.out_of_range);
  return ref;
}

}  // namespace pfdm
