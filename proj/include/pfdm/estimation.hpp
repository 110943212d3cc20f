#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/error.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/parallel.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"

namespace pfdm {

// What the histogram filter does with a sample outside a clip axis' box.
enum class OutOfRange { discard, map };

// Flat storage for (z, y) pairs: outcome z, condition y.
class PairSet {
 public:
  PairSet(std::size_t z_dim, std::size_t y_dim) : z_dim_(z_dim), y_dim_(y_dim) {}

  void add(std::span<const double> z, std::span<const double> y) {
    if (z.size() != z_dim_ || y.size() != y_dim_) throw InvalidInput("PairSet: dimension mismatch");
    z_.insert(z_.end(), z.begin(), z.end());
    y_.insert(y_.end(), y.begin(), y.end());
  }

  void add(std::initializer_list<double> z, std::initializer_list<double> y) {
    add(std::span<const double>(z.begin(), z.size()), std::span<const double>(y.begin(), y.size()));
  }

  std::size_t size() const { return z_dim_ ? z_.size() / z_dim_ : 0; }
  bool empty() const { return size() == 0; }
  std::size_t z_dim() const { return z_dim_; }
  std::size_t y_dim() const { return y_dim_; }
  std::span<const double> z(std::size_t i) const { return std::span<const double>(z_).subspan(i * z_dim_, z_dim_); }
  std::span<const double> y(std::size_t i) const { return std::span<const double>(y_).subspan(i * y_dim_, y_dim_); }

 private:
  std::size_t z_dim_;
  std::size_t y_dim_;
  std::vector<double> z_;
  std::vector<double> y_;
};

// Histogram filter for p(z | y): count joint (y, z) cells and the y
// marginal, then divide. Conditions without data keep the all-zero row.
inline ConditionalPF estimate_conditional(const PairSet& pairs, const Grid& z_grid, const Grid& y_grid,
                                          OutOfRange oor = OutOfRange::map) {
  if (pairs.empty()) throw InvalidInput("estimate_conditional: no data");
  if (pairs.z_dim() != z_grid.dims() || pairs.y_dim() != y_grid.dims())
    throw InvalidInput("estimate_conditional: data dimension does not match grids");

  const std::uint64_t n_out = z_grid.size();
  std::vector<std::uint64_t> keys;
  keys.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto z = pairs.z(i), y = pairs.y(i);
    if (oor == OutOfRange::discard && (!z_grid.contains(z) || !y_grid.contains(y))) continue;
    keys.push_back(static_cast<std::uint64_t>(y_grid.quantize(y)) * n_out + z_grid.quantize(z));
  }
  std::sort(keys.begin(), keys.end());

  std::vector<std::size_t> offsets(y_grid.size() + 1, 0), cells;
  std::vector<double> probs;
  std::vector<std::size_t> counts;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    const auto cond = static_cast<std::size_t>(keys[i] / n_out);
    ++offsets[cond + 1];
    cells.push_back(static_cast<std::size_t>(keys[i] % n_out));
    counts.push_back(j - i);
    i = j;
  }
  for (std::size_t c = 1; c < offsets.size(); ++c) offsets[c] += offsets[c - 1];
  probs.resize(counts.size());
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
    std::size_t row_total = 0;
    for (auto k = offsets[c]; k < offsets[c + 1]; ++k) row_total += counts[k];
    for (auto k = offsets[c]; k < offsets[c + 1]; ++k)
      probs[k] = static_cast<double>(counts[k]) / static_cast<double>(row_total);
  }
  return ConditionalPF(y_grid, z_grid, std::move(offsets), std::move(cells), std::move(probs));
}

// ---------------------------------------------------------------------------
// Trajectory datasets.

struct Episode {
  std::vector<double> x0;
  std::vector<double> actions;  // n_steps * u_dim
  std::vector<double> states;   // n_steps * x_dim, the state after each action

  bool operator==(const Episode&) const = default;
};

struct Dataset {
  std::string environment;
  std::uint64_t seed = 0;
  std::size_t x_dim = 0;
  std::size_t u_dim = 0;
  std::size_t n_steps = 0;
  std::vector<Episode> episodes;
  std::size_t fallbacks = 0;

  std::size_t transitions() const { return episodes.size() * n_steps; }

  std::span<const double> state_before(std::size_t e, std::size_t k) const {
    const auto& ep = episodes[e];
    if (k == 0) return ep.x0;
    return std::span<const double>(ep.states).subspan((k - 1) * x_dim, x_dim);
  }
  std::span<const double> action(std::size_t e, std::size_t k) const {
    return std::span<const double>(episodes[e].actions).subspan(k * u_dim, u_dim);
  }
  std::span<const double> state_after(std::size_t e, std::size_t k) const {
    return std::span<const double>(episodes[e].states).subspan(k * x_dim, x_dim);
  }

  bool operator==(const Dataset&) const = default;
};

// z = x_k, y = (x_{k-1}, u_k)
inline PairSet transition_pairs(const Dataset& d) {
  PairSet out(d.x_dim, d.x_dim + d.u_dim);
  std::vector<double> y(d.x_dim + d.u_dim);
  for (std::size_t e = 0; e < d.episodes.size(); ++e)
    for (std::size_t k = 0; k < d.n_steps; ++k) {
      const auto x = d.state_before(e, k), u = d.action(e, k);
      std::copy(x.begin(), x.end(), y.begin());
      std::copy(u.begin(), u.end(), y.begin() + static_cast<std::ptrdiff_t>(d.x_dim));
      out.add(d.state_after(e, k), y);
    }
  return out;
}

// z = u_k, y = x_{k-1}
inline PairSet policy_pairs(const Dataset& d) {
  PairSet out(d.u_dim, d.x_dim);
  for (std::size_t e = 0; e < d.episodes.size(); ++e)
    for (std::size_t k = 0; k < d.n_steps; ++k) out.add(d.action(e, k), d.state_before(e, k));
  return out;
}

// z = x_k, y = x_{k-1}
inline PairSet state_pairs(const Dataset& d) {
  PairSet out(d.x_dim, d.x_dim);
  for (std::size_t e = 0; e < d.episodes.size(); ++e)
    for (std::size_t k = 0; k < d.n_steps; ++k) out.add(d.state_after(e, k), d.state_before(e, k));
  return out;
}

// f_x(x' | x, u) on state x action cells.
inline ConditionalPF estimate_transitions(const Dataset& d, const Grid& state_grid, const Grid& action_grid,
                                          OutOfRange oor = OutOfRange::map) {
  return estimate_conditional(transition_pairs(d), state_grid,
                              Grid::product(state_grid.name() + "_x_" + action_grid.name(), state_grid, action_grid),
                              oor);
}

inline PolicyTable estimate_policy(const Dataset& d, const Grid& state_grid, const Grid& action_grid,
                                   OutOfRange oor = OutOfRange::map) {
  return PolicyTable(estimate_conditional(policy_pairs(d), action_grid, state_grid, oor));
}

// ---------------------------------------------------------------------------
// Environments and input policies for dataset generation.

struct PendulumEnv {
  PendulumParams params;

  static constexpr std::size_t state_dim = 2;
  static constexpr std::size_t action_dim = 1;
  std::string tag() const { return "pendulum"; }

  std::vector<double> sample_initial(Rng& rng) const {
    const double th = uniform(rng, params.theta_min, params.theta_max);
    const double om = uniform(rng, params.omega_min, params.omega_max);
    return {th, om};
  }
  std::vector<double> step(std::span<const double> x, std::span<const double> u, Rng& rng) const {
    const auto s = pendulum_step(PendulumState{x[0], x[1]}, u[0], params, rng);
    return {s.theta, s.omega};
  }
  double action_lower(std::size_t) const { return params.torque_min; }
  double action_upper(std::size_t) const { return params.torque_max; }
};

// x' = x + u + w on [x_min, x_max] with inputs in [u_min, u_max].
struct LinearEnv {
  double sigma = 1.0;
  double x_min = -5.0, x_max = 5.0;
  double u_min = -1.0, u_max = 1.0;

  static constexpr std::size_t state_dim = 1;
  static constexpr std::size_t action_dim = 1;
  std::string tag() const { return "linear"; }

  std::vector<double> sample_initial(Rng& rng) const { return {uniform(rng, x_min, x_max)}; }
  std::vector<double> step(std::span<const double> x, std::span<const double> u, Rng& rng) const {
    return {linear_step(x[0], u[0], rng, sigma)};
  }
  double action_lower(std::size_t) const { return u_min; }
  double action_upper(std::size_t) const { return u_max; }
};

// Per-rollout bookkeeping of policy fallbacks.
struct RolloutLog {
  std::size_t fallbacks = 0;
};

template <class Env>
struct UniformInput {
  const Env* env;
  std::vector<double> operator()(std::span<const double>, Rng& rng, RolloutLog&) const {
    std::vector<double> u(Env::action_dim);
    for (std::size_t i = 0; i < u.size(); ++i) u[i] = uniform(rng, env->action_lower(i), env->action_upper(i));
    return u;
  }
};

struct ZeroInput {
  std::size_t dim = 1;
  std::vector<double> operator()(std::span<const double>, Rng&, RolloutLog&) const {
    return std::vector<double>(dim, 0.0);
  }
};

// Samples an action cell from a policy table and applies its center. An
// unobserved state row falls back to a uniform draw over the action box.
template <class Env>
struct TableInput {
  const Env* env;
  const PolicyTable* policy;
  std::vector<double> operator()(std::span<const double> x, Rng& rng, RolloutLog& log) const {
    const auto row = policy->row_view(policy->state_grid().quantize(x));
    if (row.empty()) {
      ++log.fallbacks;
      return UniformInput<Env>{env}(x, rng, log);
    }
    return policy->action_grid().center_of(sample(row, rng));
  }
};

struct GenerateOptions {
  std::optional<std::vector<double>> initial_state;
  std::size_t workers = 1;
};

// Simulates n_episodes closed-loop episodes; episode e draws all of its
// randomness from make_rng(seed, e).
template <class Env, class Policy>
Dataset generate_dataset(const Env& env, const Policy& policy, std::size_t n_episodes, std::size_t n_steps,
                         std::uint64_t seed, const GenerateOptions& opt = {}) {
  if (n_episodes < 1 || n_steps < 1) throw InvalidInput("generate_dataset: episodes and steps must be >= 1");
  if (opt.initial_state && opt.initial_state->size() != Env::state_dim)
    throw InvalidInput("generate_dataset: initial state has the wrong dimension");
  Dataset d;
  d.environment = env.tag();
  d.seed = seed;
  d.x_dim = Env::state_dim;
  d.u_dim = Env::action_dim;
  d.n_steps = n_steps;
  d.episodes.resize(n_episodes);
  std::vector<RolloutLog> logs(n_episodes);
  parallel_for(n_episodes, opt.workers, [&](std::size_t e) {
    Rng rng = make_rng(seed, e, Stream::dataset);
    Episode ep;
    ep.x0 = opt.initial_state ? *opt.initial_state : env.sample_initial(rng);
    ep.actions.reserve(n_steps * Env::action_dim);
    ep.states.reserve(n_steps * Env::state_dim);
    std::vector<double> x = ep.x0;
    for (std::size_t k = 0; k < n_steps; ++k) {
      const auto u = policy(x, rng, logs[e]);
      x = env.step(x, u, rng);
      ep.actions.insert(ep.actions.end(), u.begin(), u.end());
      ep.states.insert(ep.states.end(), x.begin(), x.end());
    }
    d.episodes[e] = std::move(ep);
  });
  for (const auto& l : logs) d.fallbacks += l.fallbacks;
  return d;
}

}  // namespace pfdm
