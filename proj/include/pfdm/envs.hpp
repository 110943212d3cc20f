#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pfdm/error.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"

namespace pfdm {

// ---------------------------------------------------------------------------
// Scalar linear system x' = x + u + w, w ~ N(0, sigma^2).

inline double linear_step(double x, double u, Rng& rng, double sigma = 1.0) {
  if (!std::isfinite(x) || !std::isfinite(u)) throw InvalidInput("linear_step: non-finite input");
  return x + u + gaussian(rng, sigma);
}

namespace detail {
inline double normal_cdf(double x, double mean, double sigma) {
  return 0.5 * std::erfc(-(x - mean) / (sigma * std::numbers::sqrt2));
}
}  // namespace detail

// N(x + u, sigma^2) integrated over each bin of a 1-D grid, renormalized to
// the grid's box.
inline DiscretePF analytic_linear_row(double x, double u, const Grid& grid, double sigma = 1.0) {
  if (grid.dims() != 1) throw InvalidInput("analytic_linear_row: grid must be one-dimensional");
  const auto& ax = grid.axis(0);
  const double mean = x + u;
  std::vector<double> w(ax.bins);
  for (std::size_t k = 0; k < ax.bins; ++k) {
    const double lo = ax.lower + static_cast<double>(k) * ax.width();
    const double hi = lo + ax.width();
    w[k] = detail::normal_cdf(hi, mean, sigma) - detail::normal_cdf(lo, mean, sigma);
  }
  return DiscretePF::from_weights(w);
}

// ---------------------------------------------------------------------------
// Noisy pendulum; theta = 0 is the upward equilibrium.

struct PendulumParams {
  double dt = 0.1;
  double length = 0.6;
  double mass = 1.0;
  double gravity = 9.81;
  double sigma_theta = 6.0 * std::numbers::pi / 180.0;
  double sigma_omega = 0.1;
  double theta_min = -std::numbers::pi, theta_max = std::numbers::pi;
  double omega_min = -5.0, omega_max = 5.0;
  double torque_min = -2.5, torque_max = 2.5;

  void validate() const {
    if (!(dt > 0 && length > 0 && mass > 0 && gravity > 0))
      throw InvalidInput("pendulum: dt, length, mass and gravity must be positive");
    if (!(sigma_theta >= 0 && sigma_omega >= 0)) throw InvalidInput("pendulum: noise std must be non-negative");
    if (!(theta_min < theta_max && omega_min < omega_max && torque_min < torque_max))
      throw InvalidInput("pendulum: state and torque boxes must be nondegenerate");
  }

  PendulumParams noise_free() const {
    auto p = *this;
    p.sigma_theta = p.sigma_omega = 0.0;
    return p;
  }
};

struct PendulumState {
  double theta = 0.0;
  double omega = 0.0;
};

// theta = pi - 1e-6 rather than pi, which wraps to -pi.
inline PendulumState downward_state() { return {std::numbers::pi - 1e-6, 0.0}; }

namespace detail {
inline double wrap_angle(double theta, double lo, double hi) {
  if (theta >= lo && theta < hi) return theta;
  const double range = hi - lo;
  if (theta >= hi && theta < hi + range) return std::clamp(theta - range, lo, std::nextafter(hi, lo));
  if (theta < lo && theta >= lo - range) return std::clamp(theta + range, lo, std::nextafter(hi, lo));
  double y = std::fmod(theta - lo, range);
  if (y < 0.0) y += range;
  if (y >= range) y = 0.0;
  return lo + y;
}
}  // namespace detail

inline PendulumState pendulum_step(PendulumState s, double u, const PendulumParams& p, double w_theta,
                                   double w_omega) {
  const double l = p.length;
  double theta = s.theta + s.omega * p.dt + w_theta;
  double omega = s.omega + ((p.gravity / l) * std::sin(s.theta) + u / (p.mass * l * l)) * p.dt + w_omega;
  theta = detail::wrap_angle(theta, p.theta_min, p.theta_max);
  omega = std::clamp(omega, p.omega_min, p.omega_max);
  return {theta, omega};
}

inline PendulumState pendulum_step(PendulumState s, double u, const PendulumParams& p, Rng& rng) {
  if (!std::isfinite(s.theta) || !std::isfinite(s.omega) || !std::isfinite(u))
    throw InvalidInput("pendulum_step: non-finite input");
  const double w_theta = gaussian(rng, p.sigma_theta);
  const double w_omega = gaussian(rng, p.sigma_omega);
  return pendulum_step(s, u, p, w_theta, w_omega);
}

inline PendulumState pendulum_nominal(PendulumState s, double u, const PendulumParams& p) {
  return pendulum_step(s, u, p, 0.0, 0.0);
}

inline double pendulum_reward(PendulumState s) { return -s.theta * s.theta - 0.1 * s.omega * s.omega; }
inline double pendulum_state_cost(PendulumState s) { return -pendulum_reward(s); }

inline Grid pendulum_state_grid(const PendulumParams& p, std::size_t theta_bins = 50, std::size_t omega_bins = 50) {
  return Grid("state", {Axis{p.theta_min, p.theta_max, theta_bins, Boundary::wrap},
                        Axis{p.omega_min, p.omega_max, omega_bins, Boundary::clip}});
}

inline Grid pendulum_action_grid(const PendulumParams& p, std::size_t bins = 20) {
  return Grid("action", {Axis{p.torque_min, p.torque_max, bins, Boundary::clip}});
}

inline std::size_t pendulum_cell(const Grid& state_grid, PendulumState s) {
  return state_grid.quantize({s.theta, s.omega});
}

inline PendulumState pendulum_center(const Grid& state_grid, std::size_t cell) {
  const auto c = state_grid.center_of(cell);
  return {c[0], c[1]};
}

// ---------------------------------------------------------------------------
// Explicit finite MDP with rewards r(x, u) and row-stochastic P(x' | x, u).

struct FiniteMDP {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  // condition cell x * n_actions + u, outcome cell x'
  ConditionalPF transitions;
  // r[x * n_actions + u]
  std::vector<double> rewards;
  double gamma = 1.0;

  FiniteMDP() = default;

  FiniteMDP(std::size_t states, std::size_t actions, ConditionalPF p, std::vector<double> r, double discount = 1.0)
      : n_states(states), n_actions(actions), transitions(std::move(p)), rewards(std::move(r)), gamma(discount) {
    validate();
  }

  // dense[x][u][x']
  static FiniteMDP from_dense(const std::vector<std::vector<std::vector<double>>>& dense, std::vector<double> r,
                              double discount = 1.0) {
    const std::size_t ns = dense.size();
    const std::size_t na = ns ? dense[0].size() : 0;
    std::vector<Triple> t;
    for (std::size_t x = 0; x < ns; ++x) {
      if (dense[x].size() != na) throw InvalidInput("FiniteMDP: ragged transition tensor");
      for (std::size_t u = 0; u < na; ++u) {
        if (dense[x][u].size() != ns) throw InvalidInput("FiniteMDP: ragged transition tensor");
        for (std::size_t y = 0; y < ns; ++y) t.push_back({x * na + u, y, dense[x][u][y]});
      }
    }
    return FiniteMDP(ns, na, ConditionalPF(state_action_grid(ns, na), Grid::indexed("mdp_state", ns), std::move(t)),
                     std::move(r), discount);
  }

  static Grid state_action_grid(std::size_t ns, std::size_t na) {
    return Grid::product("mdp_state_action", Grid::indexed("mdp_state", ns), Grid::indexed("mdp_action", na));
  }

  RowView row(std::size_t x, std::size_t u) const { return transitions.row_view(x * n_actions + u); }
  double reward(std::size_t x, std::size_t u) const { return rewards[x * n_actions + u]; }

  void validate() const {
    if (n_states == 0 || n_actions == 0) throw InvalidInput("FiniteMDP: needs at least one state and action");
    if (transitions.n_cond() != n_states * n_actions || transitions.n_out() != n_states)
      throw GridMismatch("FiniteMDP: transition table has the wrong shape");
    if (rewards.size() != n_states * n_actions) throw InvalidInput("FiniteMDP: reward table has the wrong shape");
    for (double r : rewards)
      if (!std::isfinite(r)) throw InvalidInput("FiniteMDP: rewards must be finite");
    for (std::size_t c = 0; c < transitions.n_cond(); ++c)
      if (transitions.row_view(c).empty()) throw InvalidInput("FiniteMDP: every (x, u) row must be a pf");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("FiniteMDP: discount must lie in [0, 1]");
  }
};

inline std::pair<std::size_t, double> mdp_step(const FiniteMDP& mdp, std::size_t x, std::size_t u, Rng& rng) {
  if (x >= mdp.n_states || u >= mdp.n_actions) throw InvalidInput("mdp_step: index out of range");
  return {sample(mdp.row(x, u), rng), mdp.reward(x, u)};
}

// r(x, u) = -theta^2 - 0.1 omega^2 at state cell centers, constant in u.
inline std::vector<double> pendulum_reward_table(const Grid& state_grid, std::size_t n_actions) {
  std::vector<double> r(state_grid.size() * n_actions);
  for (std::size_t x = 0; x < state_grid.size(); ++x) {
    const double v = pendulum_reward(pendulum_center(state_grid, x));
    for (std::size_t u = 0; u < n_actions; ++u) r[x * n_actions + u] = v;
  }
  return r;
}

}  // namespace pfdm
