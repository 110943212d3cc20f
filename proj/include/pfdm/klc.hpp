#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/error.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/parallel.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"
#include "pfdm/stats.hpp"

namespace pfdm {

// Passive dynamics p(x' | x) from data logged under zero input.
inline ConditionalPF estimate_passive(const Dataset& d, const Grid& state_grid, OutOfRange oor = OutOfRange::map) {
  return estimate_conditional(state_pairs(d), state_grid, state_grid, oor);
}

// q(x) = theta_c^2 + 0.1 omega_c^2 at every cell center.
inline std::vector<double> pendulum_state_costs(const Grid& state_grid) {
  std::vector<double> q(state_grid.size());
  for (std::size_t x = 0; x < q.size(); ++x) q[x] = pendulum_state_cost(pendulum_center(state_grid, x));
  return q;
}

// Dominant eigenvector of diag(exp(-q)) P, scaled to max entry 1.
struct Desirability {
  std::vector<double> z;
  // dominant eigenvalue; 1 when P is row-stochastic and q == 0
  double eigenvalue = 1.0;
  std::size_t iterations = 0;
  // max_x |(diag(e^-q) P z)(x) / eigenvalue - z(x)|
  double residual = std::numeric_limits<double>::infinity();
  bool converged = false;
  std::vector<double> residual_history;

  // Relative cost-to-go -ln z (infinite where z == 0).
  std::vector<double> cost_to_go() const {
    std::vector<double> v(z.size());
    for (std::size_t i = 0; i < z.size(); ++i)
      v[i] = z[i] > 0.0 ? -std::log(z[i]) : std::numeric_limits<double>::infinity();
    return v;
  }
};

namespace detail {
// w = diag(e^-q) P z, each present row divided by its own mass so that
// P 1 == 1 holds exactly for normalized rows.
inline void apply_twisted(const ConditionalPF& p, std::span<const double> decay, std::span<const double> z,
                          std::span<double> w) {
  for (std::size_t x = 0; x < p.n_cond(); ++x) {
    const auto r = p.row_view(x);
    double acc = 0.0, mass = 0.0;
    for (std::size_t i = 0; i < r.nnz(); ++i) {
      acc += r.probs[i] * z[r.cells[i]];
      mass += r.probs[i];
    }
    w[x] = mass > 0.0 ? decay[x] * (acc / mass) : 0.0;
  }
}
}  // namespace detail

// Power iteration z <- normalize(diag(e^-q) P z) from z = 1. Unobserved rows
// of P are zero and take z = 0 after the first product.
inline Desirability power_iteration(const ConditionalPF& p, std::span<const double> q, double tol = 1e-10,
                                    std::size_t max_iter = 1'000'000) {
  if (p.n_cond() != p.n_out()) throw GridMismatch("power_iteration: passive dynamics must be square");
  if (q.size() != p.n_cond()) throw InvalidInput("power_iteration: state cost has the wrong length");
  for (double v : q)
    if (!std::isfinite(v) || v < 0.0) throw InvalidInput("power_iteration: state cost must be finite and >= 0");
  if (!(tol > 0.0)) throw InvalidInput("power_iteration: tolerance must be positive");

  const std::size_t n = q.size();
  std::vector<double> decay(n), w(n);
  for (std::size_t i = 0; i < n; ++i) decay[i] = std::exp(-q[i]);

  Desirability d;
  d.z.assign(n, 1.0);
  for (std::size_t it = 0; it < max_iter; ++it) {
    detail::apply_twisted(p, decay, d.z, w);
    const double lambda = *std::max_element(w.begin(), w.end());
    if (!(lambda > 0.0)) throw DegenerateSupport("power_iteration: desirability collapsed to zero");
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      w[i] /= lambda;
      res = std::max(res, std::abs(w[i] - d.z[i]));
    }
    d.eigenvalue = lambda;
    d.residual = res;
    d.iterations = it + 1;
    d.residual_history.push_back(res);
    if (res < tol) {
      d.converged = true;
      break;
    }
    d.z.swap(w);
  }
  return d;
}

// pi*(x' | x) = p(x' | x) z(x') / G_z(x) on each observed row of p.
inline ConditionalPF klc_transitions(const ConditionalPF& p, std::span<const double> z) {
  if (z.size() != p.n_out()) throw InvalidInput("klc_transitions: desirability has the wrong length");
  std::vector<std::size_t> offsets{0}, cells;
  std::vector<double> probs;
  offsets.reserve(p.n_cond() + 1);
  std::vector<std::size_t> degenerate;
  for (std::size_t x = 0; x < p.n_cond(); ++x) {
    const auto r = p.row_view(x);
    if (!r.empty()) {
      bool constant = true;
      for (std::size_t i = 1; i < r.nnz() && constant; ++i) constant = z[r.cells[i]] == z[r.cells[0]];
      if (constant && z[r.cells[0]] > 0.0) {
        cells.insert(cells.end(), r.cells.begin(), r.cells.end());
        probs.insert(probs.end(), r.probs.begin(), r.probs.end());
      } else {
        double g = 0.0;
        for (std::size_t i = 0; i < r.nnz(); ++i) g += r.probs[i] * z[r.cells[i]];
        if (!(g > 0.0)) {
          degenerate.push_back(x);
        } else {
          for (std::size_t i = 0; i < r.nnz(); ++i) {
            const double v = r.probs[i] * z[r.cells[i]] / g;
            if (v > 0.0) {
              cells.push_back(r.cells[i]);
              probs.push_back(v);
            }
          }
        }
      }
    }
    offsets.push_back(cells.size());
  }
  if (!degenerate.empty()) {
    std::string msg = "klc_transitions: zero normalizer in state cell(s)";
    for (std::size_t i = 0; i < degenerate.size() && i < 20; ++i) msg += " " + std::to_string(degenerate[i]);
    if (degenerate.size() > 20) msg += " ...";
    throw DegenerateSupport(msg);
  }
  return ConditionalPF(p.cond_grid(), p.out_grid(), std::move(offsets), std::move(cells), std::move(probs));
}

inline ConditionalPF klc_transitions(const ConditionalPF& p, const Desirability& z) {
  return klc_transitions(p, std::span<const double>(z.z));
}

// Optimality certificate for the average-cost form: with v = -ln z and
// eigenvalue lambda, the optimal pi satisfies on every observed row
//   v(x) = q(x) + ln(lambda) + KL(pi(.|x) || p(.|x)) + E_pi[v(X')].
// Returns the largest violation; rows of pi that are empty or start where
// z <= z_min are skipped. Power iteration only resolves z to an absolute
// tolerance, so -ln z is unreliable on cells with z near that tolerance.
inline double bellman_residual(const ConditionalPF& pi, const ConditionalPF& p, std::span<const double> q,
                               const Desirability& z, double z_min = 0.0) {
  require_same_shape(pi.cond_grid(), p.cond_grid(), "bellman_residual (condition)");
  require_same_shape(pi.out_grid(), p.out_grid(), "bellman_residual (outcome)");
  if (q.size() != pi.n_cond() || z.z.size() != pi.n_out()) throw InvalidInput("bellman_residual: length mismatch");
  const auto v = z.cost_to_go();
  const double shift = std::log(z.eigenvalue);
  double worst = 0.0;
  for (std::size_t x = 0; x < pi.n_cond(); ++x) {
    const auto r = pi.row_view(x);
    if (r.empty() || !(z.z[x] > z_min)) continue;
    double ev = 0.0;
    for (std::size_t i = 0; i < r.nnz(); ++i) ev += r.probs[i] * v[r.cells[i]];
    const double rhs = q[x] + shift + kl_divergence(r, p.row_view(x)) + ev;
    worst = std::max(worst, std::abs(v[x] - rhs));
  }
  return worst;
}

struct TransitionRollout {
  std::vector<std::size_t> cells;  // x_0 .. x_n (fewer when truncated)
  std::optional<std::size_t> truncated_at;
};

// x_k ~ pi(. | x_{k-1}). Stops early if the chain enters a cell without a row.
inline TransitionRollout rollout_transitions(const ConditionalPF& pi, std::size_t x0, std::size_t n_steps, Rng& rng) {
  if (x0 >= pi.n_cond() || pi.row_view(x0).empty())
    throw InvalidInput("rollout_transitions: initial cell has no transition row");
  TransitionRollout out;
  out.cells.reserve(n_steps + 1);
  out.cells.push_back(x0);
  std::size_t x = x0;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const auto r = pi.row_view(x);
    if (r.empty()) {
      out.truncated_at = k;
      break;
    }
    x = sample(r, rng);
    out.cells.push_back(x);
  }
  return out;
}

struct CellRolloutSummary {
  std::vector<TransitionRollout> rollouts;
  // cell-center theta / omega after each transition
  SeriesStats theta, omega;
  // mean |theta center| over the final window, averaged over rollouts
  double final_abs_theta = 0.0;
  std::size_t truncated = 0;
};

// Rollout r draws from make_rng(seed, r, Stream::rollout). Only pendulum
// state grids are supported (cell centers read as (theta, omega)).
inline CellRolloutSummary pendulum_cell_rollouts(const ConditionalPF& pi, std::size_t x0, std::size_t n_rollouts,
                                                 std::size_t n_steps, std::size_t final_window, std::uint64_t seed,
                                                 std::size_t workers = 1) {
  if (pi.out_grid().dims() != 2) throw GridMismatch("pendulum_cell_rollouts: expected a 2-D state grid");
  CellRolloutSummary out;
  out.rollouts.resize(n_rollouts);
  parallel_for(n_rollouts, workers, [&](std::size_t r) {
    Rng rng = make_rng(seed, r, Stream::rollout);
    out.rollouts[r] = rollout_transitions(pi, x0, n_steps, rng);
  });
  std::vector<std::vector<double>> th(n_rollouts), om(n_rollouts);
  double abs_theta = 0.0;
  for (std::size_t r = 0; r < n_rollouts; ++r) {
    const auto& cells = out.rollouts[r].cells;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      const auto c = pendulum_center(pi.out_grid(), cells[k]);
      th[r].push_back(c.theta);
      om[r].push_back(c.omega);
    }
    if (out.rollouts[r].truncated_at) ++out.truncated;
    const std::size_t n = th[r].size(), w = std::min(final_window, n);
    double a = 0.0;
    for (std::size_t k = n - w; k < n; ++k) a += std::abs(th[r][k]);
    abs_theta += w ? a / static_cast<double>(w) : 0.0;
  }
  out.theta = across_runs(th);
  out.omega = across_runs(om);
  out.final_abs_theta = n_rollouts ? abs_theta / static_cast<double>(n_rollouts) : 0.0;
  return out;
}

}  // namespace pfdm
