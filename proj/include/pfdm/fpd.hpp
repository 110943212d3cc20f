#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/error.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/parallel.hpp"
#include "pfdm/pf.hpp"
#include "pfdm/rng.hpp"

namespace pfdm {

struct FpdOptions {
  double kl_floor = kDefaultKlFloor;
  // gamma is floored here before taking its log
  double gamma_floor = 1e-30;
  // omega-hat of an (x, u) pair whose f_x row was never observed
  double unobserved_penalty = 1e3;
  std::size_t workers = 1;
};

// Backward-recursion output for a window of H decisions, decisions numbered
// 1..H. omega[k-1][x * n_actions + u] is omega-hat for decision k; gamma[k]
// is gamma_k over states, with gamma[H] == 1.
struct FpdTables {
  std::size_t horizon = 0;
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<std::vector<double>> omega;
  std::vector<std::vector<double>> gamma;
  // KL(f_x(. | x, u) || g_x(. | x, u)), the stationary part of every omega
  std::vector<double> kl;

  std::span<const double> omega_row(std::size_t decision, std::size_t x) const {
    return std::span<const double>(omega.at(decision - 1)).subspan(x * n_actions, n_actions);
  }
};

// Twisted kernel f*(u | x) proportional to g_u(u | x) exp(-omega(u, x)) on
// supp(g_u row). The tilt is shifted by its minimum over the support before
// exponentiating; a tilt constant over the support returns the row as is.
inline DiscretePF fpd_policy(const DiscretePF& g_u_row, std::span<const double> omega_row) {
  if (g_u_row.size() != omega_row.size()) throw GridMismatch("fpd_policy: omega row does not match action grid");
  if (g_u_row.empty()) throw DegenerateSupport("fpd_policy: reference policy row is empty (infeasible state cell)");
  const auto& cells = g_u_row.cells();
  double lo = omega_row[cells[0]], hi = lo;
  for (auto c : cells) {
    if (!std::isfinite(omega_row[c])) throw InvalidInput("fpd_policy: non-finite omega");
    lo = std::min(lo, omega_row[c]);
    hi = std::max(hi, omega_row[c]);
  }
  if (lo == hi) return g_u_row;
  std::vector<double> w(cells.size());
  double total = 0.0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    w[i] = g_u_row.probs()[i] * std::exp(-(omega_row[cells[i]] - lo));
    total += w[i];
  }
  if (!(total > 0.0)) throw DegenerateSupport("fpd_policy: zero normalizer");
  std::vector<std::size_t> out_cells;
  std::vector<double> out_probs;
  for (std::size_t i = 0; i < cells.size(); ++i)
    if (w[i] > 0.0) {
      out_cells.push_back(cells[i]);
      out_probs.push_back(w[i] / total);
    }
  return DiscretePF(g_u_row.size(), std::move(out_cells), std::move(out_probs));
}

// Unconstrained FPD backward recursion over tabulated pfs:
//   gamma_H = 1
//   omega_k(u, x)  = KL(f_x(.|x,u) || g_x(.|x,u)) - E_{f_x(.|x,u)}[ln gamma_k(X')]
//   gamma_{k-1}(x) = E_{g_u(.|x)}[exp(-omega_k(U, x))]
// f_x and g_x are conditioned on state x action cells (x * n_actions + u).
inline FpdTables fpd_backward(const ConditionalPF& f_x, const ConditionalPF& g_x, const PolicyTable& g_u,
                              std::size_t horizon, const FpdOptions& opt = {}) {
  if (horizon < 1) throw InvalidInput("fpd_backward: horizon must be >= 1");
  require_same_shape(f_x.cond_grid(), g_x.cond_grid(), "fpd_backward (f_x vs g_x condition)");
  require_same_shape(f_x.out_grid(), g_x.out_grid(), "fpd_backward (f_x vs g_x outcome)");
  require_same_shape(f_x.out_grid(), g_u.state_grid(), "fpd_backward (f_x outcome vs g_u state)");
  const std::size_t ns = g_u.state_grid().size();
  const std::size_t na = g_u.action_grid().size();
  if (f_x.n_cond() != ns * na) throw GridMismatch("fpd_backward: f_x must be conditioned on state x action cells");
  if (!(opt.gamma_floor > 0.0)) throw InvalidInput("fpd_backward: gamma floor must be positive");

  FpdTables t;
  t.horizon = horizon;
  t.n_states = ns;
  t.n_actions = na;
  t.kl.assign(ns * na, 0.0);
  parallel_for(ns, opt.workers, [&](std::size_t x) {
    for (std::size_t u = 0; u < na; ++u) {
      const auto c = x * na + u;
      const auto fr = f_x.row_view(c);
      t.kl[c] = fr.empty() ? opt.unobserved_penalty : kl_divergence(fr, g_x.row_view(c), opt.kl_floor);
    }
  });

  t.omega.assign(horizon, std::vector<double>(ns * na, 0.0));
  t.gamma.assign(horizon + 1, std::vector<double>(ns, 1.0));
  for (std::size_t k = horizon; k >= 1; --k) {
    std::vector<double> log_gamma(ns);
    for (std::size_t y = 0; y < ns; ++y) log_gamma[y] = std::log(std::max(t.gamma[k][y], opt.gamma_floor));
    auto& om = t.omega[k - 1];
    auto& prev = t.gamma[k - 1];
    parallel_for(ns, opt.workers, [&](std::size_t x) {
      for (std::size_t u = 0; u < na; ++u) {
        const auto c = x * na + u;
        const auto fr = f_x.row_view(c);
        if (fr.empty()) {
          om[c] = opt.unobserved_penalty;
          continue;
        }
        double e = 0.0;
        for (std::size_t i = 0; i < fr.nnz(); ++i) e += fr.probs[i] * log_gamma[fr.cells[i]];
        om[c] = t.kl[c] - e;
      }
      // normalizing by the row mass keeps gamma exactly 1 when omega == 0
      const auto gr = g_u.row_view(x);
      double num = 0.0, mass = 0.0;
      for (std::size_t i = 0; i < gr.nnz(); ++i) {
        num += gr.probs[i] * std::exp(-om[x * na + gr.cells[i]]);
        mass += gr.probs[i];
      }
      prev[x] = std::max(mass > 0.0 ? num / mass : 0.0, opt.gamma_floor);
    });
  }
  return t;
}

// f*(. | x) for decision 1 of every state cell; empty where g_u is empty.
inline PolicyTable fpd_policy_table(const FpdTables& t, const PolicyTable& g_u) {
  std::vector<DiscretePF> rows(t.n_states);
  for (std::size_t x = 0; x < t.n_states; ++x) {
    const auto g = g_u.row(x);
    rows[x] = g.empty() ? DiscretePF(t.n_actions, std::vector<std::size_t>{}, std::vector<double>{}) : fpd_policy(g, t.omega_row(1, x));
  }
  return PolicyTable(ConditionalPF(g_u.state_grid(), g_u.action_grid(), rows));
}

// Receding-horizon FPD on a continuous pendulum state. The pfs are
// stationary, so the H-step tables are solved once and decision 1 is applied
// at every step.
class FpdController {
 public:
  FpdController(const ConditionalPF& f_x, const ConditionalPF& g_x, const PolicyTable& g_u, std::size_t horizon,
                const FpdOptions& opt = {})
      : tables_(std::make_shared<FpdTables>(fpd_backward(f_x, g_x, g_u, horizon, opt))),
        policy_(std::make_shared<PolicyTable>(fpd_policy_table(*tables_, g_u))),
        g_u_(std::make_shared<PolicyTable>(g_u)) {}

  const FpdTables& tables() const { return *tables_; }
  const PolicyTable& policy() const { return *policy_; }

  // Samples u ~ f*(. | cell(x)) and returns the action cell's center. Falls
  // back to g_u, then to a uniform torque, counting each fallback.
  double operator()(PendulumState s, Rng& rng, RolloutLog& log) const {
    const auto x = pendulum_cell(policy_->state_grid(), s);
    const auto& ax = policy_->action_grid().axis(0);
    auto row = policy_->row_view(x);
    if (row.empty()) {
      ++log.fallbacks;
      row = g_u_->row_view(x);
      if (row.empty()) return uniform(rng, ax.lower, ax.upper);
    }
    return ax.center(sample(row, rng));
  }

 private:
  std::shared_ptr<const FpdTables> tables_;
  std::shared_ptr<const PolicyTable> policy_;
  std::shared_ptr<const PolicyTable> g_u_;
};

}  // namespace pfdm
