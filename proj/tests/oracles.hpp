#pragma once

// Independent reference computations shared by unit and acceptance tests.
// None of these call the solver under test.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "pfdm/envs.hpp"
#include "pfdm/rng.hpp"

namespace oracle {

using Dense3 = std::vector<std::vector<std::vector<double>>>;  // P[x][u][x']

inline Dense3 random_kernel(std::size_t ns, std::size_t na, pfdm::Rng& g, double lo = 0.0, double hi = 1.0) {
  Dense3 p(ns, std::vector<std::vector<double>>(na, std::vector<double>(ns)));
  for (auto& rows : p)
    for (auto& row : rows) {
      double s = 0.0;
      for (auto& v : row) s += (v = pfdm::uniform(g, lo, hi));
      for (auto& v : row) v /= s;
    }
  return p;
}

// Expectimax over the full history tree, no memoization:
//   best(x, k) = max_u [ d_k r(x,u) + sum_x' P(x'|x,u) best(x', k+1) ]
// Returns Q_{1->T}(x, u) for the first decision.
inline double tree_value(const Dense3& p, const std::vector<double>& r, std::size_t na, const std::vector<double>& d,
                         std::size_t x, std::size_t k);

inline double tree_q(const Dense3& p, const std::vector<double>& r, std::size_t na, const std::vector<double>& d,
                     std::size_t x, std::size_t u, std::size_t k) {
  double v = d[k] * r[x * na + u];
  if (k + 1 < d.size())
    for (std::size_t y = 0; y < p.size(); ++y) v += p[x][u][y] * tree_value(p, r, na, d, y, k + 1);
  return v;
}

inline double tree_value(const Dense3& p, const std::vector<double>& r, std::size_t na, const std::vector<double>& d,
                         std::size_t x, std::size_t k) {
  double best = -INFINITY;
  for (std::size_t u = 0; u < na; ++u) best = std::max(best, tree_q(p, r, na, d, x, u, k));
  return best;
}

// The fixed 5-state, 3-action MDP used for the Q-learning convergence check.
inline pfdm::FiniteMDP fixed_mdp() {
  pfdm::Rng g(42);
  const std::size_t ns = 5, na = 3;
  Dense3 p(ns, std::vector<std::vector<double>>(na, std::vector<double>(ns)));
  for (std::size_t x = 0; x < ns; ++x)
    for (std::size_t u = 0; u < na; ++u) {
      double s = 0.0;
      for (auto& v : p[x][u]) s += (v = pfdm::uniform(g, 0.1, 1.0));
      for (auto& v : p[x][u]) v /= s;
    }
  const double act[] = {0.5, 1.0, 0.2};
  const double st[] = {0.0, 1.0, 0.3, -0.5, 0.8};
  std::vector<double> r(ns * na);
  for (std::size_t x = 0; x < ns; ++x)
    for (std::size_t u = 0; u < na; ++u) r[x * na + u] = act[u] + 0.05 * st[x];
  return pfdm::FiniteMDP::from_dense(p, r, 0.9);
}

// All points of the probability simplex over 3 actions with coordinates in
// multiples of 1/n; n = 13 gives 105 points.
inline std::vector<std::vector<double>> simplex_grid(int n = 13) {
  std::vector<std::vector<double>> pts;
  for (int a = 0; a <= n; ++a)
    for (int b = 0; a + b <= n; ++b) pts.push_back({double(a) / n, double(b) / n, double(n - a - b) / n});
  return pts;
}

inline double kl_dense(const std::vector<double>& f, const std::vector<double>& g) {
  double s = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (f[i] > 0.0) s += f[i] * std::log(f[i] / g[i]);
  return s;
}

// One-step closed-loop KL at state x for action pf fu:
//   sum_u fu(u) [ ln(fu(u)/gu(u)) + KL(fx(.|x,u) || gx(.|x,u)) ]
inline double one_step_cost(const Dense3& fx, const Dense3& gx, const std::vector<std::vector<double>>& gu,
                            std::size_t x, const std::vector<double>& fu) {
  double c = 0.0;
  for (std::size_t u = 0; u < fu.size(); ++u)
    if (fu[u] > 0.0) c += fu[u] * (std::log(fu[u] / gu[x][u]) + kl_dense(fx[x][u], gx[x][u]));
  return c;
}

// FPD recursion written out on dense arrays, decisions 1..H:
//   gamma_H = 1; omega_k(x,u) = KL(fx||gx) - sum_x' fx ln gamma_k(x');
//   gamma_{k-1}(x) = sum_u gu(u|x) exp(-omega_k(x,u)).
struct DenseFpd {
  std::vector<std::vector<std::vector<double>>> omega;  // [k-1][x][u]
  std::vector<std::vector<double>> gamma;               // [k][x]
};

inline DenseFpd dense_fpd(const Dense3& fx, const Dense3& gx, const std::vector<std::vector<double>>& gu,
                          std::size_t H) {
  const std::size_t ns = fx.size(), na = fx[0].size();
  DenseFpd out;
  out.omega.assign(H, std::vector<std::vector<double>>(ns, std::vector<double>(na)));
  out.gamma.assign(H + 1, std::vector<double>(ns, 1.0));
  for (std::size_t k = H; k >= 1; --k) {
    for (std::size_t x = 0; x < ns; ++x) {
      double gsum = 0.0;
      for (std::size_t u = 0; u < na; ++u) {
        double e = 0.0;
        for (std::size_t y = 0; y < ns; ++y) e += fx[x][u][y] * std::log(out.gamma[k][y]);
        out.omega[k - 1][x][u] = kl_dense(fx[x][u], gx[x][u]) - e;
        gsum += gu[x][u] * std::exp(-out.omega[k - 1][x][u]);
      }
      out.gamma[k - 1][x] = gsum;
    }
  }
  return out;
}

}  // namespace oracle
