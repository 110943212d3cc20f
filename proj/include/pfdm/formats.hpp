#pragma once

// CSV layouts for module outputs other than pf tables (see io.hpp).

#include <cstddef>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfdm/error.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/fpd.hpp"
#include "pfdm/grid.hpp"
#include "pfdm/io.hpp"
#include "pfdm/klc.hpp"
#include "pfdm/rl.hpp"

namespace pfdm::io {

using nlohmann::json;

namespace detail {
inline std::string read_header(std::istream& is, const std::string& what) {
  std::string line;
  while (std::getline(is, line))
    if (!line.empty() && line[0] != '#') return line;
  throw InvalidInput(what + ": missing header line");
}

inline void check_header(const std::string& got, const std::string& want, const std::string& what) {
  if (got != want) throw InvalidInput(what + ": expected header '" + want + "', found '" + got + "'");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset: episode,step,x0..,u0..,x_next0..

inline std::string dataset_header(std::size_t x_dim, std::size_t u_dim) {
  std::string h = "episode,step";
  for (std::size_t i = 0; i < x_dim; ++i) h += ",x" + std::to_string(i);
  for (std::size_t i = 0; i < u_dim; ++i) h += ",u" + std::to_string(i);
  for (std::size_t i = 0; i < x_dim; ++i) h += ",x_next" + std::to_string(i);
  return h;
}

inline void write_dataset(std::ostream& os, const Dataset& d) {
  os << dataset_header(d.x_dim, d.u_dim) << '\n';
  for (std::size_t e = 0; e < d.episodes.size(); ++e)
    for (std::size_t k = 0; k < d.n_steps; ++k) {
      os << e << ',' << k;
      for (double v : d.state_before(e, k)) os << ',' << fmt(v);
      for (double v : d.action(e, k)) os << ',' << fmt(v);
      for (double v : d.state_after(e, k)) os << ',' << fmt(v);
      os << '\n';
    }
}

inline json dataset_sidecar(const Dataset& d, const std::vector<Grid>& grids = {}) {
  json j;
  j["environment"] = d.environment;
  j["seed"] = d.seed;
  j["episodes"] = d.episodes.size();
  j["steps"] = d.n_steps;
  j["x_dim"] = d.x_dim;
  j["u_dim"] = d.u_dim;
  j["fallbacks"] = d.fallbacks;
  j["grids"] = json::array();
  for (const auto& g : grids) j["grids"].push_back(grid_line(g));
  return j;
}

// Reads a dataset CSV; dimensions and metadata come from the sidecar.
inline Dataset read_dataset(std::istream& is, const json& sidecar) {
  Dataset d;
  d.environment = sidecar.at("environment").get<std::string>();
  d.seed = sidecar.at("seed").get<std::uint64_t>();
  d.x_dim = sidecar.at("x_dim").get<std::size_t>();
  d.u_dim = sidecar.at("u_dim").get<std::size_t>();
  d.n_steps = sidecar.at("steps").get<std::size_t>();
  d.fallbacks = sidecar.value("fallbacks", std::size_t{0});
  const auto n_eps = sidecar.at("episodes").get<std::size_t>();
  detail::check_header(detail::read_header(is, "dataset"), dataset_header(d.x_dim, d.u_dim), "dataset");
  d.episodes.resize(n_eps);
  const std::size_t cols = 2 + 2 * d.x_dim + d.u_dim;
  std::string line;
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != cols) throw InvalidInput("dataset: malformed row '" + line + "'");
    const auto e = parse_index(f[0]), k = parse_index(f[1]);
    if (e >= n_eps || k >= d.n_steps) throw InvalidInput("dataset: episode/step index out of range");
    auto& ep = d.episodes[e];
    if (k != ep.actions.size() / std::max<std::size_t>(d.u_dim, 1))
      throw InvalidInput("dataset: rows must be ordered by episode then step");
    std::size_t c = 2;
    if (k == 0)
      for (std::size_t i = 0; i < d.x_dim; ++i) ep.x0.push_back(parse_double(f[c + i]));
    c += d.x_dim;
    for (std::size_t i = 0; i < d.u_dim; ++i) ep.actions.push_back(parse_double(f[c++]));
    for (std::size_t i = 0; i < d.x_dim; ++i) ep.states.push_back(parse_double(f[c++]));
    ++rows;
  }
  if (rows != n_eps * d.n_steps) throw InvalidInput("dataset: row count disagrees with the sidecar");
  return d;
}

// ---------------------------------------------------------------------------
// Q-table: state_cell,action_cell,q (dense, row-major).

inline void write_qtable(std::ostream& os, const QTable& q) {
  os << "# qtable states=" << q.n_states() << " actions=" << q.n_actions() << '\n';
  os << "state_cell,action_cell,q\n";
  for (std::size_t x = 0; x < q.n_states(); ++x)
    for (std::size_t u = 0; u < q.n_actions(); ++u) os << x << ',' << u << ',' << fmt(q.at(x, u)) << '\n';
}

inline QTable read_qtable(std::istream& is) {
  std::string line;
  std::size_t ns = 0, na = 0;
  while (std::getline(is, line)) {
    if (line.rfind("# qtable ", 0) == 0) {
      const auto p = split(line, ' ');
      if (p.size() != 4 || p[2].substr(0, 7) != "states=" || p[3].substr(0, 8) != "actions=")
        throw InvalidInput("qtable: malformed size line");
      ns = parse_index(p[2].substr(7));
      na = parse_index(p[3].substr(8));
      continue;
    }
    if (!line.empty() && line[0] != '#') break;
  }
  detail::check_header(line, "state_cell,action_cell,q", "qtable");
  if (ns == 0 || na == 0) throw InvalidInput("qtable: missing '# qtable states=.. actions=..' line");
  QTable q(ns, na);
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 3) throw InvalidInput("qtable: malformed row '" + line + "'");
    const auto x = parse_index(f[0]), u = parse_index(f[1]);
    if (x >= ns || u >= na) throw InvalidInput("qtable: cell out of range");
    q.at(x, u) = parse_double(f[2]);
    ++rows;
  }
  if (rows != ns * na) throw InvalidInput("qtable: expected one row per (state, action) pair");
  return q;
}

// ---------------------------------------------------------------------------
// Closed-loop statistics.

inline void write_series(std::ostream& os, const EvalResult& r) {
  os << "step,theta_mean,theta_std,omega_mean,omega_std,torque_mean,torque_std\n";
  for (std::size_t k = 0; k < r.theta.mean.size(); ++k)
    os << k + 1 << ',' << fmt(r.theta.mean[k]) << ',' << fmt(r.theta.stddev[k]) << ',' << fmt(r.omega.mean[k]) << ','
       << fmt(r.omega.stddev[k]) << ',' << fmt(r.torque.mean[k]) << ',' << fmt(r.torque.stddev[k]) << '\n';
}

inline json eval_summary(const EvalResult& r, std::size_t window) {
  json j;
  j["episodes"] = r.trajectories.size();
  j["steps"] = r.theta.mean.size();
  j["final_window"] = window;
  j["final_reward_mean"] = r.final_reward_mean;
  j["final_reward_std"] = r.final_reward_std;
  j["final_abs_theta"] = r.final_abs_theta;
  j["final_theta_std"] = final_window_std(r.theta, window);
  j["fallbacks"] = r.fallbacks;
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const auto& t : r.trajectories)
    for (double u : t.torque) {
      lo = first ? u : std::min(lo, u);
      hi = first ? u : std::max(hi, u);
      first = false;
    }
  j["torque_min"] = lo;
  j["torque_max"] = hi;
  return j;
}

// ---------------------------------------------------------------------------
// FPD tables, one pair of files per decision k = 1..H.

inline void write_fpd_omega(std::ostream& os, const FpdTables& t, std::size_t decision) {
  os << "state_cell,action_cell,omega\n";
  for (std::size_t x = 0; x < t.n_states; ++x) {
    const auto row = t.omega_row(decision, x);
    for (std::size_t u = 0; u < t.n_actions; ++u) os << x << ',' << u << ',' << fmt(row[u]) << '\n';
  }
}

// gamma_k for k = 0..H, written as "state_cell,gamma".
inline void write_fpd_gamma(std::ostream& os, const FpdTables& t, std::size_t k) {
  os << "state_cell,gamma\n";
  const auto& g = t.gamma.at(k);
  for (std::size_t x = 0; x < g.size(); ++x) os << x << ',' << fmt(g[x]) << '\n';
}

// ---------------------------------------------------------------------------
// Vectors over cells (desirability) and convergence traces.

inline void write_cell_values(std::ostream& os, const std::string& column, std::span<const double> v) {
  os << "state_cell," << column << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) os << i << ',' << fmt(v[i]) << '\n';
}

inline std::vector<double> read_cell_values(std::istream& is, const std::string& column) {
  detail::check_header(detail::read_header(is, column), "state_cell," + column, column);
  std::vector<double> v;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 2 || parse_index(f[0]) != v.size()) throw InvalidInput(column + ": malformed row '" + line + "'");
    v.push_back(parse_double(f[1]));
  }
  return v;
}

inline void write_residuals(std::ostream& os, std::span<const double> history) {
  os << "iteration,residual\n";
  for (std::size_t i = 0; i < history.size(); ++i) os << i + 1 << ',' << fmt(history[i]) << '\n';
}

// Per-step statistics of cell-center angles along transition rollouts.
inline void write_cell_series(std::ostream& os, const SeriesStats& theta, const SeriesStats& omega) {
  os << "step,theta_mean,theta_std,omega_mean,omega_std\n";
  for (std::size_t k = 0; k < theta.mean.size(); ++k)
    os << k + 1 << ',' << fmt(theta.mean[k]) << ',' << fmt(theta.stddev[k]) << ',' << fmt(omega.mean[k]) << ','
       << fmt(omega.stddev[k]) << '\n';
}

// File helpers.
template <class Fn>
void save(const std::string& path, Fn&& write) {
  auto os = open_out(path);
  write(os);
  if (!os) throw Error("write failed: " + path);
}

inline void save_json(const std::string& path, const json& j) {
  save(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline json load_json(const std::string& path) {
  auto is = open_in(path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

}  // namespace pfdm::io
