// pfdm: experiment harness. Every subcommand reads one JSON config, writes
// CSV/JSON artifacts under the run directory and a manifest.json per stage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "pfdm/manifest.hpp"
#include "pfdm/pfdm.hpp"

namespace fs = std::filesystem;
using namespace pfdm;
using nlohmann::json;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> workers;
};

RunConfig load(const Common& opt) {
  json doc = read_config_file(opt.config_path);
  for (const auto& s : opt.overrides) apply_override(doc, s);
  if (opt.seed) doc["seed"] = *opt.seed;
  if (opt.out) doc["output_dir"] = *opt.out;
  if (opt.workers) doc["workers"] = *opt.workers;
  return parse_config(doc);
}

fs::path require_file(const RunConfig& c, const std::string& rel, const std::string& field) {
  const auto p = c.run_path(rel);
  if (!fs::is_regular_file(p))
    throw ConfigError(field + ": file '" + p.string() + "' does not exist (run the producing subcommand first)");
  return p;
}

class Stage {
 public:
  Stage(const RunConfig& c, const std::string& subcommand, const std::string& dir)
      : cfg_(c), dir_(c.run_path(dir)), manifest_(subcommand, c.output_dir) {
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }
  void input(const fs::path& p) { manifest_.input(p); }
  nlohmann::json& results() { return manifest_.extra(); }

  template <class Fn>
  fs::path write(const std::string& name, Fn&& fn) {
    const auto p = path(name);
    io::save(p.string(), fn);
    manifest_.output(p);
    return p;
  }
  fs::path write_json(const std::string& name, const json& j) {
    return write(name, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
  }
  fs::path write_table(const std::string& name, const ConditionalPF& pf) {
    return write(name, [&](std::ostream& os) { io::write_conditional(os, pf); });
  }

  void finish() {
    io::save_json(path("manifest.json").string(), manifest_.to_json(cfg_.source, cfg_.seed, cfg_.workers));
  }

 private:
  const RunConfig& cfg_;
  fs::path dir_;
  Manifest manifest_;
};

Dataset load_dataset(const RunConfig& c, const std::string& name, Stage& st) {
  const auto csv = require_file(c, "data/" + name + ".csv", "tables: dataset '" + name + "'");
  const auto side = require_file(c, "data/" + name + ".json", "tables: dataset '" + name + "' sidecar");
  st.input(csv);
  st.input(side);
  auto is = io::open_in(csv.string());
  return io::read_dataset(is, io::load_json(side.string()));
}

PolicyTable load_policy(const RunConfig& c, const std::string& rel, const std::string& field, Stage& st) {
  const auto p = require_file(c, rel, field);
  st.input(p);
  return PolicyTable(io::load_conditional(p.string()));
}

ConditionalPF load_table(const RunConfig& c, const std::string& rel, const std::string& field, Stage& st) {
  const auto p = require_file(c, rel, field);
  st.input(p);
  return io::load_conditional(p.string());
}

// ---------------------------------------------------------------------------

void gen_data(const RunConfig& c) {
  if (c.datasets.empty()) throw ConfigError("datasets: nothing to generate");
  Stage st(c, "gen-data", "data");
  GenerateOptions base;
  base.workers = c.workers;
  for (const auto& [name, spec] : c.datasets) {
    const auto seed = derive_seed(c.seed, "dataset:" + name);
    GenerateOptions opt = base;
    opt.initial_state = spec.initial_state;
    Dataset d;
    std::vector<Grid> grids;
    if (spec.environment == "linear") {
      const auto env = c.linear.env();
      if (spec.input == InputKind::uniform)
        d = generate_dataset(env, UniformInput<LinearEnv>{&env}, spec.episodes, spec.steps, seed, opt);
      else
        d = generate_dataset(env, ZeroInput{1}, spec.episodes, spec.steps, seed, opt);
      grids = {c.linear.state_grid(), c.linear.action_grid()};
    } else {
      const PendulumEnv env{c.pendulum(spec.environment)};
      if (spec.input == InputKind::uniform) {
        d = generate_dataset(env, UniformInput<PendulumEnv>{&env}, spec.episodes, spec.steps, seed, opt);
      } else if (spec.input == InputKind::zero) {
        d = generate_dataset(env, ZeroInput{1}, spec.episodes, spec.steps, seed, opt);
      } else {
        const auto policy = load_policy(c, spec.policy, "datasets." + name + ".policy", st);
        d = generate_dataset(env, TableInput<PendulumEnv>{&env, &policy}, spec.episodes, spec.steps, seed, opt);
      }
      grids = {c.state_grid(), c.action_grid()};
    }
    st.write(name + ".csv", [&](std::ostream& os) { io::write_dataset(os, d); });
    auto side = io::dataset_sidecar(d, grids);
    side["input"] = spec.input == InputKind::uniform ? "uniform" : spec.input == InputKind::zero ? "zero" : "policy";
    side["plant"] = spec.environment;
    st.write_json(name + ".json", side);
    st.results()[name] = {{"transitions", d.transitions()}, {"fallbacks", d.fallbacks}, {"seed", seed}};
  }
  st.finish();
}

void estimate(const RunConfig& c) {
  if (c.tables.empty()) throw ConfigError("tables: nothing to estimate");
  Stage st(c, "estimate", "tables");
  for (const auto& [name, spec] : c.tables) {
    const auto d = load_dataset(c, spec.dataset, st);
    const bool linear = d.environment == "linear";
    const Grid sg = linear ? c.linear.state_grid() : c.state_grid();
    const Grid ag = linear ? c.linear.action_grid() : c.action_grid();
    const auto oor = linear ? c.linear.out_of_range : c.grid.out_of_range;
    ConditionalPF t;
    switch (spec.kind) {
      case TableKind::transitions: t = estimate_transitions(d, sg, ag, oor); break;
      case TableKind::policy: t = estimate_policy(d, sg, ag, oor).table(); break;
      case TableKind::passive: t = estimate_passive(d, sg, oor); break;
    }
    st.write_table(name + ".csv", t);
    st.results()[name] = {{"observed_rows", t.observed_rows()}, {"nnz", t.nnz()}, {"rows", t.n_cond()}};
  }
  st.finish();
}

void mpc_ref(const RunConfig& c) {
  Stage st(c, "mpc-ref", "reference");
  const Grid sg = c.state_grid(), ag = c.action_grid();
  ReferenceOptions opt = c.reference.rollouts;
  opt.seed = derive_seed(c.seed, "reference");
  opt.workers = c.workers;
  opt.out_of_range = c.grid.out_of_range;
  const auto ref = build_reference(c.reference_plant, c.reference.mpc, sg, ag, opt);
  st.write("data.csv", [&](std::ostream& os) { io::write_dataset(os, ref.data); });
  auto side = io::dataset_sidecar(ref.data, {sg, ag});
  side["plant"] = "reference_plant";
  side["input"] = "mpc";
  st.write_json("data.json", side);
  st.write_table("g_u.csv", ref.g_u.table());
  st.write_table("g_x.csv", ref.g_x);

  EvalOptions eo;
  eo.n_episodes = c.reference.validation_episodes;
  eo.n_steps = c.reference.validation_steps;
  eo.final_window = c.reference.validation_window;
  eo.seed = derive_seed(c.seed, "reference-validation");
  eo.workers = c.workers;
  const auto val = evaluate(c.reference_plant, TableController{&ref.g_u}, eo);
  st.write("validation.csv", [&](std::ostream& os) { io::write_series(os, val); });
  const auto summary = io::eval_summary(val, eo.final_window);
  st.write_json("validation.json", summary);
  st.results() = {{"g_u_observed_rows", ref.g_u.table().observed_rows()},
                  {"g_x_observed_rows", ref.g_x.observed_rows()},
                  {"validation", summary}};
  st.finish();
}

void train_q(const RunConfig& c) {
  Stage st(c, "train-q", "qlearning");
  const Grid sg = c.state_grid(), ag = c.action_grid();
  const PendulumTask task{c.pendulum(c.train.plant), sg, ag};
  const auto seed = derive_seed(c.seed, "train");
  const auto res = train(task, c.train.train, seed);
  std::string index = "episodes,path\n";
  for (const auto& s : res.snapshots) {
    const auto name = "q_" + std::to_string(s.episodes) + ".csv";
    st.write(name, [&](std::ostream& os) { io::write_qtable(os, s.q); });
    index += std::to_string(s.episodes) + ",qlearning/" + name + "\n";
  }
  st.write("q_final.csv", [&](std::ostream& os) { io::write_qtable(os, res.q); });
  st.write("checkpoints.csv", [&](std::ostream& os) { os << index; });
  st.results() = {{"episodes", c.train.train.episodes}, {"snapshots", res.snapshots.size()}};
  st.finish();
}

void fpd(const RunConfig& c) {
  Stage st(c, "fpd", "fpd");
  const auto f_x = load_table(c, c.fpd.f_x, "fpd.f_x", st);
  const auto g_x = load_table(c, c.fpd.g_x, "fpd.g_x", st);
  const auto g_u = load_policy(c, c.fpd.g_u, "fpd.g_u", st);
  auto opt = c.fpd.options;
  opt.workers = c.workers;
  const auto t = fpd_backward(f_x, g_x, g_u, c.fpd.horizon, opt);
  for (std::size_t k = 1; k <= t.horizon; ++k) {
    st.write("omega_step" + std::to_string(k) + ".csv", [&](std::ostream& os) { io::write_fpd_omega(os, t, k); });
    st.write("gamma_step" + std::to_string(k) + ".csv", [&](std::ostream& os) { io::write_fpd_gamma(os, t, k); });
  }
  const auto policy = fpd_policy_table(t, g_u);
  st.write_table("policy.csv", policy.table());
  st.results() = {{"horizon", t.horizon}, {"policy_rows", policy.table().observed_rows()}};
  st.finish();
}

// cells with smaller z are left out of the Bellman check
constexpr double kBellmanZMin = 1e-6;

void klc(const RunConfig& c) {
  Stage st(c, "klc", "klc");
  const auto p = load_table(c, c.klc.passive, "klc.passive", st);
  require_same_shape(p.cond_grid(), c.state_grid(), "klc (passive table vs configured state grid)");
  const auto q = pendulum_state_costs(p.cond_grid());
  const auto z = power_iteration(p, q, c.klc.tolerance, c.klc.max_iterations);
  st.write("z.csv", [&](std::ostream& os) { io::write_cell_values(os, "z", z.z); });
  st.write("residuals.csv", [&](std::ostream& os) { io::write_residuals(os, z.residual_history); });
  if (!z.converged) {
    st.finish();
    throw Error("klc: power iteration stopped after " + std::to_string(z.iterations) +
                " iterations with residual " + io::fmt(z.residual));
  }
  const auto pi = klc_transitions(p, z);
  st.write_table("pi.csv", pi);
  double norm_err = 0.0;
  for (std::size_t x = 0; x < pi.n_cond(); ++x)
    if (!pi.row_view(x).empty()) norm_err = std::max(norm_err, std::abs(pi.row_view(x).mass() - 1.0));
  const auto x0 = pendulum_cell(p.cond_grid(), downward_state());
  const auto ro = pendulum_cell_rollouts(pi, x0, c.klc.rollouts, c.klc.steps, c.klc.final_window,
                                         derive_seed(c.seed, "evaluation"), c.workers);
  st.write("rollouts.csv", [&](std::ostream& os) { io::write_cell_series(os, ro.theta, ro.omega); });
  json summary = {{"eigenvalue", z.eigenvalue},
                  {"iterations", z.iterations},
                  {"residual", z.residual},
                  {"converged", z.converged},
                  {"bellman_residual", bellman_residual(pi, p, q, z, kBellmanZMin)},
                  {"bellman_z_min", kBellmanZMin},
                  {"max_row_normalization_error", norm_err},
                  {"start_cell", x0},
                  {"rollouts", c.klc.rollouts},
                  {"steps", c.klc.steps},
                  {"final_window", c.klc.final_window},
                  {"final_abs_theta", ro.final_abs_theta},
                  {"final_theta_std", final_window_std(ro.theta, c.klc.final_window)},
                  {"truncated_rollouts", ro.truncated}};
  st.write_json("summary.json", summary);
  st.results() = summary;
  st.finish();
}

EvalOptions eval_options(const RunConfig& c, const EvaluationSpec& e) {
  EvalOptions eo;
  eo.n_episodes = e.episodes;
  eo.n_steps = e.steps;
  eo.final_window = e.final_window;
  eo.seed = derive_seed(c.seed, "evaluation");
  eo.workers = c.workers;
  return eo;
}

void evaluate_all(const RunConfig& c) {
  if (c.evaluations.empty()) throw ConfigError("evaluations: nothing to evaluate");
  Stage st(c, "evaluate", "evaluation");
  const Grid sg = c.state_grid(), ag = c.action_grid();
  for (const auto& [name, e] : c.evaluations) {
    const auto& plant = c.pendulum(e.plant);
    const auto eo = eval_options(c, e);
    const std::string field = "evaluations." + name + ".path";
    auto emit = [&](const std::string& stem, const EvalResult& r) {
      st.write(stem + ".csv", [&](std::ostream& os) { io::write_series(os, r); });
      const auto s = io::eval_summary(r, eo.final_window);
      st.write_json(stem + ".json", s);
      return s;
    };
    if (e.controller == ControllerKind::q_table) {
      const auto p = require_file(c, e.path, field);
      st.input(p);
      auto is = io::open_in(p.string());
      const auto q = io::read_qtable(is);
      if (q.n_states() != sg.size() || q.n_actions() != ag.size())
        throw GridMismatch(field + ": Q-table shape does not match the configured grids");
      st.results()[name] = emit(name, evaluate(plant, GreedyController{&q, &sg, &ag}, eo));
    } else if (e.controller == ControllerKind::q_checkpoints) {
      const auto idx = require_file(c, e.path, field);
      st.input(idx);
      auto is = io::open_in(idx.string());
      std::string line;
      std::getline(is, line);
      if (line != "episodes,path") throw InvalidInput(field + ": expected header 'episodes,path'");
      std::string curve = "episodes,reward_mean,reward_std,abs_theta,theta_std\n";
      while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto f = io::split(line, ',');
        if (f.size() != 2) throw InvalidInput(field + ": malformed row '" + line + "'");
        const auto qp = require_file(c, std::string(f[1]), field);
        st.input(qp);
        auto qs = io::open_in(qp.string());
        const auto q = io::read_qtable(qs);
        if (q.n_states() != sg.size() || q.n_actions() != ag.size())
          throw GridMismatch(qp.string() + ": Q-table shape does not match the configured grids");
        const auto r = evaluate(plant, GreedyController{&q, &sg, &ag}, eo);
        const auto s = emit(name + "_" + std::string(f[0]), r);
        curve += std::string(f[0]) + "," + io::fmt(r.final_reward_mean) + "," + io::fmt(r.final_reward_std) + "," +
                 io::fmt(r.final_abs_theta) + "," + io::fmt(final_window_std(r.theta, eo.final_window)) + "\n";
        st.results()[name][std::string(f[0])] = s;
      }
      st.write(name + "_curve.csv", [&](std::ostream& os) { os << curve; });
    } else {
      const auto policy = load_policy(c, e.path, field, st);
      std::optional<PolicyTable> fb;
      if (!e.fallback.empty()) fb = load_policy(c, e.fallback, "evaluations." + name + ".fallback", st);
      require_same_shape(policy.state_grid(), sg, field.c_str());
      st.results()[name] = emit(name, evaluate(plant, TableController{&policy, fb ? &*fb : nullptr}, eo));
    }
  }
  st.finish();
}

// ---------------------------------------------------------------------------
// figures: gathers the per-figure CSVs into figures/ and lists them.

void figures(const RunConfig& c) {
  Stage st(c, "figures", "figures");
  json list = json::array();
  json missing = json::array();
  auto copy = [&](const std::string& id, const std::string& kind, const std::string& rel) {
    const auto src = c.run_path(rel);
    if (!fs::is_regular_file(src)) {
      missing.push_back({{"id", id}, {"needs", rel}});
      return;
    }
    st.input(src);
    const auto name = id + ".csv";
    st.write(name, [&](std::ostream& os) {
      auto is = io::open_in(src.string());
      os << is.rdbuf();
    });
    list.push_back({{"id", id}, {"kind", kind}, {"inputs", {"figures/" + name}}});
  };

  if (!c.linear_figure.tables.empty()) {
    const Grid xg = c.linear.state_grid(), ug = c.linear.action_grid();
    const auto& xa = xg.axis(0);
    // fig3: the (x, u) row at every dataset size, with its analytic counterpart
    std::string rows = "table,transitions,out_cell,center,estimated,analytic\n";
    std::string tv = "table,transitions,tv\n";
    const auto analytic = analytic_linear_row(c.linear_figure.x, c.linear_figure.u, xg, c.linear.sigma);
    const auto cond = Grid::product("x_x_u", xg, ug).quantize({c.linear_figure.x, c.linear_figure.u});
    std::vector<ConditionalPF> loaded;
    for (const auto& name : c.linear_figure.tables) {
      const auto t = load_table(c, "tables/" + name + ".csv", "linear_figure.tables", st);
      const auto& ds = c.datasets.at(c.tables.at(name).dataset);
      const auto n = ds.episodes * ds.steps;
      const auto row = t.row(cond);
      for (std::size_t k = 0; k < xg.size(); ++k)
        rows += name + "," + std::to_string(n) + "," + std::to_string(k) + "," + io::fmt(xa.center(k)) + "," +
                io::fmt(row.empty() ? 0.0 : row.dense()[k]) + "," + io::fmt(analytic.dense()[k]) + "\n";
      tv += name + "," + std::to_string(n) + "," + io::fmt(row.empty() ? 1.0 : total_variation(row, analytic)) + "\n";
      loaded.push_back(t);
    }
    st.write("fig3.csv", [&](std::ostream& os) { os << rows; });
    st.write("fig3_tv.csv", [&](std::ostream& os) { os << tv; });
    list.push_back({{"id", "fig3"}, {"kind", "pf_rows"}, {"inputs", {"figures/fig3.csv", "figures/fig3_tv.csv"}}});

    // fig2: closed loop x_k ~ f_x(. | x_{k-1}, gain * x_{k-1}) on the largest
    // table, rows at every step next to the analytic pf
    const auto& t = loaded.back();
    Rng rng = make_rng(derive_seed(c.seed, "fig2"), 0, Stream::rollout);
    double x = c.linear_figure.x0;
    std::string traj = "step,x,u,out_cell,center,estimated,analytic\n";
    for (std::size_t k = 1; k <= c.linear_figure.steps; ++k) {
      const double u = std::clamp(c.linear_figure.gain * x, c.linear.u_box.first, c.linear.u_box.second);
      const auto row = t.row(Grid::product("x_x_u", xg, ug).quantize({x, u}));
      const auto a = analytic_linear_row(x, u, xg, c.linear.sigma);
      for (std::size_t j = 0; j < xg.size(); ++j)
        traj += std::to_string(k) + "," + io::fmt(x) + "," + io::fmt(u) + "," + std::to_string(j) + "," +
                io::fmt(xa.center(j)) + "," + io::fmt(row.empty() ? 0.0 : row.dense()[j]) + "," +
                io::fmt(a.dense()[j]) + "\n";
      if (row.empty()) break;
      x = xa.center(sample(row, rng));
    }
    st.write("fig2.csv", [&](std::ostream& os) { os << traj; });
    list.push_back({{"id", "fig2"}, {"kind", "pf_evolution"}, {"inputs", {"figures/fig2.csv"}}});
  }

  copy("fig4", "trajectory", "reference/validation.csv");
  for (const auto& [name, e] : c.evaluations) {
    if (e.controller == ControllerKind::q_checkpoints) {
      copy("fig5", "checkpoint_bars", "evaluation/" + name + "_curve.csv");
      const auto last = c.train.train.checkpoints.empty()
                            ? std::string()
                            : std::to_string(*std::max_element(c.train.train.checkpoints.begin(),
                                                               c.train.train.checkpoints.end()));
      if (!last.empty()) copy("fig6", "trajectory", "evaluation/" + name + "_" + last + ".csv");
    } else if (e.controller == ControllerKind::fpd) {
      copy("fig8", "trajectory", "evaluation/" + name + ".csv");
    }
  }
  copy("fig9", "trajectory", "klc/rollouts.csv");

  st.results() = {{"figures", list}, {"missing", missing}};
  st.finish();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pfdm: probability-function decision-making harness"};
  app.require_subcommand(1);
  Common common;

  struct Cmd {
    const char* name;
    const char* help;
    void (*run)(const RunConfig&);
  };
  const std::vector<Cmd> cmds{
      {"gen-data", "simulate the configured datasets", gen_data},
      {"estimate", "histogram-filter tables from datasets", estimate},
      {"mpc-ref", "reference tables g_x, g_u from noisy MPC on the reference pendulum", mpc_ref},
      {"train-q", "tabular Q-learning / SARSA with checkpoints", train_q},
      {"fpd", "FPD backward recursion and decision-1 policy", fpd},
      {"klc", "desirability, optimal transitions and rollouts", klc},
      {"evaluate", "closed-loop evaluation of the configured controllers", evaluate_all},
      {"figures", "collect the per-figure CSVs", figures},
  };
  std::vector<std::pair<CLI::App*, const Cmd*>> subs;
  for (const auto& c : cmds) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", common.config_path, "experiment config (JSON)")->required();
    sub->add_option("--set", common.overrides, "override a config field, key.path=value")->take_all();
    sub->add_option("--seed", common.seed, "master seed");
    sub->add_option("--out", common.out, "run directory");
    sub->add_option("--workers", common.workers, "worker threads")->check(CLI::PositiveNumber);
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      const auto cfg = load(common);
      cmd->run(cfg);
      return 0;
    } catch (const ConfigError& e) {
      std::cerr << "pfdm " << cmd->name << ": invalid config: " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "pfdm " << cmd->name << ": " << e.what() << '\n';
      return 1;
    }
  }
  std::cerr << app.help();
  return 2;
}
