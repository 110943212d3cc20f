#pragma once

// Run configuration for the pfdm harness: one JSON file per experiment,
// strict keys, dotted-path overrides.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pfdm/envs.hpp"
#include "pfdm/error.hpp"
#include "pfdm/estimation.hpp"
#include "pfdm/fpd.hpp"
#include "pfdm/refpolicy.hpp"
#include "pfdm/rl.hpp"

namespace pfdm {

// Invalid or incomplete configuration; the message names the field.
struct ConfigError : Error {
  using Error::Error;
};

using nlohmann::json;

namespace detail {

// Read-once view of a JSON object that rejects keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), field(key));
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(field(key) + ": missing required field");
    return convert<T>(j_.at(key), field(key));
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  std::vector<std::string> keys() const {
    std::vector<std::string> k;
    for (auto it = j_.begin(); it != j_.end(); ++it) k.push_back(it.key());
    return k;
  }

  // Throws on the first key that was never read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(field(it.key()) + ": unknown key");
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  template <class T>
  static T convert(const json& v, const std::string& name) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(name + ": expected a number");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0))
          throw ConfigError(name + std::string(": expected a ") + (std::is_unsigned_v<T> ? "non-negative " : "") +
                            "integer");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(name + ": expected true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(name + ": expected a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name + ": " + e.what());
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::pair<double, double> read_box(Section& s, const std::string& key, std::pair<double, double> fallback) {
  const auto v = s.get<std::vector<double>>(key, {fallback.first, fallback.second});
  if (v.size() != 2 || !(v[0] < v[1])) throw ConfigError(s.field(key) + ": expected [lower, upper] with lower < upper");
  return {v[0], v[1]};
}

template <class E>
E read_enum(Section& s, const std::string& key, E fallback, const std::vector<std::pair<std::string, E>>& names) {
  std::string def;
  for (const auto& [n, e] : names)
    if (e == fallback) def = n;
  const auto v = s.get<std::string>(key, def);
  for (const auto& [n, e] : names)
    if (n == v) return e;
  std::string allowed;
  for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
  throw ConfigError(s.field(key) + ": '" + v + "' is not one of {" + allowed + "}");
}

// Rethrows a module validation error as a config error naming the section.
template <class Fn>
void validated(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidInput& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------

struct GridConfig {
  std::size_t theta_bins = 50;
  std::size_t omega_bins = 50;
  std::size_t action_bins = 20;
  OutOfRange out_of_range = OutOfRange::map;
};

struct LinearConfig {
  double sigma = 1.0;
  std::pair<double, double> x_box{-5.0, 5.0};
  std::pair<double, double> u_box{-1.0, 1.0};
  std::size_t x_bins = 50;
  std::size_t u_bins = 20;
  OutOfRange out_of_range = OutOfRange::discard;

  LinearEnv env() const { return LinearEnv{sigma, x_box.first, x_box.second, u_box.first, u_box.second}; }
  Grid state_grid() const { return Grid("x", {Axis{x_box.first, x_box.second, x_bins, Boundary::clip}}); }
  Grid action_grid() const { return Grid("u", {Axis{u_box.first, u_box.second, u_bins, Boundary::clip}}); }
};

enum class InputKind { uniform, zero, policy };

struct DatasetSpec {
  std::string environment = "plant";  // plant | reference_plant | linear
  InputKind input = InputKind::uniform;
  std::string policy;  // run-relative PolicyTable path when input == policy
  std::size_t episodes = 10000;
  std::size_t steps = 99;
  std::optional<std::vector<double>> initial_state;
};

enum class TableKind { transitions, policy, passive };

struct TableSpec {
  std::string dataset;
  TableKind kind = TableKind::transitions;
};

struct ReferenceConfig {
  MpcConfig mpc;
  ReferenceOptions rollouts;
  std::size_t validation_episodes = 50;
  std::size_t validation_steps = 100;
  std::size_t validation_window = 20;
};

struct TrainSection {
  TrainConfig train;
  std::string plant = "plant";
};

struct FpdSection {
  std::string f_x = "tables/f_x.csv";
  std::string g_x = "reference/g_x.csv";
  std::string g_u = "reference/g_u.csv";
  std::size_t horizon = 2;
  FpdOptions options;
};

struct KlcSection {
  std::string passive = "tables/passive.csv";
  double tolerance = 1e-10;
  std::size_t max_iterations = 1'000'000;
  std::size_t rollouts = 50;
  std::size_t steps = 100;
  std::size_t final_window = 20;
};

enum class ControllerKind { q_table, q_checkpoints, policy, fpd };

struct EvaluationSpec {
  ControllerKind controller = ControllerKind::q_table;
  std::string path;      // Q-table / policy table / checkpoint index, run-relative
  std::string fallback;  // optional policy table used on unobserved rows
  std::string plant = "plant";
  std::size_t episodes = 50;
  std::size_t steps = 300;
  std::size_t final_window = 100;
};

struct LinearFigureSpec {
  std::vector<std::string> tables;
  double x = 1.0;
  double u = 0.5;
  // closed-loop trajectory u = gain * x from x0
  double gain = -0.3;
  double x0 = 3.0;
  std::size_t steps = 5;
};

struct RunConfig {
  std::string experiment = "experiment";
  std::uint64_t seed = 0;
  std::string output_dir = "runs/experiment";
  std::size_t workers = 1;

  PendulumParams plant;
  PendulumParams reference_plant;
  GridConfig grid;
  LinearConfig linear;
  std::map<std::string, DatasetSpec> datasets;
  std::map<std::string, TableSpec> tables;
  ReferenceConfig reference;
  TrainSection train;
  FpdSection fpd;
  KlcSection klc;
  std::map<std::string, EvaluationSpec> evaluations;
  LinearFigureSpec linear_figure;

  // JSON as loaded, after overrides; recorded verbatim in manifests.
  json source;

  const PendulumParams& pendulum(const std::string& which) const {
    if (which == "plant") return plant;
    if (which == "reference_plant") return reference_plant;
    throw ConfigError("unknown pendulum '" + which + "' (expected plant or reference_plant)");
  }
  Grid state_grid() const { return pendulum_state_grid(plant, grid.theta_bins, grid.omega_bins); }
  Grid action_grid() const { return pendulum_action_grid(plant, grid.action_bins); }
  std::filesystem::path run_path(const std::string& rel) const {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : std::filesystem::path(output_dir) / p;
  }
};

namespace detail {

inline PendulumParams read_pendulum(Section s, PendulumParams p) {
  p.dt = s.get("dt", p.dt);
  p.length = s.get("length", p.length);
  p.mass = s.get("mass", p.mass);
  p.gravity = s.get("gravity", p.gravity);
  p.sigma_theta = s.get("sigma_theta", p.sigma_theta);
  p.sigma_omega = s.get("sigma_omega", p.sigma_omega);
  std::tie(p.theta_min, p.theta_max) = read_box(s, "theta", {p.theta_min, p.theta_max});
  std::tie(p.omega_min, p.omega_max) = read_box(s, "omega", {p.omega_min, p.omega_max});
  std::tie(p.torque_min, p.torque_max) = read_box(s, "torque", {p.torque_min, p.torque_max});
  s.finish();
  return p;
}

inline const std::vector<std::pair<std::string, OutOfRange>> kOutOfRange{{"map", OutOfRange::map},
                                                                        {"discard", OutOfRange::discard}};

}  // namespace detail

// Parses and validates a configuration document.
inline RunConfig parse_config(const json& doc) {
  using detail::Section;
  RunConfig c;
  c.source = doc;
  Section root(doc, "");
  c.experiment = root.get<std::string>("experiment", c.experiment);
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.output_dir = root.get<std::string>("output_dir", "runs/" + c.experiment);
  c.workers = root.get<std::size_t>("workers", c.workers);
  if (c.workers < 1) throw ConfigError("workers: must be >= 1");

  detail::validated("plant", [&] {
    c.plant = detail::read_pendulum(root.child("plant"), PendulumParams{});
    c.plant.validate();
  });
  detail::validated("reference_plant", [&] {
    PendulumParams light = c.plant;
    light.mass = 0.5;
    c.reference_plant = detail::read_pendulum(root.child("reference_plant"), light);
    c.reference_plant.validate();
  });

  {
    auto s = root.child("grid");
    c.grid.theta_bins = s.get("theta_bins", c.grid.theta_bins);
    c.grid.omega_bins = s.get("omega_bins", c.grid.omega_bins);
    c.grid.action_bins = s.get("action_bins", c.grid.action_bins);
    c.grid.out_of_range = detail::read_enum(s, "out_of_range", c.grid.out_of_range, detail::kOutOfRange);
    s.finish();
    if (c.grid.theta_bins < 1 || c.grid.omega_bins < 1 || c.grid.action_bins < 1)
      throw ConfigError("grid: bin counts must be >= 1");
  }
  {
    auto s = root.child("linear");
    auto& l = c.linear;
    l.sigma = s.get("sigma", l.sigma);
    l.x_box = detail::read_box(s, "x", l.x_box);
    l.u_box = detail::read_box(s, "u", l.u_box);
    l.x_bins = s.get("x_bins", l.x_bins);
    l.u_bins = s.get("u_bins", l.u_bins);
    l.out_of_range = detail::read_enum(s, "out_of_range", l.out_of_range, detail::kOutOfRange);
    s.finish();
    if (!(l.sigma >= 0.0)) throw ConfigError("linear.sigma: must be >= 0");
    if (l.x_bins < 1 || l.u_bins < 1) throw ConfigError("linear: bin counts must be >= 1");
  }
  {
    auto s = root.child("datasets");
    for (const auto& name : s.keys()) {
      auto d = s.child(name);
      DatasetSpec spec;
      spec.environment = d.get<std::string>("environment", spec.environment);
      if (spec.environment != "plant" && spec.environment != "reference_plant" && spec.environment != "linear")
        throw ConfigError(d.field("environment") + ": expected plant, reference_plant or linear");
      spec.input = detail::read_enum(d, "input", spec.input,
                                     {{"uniform", InputKind::uniform}, {"zero", InputKind::zero}, {"policy", InputKind::policy}});
      spec.policy = d.get<std::string>("policy", "");
      if (spec.input == InputKind::policy && spec.policy.empty())
        throw ConfigError(d.field("policy") + ": required when input is 'policy'");
      if (spec.input == InputKind::policy && spec.environment == "linear")
        throw ConfigError(d.field("input") + ": policy input is only supported on pendulum environments");
      spec.episodes = d.get("episodes", spec.episodes);
      spec.steps = d.get("steps", spec.steps);
      if (spec.episodes < 1) throw ConfigError(d.field("episodes") + ": must be >= 1");
      if (spec.steps < 1) throw ConfigError(d.field("steps") + ": must be >= 1");
      if (d.has("initial_state")) {
        spec.initial_state = d.get<std::vector<double>>("initial_state", {});
        const std::size_t want = spec.environment == "linear" ? 1 : 2;
        if (spec.initial_state->size() != want)
          throw ConfigError(d.field("initial_state") + ": expected " + std::to_string(want) + " values");
      }
      d.finish();
      c.datasets[name] = spec;
    }
  }
  {
    auto s = root.child("tables");
    for (const auto& name : s.keys()) {
      auto t = s.child(name);
      TableSpec spec;
      spec.dataset = t.require<std::string>("dataset");
      spec.kind = detail::read_enum(t, "kind", spec.kind,
                                    {{"transitions", TableKind::transitions},
                                     {"policy", TableKind::policy},
                                     {"passive", TableKind::passive}});
      t.finish();
      if (!c.datasets.count(spec.dataset))
        throw ConfigError(t.field("dataset") + ": no dataset named '" + spec.dataset + "'");
      c.tables[name] = spec;
    }
  }
  detail::validated("reference", [&] {
    auto s = root.child("reference");
    auto& m = c.reference.mpc;
    m.horizon = s.get("horizon", m.horizon);
    m.w_theta = s.get("w_theta", m.w_theta);
    m.w_omega = s.get("w_omega", m.w_omega);
    m.w_theta_terminal = s.get("w_theta_terminal", m.w_theta_terminal);
    m.w_omega_terminal = s.get("w_omega_terminal", m.w_omega_terminal);
    std::tie(m.u_min, m.u_max) = detail::read_box(s, "control_box", {m.u_min, m.u_max});
    m.population = s.get("population", m.population);
    m.elites = s.get("elites", m.elites);
    m.iterations = s.get("iterations", m.iterations);
    m.initial_std = s.get("initial_std", m.initial_std);
    m.min_std = s.get("min_std", m.min_std);
    m.sigma_u = s.get("sigma_u", m.sigma_u);
    auto& r = c.reference.rollouts;
    r.n_episodes = s.get("episodes", r.n_episodes);
    r.n_steps = s.get("steps", r.n_steps);
    r.initial = detail::read_enum(s, "initial", r.initial,
                                  {{"uniform", InitialRule::uniform}, {"downward", InitialRule::downward}});
    c.reference.validation_episodes = s.get("validation_episodes", c.reference.validation_episodes);
    c.reference.validation_steps = s.get("validation_steps", c.reference.validation_steps);
    c.reference.validation_window = s.get("validation_window", c.reference.validation_window);
    s.finish();
    m.validate(c.reference_plant);
    if (r.n_episodes < 1 || r.n_steps < 1) throw ConfigError("reference: episodes and steps must be >= 1");
    if (c.reference.validation_episodes < 1 || c.reference.validation_steps < 1)
      throw ConfigError("reference: validation episodes and steps must be >= 1");
  });
  detail::validated("train", [&] {
    auto s = root.child("train");
    auto& t = c.train.train;
    t.algorithm = detail::read_enum(s, "algorithm", t.algorithm,
                                    {{"q_learning", Algorithm::q_learning}, {"sarsa", Algorithm::sarsa}});
    t.alpha = s.get("alpha", t.alpha);
    t.gamma = s.get("gamma", t.gamma);
    const auto kind = detail::read_enum(s, "behavior", Behavior::Kind::epsilon_greedy,
                                        {{"greedy", Behavior::Kind::greedy},
                                         {"epsilon_greedy", Behavior::Kind::epsilon_greedy},
                                         {"softmax", Behavior::Kind::softmax}});
    const double eps = s.get("epsilon", 0.9);
    const double temp = s.get("temperature", 1.0);
    t.behavior = kind == Behavior::Kind::greedy           ? Behavior::greedy()
                 : kind == Behavior::Kind::epsilon_greedy ? Behavior::epsilon_greedy(eps)
                                                          : Behavior::softmax(temp);
    t.episodes = s.get("episodes", t.episodes);
    t.steps = s.get("steps", t.steps);
    t.checkpoints = s.get("checkpoints", t.checkpoints);
    t.initial_q = s.get("initial_q", t.initial_q);
    c.train.plant = s.get<std::string>("plant", c.train.plant);
    s.finish();
    c.pendulum(c.train.plant);
    t.validate();
  });
  {
    auto s = root.child("fpd");
    auto& f = c.fpd;
    f.f_x = s.get("f_x", f.f_x);
    f.g_x = s.get("g_x", f.g_x);
    f.g_u = s.get("g_u", f.g_u);
    f.horizon = s.get("horizon", f.horizon);
    f.options.kl_floor = s.get("kl_floor", f.options.kl_floor);
    f.options.gamma_floor = s.get("gamma_floor", f.options.gamma_floor);
    f.options.unobserved_penalty = s.get("unobserved_penalty", f.options.unobserved_penalty);
    s.finish();
    if (f.horizon < 1) throw ConfigError("fpd.horizon: must be >= 1");
    if (!(f.options.kl_floor > 0.0)) throw ConfigError("fpd.kl_floor: must be positive");
    if (!(f.options.gamma_floor > 0.0)) throw ConfigError("fpd.gamma_floor: must be positive");
    if (!(f.options.unobserved_penalty >= 0.0)) throw ConfigError("fpd.unobserved_penalty: must be >= 0");
  }
  {
    auto s = root.child("klc");
    auto& k = c.klc;
    k.passive = s.get("passive", k.passive);
    k.tolerance = s.get("tolerance", k.tolerance);
    k.max_iterations = s.get("max_iterations", k.max_iterations);
    k.rollouts = s.get("rollouts", k.rollouts);
    k.steps = s.get("steps", k.steps);
    k.final_window = s.get("final_window", k.final_window);
    s.finish();
    if (!(k.tolerance > 0.0)) throw ConfigError("klc.tolerance: must be positive");
    if (k.max_iterations < 1) throw ConfigError("klc.max_iterations: must be >= 1");
  }
  {
    auto s = root.child("evaluations");
    for (const auto& name : s.keys()) {
      auto e = s.child(name);
      EvaluationSpec spec;
      spec.controller = detail::read_enum(e, "controller", spec.controller,
                                          {{"q_table", ControllerKind::q_table},
                                           {"q_checkpoints", ControllerKind::q_checkpoints},
                                           {"policy", ControllerKind::policy},
                                           {"fpd", ControllerKind::fpd}});
      spec.path = e.require<std::string>("path");
      spec.fallback = e.get<std::string>("fallback", "");
      spec.plant = e.get<std::string>("plant", spec.plant);
      spec.episodes = e.get("episodes", spec.episodes);
      spec.steps = e.get("steps", spec.steps);
      spec.final_window = e.get("final_window", spec.final_window);
      e.finish();
      c.pendulum(spec.plant);
      if (spec.episodes < 1 || spec.steps < 1)
        throw ConfigError(s.field(name) + ": episodes and steps must be >= 1");
      c.evaluations[name] = spec;
    }
  }
  {
    auto s = root.child("linear_figure");
    c.linear_figure.tables = s.get("tables", c.linear_figure.tables);
    c.linear_figure.x = s.get("x", c.linear_figure.x);
    c.linear_figure.u = s.get("u", c.linear_figure.u);
    c.linear_figure.gain = s.get("feedback_gain", c.linear_figure.gain);
    c.linear_figure.x0 = s.get("x0", c.linear_figure.x0);
    c.linear_figure.steps = s.get("steps", c.linear_figure.steps);
    s.finish();
    for (const auto& t : c.linear_figure.tables)
      if (!c.tables.count(t)) throw ConfigError("linear_figure.tables: no table named '" + t + "'");
  }
  root.finish();
  return c;
}

// "a.b.c=value": value is read as JSON when it parses, otherwise as a string.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("--set: empty path component in '" + key + "'");
    if (!node->is_object()) throw ConfigError("--set: '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

inline json read_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path + "'");
  json doc = json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config file '" + path + "' is not valid JSON");
  return doc;
}

}  // namespace pfdm
