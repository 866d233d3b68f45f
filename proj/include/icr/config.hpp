#pragma once

// JSON run configuration shared by all subcommands. See docs/config.md for
// the schema.

#include "icr/explore.hpp"
#include "icr/fov.hpp"
#include "icr/planner.hpp"
#include "icr/tracking.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace icr {

/// Malformed or out-of-range configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MapSource {
  std::string path;  // resolved against the config file directory; empty = synthetic room
  double resolution = 0.5;
  Vector2 origin = Vector2::Zero();
  int synthetic_width = 30;
  int synthetic_height = 40;
};

struct GradcheckConfig {
  int instances = 20;
  std::vector<int> horizons{1, 2, 3, 5};
  int max_map_side = 8;
  double resolution = 0.5;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  double abs_floor = 1e-7;
  int tracking_instances = 10;
  int tracking_tf = 5;
  bool corrupt_dexp = false;
};

struct TrackingConfig {
  tracking::Sensor sensor = tracking::Sensor::range;
  double noise_var = 0.1;
  std::string target_model = "static";  // static | constant_velocity
  VectorXd mu0 = Vector2(3.0, 4.0);
  MatrixXd Sigma0 = Vector2(0.3, 0.7).asDiagonal();
  double process_noise = 0.0;
  int tf = 5;
  double tau = 0.5;
  Pose start;
  std::vector<Twist> initial_controls;  // empty = constant `initial_twist`
  Twist initial_twist = Twist::planar(1.0, 0.0, 0.0);
  Vector6 alpha = Vector6::Constant(0.5);
  std::array<bool, 6> frozen{false, true, true, true, true, false};
  int iterations = 500;
  std::vector<double> weights;

  tracking::TargetModel model() const {
    if (target_model == "static") return tracking::TargetModel::static_target(process_noise, mu0, Sigma0);
    return tracking::TargetModel::constant_velocity(tau, process_noise, mu0, Sigma0);
  }

  tracking::TrackingProblem problem() const { return {start, model(), {sensor, noise_var}, weights}; }

  ControlSequence controls() const {
    if (!initial_controls.empty()) return {initial_controls, tau};
    return {std::vector<Twist>(static_cast<std::size_t>(tf), initial_twist), tau};
  }
};

struct CostmapConfig {
  double x_min = 0.0, x_max = 6.0, y_min = 0.0, y_max = 8.0;
  double resolution = 0.1;

  static std::vector<double> axis(double lo, double hi, double step) {
    const auto n = static_cast<int>(std::floor((hi - lo) / step + 1e-9)) + 1;
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = lo + step * i;
    return v;
  }
  std::vector<double> xs() const { return axis(x_min, x_max, resolution); }
  std::vector<double> ys() const { return axis(y_min, y_max, resolution); }
};

struct RunConfig {
  std::filesystem::path base_dir;  // directory of the config file
  MapSource map;
  std::string output_dir = "out";
  std::vector<Strategy> strategies{Strategy::icr, Strategy::random};
  std::vector<std::uint64_t> seeds{0};
  EpisodeConfig episode;
  unsigned workers = 0;
  GradcheckConfig gradcheck;
  TrackingConfig tracking;
  CostmapConfig costmap;
  std::uint64_t seed = 0;  // for gradcheck instance generation

  void override_seed(std::uint64_t s) {
    seeds = {s};
    seed = s;
  }
};

namespace config_detail {

using nlohmann::json;

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items())
    if (!ok.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
T get(const json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

inline double number(const json& j, const char* key, const std::string& where, double fallback) {
  const double v = get<double>(j, key, where, fallback);
  if (!std::isfinite(v)) throw ConfigError(where + "." + key + ": must be finite");
  return v;
}

inline Vector6 vec6(const json& j, const char* key, const std::string& where, const Vector6& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (v.is_number()) return Vector6::Constant(v.get<double>());
  const auto xs = get<std::vector<double>>(j, key, where, {});
  if (xs.size() != 6) throw ConfigError(where + "." + key + ": expected 6 numbers");
  return Vector6(xs.data());
}

inline std::array<bool, 6> mask6(const json& j, const char* key, const std::string& where,
                                 const std::array<bool, 6>& fallback) {
  if (!j.contains(key)) return fallback;
  const auto xs = get<std::vector<bool>>(j, key, where, {});
  if (xs.size() != 6) throw ConfigError(where + "." + key + ": expected 6 booleans");
  std::array<bool, 6> out{};
  for (std::size_t i = 0; i < 6; ++i) out[i] = xs[i];
  return out;
}

inline Pose pose3(const json& j, const char* key, const std::string& where) {
  const auto xs = get<std::vector<double>>(j, key, where, {});
  if (xs.size() != 3) throw ConfigError(where + "." + key + ": expected [x, y, theta]");
  return Pose::planar(xs[0], xs[1], xs[2]);
}

inline int positive_int(const json& j, const char* key, const std::string& where, int fallback, int min = 1) {
  const int v = get<int>(j, key, where, fallback);
  if (v < min) throw ConfigError(where + "." + key + ": must be >= " + std::to_string(min));
  return v;
}

inline void parse_fov(const json& j, ConeFov& fov) {
  check_keys(j, "fov", {"height", "half_angle", "sigma", "kappa"});
  fov.height = number(j, "height", "fov", fov.height);
  fov.half_angle = number(j, "half_angle", "fov", fov.half_angle);
  fov.sigma = number(j, "sigma", "fov", fov.sigma);
  fov.kappa = number(j, "kappa", "fov", fov.kappa);
}

inline void parse_policy(const json& j, StepPolicy& p) {
  const std::string w = "step_policy";
  check_keys(j, w, {"gamma0", "backtrack", "max_halvings", "line_search", "frozen", "max_abs"});
  p.gamma0 = vec6(j, "gamma0", w, p.gamma0);
  p.backtrack = number(j, "backtrack", w, p.backtrack);
  p.max_halvings = get<int>(j, "max_halvings", w, p.max_halvings);
  p.line_search = get<bool>(j, "line_search", w, p.line_search);
  p.frozen = mask6(j, "frozen", w, p.frozen);
  if (j.contains("max_abs")) p.max_abs = vec6(j, "max_abs", w, Vector6::Zero());
}

inline void parse_episode(const json& j, EpisodeConfig& e) {
  const std::string w = "episode";
  check_keys(j, w,
             {"horizon", "total_steps", "tau", "replan_every", "icr_iterations", "prior_variance", "dense_belief",
              "linear_speed", "init_omega_range", "random_omega_range", "max_turn_per_step", "clamp_margin",
              "initial_pose", "snapshot_steps"});
  e.horizon = positive_int(j, "horizon", w, e.horizon);
  e.total_steps = positive_int(j, "total_steps", w, e.total_steps);
  e.tau = number(j, "tau", w, e.tau);
  e.replan_every = positive_int(j, "replan_every", w, e.horizon);
  e.icr_iterations = positive_int(j, "icr_iterations", w, e.icr_iterations);
  e.prior_variance = number(j, "prior_variance", w, e.prior_variance);
  e.dense_belief = get<bool>(j, "dense_belief", w, e.dense_belief);
  e.linear_speed = number(j, "linear_speed", w, e.linear_speed);
  e.init_omega_range = number(j, "init_omega_range", w, e.init_omega_range);
  e.random_omega_range = number(j, "random_omega_range", w, e.random_omega_range);
  e.max_turn_per_step = number(j, "max_turn_per_step", w, e.max_turn_per_step);
  e.clamp_margin = number(j, "clamp_margin", w, e.clamp_margin);
  if (j.contains("initial_pose")) e.initial_pose = pose3(j, "initial_pose", w);
  e.snapshot_steps = get<std::vector<int>>(j, "snapshot_steps", w, e.snapshot_steps);
}

inline void parse_map(const json& j, MapSource& m) {
  const std::string w = "map";
  check_keys(j, w, {"path", "resolution", "origin", "synthetic_width", "synthetic_height"});
  m.path = get<std::string>(j, "path", w, "");
  m.resolution = number(j, "resolution", w, m.resolution);
  if (!(m.resolution > 0.0)) throw ConfigError("map.resolution: must be positive");
  if (j.contains("origin")) {
    const auto o = get<std::vector<double>>(j, "origin", w, {});
    if (o.size() != 2) throw ConfigError("map.origin: expected [x, y]");
    m.origin = Vector2(o[0], o[1]);
  }
  m.synthetic_width = positive_int(j, "synthetic_width", w, m.synthetic_width);
  m.synthetic_height = positive_int(j, "synthetic_height", w, m.synthetic_height);
}

inline void parse_gradcheck(const json& j, GradcheckConfig& g) {
  const std::string w = "gradcheck";
  check_keys(j, w,
             {"instances", "horizons", "max_map_side", "resolution", "fd_step", "tolerance", "abs_floor",
              "tracking_instances", "tracking_tf", "corrupt_dexp"});
  g.instances = positive_int(j, "instances", w, g.instances);
  g.horizons = get<std::vector<int>>(j, "horizons", w, g.horizons);
  if (g.horizons.empty()) throw ConfigError("gradcheck.horizons: must not be empty");
  for (int k : g.horizons)
    if (k < 1) throw ConfigError("gradcheck.horizons: entries must be >= 1");
  g.max_map_side = positive_int(j, "max_map_side", w, g.max_map_side, 2);
  g.resolution = number(j, "resolution", w, g.resolution);
  g.fd_step = number(j, "fd_step", w, g.fd_step);
  g.tolerance = number(j, "tolerance", w, g.tolerance);
  g.abs_floor = number(j, "abs_floor", w, g.abs_floor);
  if (!(g.resolution > 0.0 && g.fd_step > 0.0 && g.tolerance > 0.0 && g.abs_floor >= 0.0))
    throw ConfigError("gradcheck: resolution, fd_step and tolerance must be positive");
  g.tracking_instances = positive_int(j, "tracking_instances", w, g.tracking_instances, 0);
  g.tracking_tf = positive_int(j, "tracking_tf", w, g.tracking_tf);
  g.corrupt_dexp = get<bool>(j, "corrupt_dexp", w, g.corrupt_dexp);
}

inline VectorXd vector_of(const json& j, const char* key, const std::string& where, const VectorXd& fallback) {
  if (!j.contains(key)) return fallback;
  const auto xs = get<std::vector<double>>(j, key, where, {});
  return Eigen::Map<const VectorXd>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline MatrixXd matrix_of(const json& j, const char* key, const std::string& where, const MatrixXd& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array() || v.empty()) throw ConfigError(where + "." + key + ": expected an array");
  if (v.front().is_number()) return vector_of(j, key, where, {}).asDiagonal();
  const auto rows = get<std::vector<std::vector<double>>>(j, key, where, {});
  MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows.size()) throw ConfigError(where + "." + key + ": matrix must be square");
    for (std::size_t c = 0; c < rows.size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return m;
}

inline Twist planar_twist(const json& v, const std::string& where) {
  std::vector<double> xs;
  try {
    xs = v.get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (xs.size() == 3) return Twist::planar(xs[0], xs[1], xs[2]);
  if (xs.size() == 6) return Twist(Vector6(xs.data()));
  throw ConfigError(where + ": expected [vx, vy, omega] or a 6-vector");
}

inline void parse_tracking(const json& j, TrackingConfig& t) {
  const std::string w = "tracking";
  check_keys(j, w,
             {"sensor", "noise_var", "target_model", "mu0", "Sigma0", "process_noise", "tf", "tau", "start",
              "initial_controls", "initial_twist", "alpha", "frozen", "iterations", "weights"});
  const auto sensor = get<std::string>(j, "sensor", w, std::string(tracking::to_string(t.sensor)));
  if (sensor == "range") t.sensor = tracking::Sensor::range;
  else if (sensor == "bearing") t.sensor = tracking::Sensor::bearing;
  else throw ConfigError("tracking.sensor: expected 'range' or 'bearing'");
  t.noise_var = number(j, "noise_var", w, t.noise_var);
  if (!(t.noise_var > 0.0)) throw ConfigError("tracking.noise_var: must be positive");
  t.target_model = get<std::string>(j, "target_model", w, t.target_model);
  if (t.target_model != "static" && t.target_model != "constant_velocity")
    throw ConfigError("tracking.target_model: expected 'static' or 'constant_velocity'");
  t.mu0 = vector_of(j, "mu0", w, t.mu0);
  t.Sigma0 = matrix_of(j, "Sigma0", w, t.Sigma0);
  t.process_noise = number(j, "process_noise", w, t.process_noise);
  t.tf = positive_int(j, "tf", w, t.tf);
  t.tau = number(j, "tau", w, t.tau);
  if (!(t.tau > 0.0)) throw ConfigError("tracking.tau: must be positive");
  if (j.contains("start")) t.start = pose3(j, "start", w);
  if (j.contains("initial_twist")) t.initial_twist = planar_twist(j.at("initial_twist"), w + ".initial_twist");
  if (j.contains("initial_controls")) {
    const json& list = j.at("initial_controls");
    if (!list.is_array()) throw ConfigError("tracking.initial_controls: expected a list");
    t.initial_controls.clear();
    for (const auto& v : list) t.initial_controls.push_back(planar_twist(v, w + ".initial_controls"));
    if (static_cast<int>(t.initial_controls.size()) != t.tf)
      throw ConfigError("tracking.initial_controls: need exactly tf entries");
  }
  t.alpha = vec6(j, "alpha", w, t.alpha);
  if ((t.alpha.array() < 0.0).any()) throw ConfigError("tracking.alpha: must be >= 0");
  t.frozen = mask6(j, "frozen", w, t.frozen);
  t.iterations = positive_int(j, "iterations", w, t.iterations);
  t.weights = get<std::vector<double>>(j, "weights", w, t.weights);
  if (!t.weights.empty() && static_cast<int>(t.weights.size()) != t.tf)
    throw ConfigError("tracking.weights: need exactly tf entries");
  try {
    (void)t.model();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("tracking: ") + e.what());
  }
}

inline void parse_costmap(const json& j, CostmapConfig& c) {
  const std::string w = "costmap";
  check_keys(j, w, {"x_range", "y_range", "resolution"});
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto xs = get<std::vector<double>>(j, key, w, {});
    if (xs.size() != 2 || !(xs[1] > xs[0])) throw ConfigError(w + "." + key + ": expected [min, max] with min < max");
    lo = xs[0];
    hi = xs[1];
  };
  range("x_range", c.x_min, c.x_max);
  range("y_range", c.y_min, c.y_max);
  c.resolution = number(j, "resolution", w, c.resolution);
  if (!(c.resolution > 0.0)) throw ConfigError("costmap.resolution: must be positive");
}

}  // namespace config_detail

inline RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  using namespace config_detail;
  RunConfig cfg;
  cfg.base_dir = base_dir;
  check_keys(j, "config",
             {"map", "output_dir", "strategies", "seeds", "seed", "workers", "episode", "fov", "step_policy",
              "gradcheck", "tracking", "costmap"});
  if (j.contains("map")) parse_map(j.at("map"), cfg.map);
  if (!cfg.map.path.empty() && std::filesystem::path(cfg.map.path).is_relative())
    cfg.map.path = (base_dir / cfg.map.path).lexically_normal().string();
  cfg.output_dir = get<std::string>(j, "output_dir", "config", cfg.output_dir);
  if (j.contains("strategies")) {
    cfg.strategies.clear();
    for (const auto& name : get<std::vector<std::string>>(j, "strategies", "config", {})) {
      try {
        cfg.strategies.push_back(parse_strategy(name));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("strategies: ") + e.what());
      }
    }
    if (cfg.strategies.empty()) throw ConfigError("strategies: must not be empty");
  }
  cfg.seeds = get<std::vector<std::uint64_t>>(j, "seeds", "config", cfg.seeds);
  if (cfg.seeds.empty()) throw ConfigError("seeds: must not be empty");
  cfg.seed = get<std::uint64_t>(j, "seed", "config", cfg.seeds.front());
  cfg.workers = get<unsigned>(j, "workers", "config", cfg.workers);
  if (j.contains("fov")) parse_fov(j.at("fov"), cfg.episode.fov);
  if (j.contains("step_policy")) parse_policy(j.at("step_policy"), cfg.episode.policy);
  if (j.contains("episode")) parse_episode(j.at("episode"), cfg.episode);
  if (j.contains("gradcheck")) parse_gradcheck(j.at("gradcheck"), cfg.gradcheck);
  if (j.contains("tracking")) parse_tracking(j.at("tracking"), cfg.tracking);
  if (j.contains("costmap")) parse_costmap(j.at("costmap"), cfg.costmap);
  try {
    cfg.episode.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(j, path.parent_path());
}

}  // namespace icr
