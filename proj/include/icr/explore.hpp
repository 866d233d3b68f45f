#pragma once

// Receding-horizon exploration episodes: plan K steps with one of four
// strategies, execute, observe, fuse, repeat.

#include "icr/mapcore.hpp"
#include "icr/pgm.hpp"
#include "icr/planner.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <ostream>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace icr {

enum class Strategy { icr, icr_frontier, frontier, random };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::icr: return "icr";
    case Strategy::icr_frontier: return "icr_frontier";
    case Strategy::frontier: return "frontier";
    case Strategy::random: return "random";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::icr, Strategy::icr_frontier, Strategy::frontier, Strategy::random})
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

using Rng = std::mt19937_64;

struct EpisodeConfig {
  Strategy strategy = Strategy::icr;
  int horizon = 5;
  int total_steps = 300;
  double tau = 0.5;
  std::uint64_t seed = 0;
  ConeFov fov;
  /// Start pose; defaults to the map center facing +x.
  std::optional<Pose> initial_pose;
  StepPolicy policy = StepPolicy::planar();
  int icr_iterations = 10;
  int replan_every = 5;
  double prior_variance = 100.0;
  bool dense_belief = false;
  double linear_speed = 1.5;
  double init_omega_range = std::numbers::pi / 10.0;
  double random_omega_range = std::numbers::pi / 3.0;
  /// Largest heading change the frontier initialization commands in one step.
  double max_turn_per_step = std::numbers::pi / 2.0;
  /// The robot is pulled back once it is this far outside the map extent.
  double clamp_margin = 2.0;
  std::vector<int> snapshot_steps;

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("EpisodeConfig: horizon must be >= 1");
    if (total_steps < horizon) throw std::invalid_argument("EpisodeConfig: total_steps must be >= horizon");
    if (replan_every < 1) throw std::invalid_argument("EpisodeConfig: replan_every must be >= 1");
    if (!(tau > 0.0)) throw std::invalid_argument("EpisodeConfig: tau must be positive");
    if (icr_iterations < 1) throw std::invalid_argument("EpisodeConfig: icr_iterations must be >= 1");
    if (!(prior_variance > 0.0)) throw std::invalid_argument("EpisodeConfig: prior variance must be positive");
    if (!(clamp_margin >= 0.0)) throw std::invalid_argument("EpisodeConfig: clamp margin must be >= 0");
    fov.validate();
    policy.validate();
  }
};

struct StepRecord {
  int step = 0;
  Pose pose;
  double reward = 0.0;
  bool replanned = false;
};

struct Snapshot {
  int step = 0;
  std::vector<std::int8_t> occupancy;
  VectorXd information;
};

struct EpisodeLog {
  Strategy strategy = Strategy::icr;
  std::uint64_t seed = 0;
  std::vector<StepRecord> steps;
  std::vector<Snapshot> snapshots;
  MapBelief final_belief;

  double terminal_reward() const { return steps.empty() ? 0.0 : steps.back().reward; }
};

/// Constant forward speed with omega ~ U[-range, range] per step.
inline ControlSequence init_trajectory_random(Rng& rng, int K, double tau, double speed = 1.5,
                                              double omega_range = std::numbers::pi / 10.0) {
  std::uniform_real_distribution<double> omega(-omega_range, omega_range);
  std::vector<Twist> steps;
  steps.reserve(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) steps.push_back(Twist::planar(speed, 0.0, omega(rng)));
  return {std::move(steps), tau};
}

inline Twist policy_random_step(Rng& rng, double speed = 1.5, double omega_range = std::numbers::pi / 3.0) {
  std::uniform_real_distribution<double> omega(-omega_range, omega_range);
  return Twist::planar(speed, 0.0, omega(rng));
}

/// Cells whose information has not yet doubled over the prior.
inline std::vector<std::uint8_t> unexplored_cells(const Information& info, double prior_information) {
  const VectorXd& y = info.diagonal();
  std::vector<std::uint8_t> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index j = 0; j < y.size(); ++j) out[static_cast<std::size_t>(j)] = y[j] < 2.0 * prior_information;
  return out;
}

/// Cells of the largest 4-connected component of `mask` (ties: the component
/// containing the lowest cell index).
inline std::vector<int> largest_component(const GridGeometry& g, const std::vector<std::uint8_t>& mask) {
  std::vector<int> label(mask.size(), -1);
  std::vector<int> best;
  int next_label = 0;
  for (int start = 0; start < g.size(); ++start) {
    if (!mask[static_cast<std::size_t>(start)] || label[static_cast<std::size_t>(start)] >= 0) continue;
    std::vector<int> comp;
    std::queue<int> open;
    open.push(start);
    label[static_cast<std::size_t>(start)] = next_label;
    while (!open.empty()) {
      const int j = open.front();
      open.pop();
      comp.push_back(j);
      const int r = g.row(j), c = g.col(j);
      const int nbrs[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& nb : nbrs) {
        if (nb[0] < 0 || nb[0] >= g.height() || nb[1] < 0 || nb[1] >= g.width()) continue;
        const int m = g.index(nb[0], nb[1]);
        if (mask[static_cast<std::size_t>(m)] && label[static_cast<std::size_t>(m)] < 0) {
          label[static_cast<std::size_t>(m)] = next_label;
          open.push(m);
        }
      }
    }
    ++next_label;
    if (comp.size() > best.size()) best = std::move(comp);
  }
  return best;
}

struct FrontierInit {
  ControlSequence controls;
  bool fallback = false;  // no unexplored cells; random initialization used
  Vector2 target = Vector2::Zero();
};

/// Turn toward the centroid of the largest unexplored region on the first
/// step, then drive straight.
inline FrontierInit init_trajectory_frontier(const Information& info, const GridGeometry& grid, const Pose& pose,
                                             int K, double tau, double prior_information, Rng& rng,
                                             double speed = 1.5, double max_turn = std::numbers::pi / 2.0,
                                             double fallback_omega_range = std::numbers::pi / 10.0) {
  const auto region = largest_component(grid, unexplored_cells(info, prior_information));
  if (region.empty()) return {init_trajectory_random(rng, K, tau, speed, fallback_omega_range), true, {}};
  Vector2 centroid = Vector2::Zero();
  for (int j : region) centroid += grid.position(j).head<2>();
  centroid /= static_cast<double>(region.size());
  const Vector3 local = body_frame(pose, Vector3(centroid.x(), centroid.y(), pose.position().z()));
  const double bearing = std::atan2(local.y(), local.x());
  const double turn = std::clamp(bearing, -max_turn, max_turn);
  std::vector<Twist> steps;
  steps.push_back(Twist::planar(speed, 0.0, turn / tau));
  for (int k = 1; k < K; ++k) steps.push_back(Twist::planar(speed, 0.0, 0.0));
  return {ControlSequence(std::move(steps), tau), false, centroid};
}

/// Pulls a pose that drifted more than `margin` outside the map back onto
/// the map boundary, facing the map center.
inline Pose soft_clamp(const Pose& pose, const GridGeometry& grid, double margin) {
  const Vector2 lo = grid.extent_min(), hi = grid.extent_max();
  const Vector2 p = pose.position().head<2>();
  if (p.x() >= lo.x() - margin && p.x() <= hi.x() + margin && p.y() >= lo.y() - margin && p.y() <= hi.y() + margin)
    return pose;
  const Vector2 inside(std::clamp(p.x(), lo.x(), hi.x()), std::clamp(p.y(), lo.y(), hi.y()));
  const Vector2 to_center = grid.center() - inside;
  return Pose::planar(inside.x(), inside.y(), std::atan2(to_center.y(), to_center.x()));
}

/// Plans the next K steps from the information matrix alone.
inline ControlSequence plan_steps(const EpisodeConfig& cfg, const PlanningProblem& prob, Rng& rng) {
  const double prior_information = 1.0 / cfg.prior_variance;
  switch (cfg.strategy) {
    case Strategy::icr: {
      const auto U0 = init_trajectory_random(rng, cfg.horizon, cfg.tau, cfg.linear_speed, cfg.init_omega_range);
      return icr_optimize(prob, U0, cfg.policy, cfg.icr_iterations).u_opt;
    }
    case Strategy::icr_frontier: {
      const auto init = init_trajectory_frontier(prob.prior, prob.cells(), prob.start, cfg.horizon, cfg.tau,
                                                 prior_information, rng, cfg.linear_speed, cfg.max_turn_per_step,
                                                 cfg.init_omega_range);
      return icr_optimize(prob, init.controls, cfg.policy, cfg.icr_iterations).u_opt;
    }
    case Strategy::frontier:
      return init_trajectory_frontier(prob.prior, prob.cells(), prob.start, cfg.horizon, cfg.tau, prior_information,
                                      rng, cfg.linear_speed, cfg.max_turn_per_step, cfg.init_omega_range)
          .controls;
    case Strategy::random:
      break;
  }
  throw std::logic_error("plan_steps: the random strategy does not plan");
}

inline EpisodeLog run_episode(const EpisodeConfig& cfg, const GridMap& truth) {
  cfg.validate();
  const GridGeometry& grid = truth.geometry;
  if (static_cast<int>(truth.cells.size()) != grid.size()) throw std::invalid_argument("run_episode: map size mismatch");
  Rng rng(cfg.seed);
  EpisodeLog log;
  log.strategy = cfg.strategy;
  log.seed = cfg.seed;
  log.steps.reserve(static_cast<std::size_t>(cfg.total_steps));

  Pose pose = cfg.initial_pose ? *cfg.initial_pose : Pose::planar(grid.center().x(), grid.center().y(), 0.0);
  MapBelief belief = MapBelief::prior(grid.size(), cfg.prior_variance, cfg.dense_belief);
  ControlSequence plan;
  int plan_index = 0;
  const int steps_per_plan = std::min(cfg.replan_every, cfg.horizon);

  for (int step = 1; step <= cfg.total_steps; ++step) {
    Twist u;
    bool replanned = false;
    if (cfg.strategy == Strategy::random) {
      u = policy_random_step(rng, cfg.linear_speed, cfg.random_omega_range);
    } else {
      if (plan.u.empty() || plan_index >= steps_per_plan) {
        const PlanningProblem prob{pose, belief.info, &grid, cfg.fov};
        plan = plan_steps(cfg, prob, rng);
        plan_index = 0;
        replanned = true;
      }
      u = plan.u[static_cast<std::size_t>(plan_index++)];
    }
    pose = soft_clamp(compose(pose, exp_twist(cfg.tau, u)), grid, cfg.clamp_margin);
    const Measurement meas = sample_measurement(truth, pose, cfg.fov, belief.mu);
    belief = eif_update(belief, info_contribution(pose, grid, cfg.fov), meas);
    log.steps.push_back({step, pose, log_det_info(belief), replanned});
    if (std::find(cfg.snapshot_steps.begin(), cfg.snapshot_steps.end(), step) != cfg.snapshot_steps.end())
      log.snapshots.push_back({step, threshold_map(belief.mu), belief.info.diagonal()});
  }
  log.final_belief = std::move(belief);
  return log;
}

/// Runs independent episodes on up to `workers` threads; results keep the
/// input order.
inline std::vector<EpisodeLog> run_episodes(const std::vector<EpisodeConfig>& cfgs, const GridMap& truth,
                                            unsigned workers = 0) {
  std::vector<EpisodeLog> logs(cfgs.size());
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(cfgs.size(), 1)));
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cfgs.size());
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < cfgs.size();) {
      try {
        logs[i] = run_episode(cfgs[i], truth);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return logs;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline constexpr std::string_view kEpisodeCsvHeader = "step,strategy,seed,reward,pose_x,pose_y,pose_theta";

inline void write_episode_csv(std::ostream& out, const EpisodeLog& log) {
  out << kEpisodeCsvHeader << '\n';
  for (const auto& r : log.steps) {
    const Vector3 p = r.pose.position();
    out << r.step << ',' << to_string(log.strategy) << ',' << log.seed << ',' << format_double(r.reward) << ','
        << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(r.pose.yaw()) << '\n';
  }
}

/// 30 x 40 style room layout: outer walls, two partition walls with doors and
/// a few pillars.
inline GridMap synthetic_room(int width = 30, int height = 40, double resolution = 0.5) {
  const GridGeometry g(width, height, resolution);
  std::vector<std::int8_t> cells(static_cast<std::size_t>(g.size()), kFree);
  auto occupy = [&](int r, int c) {
    if (r >= 0 && r < height && c >= 0 && c < width) cells[static_cast<std::size_t>(g.index(r, c))] = kOccupied;
  };
  for (int c = 0; c < width; ++c) {
    occupy(0, c);
    occupy(height - 1, c);
  }
  for (int r = 0; r < height; ++r) {
    occupy(r, 0);
    occupy(r, width - 1);
  }
  const int wall1 = height / 3, wall2 = 2 * height / 3;
  for (int c = 0; c < width; ++c) {
    if (c < width / 4 || c > width / 4 + 3) occupy(wall1, c);
    if (c < 3 * width / 4 - 3 || c > 3 * width / 4) occupy(wall2, c);
  }
  const int pillars[][2] = {{height / 6, width / 2}, {height / 2, width / 3}, {height / 2, 2 * width / 3},
                            {5 * height / 6, width / 2}};
  for (const auto& p : pillars)
    for (int dr = 0; dr < 2; ++dr)
      for (int dc = 0; dc < 2; ++dc) occupy(p[0] + dr, p[1] + dc);
  return GridMap(g, std::move(cells));
}

}  // namespace icr
