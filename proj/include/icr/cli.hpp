#pragma once

// Subcommands of the icr command-line tool. Each returns a process exit
// code: 0 success, 1 check failure, 2 config error, 3 input-data error.

#include "icr/config.hpp"
#include "icr/explore.hpp"
#include "icr/gradcheck.hpp"
#include "icr/pgm.hpp"
#include "icr/tracking.hpp"

#include "CLI11.hpp"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#ifndef ICR_VERSION
#define ICR_VERSION "0.0.0"
#endif

namespace icr::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kConfigError = 2, kInputDataError = 3 };

inline constexpr std::string_view kVersion = ICR_VERSION;

struct Overrides {
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
};

inline void apply(RunConfig& cfg, const Overrides& o) {
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.override_seed(*o.seed);
}

inline std::filesystem::path prepare_output(const RunConfig& cfg) {
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

inline GridMap load_truth(const RunConfig& cfg) {
  if (cfg.map.path.empty())
    return synthetic_room(cfg.map.synthetic_width, cfg.map.synthetic_height, cfg.map.resolution);
  try {
    return load_map(cfg.map.path, cfg.map.resolution, cfg.map.origin);
  } catch (const std::invalid_argument& e) {
    throw InputDataError(std::string("invalid map: ") + e.what());
  }
}

inline std::string episode_stem(const EpisodeLog& log) {
  return std::string(to_string(log.strategy)) + "_seed" + std::to_string(log.seed);
}

inline int cmd_explore(const RunConfig& cfg, std::ostream& out = std::cout) {
  const GridMap truth = load_truth(cfg);
  std::vector<EpisodeConfig> runs;
  for (Strategy s : cfg.strategies)
    for (std::uint64_t seed : cfg.seeds) {
      EpisodeConfig e = cfg.episode;
      e.strategy = s;
      e.seed = seed;
      runs.push_back(std::move(e));
    }
  out << "explore: " << runs.size() << " episodes on a " << truth.geometry.width() << "x" << truth.geometry.height()
      << " map, " << cfg.episode.total_steps << " steps each\n";
  const auto logs = run_episodes(runs, truth, cfg.workers);
  const auto dir = prepare_output(cfg);
  auto summary = open_output(dir / "summary.csv");
  summary << "strategy,seed,terminal_reward\n";
  for (const auto& log : logs) {
    const std::string stem = episode_stem(log);
    auto csv = open_output(dir / (stem + ".csv"));
    write_episode_csv(csv, log);
    for (const auto& snap : log.snapshots) {
      const std::string tag = stem + "_step" + std::to_string(snap.step);
      write_pgm((dir / (tag + "_map.pgm")).string(), occupancy_image(truth.geometry, snap.occupancy));
      write_pgm((dir / (tag + "_info.pgm")).string(), information_image(truth.geometry, snap.information));
    }
    summary << to_string(log.strategy) << ',' << log.seed << ',' << format_double(log.terminal_reward()) << '\n';
    out << "  " << stem << ": terminal log det Y = " << log.terminal_reward() << '\n';
  }
  return kSuccess;
}

inline void print_table(std::ostream& out, const char* title, const ControlMatrix& worst) {
  static const char* names[6] = {"vx", "vy", "vz", "wx", "wy", "wz"};
  out << title << "\n     k";
  for (const char* n : names) out << "          " << n;
  out << '\n';
  char buf[32];
  for (Eigen::Index k = 0; k < worst.rows(); ++k) {
    std::snprintf(buf, sizeof(buf), "%6d", static_cast<int>(k));
    out << buf;
    for (int i = 0; i < 6; ++i) {
      std::snprintf(buf, sizeof(buf), "  %10.3e", worst(k, i));
      out << buf;
    }
    out << '\n';
  }
}

inline void accumulate(ControlMatrix& table, const ControlMatrix& err) {
  if (table.rows() < err.rows()) {
    ControlMatrix grown = ControlMatrix::Zero(err.rows(), 6);
    grown.topRows(table.rows()) = table;
    table = grown;
  }
  table.topRows(err.rows()) = table.topRows(err.rows()).cwiseMax(err);
}

inline int cmd_gradcheck(const RunConfig& cfg, std::ostream& out = std::cout) {
  const GradcheckConfig& g = cfg.gradcheck;
  std::mt19937_64 rng(cfg.seed);
  const ExpDerivative dexp = g.corrupt_dexp ? ExpDerivative(corrupted_exp_derivative) : default_exp_derivative;

  ControlMatrix icr_table = ControlMatrix::Zero(0, 6);
  double icr_max = 0.0;
  int icr_k = 0, icr_i = 0;
  for (int n = 0; n < g.instances; ++n) {
    const int K = g.horizons[static_cast<std::size_t>(n) % g.horizons.size()];
    const auto inst = random_icr_instance(rng, K, g.max_map_side, g.resolution, n % 3 == 2, n % 2 == 1,
                                          cfg.episode.fov);
    const auto c = check_icr_gradient(inst.problem, inst.controls, g.fd_step, g.tolerance, g.abs_floor, dexp);
    accumulate(icr_table, c.error);
    if (c.max_error > icr_max) {
      icr_max = c.max_error;
      icr_k = c.worst_k;
      icr_i = c.worst_i;
    }
  }

  ControlMatrix trk_table = ControlMatrix::Zero(0, 6);
  double trk_max = 0.0;
  int trk_k = 0, trk_i = 0;
  for (int n = 0; n < g.tracking_instances; ++n) {
    const auto sensor = n % 2 ? tracking::Sensor::bearing : tracking::Sensor::range;
    const auto [prob, U] = random_tracking_instance(rng, g.tracking_tf, sensor);
    const auto c = check_tracking_sensitivity(prob, U, g.fd_step, g.tolerance, g.abs_floor);
    accumulate(trk_table, c.error);
    if (c.max_error > trk_max) {
      trk_max = c.max_error;
      trk_k = c.worst_k;
      trk_i = c.worst_i;
    }
  }

  out << "gradcheck: " << g.instances << " iCR instances, " << g.tracking_instances
      << " tracking instances, step " << g.fd_step << ", tolerance " << g.tolerance << '\n';
  if (g.corrupt_dexp) out << "  (corrupted exp derivative in use)\n";
  print_table(out, "iCR gradient: worst error per (k, i)", icr_table);
  if (g.tracking_instances > 0) print_table(out, "tracking sensitivity: worst error per (k, i)", trk_table);
  out << "max relative error, iCR gradient: " << icr_max << " at (k=" << icr_k << ", i=" << icr_i << ")\n";
  out << "max relative error, tracking sensitivity: " << trk_max << " at (k=" << trk_k << ", i=" << trk_i << ")\n";
  const bool ok = icr_max < g.tolerance && trk_max < g.tolerance;
  if (!ok) {
    std::cerr << "gradcheck failed:";
    if (!(icr_max < g.tolerance)) std::cerr << " iCR gradient component (k=" << icr_k << ", i=" << icr_i << ")";
    if (!(trk_max < g.tolerance)) std::cerr << " tracking sensitivity component (k=" << trk_k << ", i=" << trk_i << ")";
    std::cerr << '\n';
  }
  out << (ok ? "PASS\n" : "FAIL\n");
  return ok ? kSuccess : kCheckFailed;
}

inline int cmd_costmap(const RunConfig& cfg, std::ostream& out = std::cout) {
  const auto xs = cfg.costmap.xs(), ys = cfg.costmap.ys();
  const auto model = cfg.tracking.model();
  const tracking::MeasurementModel sensor{cfg.tracking.sensor, cfg.tracking.noise_var};
  const MatrixXd J = tracking::cost_map(xs, ys, sensor, model);
  const auto dir = prepare_output(cfg);
  const auto path = dir / ("costmap_" + std::string(tracking::to_string(sensor.sensor)) + ".csv");
  auto csv = open_output(path);
  csv << "x,y,cost\n";
  for (std::size_t r = 0; r < ys.size(); ++r)
    for (std::size_t c = 0; c < xs.size(); ++c)
      csv << format_double(xs[c]) << ',' << format_double(ys[r]) << ','
          << format_double(J(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c))) << '\n';
  out << "costmap: " << xs.size() << " x " << ys.size() << " grid written to " << path.string() << '\n';
  return kSuccess;
}

inline int cmd_track(const RunConfig& cfg, std::ostream& out = std::cout) {
  const TrackingConfig& t = cfg.tracking;
  const auto prob = t.problem();
  const auto res = tracking::tracking_gd(prob, t.controls(), t.alpha, t.frozen, t.iterations);
  const auto dir = prepare_output(cfg);
  {
    auto csv = open_output(dir / "track_iterations.csv");
    csv << "iter,cost,grad_inf_norm\n";
    for (std::size_t m = 0; m < res.cost_trace.size(); ++m)
      csv << m << ',' << format_double(res.cost_trace[m]) << ',' << format_double(res.grad_inf_norm_trace[m]) << '\n';
  }
  {
    auto csv = open_output(dir / "track_trajectory.csv");
    csv << "t,x,y,theta\n";
    const auto roll = tracking::rollout(prob, res.u);
    for (std::size_t s = 0; s < roll.poses.size(); ++s) {
      const Vector3 p = roll.poses[s].position();
      csv << s << ',' << format_double(p.x()) << ',' << format_double(p.y()) << ','
          << format_double(roll.poses[s].yaw()) << '\n';
    }
  }
  out << "track: " << res.cost_trace.size() - 1 << " iterations, cost " << res.cost_trace.front() << " -> "
      << res.cost_trace.back() << ", final |grad|_inf " << res.grad_inf_norm_trace.back() << '\n';
  if (res.stopped_non_finite) out << "  stopped early: non-finite cost or gradient\n";
  return kSuccess;
}

enum class Command { explore, gradcheck, costmap, track };

/// Loads the config and runs one command, mapping failures to exit codes.
inline int dispatch(Command cmd, const std::string& config_path, const Overrides& o, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  try {
    RunConfig cfg = load_config(config_path);
    apply(cfg, o);
    switch (cmd) {
      case Command::explore: return cmd_explore(cfg, out);
      case Command::gradcheck: return cmd_gradcheck(cfg, out);
      case Command::costmap: return cmd_costmap(cfg, out);
      case Command::track: return cmd_track(cfg, out);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InputDataError& e) {
    err << "input error: " << e.what() << '\n';
    return kInputDataError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInputDataError;
  }
  return kConfigError;
}

inline int run(int argc, char** argv) {
  CLI::App app{"iterative covariance regulation: exploration, gradient checks, cost maps and target tracking"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  struct Sub {
    Command cmd;
    const char* name;
    const char* help;
    std::string config;
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
  };
  std::array<Sub, 4> subs{{{Command::explore, "explore", "run exploration episodes", {}, {}, {}},
                           {Command::gradcheck, "gradcheck", "finite-difference gradient self-check", {}, {}, {}},
                           {Command::costmap, "costmap", "one-step tracking cost over robot placements", {}, {}, {}},
                           {Command::track, "track", "gradient descent for target tracking", {}, {}, {}}}};
  for (auto& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    sc->add_option("--config", s.config, "JSON config file")->required();
    sc->add_option("--out", s.out, "output directory (overrides the config)");
    sc->add_option("--seed", s.seed, "random seed (overrides the config)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  for (auto& s : subs)
    if (app.got_subcommand(s.name)) return dispatch(s.cmd, s.config, {s.out, s.seed});
  return kConfigError;
}

}  // namespace icr::cli
