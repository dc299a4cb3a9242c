#include "morphopt/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "morphopt/cli/config.hpp"
#include "morphopt/common/errors.hpp"
#include "morphopt/designopt/evaluation.hpp"
#include "morphopt/env/locomotion.hpp"
#include "morphopt/nn/checkpoint.hpp"

namespace morphopt::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config;
  std::string out_dir;
  int workers = 1;
  std::optional<uint64_t> seed;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("config", c.config, "experiment configuration (INI)")->required();
  app->add_option("--workers", c.workers, "worker threads; results do not depend on it")
      ->check(CLI::Range(1, 256));
  app->add_option("--out", c.out_dir, std::string("output directory (overrides ") + kOutputDirEnv + " and the config)");
  app->add_option("--seed", c.seed, "override the global seed");
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path prepare_out(const ExperimentConfig& cfg, const Common& c) {
  const fs::path dir = resolve_output_dir(cfg, c.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  std::ofstream f(path, std::ios::out | std::ios::binary | mode);
  if (!f) throw ConfigError("cannot write " + path.string());
  return f;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  auto f = open_out(path);
  f << j.dump(2) << '\n';
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string design_string(const morphology::DesignParams& d) {
  std::string s;
  for (double v : d.to_vector()) s += (s.empty() ? "" : " ") + fmt(v);
  return s;
}

// Loads a policy checkpoint and checks that it fits the configured robot.
nn::Checkpoint load_policy(const std::string& path, const ExperimentConfig& cfg) {
  nn::Checkpoint ckpt = nn::load_checkpoint(path);
  const nn::PolicySpec want = cfg.policy_spec();
  if (ckpt.spec.obs_dim != want.obs_dim || ckpt.spec.act_dim != want.act_dim) {
    throw CheckpointError("checkpoint expects " + std::to_string(ckpt.spec.obs_dim) + " observations and " +
                          std::to_string(ckpt.spec.act_dim) + " actions; the config produces " +
                          std::to_string(want.obs_dim) + " and " + std::to_string(want.act_dim));
  }
  if (!(ckpt.spec == want)) throw CheckpointError("checkpoint network shape does not match [policy]");
  return ckpt;
}

morphology::DesignParams parse_design(const std::vector<double>& v, const ExperimentConfig& cfg) {
  if (v.size() != cfg.env.space.dim()) {
    throw ConfigError("--design needs " + std::to_string(cfg.env.space.dim()) + " values for this design space");
  }
  const auto d = morphology::DesignParams::from_vector(v);
  if (!morphology::within_bounds(d, cfg.env.space)) throw ConfigError("--design lies outside the design space");
  return d;
}

// Timing fields are opt-in because they make reruns differ.
void stamp(nlohmann::json& rec, const ExperimentConfig& cfg, const Clock& clock) {
  if (cfg.log_wall_time) rec["wall_time_s"] = clock.seconds();
}

int cmd_meta_train(const Common& c, const std::string& resume, std::optional<int> updates, std::ostream& out,
                   std::ostream& err) {
  ExperimentConfig cfg = load(c);
  if (updates) cfg.meta.updates = *updates;
  cfg.validate();
  const fs::path dir = prepare_out(cfg, c);
  const auto settings = cfg.meta_settings();
  maml::MetaState state;
  if (resume.empty()) {
    state = maml::initial_state(settings);
  } else {
    state = maml::from_checkpoint(settings, nn::load_checkpoint(resume));
    err << "resuming after update " << state.update << '\n';
  }
  auto log = open_out(dir / "meta_train.jsonl", resume.empty() ? std::ios::trunc : std::ios::app);
  if (resume.empty()) {
    log << nlohmann::json{{"schema", "morphopt.meta_train_log/1"}, {"config", cfg.to_json()}}.dump() << '\n';
  }
  fs::create_directories(dir / "checkpoints");
  WorkerPool pool(c.workers);
  const Clock clock;
  maml::MetaCallbacks cb;
  cb.log = [&](const nlohmann::json& rec) {
    nlohmann::json r = rec;
    stamp(r, cfg, clock);
    log << r.dump() << '\n';
    log.flush();
    err << "update " << rec.at("update").get<int>() + 1 << '/' << cfg.meta.updates
        << " pre " << fmt(rec.at("pre_adaptation_reward").get<double>()) << " post "
        << fmt(rec.at("post_adaptation_reward").get<double>()) << " (" << fmt(clock.seconds()) << " s)\n";
  };
  cb.checkpoint = [&](const nn::Checkpoint& ckpt, int u) {
    char name[32];
    std::snprintf(name, sizeof(name), "meta_%06d.ckpt", u);
    nn::save_checkpoint(dir / "checkpoints" / name, ckpt);
  };
  state = maml::meta_train(settings, std::move(state), &pool, cb);
  const fs::path final_path = dir / "meta_policy.ckpt";
  nn::save_checkpoint(final_path, maml::to_checkpoint(settings, state));
  out << "meta-policy after " << state.update << " updates: " << final_path.string() << '\n';
  return kOk;
}

int cmd_train(const Common& c, const std::vector<double>& design_v, bool naive, std::optional<int> updates,
              const std::string& name, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load(c);
  if (updates) cfg.train_updates = *updates;
  cfg.validate();
  if (naive == !design_v.empty()) throw ConfigError("train needs exactly one of --design or --naive");
  std::optional<morphology::DesignParams> design;
  if (!naive) design = parse_design(design_v, cfg);
  const fs::path dir = prepare_out(cfg, c);
  const std::string tag = !name.empty() ? name : (naive ? "naive" : "specialized");
  auto log = open_out(dir / ("train_" + tag + ".jsonl"));
  log << nlohmann::json{{"schema", "morphopt.train_log/1"},
                        {"config", cfg.to_json()},
                        {"design", design ? nlohmann::json(design->to_vector()) : nlohmann::json(nullptr)}}
             .dump()
      << '\n';
  WorkerPool pool(c.workers);
  const Clock clock;
  const auto result = ppo::train_fixed_design(design, cfg.train_settings(), &pool, [&](const nlohmann::json& rec) {
    nlohmann::json r = rec;
    stamp(r, cfg, clock);
    log << r.dump() << '\n';
    err << "update " << rec.at("update").get<int>() + 1 << '/' << cfg.train_updates << " reward "
        << fmt(rec.at("mean_reward").get<double>()) << " (" << fmt(clock.seconds()) << " s)\n";
  });
  nn::Checkpoint ckpt;
  ckpt.spec = result.spec;
  ckpt.params = result.params;
  ckpt.manifest = {{"kind", naive ? "multi-task-policy" : "specialized-policy"},
                   {"design", design ? nlohmann::json(design->to_vector()) : nlohmann::json(nullptr)},
                   {"updates", cfg.train_updates},
                   {"aborted_updates", result.aborted_updates},
                   {"seed", cfg.seed}};
  const fs::path path = dir / ("policy_" + tag + ".ckpt");
  nn::save_checkpoint(path, ckpt);
  out << tag << " policy after " << cfg.train_updates << " updates: " << path.string() << '\n';
  return kOk;
}

int cmd_optimize(const Common& c, const std::string& policy, std::optional<std::string> metric,
                 std::optional<std::string> terrain_name, std::optional<int> generations,
                 std::optional<int> population, std::ostream& out, std::ostream& err) {
  ExperimentConfig cfg = load(c);
  if (metric) cfg.metric = designopt::metric_from_string(*metric);
  if (generations) cfg.generations = *generations;
  if (population) cfg.population = *population;
  const std::string terrain = terrain_name.value_or(cfg.terrains.front());
  cfg.validate();
  const auto ckpt = load_policy(policy, cfg);
  const fs::path dir = prepare_out(cfg, c);

  designopt::OptimizeSettings s;
  s.fitness = cfg.fitness_settings(terrain);
  s.generations = cfg.generations;
  s.population = cfg.population;
  s.sigma_fraction = cfg.sigma_fraction;
  s.penalty_weight = cfg.penalty_weight;
  s.common_random_numbers = cfg.common_random_numbers;
  s.seed = cfg.seed;
  const nn::PolicyLayout layout(ckpt.spec);
  WorkerPool pool(c.workers);
  const Clock clock;
  err << "optimizing " << designopt::to_string(cfg.metric) << " on " << terrain << ": " << cfg.generations + 1
      << " populations of " << cfg.population << '\n';
  const auto report = designopt::optimize_design(layout, ckpt.params, cfg.factory(),
                                                 morphology::nominal_design(cfg.env.space, cfg.env.nominal), s, &pool);
  err << "done in " << fmt(clock.seconds()) << " s\n";

  auto j = designopt::report_to_json(report);
  j["terrain"] = terrain;
  j["seed"] = cfg.seed;
  j["config"] = cfg.to_json();
  const std::string stem = "optimize_" + designopt::to_string(cfg.metric) + "_" + terrain;
  write_json(dir / (stem + ".json"), j);
  auto csv = open_out(dir / (stem + "_generations.csv"));
  designopt::write_generation_csv(csv, report);

  out << "best design " << design_string(report.best_design) << " cost " << fmt(report.best_final.cost)
      << " nominal cost " << fmt(report.nominal_final.cost) << " improvement "
      << (report.improvement_percent ? fmt(*report.improvement_percent) + "%" : std::string("undefined")) << '\n';
  return kOk;
}

int cmd_cost_map(const Common& c, const std::string& policy, std::optional<int> grid,
                 std::optional<std::string> metric, std::optional<std::string> terrain_name, std::ostream& out,
                 std::ostream& err) {
  ExperimentConfig cfg = load(c);
  if (grid) cfg.grid.resolution = *grid;
  if (metric) cfg.metric = designopt::metric_from_string(*metric);
  const std::string terrain = terrain_name.value_or(cfg.terrains.front());
  cfg.validate();
  const auto ckpt = load_policy(policy, cfg);
  const fs::path dir = prepare_out(cfg, c);
  const nn::PolicyLayout layout(ckpt.spec);
  WorkerPool pool(c.workers);
  designopt::DesignEvaluator evaluator(layout, ckpt.params, cfg.factory(), cfg.fitness_settings(terrain), cfg.seed,
                                       cfg.common_random_numbers, &pool);
  const auto nominal = morphology::nominal_design(cfg.env.space, cfg.env.nominal);
  const Clock clock;
  err << "cost map " << cfg.grid.resolution << 'x' << cfg.grid.resolution << " for "
      << designopt::to_string(cfg.metric) << " on " << terrain << '\n';
  const auto map = designopt::cost_map(cfg.grid, [&](const std::vector<morphology::DesignParams>& cells) {
    std::vector<morphology::DesignParams> full = cells;
    for (auto& d : full) {
      d.hip_gear = nominal.hip_gear;
      d.knee_gear = nominal.knee_gear;
    }
    std::vector<double> v;
    for (const auto& r : evaluator.evaluate(full, 0)) v.push_back(r.flagged ? std::nan("") : r.cost);
    return v;
  });
  err << "done in " << fmt(clock.seconds()) << " s\n";
  const std::string stem = "cost_map_" + designopt::to_string(cfg.metric) + "_" + terrain;
  auto csv = open_out(dir / (stem + ".csv"));
  designopt::write_cost_map_csv(csv, map);
  int failed = 0;
  for (int i = 0; i < map.cost.rows(); ++i) {
    for (int j = 0; j < map.cost.cols(); ++j) failed += map.failed(i, j) ? 1 : 0;
  }
  if (map.argmin_row < 0) {
    out << "argmin none: all " << failed << " cells failed\n";
  } else {
    out << "argmin cell (" << map.argmin_row << ", " << map.argmin_col << ") thigh_scale "
        << fmt(map.thigh_centers[map.argmin_row]) << " shank_scale " << fmt(map.shank_centers[map.argmin_col])
        << " cost " << fmt(map.cost(map.argmin_row, map.argmin_col)) << " failed cells " << failed << '\n';
  }
  return kOk;
}

void write_trajectory(const fs::path& path, const ExperimentConfig& cfg, const env::EpisodeSpec& spec,
                      const nn::PolicyLayout& layout, const nn::Vector<float>& params) {
  env::LocomotionEnv env(cfg.env);
  auto f = open_out(path);
  f << "step,x,z,pitch,vx,vz,pitch_rate,q0,q1,q2,q3,qd0,qd1,qd2,qd3,tau0,tau1,tau2,tau3,reward\n";
  const auto& obs0 = env.reset(spec);
  std::vector<double> obs = obs0;
  for (int t = 0;; ++t) {
    nn::Matrix<float> o(1, static_cast<Eigen::Index>(obs.size()));
    for (std::size_t k = 0; k < obs.size(); ++k) o(0, static_cast<Eigen::Index>(k)) = static_cast<float>(obs[k]);
    const auto fwd = nn::forward<float>(layout, params, o);
    std::vector<double> a(static_cast<std::size_t>(fwd.mean.cols()));
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = fwd.mean(0, static_cast<Eigen::Index>(k));
    const auto r = env.step(a);
    if (r.diverged) break;
    const auto& s = env.state();
    char buf[64];
    f << t;
    const auto put = [&](double v) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      f << buf;
    };
    for (double v : {s.x, s.z, s.pitch, s.vx, s.vz, s.pitch_rate}) put(v);
    for (double v : s.joint_angle) put(v);
    for (double v : s.joint_velocity) put(v);
    for (double v : s.torque) put(v);
    put(r.reward);
    f << '\n';
    if (r.done) break;
    obs = env.observation();
  }
}

int cmd_eval(const Common& c, const std::string& policy, const std::vector<double>& design_v,
             std::optional<int> adapt, std::optional<int> episodes, std::optional<std::string> terrain_name,
             const std::string& trajectory, const std::string& name, std::ostream& out, std::ostream&) {
  ExperimentConfig cfg = load(c);
  const std::string terrain = terrain_name.value_or(cfg.terrains.front());
  cfg.validate();
  const auto design = design_v.empty() ? morphology::nominal_design(cfg.env.space, cfg.env.nominal)
                                       : parse_design(design_v, cfg);
  const int u = adapt.value_or(cfg.adapt_steps);
  const int n = episodes.value_or(cfg.eval_episodes);
  if (u < 0 || n < 0) throw ConfigError("--adapt and --episodes must be non-negative");
  const auto ckpt = load_policy(policy, cfg);
  const fs::path dir = prepare_out(cfg, c);
  const nn::PolicyLayout layout(ckpt.spec);
  WorkerPool pool(c.workers);
  const auto fset = cfg.fitness_settings(terrain);
  const auto res = designopt::adapt_and_evaluate(design, layout, ckpt.params, cfg.factory(), fset, u, n, cfg.seed, &pool);

  nlohmann::json j = designopt::eval_metrics_json(res.eval);
  j["schema"] = "morphopt.eval/1";
  j["design"] = design.to_vector();
  j["adapt_steps"] = u;
  j["terrain"] = terrain;
  j["seed"] = cfg.seed;
  j["deterministic"] = fset.deterministic_eval;
  j["adaptation_degraded"] = res.adaptation.degraded;
  if (res.adaptation.degraded) j["adaptation_diagnostic"] = res.adaptation.diagnostic;
  const std::string stem = name.empty() ? "eval" : name;
  write_json(dir / (stem + ".json"), j);
  if (!trajectory.empty()) {
    env::EpisodeDistribution d;
    d.space = fset.space;
    d.fixed_design = design;
    d.terrains = fset.terrains;
    d.max_difficulty = fset.max_difficulty;
    d.commands = fset.commands;
    d.seed = derive_seed(cfg.seed, {streams::kEval, streams::kEpisode});
    write_trajectory(trajectory, cfg, d(0, 0), layout, res.adaptation.params);
  }
  if (res.eval.terms.empty()) {
    out << "no samples (episodes = 0)\n";
  } else {
    out << "design " << design_string(design) << " adapt " << u << " episodes " << res.eval.episodes
        << " mean return " << fmt(res.eval.mean_return()) << " fall rate " << fmt(res.eval.fall_rate()) << '\n';
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Morphology optimization with a design-conditioned meta-policy", "morphopt"};
  app.require_subcommand(1);
  Common common;

  auto* meta = app.add_subcommand("meta-train", "meta-train the design-conditioned policy");
  add_common(meta, common);
  std::string resume;
  std::optional<int> meta_updates;
  meta->add_option("--resume", resume, "continue from a meta-training checkpoint")->check(CLI::ExistingFile);
  meta->add_option("--updates", meta_updates, "number of policy updates N")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "plain PPO on one design or on sampled designs");
  add_common(train, common);
  std::vector<double> train_design;
  bool naive = false;
  std::optional<int> train_updates;
  std::string train_name;
  train->add_option("--design", train_design, "thigh shank [hip_gear knee_gear]");
  train->add_flag("--naive", naive, "resample the design every episode (multi-task baseline)");
  train->add_option("--updates", train_updates, "number of PPO updates")->check(CLI::NonNegativeNumber);
  train->add_option("--name", train_name, "output file tag");

  auto* opt = app.add_subcommand("optimize", "CMA-ES design optimization with per-candidate adaptation");
  add_common(opt, common);
  std::string opt_policy;
  std::optional<std::string> opt_metric, opt_terrain;
  std::optional<int> opt_generations, opt_population;
  opt->add_option("--policy", opt_policy, "meta-policy checkpoint")->required()->check(CLI::ExistingFile);
  opt->add_option("--metric", opt_metric, "velocity | torque | power | mcot");
  opt->add_option("--terrain", opt_terrain, "terrain preset, e.g. flat or hills_mid");
  opt->add_option("--generations", opt_generations, "CMA-ES updates after the initial population");
  opt->add_option("--population", opt_population, "CMA-ES population size");

  auto* map = app.add_subcommand("cost-map", "evaluate the cost over a thigh x shank grid");
  add_common(map, common);
  std::string map_policy;
  std::optional<int> map_grid;
  std::optional<std::string> map_metric, map_terrain;
  map->add_option("--policy", map_policy, "meta-policy checkpoint")->required()->check(CLI::ExistingFile);
  map->add_option("--grid", map_grid, "cells per axis");
  map->add_option("--metric", map_metric, "velocity | torque | power | mcot");
  map->add_option("--terrain", map_terrain, "terrain preset");

  auto* ev = app.add_subcommand("eval", "adapt a policy to one design and evaluate it");
  add_common(ev, common);
  std::string ev_policy, ev_traj, ev_name;
  std::vector<double> ev_design;
  std::optional<int> ev_adapt, ev_episodes;
  std::optional<std::string> ev_terrain;
  ev->add_option("--policy", ev_policy, "policy checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--design", ev_design, "thigh shank [hip_gear knee_gear]; default nominal");
  ev->add_option("--adapt", ev_adapt, "inner adaptation steps U (0 = raw policy)");
  ev->add_option("--episodes", ev_episodes, "whole evaluation episodes");
  ev->add_option("--terrain", ev_terrain, "terrain preset");
  ev->add_option("--trajectory", ev_traj, "write the state trace of one episode as CSV");
  ev->add_option("--name", ev_name, "output file tag (default eval)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (meta->parsed()) return cmd_meta_train(common, resume, meta_updates, out, err);
    if (train->parsed()) return cmd_train(common, train_design, naive, train_updates, train_name, out, err);
    if (opt->parsed()) {
      return cmd_optimize(common, opt_policy, opt_metric, opt_terrain, opt_generations, opt_population, out, err);
    }
    if (map->parsed()) return cmd_cost_map(common, map_policy, map_grid, map_metric, map_terrain, out, err);
    if (ev->parsed()) {
      return cmd_eval(common, ev_policy, ev_design, ev_adapt, ev_episodes, ev_terrain, ev_traj, ev_name, out, err);
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << '\n';
    return kCheckpointError;
  } catch (const SimulationDiverged& e) {
    err << "simulation diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kRuntimeError;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace morphopt::cli
