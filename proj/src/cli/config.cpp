#include "morphopt/cli/config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/lexical_cast.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "morphopt/common/errors.hpp"
#include "morphopt/env/locomotion.hpp"

namespace morphopt::cli {

namespace pt = boost::property_tree;

namespace {

// Reads typed values and remembers every key it was asked about, so leftover
// entries can be reported as unknown.
class Reader {
 public:
  Reader(const pt::ptree& tree, std::string origin) : tree_(tree), origin_(std::move(origin)) {}

  template <class T>
  void get(const std::string& section, const std::string& key, T& out) {
    known_[section].insert(key);
    const auto sec = tree_.get_child_optional(pt::ptree::path_type(section, '\0'));
    if (!sec) return;
    const auto node = sec->get_child_optional(pt::ptree::path_type(key, '\0'));
    if (!node) return;
    const std::string raw = boost::trim_copy(node->data());
    try {
      out = convert<T>(raw);
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": [" + section + "] " + key + " = '" + raw + "' is not a valid value");
    }
  }

  void reject_unknown() const {
    for (const auto& [section, body] : tree_) {
      const auto it = known_.find(section);
      if (it == known_.end()) throw ConfigError(origin_ + ": unknown section [" + section + "]");
      if (body.data().size() > 0 && body.empty()) {
        throw ConfigError(origin_ + ": key '" + section + "' outside of any section");
      }
      for (const auto& [key, value] : body) {
        if (!it->second.count(key)) throw ConfigError(origin_ + ": unknown key '" + key + "' in [" + section + "]");
      }
    }
  }

 private:
  template <class T>
  static T convert(const std::string& raw) {
    if constexpr (std::is_same_v<T, bool>) {
      const auto v = boost::to_lower_copy(raw);
      if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
      if (v == "false" || v == "0" || v == "no" || v == "off") return false;
      throw std::invalid_argument("not a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
      std::vector<std::string> parts;
      boost::split(parts, raw, boost::is_any_of(","));
      for (auto& p : parts) boost::trim(p);
      if (parts.size() == 1 && parts[0].empty()) parts.clear();
      return parts;
    } else if constexpr (std::is_same_v<T, std::vector<int>>) {
      std::vector<int> v;
      for (const auto& p : convert<std::vector<std::string>>(raw)) v.push_back(boost::lexical_cast<int>(p));
      return v;
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> v;
      for (const auto& p : convert<std::vector<std::string>>(raw)) v.push_back(boost::lexical_cast<double>(p));
      return v;
    } else if constexpr (std::is_same_v<T, designopt::CostMetric>) {
      return designopt::metric_from_string(raw);
    } else if constexpr (std::is_same_v<T, std::filesystem::path>) {
      if (raw.empty()) throw std::invalid_argument("empty path");
      return std::filesystem::path(raw);
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!raw.empty() && raw[0] == '-') throw std::invalid_argument("negative");
      return boost::lexical_cast<T>(raw);
    } else {
      return boost::lexical_cast<T>(raw);
    }
  }

  const pt::ptree& tree_;
  std::string origin_;
  std::map<std::string, std::set<std::string>> known_;
};

void read_all(Reader& r, ExperimentConfig& c) {
  r.get("experiment", "profile", c.profile);
  r.get("experiment", "seed", c.seed);
  r.get("experiment", "output_dir", c.output_dir);
  r.get("experiment", "log_wall_time", c.log_wall_time);

  std::string space = c.env.space.has_gears() ? "gears" : "links";
  r.get("design", "space", space);
  if (space == "links") {
    c.env.space = morphology::DesignSpace::links_only();
  } else if (space == "gears") {
    c.env.space = morphology::DesignSpace::with_gears();
  } else {
    throw ConfigError("[design] space must be 'links' or 'gears', got '" + space + "'");
  }
  auto& n = c.env.nominal;
  r.get("design", "thigh_length", n.thigh_length);
  r.get("design", "shank_length", n.shank_length);
  r.get("design", "thigh_mass", n.thigh_mass);
  r.get("design", "shank_mass", n.shank_mass);
  r.get("design", "body_mass", n.body_mass);
  r.get("design", "body_length", n.body_length);
  r.get("design", "body_height", n.body_height);
  r.get("design", "hip_gear", n.hip_gear);
  r.get("design", "knee_gear", n.knee_gear);
  r.get("design", "motor_stall_torque", n.motor_stall_torque);
  r.get("design", "motor_no_load_speed", n.motor_no_load_speed);

  auto& e = c.env;
  r.get("env", "dt", e.dt);
  r.get("env", "substeps", e.substeps);
  r.get("env", "max_steps", e.max_steps);
  r.get("env", "kp", e.kp);
  r.get("env", "kd", e.kd);
  r.get("env", "joint_action_scale", e.joint_action_scale);
  r.get("env", "freq_action_scale", e.freq_action_scale);
  r.get("env", "base_frequency", e.base_frequency);
  r.get("env", "init_joint_noise", e.init_joint_noise);
  r.get("env", "fall_height", e.fall_height);
  r.get("env", "fall_pitch", e.fall_pitch);
  r.get("env", "nominal_knee", e.nominal_knee);
  r.get("env", "scan_offsets", e.scan_offsets);
  r.get("env", "command_lower", e.command_range.lower);
  r.get("env", "command_upper", e.command_range.upper);
  r.get("env", "normal_stiffness", e.contact.normal_stiffness);
  r.get("env", "normal_damping", e.contact.normal_damping);
  r.get("env", "tangential_damping", e.contact.tangential_damping);

  r.get("terrain", "presets", c.terrains);
  r.get("terrain", "max_difficulty", c.max_difficulty);
  r.get("terrain", "schedule_fraction", c.schedule_fraction);

  r.get("policy", "hidden", c.hidden);
  r.get("policy", "init_log_std", c.init_log_std);

  auto& p = c.ppo;
  r.get("ppo", "gamma", p.gamma);
  r.get("ppo", "lambda", p.lambda);
  r.get("ppo", "clip", p.clip);
  r.get("ppo", "minibatches", p.minibatches);
  r.get("ppo", "epochs", p.epochs);
  r.get("ppo", "value_weight", p.value_weight);
  r.get("ppo", "entropy", p.entropy);
  r.get("ppo", "stepsize", p.stepsize);
  r.get("ppo", "envs", c.train_envs);
  r.get("ppo", "steps_per_env", c.steps_per_env);
  r.get("ppo", "updates", c.train_updates);

  auto& m = c.meta;
  r.get("meta", "updates", m.updates);
  r.get("meta", "meta_batch", m.meta_batch);
  r.get("meta", "rollout_length", m.rollout_length);
  r.get("meta", "alpha", m.alpha);
  r.get("meta", "beta", m.beta);
  r.get("meta", "inner_steps", m.inner_steps);
  r.get("meta", "envs", c.meta_envs);
  r.get("meta", "checkpoint_every", c.checkpoint_every);

  r.get("optimize", "metric", c.metric);
  r.get("optimize", "generations", c.generations);
  r.get("optimize", "population", c.population);
  r.get("optimize", "sigma_fraction", c.sigma_fraction);
  r.get("optimize", "penalty_weight", c.penalty_weight);
  r.get("optimize", "adapt_steps", c.adapt_steps);
  r.get("optimize", "adapt_length", c.adapt_length);
  r.get("optimize", "eval_transitions", c.eval_transitions);
  r.get("optimize", "eval_envs", c.eval_envs);
  r.get("optimize", "common_random_numbers", c.common_random_numbers);
  r.get("optimize", "deterministic_eval", c.deterministic_eval);

  r.get("cost_map", "resolution", c.grid.resolution);
  r.get("cost_map", "thigh_lower", c.grid.thigh.lower);
  r.get("cost_map", "thigh_upper", c.grid.thigh.upper);
  r.get("cost_map", "shank_lower", c.grid.shank.lower);
  r.get("cost_map", "shank_upper", c.grid.shank.upper);

  r.get("eval", "episodes", c.eval_episodes);
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  if (terrains.empty()) throw ConfigError("[terrain] presets must name at least one preset");
  for (const auto& name : terrains) terrain::terrain_preset(name).validate();
  if (!(max_difficulty >= 0.0 && max_difficulty <= 1.0)) throw ConfigError("[terrain] max_difficulty must lie in [0, 1]");
  policy_spec().validate();
  if (train_envs < 1 || steps_per_env < 1 || train_updates < 0) throw ConfigError("[ppo] envs/steps/updates");
  meta_settings().validate();
  designopt::OptimizeSettings o;
  o.fitness = fitness_settings(terrains.front());
  o.generations = generations;
  o.population = population;
  o.sigma_fraction = sigma_fraction;
  o.penalty_weight = penalty_weight;
  o.validate();
  grid.validate();
  const auto& b = env.space.bounds;
  if (grid.thigh.lower < b[0].lower || grid.thigh.upper > b[0].upper || grid.shank.lower < b[1].lower ||
      grid.shank.upper > b[1].upper) {
    throw ConfigError("[cost_map] grid must lie inside the design bounds");
  }
  if (eval_episodes < 0) throw ConfigError("[eval] episodes must be non-negative");
}

nn::PolicySpec ExperimentConfig::policy_spec() const { return ppo::policy_spec_for(env, hidden, init_log_std); }

env::EnvFactory ExperimentConfig::factory() const {
  const env::EnvConfig cfg = env;
  return [cfg] { return std::make_unique<env::LocomotionEnv>(cfg); };
}

std::vector<terrain::TerrainParams> ExperimentConfig::terrain_params() const {
  std::vector<terrain::TerrainParams> out;
  for (const auto& name : terrains) out.push_back(terrain::terrain_preset(name));
  return out;
}

maml::MetaTrainSettings ExperimentConfig::meta_settings() const {
  maml::MetaTrainSettings s;
  s.factory = factory();
  s.space = env.space;
  s.terrains = terrain_params();
  s.max_difficulty = max_difficulty;
  s.schedule_fraction = schedule_fraction;
  s.commands = env.command_range;
  s.policy = policy_spec();
  s.ppo = ppo;
  s.meta = meta;
  s.envs = meta_envs;
  s.checkpoint_every = checkpoint_every;
  s.seed = seed;
  return s;
}

ppo::TrainSettings ExperimentConfig::train_settings() const {
  ppo::TrainSettings s;
  s.env = env;
  s.hyper = ppo;
  s.hidden = hidden;
  s.init_log_std = init_log_std;
  s.envs = train_envs;
  s.steps_per_env = steps_per_env;
  s.updates = train_updates;
  s.terrains = terrain_params();
  s.max_difficulty = max_difficulty;
  s.seed = seed;
  return s;
}

designopt::FitnessSettings ExperimentConfig::fitness_settings(const std::string& terrain_preset) const {
  designopt::FitnessSettings f;
  f.metric = metric;
  f.adapt_steps = adapt_steps;
  f.adapt_length = adapt_length;
  f.eval_transitions = eval_transitions;
  f.envs = eval_envs;
  f.alpha = meta.alpha;
  f.ppo = ppo;
  f.space = env.space;
  const auto t = terrain::terrain_preset(terrain_preset);
  f.terrains = {t};
  f.max_difficulty = t.difficulty;
  f.commands = env.command_range;
  f.deterministic_eval = deterministic_eval;
  return f;
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : env.space.bounds) bounds.push_back({b.lower, b.upper});
  return {{"profile", profile},
          {"seed", seed},
          {"design_space", bounds},
          {"terrains", terrains},
          {"max_difficulty", max_difficulty},
          {"hidden", hidden},
          {"metric", designopt::to_string(metric)},
          {"generations", generations},
          {"population", population},
          {"adapt_steps", adapt_steps},
          {"adapt_length", adapt_length},
          {"eval_transitions", eval_transitions},
          {"eval_envs", eval_envs},
          {"common_random_numbers", common_random_numbers}};
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(origin + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  ExperimentConfig c;
  Reader r(tree, origin);
  read_all(r, c);
  r.reject_unknown();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputDirEnv); env != nullptr && *env != '\0') return env;
  return config.output_dir;
}

}  // namespace morphopt::cli
