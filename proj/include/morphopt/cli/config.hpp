#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphopt/designopt/optimize.hpp"
#include "morphopt/maml/maml.hpp"
#include "morphopt/ppo/ppo.hpp"

namespace morphopt::cli {

inline constexpr char kOutputDirEnv[] = "MORPHOPT_OUTPUT_DIR";

// Everything an experiment needs. Defaults form the desk-scale profile.
struct ExperimentConfig {
  std::string profile = "desk";
  uint64_t seed = 0;
  std::filesystem::path output_dir = "out";
  bool log_wall_time = false;  // adds wall-clock fields to logs, breaking byte identity

  env::EnvConfig env;
  std::vector<std::string> terrains{"flat"};  // preset names; kinds used for training
  double max_difficulty = 0.0;
  double schedule_fraction = 0.6;

  std::vector<int> hidden{128, 128};
  double init_log_std = -0.7;

  ppo::PpoHyper ppo;
  std::size_t train_envs = 64;
  int steps_per_env = 100;
  int train_updates = 300;

  maml::MetaHyper meta;
  std::size_t meta_envs = 64;
  int checkpoint_every = 25;

  designopt::CostMetric metric = designopt::CostMetric::velocity_tracking;
  int generations = 10;
  int population = 12;
  double sigma_fraction = 0.15;
  double penalty_weight = 1e3;
  int adapt_steps = 5;
  int adapt_length = 50;
  int eval_transitions = 250;
  std::size_t eval_envs = 32;
  bool common_random_numbers = true;
  bool deterministic_eval = true;

  designopt::GridSpec grid;

  int eval_episodes = 64;

  // Runs every module-level validation; throws ConfigError.
  void validate() const;

  nn::PolicySpec policy_spec() const;
  env::EnvFactory factory() const;
  std::vector<terrain::TerrainParams> terrain_params() const;
  maml::MetaTrainSettings meta_settings() const;
  ppo::TrainSettings train_settings() const;
  // Fitness protocol on the given terrain preset.
  designopt::FitnessSettings fitness_settings(const std::string& terrain_preset) const;
  nlohmann::json to_json() const;
};

// INI file with [sections] and key = value lines. Unknown sections or keys and
// malformed values throw ConfigError naming the offending entry.
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<string>");

// Flag > environment variable > config file.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config, const std::string& flag);

}  // namespace morphopt::cli
