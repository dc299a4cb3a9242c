#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphopt/env/locomotion.hpp"
#include "morphopt/ppo/rollout.hpp"

namespace morphopt::ppo {

struct PpoHyper {
  double gamma = 0.993;
  double lambda = 0.95;
  double clip = 0.2;
  int minibatches = 10;
  int epochs = 4;
  double value_weight = 0.5;
  double entropy = 0.0;
  double stepsize = 5e-4;

  void validate() const;
  nn::LossWeights loss_weights() const;
};

struct Gae {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Single trajectory segment. dones[t] cuts the recursion after step t;
// bootstrap is v_T for the step after the last one.
Gae compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const uint8_t> dones,
                double bootstrap, double gamma, double lambda);

// Runs GAE per env of a rollout. Time-limit cutoffs add gamma * V(terminal) to
// the reward of the cut step; falls and divergences bootstrap zero.
nn::Batch<float> make_batch(const Rollout& rollout, double gamma, double lambda);

// Zero mean, unit variance (population); a constant vector maps to 0.
Eigen::VectorXd normalized(const Eigen::VectorXd& advantages);
// In-place float version; statistics are taken in double.
void normalize_advantages(nn::Vector<float>& advantages);

// Per-task data for the shared update. The loss of a task is evaluated at
// params + offset; an empty offset means zero.
struct TaskBatch {
  nn::Batch<float> batch;
  nn::Vector<float> offset;
};

struct UpdateStats {
  nn::LossStats loss;  // means over all minibatch steps
  double min_minibatch_ratio = 1.0;
  double max_minibatch_ratio = 1.0;
  int adam_steps = 0;
  bool aborted = false;
  std::string diagnostic;
};

// epochs x minibatches Adam steps on the summed clipped-surrogate loss of all
// tasks. Advantages are normalized per task, each task is shuffled into
// `minibatches` chunks per epoch, log-std is clamped after each step. A
// non-finite loss or gradient restores params and optimizer state.
UpdateStats clipped_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, std::vector<TaskBatch> tasks,
                           const PpoHyper& hyper, double stepsize, nn::AdamState<float>& adam, Rng& shuffle);
// Same loop with an explicit loss composition (supervised meta-learning).
UpdateStats clipped_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, std::vector<TaskBatch> tasks,
                           const PpoHyper& hyper, const nn::LossWeights& weights, double stepsize,
                           nn::AdamState<float>& adam, Rng& shuffle);

// The single-task case of clipped_update with the hyperparameter stepsize.
UpdateStats ppo_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, const Rollout& rollout,
                       const PpoHyper& hyper, nn::AdamState<float>& adam, Rng& shuffle);

// One JSONL training-log record.
nlohmann::json update_record(int update, const Rollout& rollout, const UpdateStats& stats);

// Policy network shape for an environment configuration.
nn::PolicySpec policy_spec_for(const env::EnvConfig& config, std::vector<int> hidden = {128, 128},
                               double init_log_std = -0.7);

struct TrainSettings {
  env::EnvConfig env;
  PpoHyper hyper;
  std::vector<int> hidden{128, 128};
  double init_log_std = -0.7;
  std::size_t envs = 64;
  int steps_per_env = 100;
  int updates = 300;
  std::vector<terrain::TerrainParams> terrains{terrain::TerrainParams{}};
  double max_difficulty = 0.0;
  uint64_t seed = 0;
};

struct TrainResult {
  nn::PolicySpec spec;
  nn::Vector<float> params;
  std::vector<nlohmann::json> log;
  int aborted_updates = 0;
};

using LogSink = std::function<void(const nlohmann::json&)>;

// Plain PPO. A fixed design gives the specialized policy; nullopt samples a
// fresh design for every episode (naive multi-task baseline).
TrainResult train_fixed_design(const std::optional<morphology::DesignParams>& design, const TrainSettings& settings,
                               WorkerPool* workers = nullptr, const LogSink& sink = {});

}  // namespace morphopt::ppo
