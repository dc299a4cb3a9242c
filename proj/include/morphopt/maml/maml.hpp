#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphopt/nn/checkpoint.hpp"
#include "morphopt/ppo/ppo.hpp"

namespace morphopt::maml {

struct MetaHyper {
  int updates = 300;      // policy updates N
  int meta_batch = 5;     // designs per update M
  int rollout_length = 50;  // K, per env, for both the inner and the post-adaptation batch
  double alpha = 5e-4;    // inner plain-gradient stepsize
  double beta = 5e-4;     // outer Adam stepsize
  int inner_steps = 1;

  void validate() const;
};

// One plain gradient-descent step on a full batch: params - alpha * grad.
// Returns nullopt when the loss or gradient is not finite.
std::optional<nn::Vector<float>> gradient_step(const nn::PolicyLayout& layout, const nn::Vector<float>& params,
                                               const nn::Batch<float>& batch, const nn::LossWeights& weights,
                                               double alpha);

struct Adaptation {
  nn::Vector<float> params;
  std::vector<ppo::Rollout> rollouts;  // one per gradient step
  bool degraded = false;
  std::string diagnostic;
};

// U rounds of: collect K steps per env, normalize advantages, one full-batch
// gradient step on the clipped PPO loss. Works on a copy of `params`.
Adaptation inner_adapt(const nn::PolicyLayout& layout, const nn::Vector<float>& params, ppo::Collector& collector,
                       int rollout_length, double alpha, int steps, const ppo::PpoHyper& hyper);

struct TaskData {
  nn::Vector<float> adapted;
  ppo::Rollout post;  // D', collected with `adapted`
};

// First-order meta step: the summed PPO loss of every task is differentiated
// at that task's adapted parameters and the sum drives Adam on the
// meta-parameters with stepsize beta. The offsets adapted - params are held
// fixed while the meta-parameters move.
ppo::UpdateStats meta_update(const nn::PolicyLayout& layout, nn::Vector<float>& params,
                             const std::vector<TaskData>& tasks, const ppo::PpoHyper& hyper, double beta,
                             nn::AdamState<float>& adam, Rng& shuffle);

struct MetaTrainSettings {
  env::EnvFactory factory;
  morphology::DesignSpace space = morphology::DesignSpace::links_only();
  std::vector<terrain::TerrainParams> terrains{terrain::TerrainParams{}};
  double max_difficulty = 0.0;
  double schedule_fraction = 0.6;  // difficulty ramps 0 -> max over this share of updates
  env::CommandRange commands;
  nn::PolicySpec policy;
  ppo::PpoHyper ppo;
  MetaHyper meta;
  std::size_t envs = 64;  // split as evenly as possible across the M tasks
  int checkpoint_every = 25;
  uint64_t seed = 0;

  void validate() const;
  double difficulty_at(int update) const;
};

// Optimizer position, restorable from a checkpoint.
struct MetaState {
  nn::Vector<float> params;
  nn::AdamState<float> adam;
  int update = 0;  // completed updates
};

MetaState initial_state(const MetaTrainSettings& settings);

nn::Checkpoint to_checkpoint(const MetaTrainSettings& settings, const MetaState& state);
// Throws CheckpointError when the checkpoint does not belong to this run.
MetaState from_checkpoint(const MetaTrainSettings& settings, const nn::Checkpoint& ckpt);

struct MetaCallbacks {
  std::function<void(const nlohmann::json&)> log;
  std::function<void(const nn::Checkpoint&, int update)> checkpoint;
};

// Runs updates state.update .. N-1. Each update's randomness derives from
// (seed, update index) alone, so a resumed run matches an uninterrupted one.
MetaState meta_train(const MetaTrainSettings& settings, MetaState state, WorkerPool* workers = nullptr,
                     const MetaCallbacks& callbacks = {});

}  // namespace morphopt::maml
