#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "morphopt/common/worker_pool.hpp"
#include "morphopt/env/environment.hpp"

namespace morphopt::env {

// Produces the spec of the `episode`-th episode of environment `env`. Must be
// a pure function of its arguments so results do not depend on scheduling.
using EpisodeSampler = std::function<EpisodeSpec(std::size_t env, uint64_t episode)>;

// Episode distribution used for training and evaluation: fixed or uniformly
// sampled design, terrain of a preset kind with difficulty drawn uniformly in
// [0, max_difficulty], command from a range.
struct EpisodeDistribution {
  morphology::DesignSpace space = morphology::DesignSpace::links_only();
  std::optional<morphology::DesignParams> fixed_design;
  std::vector<terrain::TerrainParams> terrains{terrain::TerrainParams{}};
  double max_difficulty = 0.0;
  CommandRange commands;
  uint64_t seed = 0;

  EpisodeSpec operator()(std::size_t env, uint64_t episode) const;
};

// A set of independent environments with automatic reset. Stepping of
// different environments may run concurrently on a worker pool.
class EnvPool {
 public:
  EnvPool(const EnvFactory& factory, std::size_t count);

  std::size_t size() const { return envs_.size(); }
  int observation_dim() const { return obs_dim_; }
  int action_dim() const { return act_dim_; }

  // Installs the sampler and starts a fresh episode in every environment.
  // Episode counters restart at zero.
  void reset(EpisodeSampler sampler);

  const std::vector<double>& observation(std::size_t i) const { return envs_[i]->observation(); }
  // Observation at the end of the last finished episode of env i.
  const std::vector<double>& terminal_observation(std::size_t i) const { return terminal_obs_[i]; }
  Environment& env(std::size_t i) { return *envs_[i]; }
  const EpisodeSpec& episode_spec(std::size_t i) const { return specs_[i]; }

  // Steps every environment with its row of `actions` (size() x action_dim,
  // row-major). Finished episodes are stored and immediately reset.
  std::vector<StepResult> step(std::span<const double> actions, WorkerPool* workers = nullptr);

 private:
  void start_episode(std::size_t i);

  std::vector<std::unique_ptr<Environment>> envs_;
  EpisodeSampler sampler_;
  std::vector<uint64_t> episode_;
  std::vector<EpisodeSpec> specs_;
  std::vector<std::vector<double>> terminal_obs_;
  int obs_dim_ = 0;
  int act_dim_ = 0;
};

}  // namespace morphopt::env
