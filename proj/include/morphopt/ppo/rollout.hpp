#pragma once

#include <cstdint>
#include <vector>

#include "morphopt/common/rng.hpp"
#include "morphopt/common/worker_pool.hpp"
#include "morphopt/env/env_pool.hpp"
#include "morphopt/nn/policy.hpp"

namespace morphopt::ppo {

// Transitions of one collection pass. Row t * envs + e holds step t of env e.
struct Rollout {
  std::size_t envs = 0;
  int steps = 0;
  nn::Matrix<float> obs;
  nn::Matrix<float> actions;  // as sampled, before the env clamps them
  std::vector<float> log_prob;
  std::vector<double> rewards;
  std::vector<double> values;
  // V(terminal observation) for time-limit cutoffs, 0 elsewhere.
  std::vector<double> truncation_values;
  std::vector<uint8_t> dones;  // the episode ended after this transition
  std::vector<uint8_t> truncated;
  std::vector<uint8_t> diverged;
  std::vector<double> bootstrap;  // per env, V of the observation after the last step
  std::vector<env::RewardTerms> terms;
  std::vector<env::Diagnostics> diagnostics;
  std::vector<double> masses;  // per transition, for cost of transport

  // Episodes that finished during this pass (possibly begun in an earlier one).
  std::vector<double> episode_returns;
  std::vector<int> episode_lengths;
  int falls = 0;
  int divergences = 0;

  std::size_t size() const { return rewards.size(); }
  double mean_reward() const;
  env::RewardTerms mean_terms() const;
};

// Drives an EnvPool with a Gaussian policy. Each env has its own action noise
// stream, so results are independent of the worker count.
class Collector {
 public:
  Collector(env::EnvPool& pool, uint64_t seed, WorkerPool* workers = nullptr);

  // Starts fresh episodes everywhere and restarts the noise streams.
  void reset(env::EpisodeSampler sampler);

  // steps_per_env control steps in every env. Deterministic mode executes the
  // mean action and records log-probs of it.
  Rollout collect(const nn::PolicyLayout& layout, const nn::Vector<float>& params, int steps_per_env,
                  bool deterministic = false);

  env::EnvPool& pool() { return pool_; }

 private:
  env::EnvPool& pool_;
  uint64_t seed_;
  WorkerPool* workers_;
  std::vector<Rng> noise_;
  std::vector<double> running_return_;
  std::vector<int> running_length_;
};

// Whole-episode evaluation: env e plays episodes e, e + n, ... of the sampler
// until `episodes` have finished in total.
struct EvalResult {
  int episodes = 0;
  std::vector<double> returns;
  std::vector<int> lengths;
  int falls = 0;
  int divergences = 0;
  std::vector<env::RewardTerms> terms;  // per non-diverged transition
  std::vector<env::Diagnostics> diagnostics;
  std::vector<double> masses;

  double mean_return() const;
  double mean_reward() const;  // per transition
  double fall_rate() const;
};

EvalResult evaluate_episodes(const env::EnvFactory& factory, std::size_t parallel_envs,
                             const env::EpisodeSampler& sampler, int episodes, const nn::PolicyLayout& layout,
                             const nn::Vector<float>& params, bool deterministic, uint64_t seed,
                             WorkerPool* workers = nullptr);

}  // namespace morphopt::ppo
