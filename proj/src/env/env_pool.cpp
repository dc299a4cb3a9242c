#include "morphopt/env/env_pool.hpp"

#include "morphopt/common/errors.hpp"

namespace morphopt::env {

EpisodeSpec EpisodeDistribution::operator()(std::size_t env, uint64_t episode) const {
  require(!terrains.empty(), "episode distribution needs at least one terrain");
  Rng rng = make_rng(derive_seed(seed, {streams::kEpisode, env, episode}));
  EpisodeSpec spec;
  spec.design = fixed_design ? *fixed_design : morphology::sample_design(rng, space);
  std::uniform_int_distribution<std::size_t> pick(0, terrains.size() - 1);
  spec.terrain = terrains[pick(rng)];
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  spec.terrain.difficulty = max_difficulty * unit(rng);
  spec.command = sample_command(rng, commands);
  spec.seed = rng();
  return spec;
}

EnvPool::EnvPool(const EnvFactory& factory, std::size_t count) {
  require(count > 0, "env pool must not be empty");
  envs_.reserve(count);
  for (std::size_t i = 0; i < count; ++i) envs_.push_back(factory());
  obs_dim_ = envs_[0]->observation_dim();
  act_dim_ = envs_[0]->action_dim();
  episode_.assign(count, 0);
  specs_.resize(count);
  terminal_obs_.assign(count, std::vector<double>(static_cast<std::size_t>(obs_dim_), 0.0));
}

void EnvPool::reset(EpisodeSampler sampler) {
  sampler_ = std::move(sampler);
  episode_.assign(envs_.size(), 0);
  for (std::size_t i = 0; i < envs_.size(); ++i) start_episode(i);
}

void EnvPool::start_episode(std::size_t i) {
  specs_[i] = sampler_(i, episode_[i]++);
  envs_[i]->reset(specs_[i]);
}

std::vector<StepResult> EnvPool::step(std::span<const double> actions, WorkerPool* workers) {
  require(sampler_ != nullptr, "env pool stepped before reset");
  const auto a = static_cast<std::size_t>(act_dim_);
  require(actions.size() == envs_.size() * a, "action batch shape mismatch");
  std::vector<StepResult> results(envs_.size());
  const auto body = [&](std::size_t i) {
    results[i] = envs_[i]->step(actions.subspan(i * a, a));
    if (results[i].done) {
      terminal_obs_[i] = envs_[i]->observation();
      start_episode(i);
    }
  };
  if (workers != nullptr) {
    workers->parallel_for(envs_.size(), body);
  } else {
    for (std::size_t i = 0; i < envs_.size(); ++i) body(i);
  }
  return results;
}

}  // namespace morphopt::env
