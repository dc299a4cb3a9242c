#include "morphopt/env/bandit.hpp"

#include "morphopt/common/errors.hpp"

namespace morphopt::env {

QuadraticBanditEnv::QuadraticBanditEnv(BanditConfig config) : config_(std::move(config)) {
  require(config_.action_dim > 0 && config_.episode_length > 0, "bandit sizes must be positive");
  require(config_.target != nullptr, "bandit needs a target map");
  obs_.assign(static_cast<std::size_t>(observation_dim()), 0.0);
}

int QuadraticBanditEnv::observation_dim() const { return static_cast<int>(config_.space.dim()) + 1; }

const std::vector<double>& QuadraticBanditEnv::reset(const EpisodeSpec& spec) {
  target_ = config_.target(spec.design);
  require(target_.size() == static_cast<std::size_t>(config_.action_dim), "bandit target width");
  const auto features = morphology::design_to_features(spec.design, config_.space);
  for (std::size_t k = 0; k < features.size(); ++k) obs_[k] = config_.hide_design ? 0.0 : features[k];
  obs_.back() = 1.0;
  steps_ = 0;
  return obs_;
}

StepResult QuadraticBanditEnv::step(std::span<const double> action) {
  require(action.size() == target_.size(), "bandit action width mismatch");
  double sq = 0.0;
  for (std::size_t k = 0; k < target_.size(); ++k) {
    const double d = action[k] - target_[k];
    sq += d * d;
  }
  StepResult r;
  r.reward = -sq;
  ++steps_;
  r.done = steps_ >= config_.episode_length;
  return r;
}

}  // namespace morphopt::env
