#include "morphopt/designopt/surrogate.hpp"

#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::designopt {

AnalyticCostEnv::AnalyticCostEnv(SurrogateConfig config) : config_(std::move(config)) {
  config_.space.validate();
  if (!config_.cost) throw ConfigError("surrogate needs a cost function");
  if (!(config_.noise >= 0.0 && config_.noise < 1.0)) throw ConfigError("surrogate noise must lie in [0, 1)");
  if (config_.episode_length < 1 || config_.action_dim < 1) throw ConfigError("surrogate episode/action sizes");
  if (!(config_.mass > 0.0)) throw ConfigError("surrogate mass must be positive");
  obs_.assign(static_cast<std::size_t>(observation_dim()), 0.0);
}

const std::vector<double>& AnalyticCostEnv::reset(const env::EpisodeSpec& spec) {
  if (!morphology::within_bounds(spec.design, config_.space)) throw ConfigError("design outside the design space");
  const auto f = morphology::design_to_features(spec.design, config_.space);
  std::copy(f.begin(), f.end(), obs_.begin());
  obs_.back() = 1.0;
  base_cost_ = config_.cost(spec.design);
  if (!(base_cost_ >= 0.0)) throw ConfigError("surrogate cost must be non-negative");
  rng_.seed(spec.seed);
  steps_ = 0;
  return obs_;
}

env::StepResult AnalyticCostEnv::step(std::span<const double> action) {
  require(static_cast<int>(action.size()) == config_.action_dim, "action width mismatch");
  std::uniform_real_distribution<double> u(-config_.noise, config_.noise);
  const double c = base_cost_ * (1.0 + (config_.noise > 0.0 ? u(rng_) : 0.0));
  env::StepResult r;
  r.reward = -c;
  auto& d = r.diagnostics;
  d.speed = 1.0;
  d.weight = 1.0;
  switch (config_.metric) {
    case CostMetric::velocity_tracking:
      d.e_v = std::sqrt(c);
      d.weight = env::tracking_weight(d.e_v, 0.0);
      break;
    case CostMetric::weighted_torque: d.torque_sq = c; break;
    case CostMetric::weighted_power: d.positive_power = c; break;
    case CostMetric::mcot: d.positive_power = c * config_.mass * kGravity; break;
  }
  ++steps_;
  r.truncated = steps_ >= config_.episode_length;
  r.done = r.truncated;
  return r;
}

}  // namespace morphopt::designopt
