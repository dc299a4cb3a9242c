#pragma once

#include <functional>

#include "morphopt/common/rng.hpp"
#include "morphopt/designopt/costs.hpp"
#include "morphopt/env/environment.hpp"

namespace morphopt::designopt {

// Environment whose per-step cost under `metric` is cost(design) * (1 + u),
// u ~ U[-noise, noise], independent of the actions. Stands in for the
// simulator when the fitness must be a known function of the design.
struct SurrogateConfig {
  morphology::DesignSpace space = morphology::DesignSpace::links_only();
  CostMetric metric = CostMetric::velocity_tracking;
  std::function<double(const morphology::DesignParams&)> cost;  // must be >= 0
  double noise = 0.0;  // relative half-width in [0, 1)
  int episode_length = 500;
  int action_dim = env::kActionDim;
  double mass = 1.0;
};

class AnalyticCostEnv final : public env::Environment {
 public:
  explicit AnalyticCostEnv(SurrogateConfig config);

  int observation_dim() const override { return static_cast<int>(config_.space.dim()) + 1; }
  int action_dim() const override { return config_.action_dim; }
  const std::vector<double>& reset(const env::EpisodeSpec& spec) override;
  env::StepResult step(std::span<const double> action) override;
  const std::vector<double>& observation() const override { return obs_; }
  double total_mass() const override { return config_.mass; }

 private:
  SurrogateConfig config_;
  std::vector<double> obs_;
  double base_cost_ = 0.0;
  Rng rng_;
  int steps_ = 0;
};

}  // namespace morphopt::designopt
