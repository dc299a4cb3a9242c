#pragma once

#include <functional>
#include <vector>

#include "morphopt/env/environment.hpp"

namespace morphopt::env {

// Task family with a closed-form optimum: reward -||a - c(design)||^2 where
// c is an arbitrary target map. Observations are the design features (or
// zeros when hidden) followed by a constant 1. Used to test learning code
// without the simulator.
struct BanditConfig {
  morphology::DesignSpace space = morphology::DesignSpace::links_only();
  int action_dim = 2;
  int episode_length = 1;
  bool hide_design = false;
  std::function<std::vector<double>(const morphology::DesignParams&)> target;
};

class QuadraticBanditEnv final : public Environment {
 public:
  explicit QuadraticBanditEnv(BanditConfig config);

  int observation_dim() const override;
  int action_dim() const override { return config_.action_dim; }
  const std::vector<double>& reset(const EpisodeSpec& spec) override;
  StepResult step(std::span<const double> action) override;
  const std::vector<double>& observation() const override { return obs_; }
  double total_mass() const override { return 1.0; }

  const std::vector<double>& target() const { return target_; }

 private:
  BanditConfig config_;
  std::vector<double> obs_;
  std::vector<double> target_;
  int steps_ = 0;
};

}  // namespace morphopt::env
