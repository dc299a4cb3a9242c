#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "morphopt/env/reward.hpp"
#include "morphopt/morphology/morphology.hpp"
#include "morphopt/terrain/terrain.hpp"

namespace morphopt::env {

// Everything that defines one episode. Environments derive all randomness
// from `seed`, so an episode is reproducible from its spec alone.
struct EpisodeSpec {
  morphology::DesignParams design;
  terrain::TerrainParams terrain;
  Command command;
  uint64_t seed = 0;
};

struct StepResult {
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // time limit, the state itself is not terminal
  bool diverged = false;
  RewardTerms terms{};
  Diagnostics diagnostics;
};

// Episodic MDP with a fixed observation width. Instances are single-threaded.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual int observation_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual const std::vector<double>& reset(const EpisodeSpec& spec) = 0;
  virtual StepResult step(std::span<const double> action) = 0;
  virtual const std::vector<double>& observation() const = 0;
  // Mass used by the cost-of-transport metric.
  virtual double total_mass() const = 0;
};

using EnvFactory = std::function<std::unique_ptr<Environment>()>;

}  // namespace morphopt::env
