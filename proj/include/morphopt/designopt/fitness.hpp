#pragma once

#include <cmath>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "morphopt/common/worker_pool.hpp"
#include "morphopt/designopt/cmaes.hpp"
#include "morphopt/designopt/costs.hpp"
#include "morphopt/env/env_pool.hpp"
#include "morphopt/ppo/ppo.hpp"

namespace morphopt::designopt {

struct FitnessSettings {
  CostMetric metric = CostMetric::velocity_tracking;
  int adapt_steps = 5;         // U
  int adapt_length = 50;       // T, per env
  int eval_transitions = 250;  // per env, after adaptation
  std::size_t envs = 32;
  double alpha = 5e-4;
  ppo::PpoHyper ppo;
  morphology::DesignSpace space = morphology::DesignSpace::links_only();
  std::vector<terrain::TerrainParams> terrains{terrain::TerrainParams{}};
  double max_difficulty = 0.0;
  env::CommandRange commands;
  bool deterministic_eval = true;  // execute mean actions while scoring

  void validate() const;
};

struct FitnessResult {
  double cost = 0.0;   // mean per-transition cost; NaN when flagged
  bool flagged = false;
  std::string reason;
  double mean_reward = 0.0;
  int falls = 0;
  int divergences = 0;
  std::size_t transitions = 0;
};

// Adapts a copy of meta_params to `design` (U steps of T transitions per env)
// and scores the adapted policy on eval_transitions further transitions per
// env. Degraded adaptation, non-finite or undefined costs and runs where every
// finished episode diverged are flagged instead of scored.
FitnessResult estimate_fitness(const morphology::DesignParams& design, const nn::PolicyLayout& layout,
                               const nn::Vector<float>& meta_params, const env::EnvFactory& factory,
                               const FitnessSettings& settings, uint64_t seed, WorkerPool* workers = nullptr);

// Population scoring with parallel candidates and the flagged-candidate
// penalty: 10x the worst valid cost seen so far (1e6 before any valid one).
class DesignEvaluator {
 public:
  DesignEvaluator(const nn::PolicyLayout& layout, nn::Vector<float> meta_params, env::EnvFactory factory,
                  FitnessSettings settings, uint64_t seed, bool common_random_numbers = true,
                  WorkerPool* workers = nullptr);

  // Seeds: shared by the whole generation with common random numbers,
  // per candidate otherwise. The tag separates unrelated evaluation batches.
  std::vector<FitnessResult> evaluate(const std::vector<morphology::DesignParams>& designs, uint64_t tag);

  // Scores after penalty substitution, in the order of the last evaluate().
  std::vector<double> penalized(const std::vector<FitnessResult>& results);

  BatchFitness as_batch_fitness();

  const std::vector<std::vector<FitnessResult>>& history() const { return history_; }
  const FitnessSettings& settings() const { return settings_; }

 private:
  const nn::PolicyLayout& layout_;
  nn::Vector<float> params_;
  env::EnvFactory factory_;
  FitnessSettings settings_;
  uint64_t seed_;
  bool crn_;
  WorkerPool* workers_;
  double worst_ = -std::numeric_limits<double>::infinity();
  std::vector<std::vector<FitnessResult>> history_;
};

// Maps a CMA search point onto a design: link scales, plus gears when the
// space has them.
morphology::DesignParams design_from_point(const std::vector<double>& x, const morphology::DesignSpace& space);

struct GridSpec {
  int resolution = 12;
  morphology::Bounds thigh{0.6, 1.4};
  morphology::Bounds shank{0.6, 1.4};

  void validate() const;
  double thigh_center(int i) const;
  double shank_center(int j) const;
};

// Row i is the thigh scale, column j the shank scale. Failed cells hold NaN.
struct CostMap {
  GridSpec grid;
  std::vector<double> thigh_centers;  // row coordinates as evaluated or as read back
  std::vector<double> shank_centers;
  Eigen::MatrixXd cost;
  int argmin_row = -1;
  int argmin_col = -1;

  bool failed(int i, int j) const { return std::isnan(cost(i, j)); }
};

// Evaluates every cell center in row-major order. The argmin is the first
// strictly smallest finite cell in that order.
CostMap cost_map(const GridSpec& grid, const std::function<std::vector<double>(
                                           const std::vector<morphology::DesignParams>& cells)>& evaluate);

void locate_argmin(CostMap& map);

// CSV with header thigh_scale,shank_scale,cost; one row per cell, row-major,
// values printed with round-trip precision.
void write_cost_map_csv(std::ostream& out, const CostMap& map);
CostMap read_cost_map_csv(std::istream& in);

}  // namespace morphopt::designopt
