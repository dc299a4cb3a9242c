#pragma once

#include <iosfwd>
#include <optional>
#include <vector>

#include "json.hpp"
#include "morphopt/designopt/fitness.hpp"

namespace morphopt::designopt {

struct OptimizeSettings {
  FitnessSettings fitness;
  int generations = 10;
  int population = 12;
  double sigma_fraction = 0.15;  // initial step size, share of the box width
  double penalty_weight = 1e3;   // per squared unit-box distance
  bool common_random_numbers = true;
  uint64_t seed = 0;

  void validate() const;
};

struct CandidateEntry {
  morphology::DesignParams design;
  double cost = 0.0;       // raw estimate, NaN when flagged
  double fitness = 0.0;    // ranked value: penalized cost plus bound penalty
  bool flagged = false;
  std::string reason;
};

struct GenerationEntry {
  int generation = 0;
  std::vector<CandidateEntry> candidates;
  double best_cost = 0.0;   // best-so-far ranked value
  double mean_cost = 0.0;   // of this generation's ranked values
  morphology::DesignParams best_design;
  double sigma = 0.0;       // unit-box step size that produced the population
};

struct OptimizationReport {
  CostMetric metric = CostMetric::velocity_tracking;
  std::vector<GenerationEntry> generations;
  morphology::DesignParams best_design;
  double best_cost = 0.0;  // ranked value during the search
  morphology::DesignParams nominal_design;
  // Nominal and best re-evaluated side by side with one shared seed.
  FitnessResult nominal_final;
  FitnessResult best_final;
  std::optional<double> improvement_percent;
  long long evaluations = 0;
  int covariance_resets = 0;
};

// (nominal - best) / nominal * 100; nullopt when either side is undefined or
// the nominal cost is zero.
std::optional<double> improvement_percent(double nominal, double best);

// CMA-ES over the design box rescaled to [0, 1]^n, started at the nominal
// design. Candidates are scored by DesignEvaluator; the final comparison
// re-evaluates the nominal and the best design with the same protocol.
OptimizationReport optimize_design(const nn::PolicyLayout& layout, const nn::Vector<float>& meta_params,
                                   const env::EnvFactory& factory, const morphology::DesignParams& nominal,
                                   const OptimizeSettings& settings, WorkerPool* workers = nullptr);

nlohmann::json fitness_to_json(const FitnessResult& r);
nlohmann::json report_to_json(const OptimizationReport& report);
// generation,best_cost,mean_cost,best_design_0..n-1
void write_generation_csv(std::ostream& out, const OptimizationReport& report);

}  // namespace morphopt::designopt
