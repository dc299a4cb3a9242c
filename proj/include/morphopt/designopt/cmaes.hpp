#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "morphopt/morphology/morphology.hpp"

namespace morphopt::designopt {

// Scores a whole population; called once per generation with the repaired
// (in-bounds) points. Must return one value per point, lower is better.
using BatchFitness = std::function<std::vector<double>(const std::vector<std::vector<double>>& points, int generation)>;

struct CmaSettings {
  std::vector<double> mean;
  double sigma = 0.3;
  std::vector<morphology::Bounds> bounds;  // empty: unbounded
  int generations = 30;  // updates after the initial population
  int population = 0;    // 0: 4 + floor(3 ln n)
  double penalty_weight = 1e3;
  uint64_t seed = 0;
  // Stop early once this many evaluations are spent (0: no limit).
  long long max_evaluations = 0;

  void validate() const;
  int lambda() const;
};

// (mu/mu_w, lambda) state.
struct CmaState {
  Eigen::VectorXd mean;
  double sigma = 0.0;
  Eigen::MatrixXd cov;
  Eigen::VectorXd path_sigma;
  Eigen::VectorXd path_c;
  int generation = 0;
  int population = 0;
  // Eigendecomposition cov = B diag(d^2) B^T.
  Eigen::MatrixXd basis;
  Eigen::VectorXd scale;
};

struct CandidateRecord {
  std::vector<double> sampled;    // before repair
  std::vector<double> evaluated;  // after clipping into the bounds
  double objective = 0.0;         // value returned by the fitness
  double fitness = 0.0;           // objective plus bound penalty, ranked
};

struct GenerationRecord {
  int generation = 0;
  std::vector<CandidateRecord> candidates;
  std::vector<double> mean;  // distribution mean that produced this population
  double sigma = 0.0;
  double best_fitness = 0.0;  // best so far, including this generation
  std::vector<double> best_point;
  double mean_fitness = 0.0;  // of this generation
};

struct CmaResult {
  std::vector<GenerationRecord> generations;
  std::vector<double> best_point;
  double best_fitness = 0.0;
  long long evaluations = 0;
  int covariance_resets = 0;
  CmaState final_state;
};

// Standard CMA-ES with weighted recombination of the best half, rank-one and
// rank-mu covariance updates and cumulative step-size adaptation. Candidates
// outside the bounds are evaluated at their clipped image and charged
// penalty_weight * |x - clip(x)|^2. Deterministic given the seed.
CmaResult cmaes_run(const BatchFitness& fitness, const CmaSettings& settings);

}  // namespace morphopt::designopt
