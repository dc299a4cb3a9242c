#include "morphopt/designopt/optimize.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "morphopt/common/errors.hpp"

namespace morphopt::designopt {

namespace {

// Evaluation tag of the final nominal-vs-best comparison; far above any
// generation index.
constexpr uint64_t kFinalTag = 0xF1A1000000000000ULL;

morphology::DesignParams from_unit(const std::vector<double>& u, const morphology::DesignSpace& space) {
  std::vector<double> x(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto& b = space.bounds[i];
    x[i] = std::clamp(b.lower + u[i] * (b.upper - b.lower), b.lower, b.upper);
  }
  return morphology::DesignParams::from_vector(x);
}

std::vector<double> to_unit(const morphology::DesignParams& d, const morphology::DesignSpace& space) {
  auto x = d.to_vector();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& b = space.bounds[i];
    x[i] = (x[i] - b.lower) / (b.upper - b.lower);
  }
  return x;
}

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void OptimizeSettings::validate() const {
  fitness.validate();
  if (generations < 0) throw ConfigError("generations must be non-negative");
  if (population < 2) throw ConfigError("population must be at least 2");
  if (!(sigma_fraction > 0.0 && sigma_fraction <= 1.0)) throw ConfigError("sigma fraction must lie in (0, 1]");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight must be non-negative");
}

std::optional<double> improvement_percent(double nominal, double best) {
  if (!std::isfinite(nominal) || !std::isfinite(best) || nominal == 0.0) return std::nullopt;
  return (nominal - best) / nominal * 100.0;
}

OptimizationReport optimize_design(const nn::PolicyLayout& layout, const nn::Vector<float>& meta_params,
                                   const env::EnvFactory& factory, const morphology::DesignParams& nominal,
                                   const OptimizeSettings& settings, WorkerPool* workers) {
  settings.validate();
  const auto& space = settings.fitness.space;
  if (!morphology::within_bounds(nominal, space) || nominal.dim() != space.dim()) {
    throw ConfigError("nominal design outside the design space");
  }
  DesignEvaluator evaluator(layout, meta_params, factory, settings.fitness, settings.seed,
                            settings.common_random_numbers, workers);

  CmaSettings cma;
  cma.mean = to_unit(nominal, space);
  cma.sigma = settings.sigma_fraction;
  cma.bounds.assign(space.dim(), morphology::Bounds{0.0, 1.0});
  cma.generations = settings.generations;
  cma.population = settings.population;
  cma.penalty_weight = settings.penalty_weight;
  cma.seed = settings.seed;

  const BatchFitness fitness = [&](const std::vector<std::vector<double>>& points, int generation) {
    std::vector<morphology::DesignParams> designs;
    for (const auto& u : points) designs.push_back(from_unit(u, space));
    return evaluator.penalized(evaluator.evaluate(designs, static_cast<uint64_t>(generation)));
  };
  const CmaResult result = cmaes_run(fitness, cma);

  OptimizationReport report;
  report.metric = settings.fitness.metric;
  report.nominal_design = nominal;
  report.evaluations = result.evaluations;
  report.covariance_resets = result.covariance_resets;
  const auto& history = evaluator.history();
  for (std::size_t g = 0; g < result.generations.size(); ++g) {
    const auto& rec = result.generations[g];
    GenerationEntry entry;
    entry.generation = rec.generation;
    entry.best_cost = rec.best_fitness;
    entry.mean_cost = rec.mean_fitness;
    entry.best_design = from_unit(rec.best_point, space);
    entry.sigma = rec.sigma;
    for (std::size_t i = 0; i < rec.candidates.size(); ++i) {
      const auto& c = rec.candidates[i];
      const auto& r = history[g][i];
      entry.candidates.push_back({from_unit(c.evaluated, space), r.cost, c.fitness, r.flagged, r.reason});
    }
    report.generations.push_back(std::move(entry));
  }
  report.best_design = from_unit(result.best_point, space);
  report.best_cost = result.best_fitness;

  const auto final_pair = evaluator.evaluate({nominal, report.best_design}, kFinalTag);
  report.nominal_final = final_pair[0];
  report.best_final = final_pair[1];
  report.improvement_percent = improvement_percent(report.nominal_final.cost, report.best_final.cost);
  return report;
}

nlohmann::json fitness_to_json(const FitnessResult& r) {
  nlohmann::json j = {{"cost", r.flagged ? nlohmann::json(nullptr) : nlohmann::json(r.cost)},
                      {"flagged", r.flagged},
                      {"mean_reward", r.mean_reward},
                      {"falls", r.falls},
                      {"divergences", r.divergences},
                      {"transitions", r.transitions}};
  if (r.flagged) j["reason"] = r.reason;
  return j;
}

nlohmann::json report_to_json(const OptimizationReport& report) {
  nlohmann::json gens = nlohmann::json::array();
  for (const auto& g : report.generations) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : g.candidates) {
      nlohmann::json cj = {{"design", c.design.to_vector()},
                           {"cost", c.flagged ? nlohmann::json(nullptr) : nlohmann::json(c.cost)},
                           {"fitness", c.fitness},
                           {"flagged", c.flagged}};
      if (c.flagged) cj["reason"] = c.reason;
      cands.push_back(std::move(cj));
    }
    gens.push_back({{"generation", g.generation},
                    {"sigma", g.sigma},
                    {"best_cost", g.best_cost},
                    {"mean_cost", g.mean_cost},
                    {"best_design", g.best_design.to_vector()},
                    {"population", std::move(cands)}});
  }
  return {{"schema", "morphopt.optimization_report/1"},
          {"metric", to_string(report.metric)},
          {"evaluations", report.evaluations},
          {"covariance_resets", report.covariance_resets},
          {"generations", std::move(gens)},
          {"best_design", report.best_design.to_vector()},
          {"best_cost", report.best_cost},
          {"nominal_design", report.nominal_design.to_vector()},
          {"final_comparison",
           {{"nominal", fitness_to_json(report.nominal_final)},
            {"best", fitness_to_json(report.best_final)},
            {"improvement_percent", report.improvement_percent ? nlohmann::json(*report.improvement_percent)
                                                                : nlohmann::json(nullptr)}}}};
}

void write_generation_csv(std::ostream& out, const OptimizationReport& report) {
  const std::size_t n = report.nominal_design.dim();
  out << "generation,best_cost,mean_cost";
  for (std::size_t i = 0; i < n; ++i) out << ",best_design_" << i;
  out << '\n';
  for (const auto& g : report.generations) {
    out << g.generation << ',' << exact(g.best_cost) << ',' << exact(g.mean_cost);
    for (double v : g.best_design.to_vector()) out << ',' << exact(v);
    out << '\n';
  }
}

}  // namespace morphopt::designopt
