#include "morphopt/designopt/fitness.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "morphopt/common/errors.hpp"
#include "morphopt/maml/maml.hpp"

namespace morphopt::designopt {

void FitnessSettings::validate() const {
  if (adapt_steps < 0) throw ConfigError("adaptation steps U must be non-negative");
  if (adapt_length < 1) throw ConfigError("adaptation rollout length T must be at least 1");
  if (eval_transitions < 1) throw ConfigError("eval transitions must be at least 1");
  if (envs < 1) throw ConfigError("fitness evaluation needs at least one env");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("adaptation stepsize must be finite and >= 0");
  if (terrains.empty()) throw ConfigError("at least one terrain preset is required");
  if (!(max_difficulty >= 0.0 && max_difficulty <= 1.0)) throw ConfigError("max difficulty must lie in [0, 1]");
  ppo.validate();
  space.validate();
  commands.validate();
}

FitnessResult estimate_fitness(const morphology::DesignParams& design, const nn::PolicyLayout& layout,
                               const nn::Vector<float>& meta_params, const env::EnvFactory& factory,
                               const FitnessSettings& settings, uint64_t seed, WorkerPool* workers) {
  settings.validate();
  if (!morphology::within_bounds(design, settings.space)) throw ConfigError("design outside the design space");
  env::EnvPool pool(factory, settings.envs);
  ppo::Collector collector(pool, derive_seed(seed, {streams::kAction}), workers);
  env::EpisodeDistribution dist;
  dist.space = settings.space;
  dist.fixed_design = design;
  dist.terrains = settings.terrains;
  dist.max_difficulty = settings.max_difficulty;
  dist.commands = settings.commands;
  dist.seed = derive_seed(seed, {streams::kEpisode});
  collector.reset(dist);

  FitnessResult out;
  const auto flag = [&](std::string why) {
    out.cost = std::numeric_limits<double>::quiet_NaN();
    out.flagged = true;
    out.reason = std::move(why);
    return out;
  };
  const maml::Adaptation adapted = maml::inner_adapt(layout, meta_params, collector, settings.adapt_length,
                                                     settings.alpha, settings.adapt_steps, settings.ppo);
  if (adapted.degraded) return flag("degraded adaptation: " + adapted.diagnostic);

  const ppo::Rollout eval =
      collector.collect(layout, adapted.params, settings.eval_transitions, settings.deterministic_eval);
  out.transitions = eval.size();
  out.mean_reward = eval.mean_reward();
  out.falls = eval.falls;
  out.divergences = eval.divergences;
  if (eval.divergences > 0 && static_cast<std::size_t>(eval.divergences) == eval.episode_returns.size()) {
    return flag("every finished evaluation episode diverged");
  }
  // Diverged steps carry no meaningful diagnostics.
  std::vector<env::Diagnostics> steps;
  std::vector<double> masses;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    if (eval.diverged[i]) continue;
    steps.push_back(eval.diagnostics[i]);
    masses.push_back(eval.masses[i]);
  }
  if (steps.empty()) return flag("no valid evaluation transitions");
  try {
    out.cost = mean_cost(settings.metric, steps, masses);
  } catch (const UndefinedMetric& e) {
    return flag(e.what());
  }
  if (!std::isfinite(out.cost)) return flag("non-finite cost");
  return out;
}

DesignEvaluator::DesignEvaluator(const nn::PolicyLayout& layout, nn::Vector<float> meta_params,
                                 env::EnvFactory factory, FitnessSettings settings, uint64_t seed,
                                 bool common_random_numbers, WorkerPool* workers)
    : layout_(layout),
      params_(std::move(meta_params)),
      factory_(std::move(factory)),
      settings_(std::move(settings)),
      seed_(seed),
      crn_(common_random_numbers),
      workers_(workers) {
  settings_.validate();
  require(static_cast<std::size_t>(params_.size()) == layout_.size(), "meta-parameter size mismatch");
}

std::vector<FitnessResult> DesignEvaluator::evaluate(const std::vector<morphology::DesignParams>& designs,
                                                     uint64_t tag) {
  std::vector<FitnessResult> results(designs.size());
  const auto body = [&](std::size_t i) {
    const uint64_t s = crn_ ? derive_seed(seed_, {streams::kEval, tag}) : derive_seed(seed_, {streams::kEval, tag, i});
    results[i] = estimate_fitness(designs[i], layout_, params_, factory_, settings_, s, nullptr);
  };
  if (workers_ != nullptr) {
    workers_->parallel_for(designs.size(), body);
  } else {
    for (std::size_t i = 0; i < designs.size(); ++i) body(i);
  }
  history_.push_back(results);
  return results;
}

std::vector<double> DesignEvaluator::penalized(const std::vector<FitnessResult>& results) {
  for (const auto& r : results) {
    if (!r.flagged) worst_ = std::max(worst_, r.cost);
  }
  const double penalty = worst_ > 0.0 ? 10.0 * worst_ : 1e6;
  std::vector<double> out;
  out.reserve(results.size());
  for (const auto& r : results) out.push_back(r.flagged ? penalty : r.cost);
  return out;
}

BatchFitness DesignEvaluator::as_batch_fitness() {
  return [this](const std::vector<std::vector<double>>& points, int generation) {
    std::vector<morphology::DesignParams> designs;
    for (const auto& x : points) designs.push_back(design_from_point(x, settings_.space));
    return penalized(evaluate(designs, static_cast<uint64_t>(generation)));
  };
}

morphology::DesignParams design_from_point(const std::vector<double>& x, const morphology::DesignSpace& space) {
  require(x.size() == space.dim(), "search point dimension does not match the design space");
  return morphology::DesignParams::from_vector(x);
}

void GridSpec::validate() const {
  if (resolution < 1) throw ConfigError("grid resolution must be at least 1");
  if (!(thigh.lower < thigh.upper) || !(shank.lower < shank.upper)) throw ConfigError("grid bounds must be increasing");
}

double GridSpec::thigh_center(int i) const {
  return thigh.lower + (i + 0.5) * (thigh.upper - thigh.lower) / resolution;
}

double GridSpec::shank_center(int j) const {
  return shank.lower + (j + 0.5) * (shank.upper - shank.lower) / resolution;
}

void locate_argmin(CostMap& map) {
  map.argmin_row = map.argmin_col = -1;
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < map.cost.rows(); ++i) {
    for (int j = 0; j < map.cost.cols(); ++j) {
      const double c = map.cost(i, j);
      if (std::isfinite(c) && c < best) {
        best = c;
        map.argmin_row = i;
        map.argmin_col = j;
      }
    }
  }
}

CostMap cost_map(const GridSpec& grid,
                 const std::function<std::vector<double>(const std::vector<morphology::DesignParams>&)>& evaluate) {
  grid.validate();
  std::vector<morphology::DesignParams> cells;
  for (int i = 0; i < grid.resolution; ++i) {
    for (int j = 0; j < grid.resolution; ++j) {
      morphology::DesignParams d;
      d.thigh_scale = grid.thigh_center(i);
      d.shank_scale = grid.shank_center(j);
      cells.push_back(d);
    }
  }
  const auto values = evaluate(cells);
  require(values.size() == cells.size(), "cost map evaluator returned the wrong number of values");
  CostMap map;
  map.grid = grid;
  for (int i = 0; i < grid.resolution; ++i) {
    map.thigh_centers.push_back(grid.thigh_center(i));
    map.shank_centers.push_back(grid.shank_center(i));
  }
  map.cost.resize(grid.resolution, grid.resolution);
  for (int i = 0; i < grid.resolution; ++i) {
    for (int j = 0; j < grid.resolution; ++j) map.cost(i, j) = values[static_cast<std::size_t>(i * grid.resolution + j)];
  }
  locate_argmin(map);
  return map;
}

namespace {

std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_cost_map_csv(std::ostream& out, const CostMap& map) {
  require(map.thigh_centers.size() == static_cast<std::size_t>(map.cost.rows()) &&
              map.shank_centers.size() == static_cast<std::size_t>(map.cost.cols()),
          "cost map centers do not match the matrix");
  out << "thigh_scale,shank_scale,cost\n";
  for (int i = 0; i < map.cost.rows(); ++i) {
    for (int j = 0; j < map.cost.cols(); ++j) {
      out << exact(map.thigh_centers[i]) << ',' << exact(map.shank_centers[j]) << ','
          << exact(map.cost(i, j)) << '\n';
    }
  }
}

CostMap read_cost_map_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "thigh_scale,shank_scale,cost") {
    throw ConfigError("cost map CSV lacks the expected header");
  }
  std::vector<std::array<double, 3>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::array<double, 3> v{};
    std::stringstream ss(line);
    std::string field;
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, field, ',')) throw ConfigError("cost map CSV row has fewer than 3 fields");
      char* end = nullptr;
      v[k] = std::strtod(field.c_str(), &end);
      if (end == field.c_str()) throw ConfigError("cost map CSV field is not a number: " + field);
    }
    rows.push_back(v);
  }
  const auto res = static_cast<int>(std::lround(std::sqrt(static_cast<double>(rows.size()))));
  if (res < 1 || static_cast<std::size_t>(res * res) != rows.size()) throw ConfigError("cost map CSV is not square");
  CostMap map;
  map.grid.resolution = res;
  // Bounds from the first and last centers; exact only up to rounding.
  const auto bounds_from = [&](double first, double last) {
    const double h = res > 1 ? (last - first) / (res - 1) : 0.0;
    return morphology::Bounds{first - 0.5 * h, last + 0.5 * h};
  };
  if (res > 1) {
    map.grid.thigh = bounds_from(rows.front()[0], rows.back()[0]);
    map.grid.shank = bounds_from(rows.front()[1], rows.back()[1]);
  }
  map.cost.resize(res, res);
  for (int i = 0; i < res; ++i) {
    map.thigh_centers.push_back(rows[static_cast<std::size_t>(i * res)][0]);
    map.shank_centers.push_back(rows[static_cast<std::size_t>(i)][1]);
    for (int j = 0; j < res; ++j) map.cost(i, j) = rows[static_cast<std::size_t>(i * res + j)][2];
  }
  locate_argmin(map);
  return map;
}

}  // namespace morphopt::designopt
