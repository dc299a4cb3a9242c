#include "morphopt/designopt/evaluation.hpp"

#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::designopt {

AdaptedEvaluation adapt_and_evaluate(const morphology::DesignParams& design, const nn::PolicyLayout& layout,
                                     const nn::Vector<float>& params, const env::EnvFactory& factory,
                                     const FitnessSettings& settings, int adapt_steps, int episodes, uint64_t seed,
                                     WorkerPool* workers) {
  settings.validate();
  if (adapt_steps < 0) throw ConfigError("adaptation steps must be non-negative");
  if (episodes < 0) throw ConfigError("episode count must be non-negative");
  if (!morphology::within_bounds(design, settings.space) || design.dim() != settings.space.dim()) {
    throw ConfigError("design outside the design space");
  }
  const auto distribution = [&](uint64_t s) {
    env::EpisodeDistribution d;
    d.space = settings.space;
    d.fixed_design = design;
    d.terrains = settings.terrains;
    d.max_difficulty = settings.max_difficulty;
    d.commands = settings.commands;
    d.seed = s;
    return d;
  };

  AdaptedEvaluation out;
  out.adaptation.params = params;
  if (adapt_steps > 0) {
    env::EnvPool pool(factory, settings.envs);
    ppo::Collector collector(pool, derive_seed(seed, {streams::kAdapt, streams::kAction}), workers);
    collector.reset(distribution(derive_seed(seed, {streams::kAdapt, streams::kEpisode})));
    out.adaptation = maml::inner_adapt(layout, params, collector, settings.adapt_length, settings.alpha,
                                       adapt_steps, settings.ppo);
  }
  out.eval = ppo::evaluate_episodes(factory, settings.envs, distribution(derive_seed(seed, {streams::kEval, streams::kEpisode})),
                                    episodes, layout, out.adaptation.params, settings.deterministic_eval,
                                    derive_seed(seed, {streams::kEval}), workers);
  return out;
}

nlohmann::json eval_metrics_json(const ppo::EvalResult& eval) {
  nlohmann::json j;
  j["episodes"] = eval.episodes;
  j["transitions"] = eval.terms.size();
  j["zero_samples"] = eval.terms.empty();
  if (eval.terms.empty()) {
    j["metrics"] = nullptr;
    return j;
  }
  nlohmann::json terms = nlohmann::json::object();
  const auto& names = env::reward_term_names();
  for (std::size_t k = 0; k < names.size(); ++k) {
    double s = 0.0;
    for (const auto& t : eval.terms) s += t[k];
    terms[names[k]] = s / static_cast<double>(eval.terms.size());
  }
  nlohmann::json costs = nlohmann::json::object();
  for (auto m : {CostMetric::velocity_tracking, CostMetric::weighted_torque, CostMetric::weighted_power,
                 CostMetric::mcot}) {
    try {
      costs[to_string(m)] = mean_cost(m, eval.diagnostics, eval.masses);
    } catch (const UndefinedMetric&) {
      costs[to_string(m)] = nullptr;
    }
  }
  double mean_len = 0.0;
  for (int l : eval.lengths) mean_len += l;
  j["metrics"] = {{"mean_episode_return", eval.mean_return()},
                  {"mean_reward_per_step", eval.mean_reward()},
                  {"mean_episode_length", mean_len / static_cast<double>(std::max(1, eval.episodes))},
                  {"reward_terms", terms},
                  {"costs_per_step", costs},
                  {"fall_rate", eval.fall_rate()},
                  {"falls", eval.falls},
                  {"divergences", eval.divergences}};
  return j;
}

}  // namespace morphopt::designopt
