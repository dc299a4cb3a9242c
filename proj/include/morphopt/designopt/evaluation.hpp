#pragma once

#include "json.hpp"
#include "morphopt/designopt/fitness.hpp"
#include "morphopt/maml/maml.hpp"

namespace morphopt::designopt {

struct AdaptedEvaluation {
  maml::Adaptation adaptation;
  ppo::EvalResult eval;
};

// Adapts a copy of `params` to the design with `adapt_steps` inner steps
// (rollout length, env count, stepsize and PPO settings from `settings`),
// then plays `episodes` whole episodes. The evaluation episodes depend only on
// `seed`, so runs that differ in adapt_steps are paired on identical episodes.
AdaptedEvaluation adapt_and_evaluate(const morphology::DesignParams& design, const nn::PolicyLayout& layout,
                                     const nn::Vector<float>& params, const env::EnvFactory& factory,
                                     const FitnessSettings& settings, int adapt_steps, int episodes, uint64_t seed,
                                     WorkerPool* workers = nullptr);

// Mean return, per-step reward and term means, all four costs (null when
// undefined), fall rate. An empty evaluation yields zero_samples = true.
nlohmann::json eval_metrics_json(const ppo::EvalResult& eval);

}  // namespace morphopt::designopt
