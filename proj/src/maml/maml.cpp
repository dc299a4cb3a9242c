#include "morphopt/maml/maml.hpp"

#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::maml {

void MetaHyper::validate() const {
  if (updates < 0) throw ConfigError("policy updates must be non-negative");
  if (meta_batch < 1) throw ConfigError("meta-batch size must be at least 1");
  if (rollout_length < 1) throw ConfigError("rollout length K must be at least 1");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("inner stepsize must be finite and >= 0");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("outer stepsize must be finite and > 0");
  if (inner_steps < 0) throw ConfigError("inner steps must be non-negative");
}

std::optional<nn::Vector<float>> gradient_step(const nn::PolicyLayout& layout, const nn::Vector<float>& params,
                                               const nn::Batch<float>& batch, const nn::LossWeights& weights,
                                               double alpha) {
  const auto lg = nn::loss_and_grad<float>(layout, params, batch, weights);
  if (!std::isfinite(lg.stats.loss) || !lg.grad.allFinite()) return std::nullopt;
  nn::Vector<float> next = params - static_cast<float>(alpha) * lg.grad;
  nn::clamp_log_std<float>(layout, next);
  return next;
}

Adaptation inner_adapt(const nn::PolicyLayout& layout, const nn::Vector<float>& params, ppo::Collector& collector,
                       int rollout_length, double alpha, int steps, const ppo::PpoHyper& hyper) {
  require(steps >= 0 && rollout_length >= 1, "inner adaptation needs steps >= 0 and K >= 1");
  Adaptation out;
  out.params = params;
  for (int s = 0; s < steps; ++s) {
    out.rollouts.push_back(collector.collect(layout, out.params, rollout_length));
    nn::Batch<float> batch = ppo::make_batch(out.rollouts.back(), hyper.gamma, hyper.lambda);
    ppo::normalize_advantages(batch.advantages);
    auto next = gradient_step(layout, out.params, batch, hyper.loss_weights(), alpha);
    if (!next) {
      out.params = params;
      out.degraded = true;
      out.diagnostic = "non-finite inner loss at adaptation step " + std::to_string(s);
      return out;
    }
    out.params = std::move(*next);
  }
  return out;
}

ppo::UpdateStats meta_update(const nn::PolicyLayout& layout, nn::Vector<float>& params,
                             const std::vector<TaskData>& tasks, const ppo::PpoHyper& hyper, double beta,
                             nn::AdamState<float>& adam, Rng& shuffle) {
  std::vector<ppo::TaskBatch> batches;
  batches.reserve(tasks.size());
  for (const auto& t : tasks) {
    require(t.adapted.size() == params.size(), "adapted parameter size mismatch");
    batches.push_back({ppo::make_batch(t.post, hyper.gamma, hyper.lambda), t.adapted - params});
  }
  return ppo::clipped_update(layout, params, std::move(batches), hyper, beta, adam, shuffle);
}

void MetaTrainSettings::validate() const {
  if (!factory) throw ConfigError("meta-training needs an environment factory");
  space.validate();
  policy.validate();
  ppo.validate();
  meta.validate();
  if (envs < static_cast<std::size_t>(meta.meta_batch)) {
    throw ConfigError("need at least one training env per meta-batch task");
  }
  if (terrains.empty()) throw ConfigError("at least one terrain preset is required");
  if (!(max_difficulty >= 0.0 && max_difficulty <= 1.0)) throw ConfigError("max difficulty must lie in [0, 1]");
  if (!(schedule_fraction >= 0.0 && schedule_fraction <= 1.0)) {
    throw ConfigError("schedule fraction must lie in [0, 1]");
  }
  if (checkpoint_every < 0) throw ConfigError("checkpoint interval must be non-negative");
}

double MetaTrainSettings::difficulty_at(int update) const {
  const double ramp = schedule_fraction * meta.updates;
  if (ramp <= 0.0) return max_difficulty;
  return max_difficulty * std::min(1.0, static_cast<double>(update) / ramp);
}

MetaState initial_state(const MetaTrainSettings& settings) {
  const nn::PolicyLayout layout(settings.policy);
  Rng init(derive_seed(settings.seed, {streams::kInit}));
  MetaState s;
  s.params = nn::init_params(layout, init);
  s.adam = nn::AdamState<float>::zeros(layout.size());
  return s;
}

namespace {

nlohmann::json describe(const MetaTrainSettings& s) {
  nlohmann::json bounds = nlohmann::json::array();
  for (const auto& b : s.space.bounds) bounds.push_back({b.lower, b.upper});
  nlohmann::json terrains = nlohmann::json::array();
  for (const auto& t : s.terrains) terrains.push_back(terrain::to_string(t.kind));
  return {{"design_space", bounds},
          {"terrains", terrains},
          {"max_difficulty", s.max_difficulty},
          {"schedule_fraction", s.schedule_fraction},
          {"updates_total", s.meta.updates},
          {"meta_batch", s.meta.meta_batch},
          {"rollout_length", s.meta.rollout_length},
          {"alpha", s.meta.alpha},
          {"beta", s.meta.beta},
          {"inner_steps", s.meta.inner_steps},
          {"envs", s.envs},
          {"seed", s.seed}};
}

nlohmann::json design_json(const morphology::DesignParams& d) { return d.to_vector(); }

}  // namespace

nn::Checkpoint to_checkpoint(const MetaTrainSettings& settings, const MetaState& state) {
  nn::Checkpoint c;
  c.spec = settings.policy;
  c.params = state.params;
  c.extra_tensors = {{"adam_m", state.adam.m}, {"adam_v", state.adam.v}};
  c.manifest = {{"kind", "meta-policy"},
                {"update", state.update},
                {"adam_step", state.adam.step},
                {"difficulty", settings.difficulty_at(state.update)},
                {"run", describe(settings)}};
  return c;
}

MetaState from_checkpoint(const MetaTrainSettings& settings, const nn::Checkpoint& ckpt) {
  if (!(ckpt.spec == settings.policy)) throw CheckpointError("checkpoint network shape does not match the config");
  MetaState s;
  try {
    if (ckpt.manifest.at("kind") != "meta-policy") throw CheckpointError("not a meta-training checkpoint");
    if (ckpt.manifest.at("run") != describe(settings)) {
      throw CheckpointError("checkpoint was written by a run with different settings");
    }
    s.update = ckpt.manifest.at("update").get<int>();
    s.adam.step = ckpt.manifest.at("adam_step").get<long long>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("incomplete meta-training manifest: ") + e.what());
  }
  if (ckpt.extra_tensors.size() != 2 || ckpt.extra_tensors[0].first != "adam_m" ||
      ckpt.extra_tensors[1].first != "adam_v") {
    throw CheckpointError("checkpoint lacks optimizer moments");
  }
  s.params = ckpt.params;
  s.adam.m = ckpt.extra_tensors[0].second;
  s.adam.v = ckpt.extra_tensors[1].second;
  if (s.adam.m.size() != s.params.size() || s.adam.v.size() != s.params.size()) {
    throw CheckpointError("optimizer moment size mismatch");
  }
  if (s.update < 0 || s.update > settings.meta.updates) throw CheckpointError("checkpoint update count out of range");
  return s;
}

MetaState meta_train(const MetaTrainSettings& settings, MetaState state, WorkerPool* workers,
                     const MetaCallbacks& callbacks) {
  settings.validate();
  const nn::PolicyLayout layout(settings.policy);
  require(static_cast<std::size_t>(state.params.size()) == layout.size(), "meta-parameter size mismatch");
  const int m = settings.meta.meta_batch;
  if (state.update >= settings.meta.updates) return state;

  std::vector<std::unique_ptr<env::EnvPool>> pools;
  for (int i = 0; i < m; ++i) {
    const std::size_t share =
        settings.envs / static_cast<std::size_t>(m) + (static_cast<std::size_t>(i) < settings.envs % m ? 1 : 0);
    pools.push_back(std::make_unique<env::EnvPool>(settings.factory, share));
  }
  if (pools[0]->observation_dim() != settings.policy.obs_dim || pools[0]->action_dim() != settings.policy.act_dim) {
    throw ConfigError("policy shape does not match the environment");
  }

  const uint64_t seed = settings.seed;
  for (int u = state.update; u < settings.meta.updates; ++u) {
    const double difficulty = settings.difficulty_at(u);
    Rng design_rng(derive_seed(seed, {streams::kDesign, static_cast<uint64_t>(u)}));
    std::vector<TaskData> tasks;
    nlohmann::json designs = nlohmann::json::array();
    double pre = 0.0, post = 0.0;
    int degraded = 0, falls = 0;
    env::RewardTerms terms{};
    for (int i = 0; i < m; ++i) {
      const auto design = morphology::sample_design(design_rng, settings.space);
      designs.push_back(design_json(design));
      env::EpisodeDistribution dist;
      dist.space = settings.space;
      dist.fixed_design = design;
      dist.terrains = settings.terrains;
      dist.max_difficulty = difficulty;
      dist.commands = settings.commands;
      dist.seed = derive_seed(seed, {streams::kEpisode, static_cast<uint64_t>(u), static_cast<uint64_t>(i)});
      ppo::Collector collector(
          *pools[i], derive_seed(seed, {streams::kAction, static_cast<uint64_t>(u), static_cast<uint64_t>(i)}),
          workers);
      collector.reset(dist);
      Adaptation adapted = inner_adapt(layout, state.params, collector, settings.meta.rollout_length,
                                       settings.meta.alpha, settings.meta.inner_steps, settings.ppo);
      if (adapted.degraded) ++degraded;
      if (!adapted.rollouts.empty()) pre += adapted.rollouts.front().mean_reward();
      TaskData task;
      // D' is a fresh set of episodes, so the outer update also sees episode starts.
      dist.seed = derive_seed(seed, {streams::kEpisode, static_cast<uint64_t>(u), static_cast<uint64_t>(i), 1});
      collector.reset(dist);
      task.post = collector.collect(layout, adapted.params, settings.meta.rollout_length);
      task.adapted = std::move(adapted.params);
      post += task.post.mean_reward();
      falls += task.post.falls;
      const auto t = task.post.mean_terms();
      for (std::size_t k = 0; k < terms.size(); ++k) terms[k] += t[k] / m;
      tasks.push_back(std::move(task));
    }
    Rng shuffle(derive_seed(seed, {streams::kShuffle, static_cast<uint64_t>(u)}));
    const ppo::UpdateStats stats =
        meta_update(layout, state.params, tasks, settings.ppo, settings.meta.beta, state.adam, shuffle);
    state.update = u + 1;

    if (callbacks.log) {
      nlohmann::json term_json = nlohmann::json::object();
      const auto names = env::reward_term_names();
      for (std::size_t k = 0; k < terms.size(); ++k) term_json[names[k]] = terms[k];
      nlohmann::json rec = {{"update", u},
                            {"difficulty", difficulty},
                            {"designs", designs},
                            {"pre_adaptation_reward", settings.meta.inner_steps > 0 ? nlohmann::json(pre / m)
                                                                                    : nlohmann::json(nullptr)},
                            {"post_adaptation_reward", post / m},
                            {"reward_terms", term_json},
                            {"falls", falls},
                            {"degraded_adaptations", degraded},
                            {"loss", stats.loss.loss},
                            {"surrogate", stats.loss.surrogate},
                            {"value_loss", stats.loss.value_loss},
                            {"entropy", stats.loss.entropy},
                            {"mean_ratio", stats.loss.mean_ratio},
                            {"clip_fraction", stats.loss.clip_fraction},
                            {"aborted", stats.aborted}};
      if (stats.aborted) rec["diagnostic"] = stats.diagnostic;
      callbacks.log(rec);
    }
    const bool periodic = settings.checkpoint_every > 0 && state.update % settings.checkpoint_every == 0;
    if (callbacks.checkpoint && (periodic || state.update == settings.meta.updates)) {
      callbacks.checkpoint(to_checkpoint(settings, state), state.update);
    }
  }
  return state;
}

}  // namespace morphopt::maml
