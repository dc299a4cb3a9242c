#include "morphopt/ppo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "morphopt/common/errors.hpp"

namespace morphopt::ppo {

void PpoHyper::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(lambda > 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in (0, 1]");
  if (!(clip > 0.0)) throw ConfigError("clip parameter must be positive");
  if (minibatches < 1) throw ConfigError("minibatches must be at least 1");
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(value_weight >= 0.0)) throw ConfigError("value-loss weight must be non-negative");
  if (!(entropy >= 0.0)) throw ConfigError("entropy coefficient must be non-negative");
  if (!(stepsize > 0.0)) throw ConfigError("stepsize must be positive");
}

nn::LossWeights PpoHyper::loss_weights() const {
  nn::LossWeights w;
  w.surrogate = 1.0;
  w.value = value_weight;
  w.entropy = entropy;
  w.clip = clip;
  return w;
}

Gae compute_gae(std::span<const double> rewards, std::span<const double> values, std::span<const uint8_t> dones,
                double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  require(values.size() == n && dones.size() == n, "GAE input lengths differ");
  Gae out;
  out.advantages.resize(n);
  out.returns.resize(n);
  double next_value = bootstrap, next_adv = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    out.advantages[k] = delta + gamma * lambda * live * next_adv;
    out.returns[k] = out.advantages[k] + values[k];
    next_value = values[k];
    next_adv = out.advantages[k];
  }
  return out;
}

nn::Batch<float> make_batch(const Rollout& rollout, double gamma, double lambda) {
  const std::size_t n = rollout.envs, steps = static_cast<std::size_t>(rollout.steps);
  require(rollout.size() == n * steps, "rollout shape mismatch");
  nn::Batch<float> b;
  b.obs = rollout.obs;
  b.actions = rollout.actions;
  const auto rows = static_cast<Eigen::Index>(rollout.size());
  b.old_log_prob = Eigen::Map<const nn::Vector<float>>(rollout.log_prob.data(), rows);
  b.advantages.resize(rows);
  b.returns.resize(rows);
  std::vector<double> r(steps), v(steps);
  std::vector<uint8_t> d(steps);
  for (std::size_t e = 0; e < n; ++e) {
    for (std::size_t t = 0; t < steps; ++t) {
      const std::size_t row = t * n + e;
      r[t] = rollout.rewards[row] + gamma * rollout.truncation_values[row];
      v[t] = rollout.values[row];
      d[t] = rollout.dones[row];
    }
    const Gae g = compute_gae(r, v, d, rollout.bootstrap[e], gamma, lambda);
    for (std::size_t t = 0; t < steps; ++t) {
      const auto row = static_cast<Eigen::Index>(t * n + e);
      b.advantages[row] = static_cast<float>(g.advantages[t]);
      b.returns[row] = static_cast<float>(g.returns[t]);
    }
  }
  return b;
}

Eigen::VectorXd normalized(const Eigen::VectorXd& a) {
  if (a.size() == 0) return a;
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  const double inv = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
  return ((a.array() - mean) * inv).matrix();
}

void normalize_advantages(nn::Vector<float>& advantages) {
  advantages = normalized(advantages.cast<double>()).cast<float>();
}

namespace {

nn::Batch<float> gather(const nn::Batch<float>& b, std::span<const Eigen::Index> rows) {
  nn::Batch<float> out;
  const auto m = static_cast<Eigen::Index>(rows.size());
  // Empty fields (unused by the loss composition) stay empty.
  const auto pick_rows = [&](const nn::Matrix<float>& src, nn::Matrix<float>& dst) {
    if (src.rows() == 0) return;
    dst.resize(m, src.cols());
    for (Eigen::Index i = 0; i < m; ++i) dst.row(i) = src.row(rows[static_cast<std::size_t>(i)]);
  };
  const auto pick = [&](const nn::Vector<float>& src, nn::Vector<float>& dst) {
    if (src.size() == 0) return;
    dst.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) dst[i] = src[rows[static_cast<std::size_t>(i)]];
  };
  pick_rows(b.obs, out.obs);
  pick_rows(b.actions, out.actions);
  pick_rows(b.targets, out.targets);
  pick(b.old_log_prob, out.old_log_prob);
  pick(b.advantages, out.advantages);
  pick(b.returns, out.returns);
  return out;
}

bool finite(const nn::LossGrad<float>& lg) {
  return std::isfinite(lg.stats.loss) && lg.grad.allFinite();
}

}  // namespace

UpdateStats clipped_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, std::vector<TaskBatch> tasks,
                           const PpoHyper& hyper, double stepsize, nn::AdamState<float>& adam, Rng& shuffle) {
  return clipped_update(layout, params, std::move(tasks), hyper, hyper.loss_weights(), stepsize, adam, shuffle);
}

UpdateStats clipped_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, std::vector<TaskBatch> tasks,
                           const PpoHyper& hyper, const nn::LossWeights& w, double stepsize,
                           nn::AdamState<float>& adam, Rng& shuffle) {
  hyper.validate();
  require(!tasks.empty(), "update needs at least one task");
  require(static_cast<std::size_t>(params.size()) == layout.size(), "parameter vector size mismatch");
  for (auto& t : tasks) {
    require(t.batch.rows() > 0, "empty task batch");
    require(t.offset.size() == 0 || t.offset.size() == params.size(), "task offset size mismatch");
    normalize_advantages(t.batch.advantages);
  }
  const nn::Vector<float> params0 = params;
  const nn::AdamState<float> adam0 = adam;

  UpdateStats st;
  st.min_minibatch_ratio = std::numeric_limits<double>::infinity();
  st.max_minibatch_ratio = -std::numeric_limits<double>::infinity();
  int evaluated = 0;
  const auto abort = [&](const std::string& why) {
    params = params0;
    adam = adam0;
    st.aborted = true;
    st.diagnostic = why;
    return st;
  };

  const int mb = hyper.minibatches;
  std::vector<std::vector<Eigen::Index>> order(tasks.size());
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      order[i].resize(static_cast<std::size_t>(tasks[i].batch.rows()));
      std::iota(order[i].begin(), order[i].end(), Eigen::Index{0});
      std::shuffle(order[i].begin(), order[i].end(), shuffle);
    }
    for (int j = 0; j < mb; ++j) {
      nn::Vector<float> grad = nn::Vector<float>::Zero(params.size());
      bool any = false;
      for (std::size_t i = 0; i < tasks.size(); ++i) {
        const std::size_t n = order[i].size();
        const std::size_t lo = n * static_cast<std::size_t>(j) / static_cast<std::size_t>(mb);
        const std::size_t hi = n * static_cast<std::size_t>(j + 1) / static_cast<std::size_t>(mb);
        if (hi == lo) continue;
        const nn::Batch<float> part =
            gather(tasks[i].batch, std::span<const Eigen::Index>(order[i].data() + lo, hi - lo));
        const auto lg = tasks[i].offset.size() == 0
                            ? nn::loss_and_grad<float>(layout, params, part, w)
                            : nn::loss_and_grad<float>(layout, nn::Vector<float>(params + tasks[i].offset), part, w);
        if (!finite(lg)) {
          return abort("non-finite loss or gradient in epoch " + std::to_string(epoch) + ", minibatch " +
                       std::to_string(j) + ", task " + std::to_string(i));
        }
        grad += lg.grad;
        any = true;
        ++evaluated;
        st.loss.loss += lg.stats.loss;
        st.loss.surrogate += lg.stats.surrogate;
        st.loss.value_loss += lg.stats.value_loss;
        st.loss.entropy += lg.stats.entropy;
        st.loss.mean_ratio += lg.stats.mean_ratio;
        st.loss.clip_fraction += lg.stats.clip_fraction;
        st.min_minibatch_ratio = std::min(st.min_minibatch_ratio, lg.stats.mean_ratio);
        st.max_minibatch_ratio = std::max(st.max_minibatch_ratio, lg.stats.mean_ratio);
      }
      if (!any) continue;
      nn::adam_step<float>(adam, params, grad, stepsize);
      nn::clamp_log_std<float>(layout, params);
      if (!params.allFinite()) return abort("non-finite parameters after an Adam step");
      ++st.adam_steps;
    }
  }
  if (evaluated > 0) {
    const double k = 1.0 / evaluated;
    st.loss.loss *= k;
    st.loss.surrogate *= k;
    st.loss.value_loss *= k;
    st.loss.entropy *= k;
    st.loss.mean_ratio *= k;
    st.loss.clip_fraction *= k;
  }
  return st;
}

UpdateStats ppo_update(const nn::PolicyLayout& layout, nn::Vector<float>& params, const Rollout& rollout,
                       const PpoHyper& hyper, nn::AdamState<float>& adam, Rng& shuffle) {
  std::vector<TaskBatch> tasks(1);
  tasks[0].batch = make_batch(rollout, hyper.gamma, hyper.lambda);
  return clipped_update(layout, params, std::move(tasks), hyper, hyper.stepsize, adam, shuffle);
}

nlohmann::json update_record(int update, const Rollout& rollout, const UpdateStats& stats) {
  nlohmann::json terms = nlohmann::json::object();
  const auto names = env::reward_term_names();
  const auto means = rollout.mean_terms();
  for (std::size_t k = 0; k < means.size(); ++k) terms[names[k]] = means[k];
  nlohmann::json rec = {{"update", update},
                        {"transitions", rollout.size()},
                        {"mean_reward", rollout.mean_reward()},
                        {"episodes", rollout.episode_returns.size()},
                        {"falls", rollout.falls},
                        {"divergences", rollout.divergences},
                        {"reward_terms", terms},
                        {"loss", stats.loss.loss},
                        {"surrogate", stats.loss.surrogate},
                        {"value_loss", stats.loss.value_loss},
                        {"entropy", stats.loss.entropy},
                        {"mean_ratio", stats.loss.mean_ratio},
                        {"clip_fraction", stats.loss.clip_fraction},
                        {"min_minibatch_ratio", stats.min_minibatch_ratio},
                        {"max_minibatch_ratio", stats.max_minibatch_ratio},
                        {"aborted", stats.aborted}};
  if (!rollout.episode_returns.empty()) {
    rec["mean_episode_return"] =
        std::accumulate(rollout.episode_returns.begin(), rollout.episode_returns.end(), 0.0) /
        static_cast<double>(rollout.episode_returns.size());
  } else {
    rec["mean_episode_return"] = nullptr;
  }
  if (stats.aborted) rec["diagnostic"] = stats.diagnostic;
  return rec;
}

nn::PolicySpec policy_spec_for(const env::EnvConfig& config, std::vector<int> hidden, double init_log_std) {
  env::LocomotionEnv probe(config);
  nn::PolicySpec spec;
  spec.obs_dim = probe.observation_dim();
  spec.act_dim = probe.action_dim();
  spec.hidden = std::move(hidden);
  spec.init_log_std = init_log_std;
  spec.validate();
  return spec;
}

TrainResult train_fixed_design(const std::optional<morphology::DesignParams>& design, const TrainSettings& settings,
                               WorkerPool* workers, const LogSink& sink) {
  settings.hyper.validate();
  settings.env.validate();
  if (settings.envs == 0 || settings.steps_per_env < 1 || settings.updates < 0) {
    throw ConfigError("training needs envs >= 1, steps_per_env >= 1, updates >= 0");
  }
  if (design && !morphology::within_bounds(*design, settings.env.space)) {
    throw ConfigError("design outside the design space");
  }
  TrainResult out;
  out.spec = policy_spec_for(settings.env, settings.hidden, settings.init_log_std);
  const nn::PolicyLayout layout(out.spec);
  Rng init(derive_seed(settings.seed, {streams::kInit}));
  out.params = nn::init_params(layout, init);
  if (settings.updates == 0) return out;

  const env::EnvConfig cfg = settings.env;
  env::EnvPool pool([cfg] { return std::make_unique<env::LocomotionEnv>(cfg); }, settings.envs);
  Collector collector(pool, derive_seed(settings.seed, {streams::kAction}), workers);
  env::EpisodeDistribution dist;
  dist.space = cfg.space;
  dist.fixed_design = design;
  dist.terrains = settings.terrains;
  dist.max_difficulty = settings.max_difficulty;
  dist.commands = cfg.command_range;
  dist.seed = derive_seed(settings.seed, {streams::kEpisode});
  collector.reset(dist);

  auto adam = nn::AdamState<float>::zeros(layout.size());
  Rng shuffle(derive_seed(settings.seed, {streams::kShuffle}));
  for (int u = 0; u < settings.updates; ++u) {
    const Rollout rollout = collector.collect(layout, out.params, settings.steps_per_env);
    const UpdateStats stats = ppo_update(layout, out.params, rollout, settings.hyper, adam, shuffle);
    if (stats.aborted) ++out.aborted_updates;
    out.log.push_back(update_record(u, rollout, stats));
    if (sink) sink(out.log.back());
  }
  return out;
}

}  // namespace morphopt::ppo
