#include "morphopt/ppo/rollout.hpp"

#include <numeric>

#include "morphopt/common/errors.hpp"

namespace morphopt::ppo {

namespace {

double mean_of(const std::vector<env::RewardTerms>& terms, std::size_t k) {
  if (terms.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : terms) s += t[k];
  return s / static_cast<double>(terms.size());
}

void check_policy(const nn::PolicyLayout& layout, const nn::Vector<float>& params, int obs_dim, int act_dim) {
  require(static_cast<std::size_t>(params.size()) == layout.size(), "parameter vector size mismatch");
  require(layout.spec().obs_dim == obs_dim && layout.spec().act_dim == act_dim,
          "policy does not match the environment's observation/action widths");
}

// Mean plus per-dimension Gaussian noise, rounded to float so the executed
// action is exactly the recorded one.
void sample_actions(const nn::Matrix<float>& mean, const nn::Vector<float>& log_std, bool deterministic,
                    std::vector<Rng*> noise, nn::Matrix<float>& out) {
  out.resize(mean.rows(), mean.cols());
  for (Eigen::Index i = 0; i < mean.rows(); ++i) {
    for (Eigen::Index j = 0; j < mean.cols(); ++j) {
      double a = mean(i, j);
      if (!deterministic) {
        std::normal_distribution<double> gauss(0.0, 1.0);
        a += std::exp(static_cast<double>(log_std[j])) * gauss(*noise[static_cast<std::size_t>(i)]);
      }
      out(i, j) = static_cast<float>(a);
    }
  }
}

}  // namespace

double Rollout::mean_reward() const {
  if (rewards.empty()) return 0.0;
  return std::accumulate(rewards.begin(), rewards.end(), 0.0) / static_cast<double>(rewards.size());
}

env::RewardTerms Rollout::mean_terms() const {
  env::RewardTerms m{};
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = mean_of(terms, k);
  return m;
}

Collector::Collector(env::EnvPool& pool, uint64_t seed, WorkerPool* workers)
    : pool_(pool), seed_(seed), workers_(workers) {}

void Collector::reset(env::EpisodeSampler sampler) {
  pool_.reset(std::move(sampler));
  noise_.clear();
  for (std::size_t e = 0; e < pool_.size(); ++e) noise_.emplace_back(derive_seed(seed_, {streams::kAction, e}));
  running_return_.assign(pool_.size(), 0.0);
  running_length_.assign(pool_.size(), 0);
}

Rollout Collector::collect(const nn::PolicyLayout& layout, const nn::Vector<float>& params, int steps_per_env,
                           bool deterministic) {
  require(!noise_.empty(), "collector used before reset");
  require(steps_per_env >= 0, "negative rollout length");
  const std::size_t n = pool_.size();
  const int o = pool_.observation_dim(), a = pool_.action_dim();
  check_policy(layout, params, o, a);
  const auto rows = static_cast<Eigen::Index>(n) * steps_per_env;

  Rollout r;
  r.envs = n;
  r.steps = steps_per_env;
  r.obs.resize(rows, o);
  r.actions.resize(rows, a);
  const auto count = static_cast<std::size_t>(rows);
  r.log_prob.resize(count);
  r.rewards.resize(count);
  r.values.resize(count);
  r.truncation_values.assign(count, 0.0);
  r.dones.resize(count);
  r.truncated.resize(count);
  r.diverged.resize(count);
  r.terms.resize(count);
  r.diagnostics.resize(count);
  r.masses.resize(count);

  const nn::Vector<float> log_std =
      params.segment(static_cast<Eigen::Index>(layout.log_std_offset()), a);
  std::vector<Rng*> noise;
  for (auto& g : noise_) noise.push_back(&g);

  nn::Matrix<float> current(static_cast<Eigen::Index>(n), o);
  const auto load_current = [&] {
    for (std::size_t e = 0; e < n; ++e) {
      const auto& ob = pool_.observation(e);
      for (int k = 0; k < o; ++k) current(static_cast<Eigen::Index>(e), k) = static_cast<float>(ob[k]);
    }
  };

  nn::Matrix<float> acts;
  std::vector<double> act_buffer(n * static_cast<std::size_t>(a));
  for (int t = 0; t < steps_per_env; ++t) {
    load_current();
    const auto fwd = nn::forward<float>(layout, params, current);
    sample_actions(fwd.mean, log_std, deterministic, noise, acts);
    const nn::Vector<float> logp = nn::gaussian_log_prob<float>(fwd.mean, log_std, acts);
    for (std::size_t e = 0; e < n; ++e) {
      for (int j = 0; j < a; ++j) act_buffer[e * a + j] = acts(static_cast<Eigen::Index>(e), j);
    }
    const auto base = static_cast<Eigen::Index>(t) * static_cast<Eigen::Index>(n);
    for (std::size_t e = 0; e < n; ++e) r.masses[base + e] = pool_.env(e).total_mass();

    const auto results = pool_.step(act_buffer, workers_);

    std::vector<std::size_t> cut;
    for (std::size_t e = 0; e < n; ++e) {
      if (results[e].truncated && !results[e].diverged) cut.push_back(e);
    }
    if (!cut.empty()) {
      nn::Matrix<float> term(static_cast<Eigen::Index>(cut.size()), o);
      for (std::size_t c = 0; c < cut.size(); ++c) {
        const auto& ob = pool_.terminal_observation(cut[c]);
        for (int k = 0; k < o; ++k) term(static_cast<Eigen::Index>(c), k) = static_cast<float>(ob[k]);
      }
      const nn::Vector<float> v = nn::value_forward<float>(layout, params, term);
      for (std::size_t c = 0; c < cut.size(); ++c) r.truncation_values[base + cut[c]] = v[c];
    }

    r.obs.middleRows(base, static_cast<Eigen::Index>(n)) = current;
    r.actions.middleRows(base, static_cast<Eigen::Index>(n)) = acts;
    for (std::size_t e = 0; e < n; ++e) {
      const auto row = static_cast<std::size_t>(base) + e;
      const auto& res = results[e];
      r.log_prob[row] = logp[static_cast<Eigen::Index>(e)];
      r.values[row] = fwd.value[static_cast<Eigen::Index>(e)];
      r.rewards[row] = res.reward;
      r.dones[row] = res.done;
      r.truncated[row] = res.truncated || res.diverged;
      r.diverged[row] = res.diverged;
      r.terms[row] = res.terms;
      r.diagnostics[row] = res.diagnostics;
      running_return_[e] += res.reward;
      ++running_length_[e];
      if (res.done) {
        r.episode_returns.push_back(running_return_[e]);
        r.episode_lengths.push_back(running_length_[e]);
        if (res.diverged) {
          ++r.divergences;
        } else if (!res.truncated) {
          ++r.falls;
        }
        running_return_[e] = 0.0;
        running_length_[e] = 0;
      }
    }
  }

  load_current();
  const nn::Vector<float> boot = nn::value_forward<float>(layout, params, current);
  r.bootstrap.assign(boot.data(), boot.data() + boot.size());
  return r;
}

double EvalResult::mean_return() const {
  if (returns.empty()) return 0.0;
  return std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
}

double EvalResult::mean_reward() const {
  if (terms.empty()) return 0.0;
  double s = 0.0;
  for (const auto& t : terms) {
    for (std::size_t k = 0; k < t.size(); ++k) s += env::kRewardWeights[k] * t[k];
  }
  return s / static_cast<double>(terms.size());
}

double EvalResult::fall_rate() const {
  return episodes > 0 ? static_cast<double>(falls) / static_cast<double>(episodes) : 0.0;
}

EvalResult evaluate_episodes(const env::EnvFactory& factory, std::size_t parallel_envs,
                             const env::EpisodeSampler& sampler, int episodes, const nn::PolicyLayout& layout,
                             const nn::Vector<float>& params, bool deterministic, uint64_t seed,
                             WorkerPool* workers) {
  require(episodes >= 0, "negative episode count");
  require(parallel_envs > 0, "evaluation needs at least one env");
  EvalResult out;
  if (episodes == 0) return out;
  const std::size_t n = std::min<std::size_t>(parallel_envs, static_cast<std::size_t>(episodes));
  std::vector<std::unique_ptr<env::Environment>> envs;
  for (std::size_t e = 0; e < n; ++e) envs.push_back(factory());
  const int o = envs[0]->observation_dim(), a = envs[0]->action_dim();
  check_policy(layout, params, o, a);

  std::vector<Rng> noise;
  std::vector<uint64_t> played(n, 0);
  std::vector<double> ret(n, 0.0);
  std::vector<int> len(n, 0);
  std::vector<std::size_t> active;
  for (std::size_t e = 0; e < n; ++e) {
    noise.emplace_back(derive_seed(seed, {streams::kEval, e}));
    envs[e]->reset(sampler(e, 0));
    active.push_back(e);
  }
  // Env e plays global episodes e, e + n, ...
  const auto quota = [&](std::size_t e) {
    return static_cast<uint64_t>((static_cast<std::size_t>(episodes) - e + n - 1) / n);
  };
  const nn::Vector<float> log_std =
      params.segment(static_cast<Eigen::Index>(layout.log_std_offset()), a);

  nn::Matrix<float> acts;
  while (!active.empty()) {
    const auto m = static_cast<Eigen::Index>(active.size());
    nn::Matrix<float> cur(m, o);
    std::vector<Rng*> rngs;
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& ob = envs[active[i]]->observation();
      for (int k = 0; k < o; ++k) cur(i, k) = static_cast<float>(ob[k]);
      rngs.push_back(&noise[active[i]]);
    }
    const nn::Matrix<float> mean = nn::detail::mlp_forward<float>(layout.mean_layers(), params.data(), cur, nullptr);
    sample_actions(mean, log_std, deterministic, rngs, acts);
    std::vector<env::StepResult> results(active.size());
    std::vector<double> masses(active.size());
    const auto body = [&](std::size_t i) {
      std::vector<double> act(static_cast<std::size_t>(a));
      for (int j = 0; j < a; ++j) act[j] = acts(static_cast<Eigen::Index>(i), j);
      masses[i] = envs[active[i]]->total_mass();
      results[i] = envs[active[i]]->step(act);
    };
    if (workers != nullptr) {
      workers->parallel_for(active.size(), body);
    } else {
      for (std::size_t i = 0; i < active.size(); ++i) body(i);
    }
    std::vector<std::size_t> still;
    for (std::size_t i = 0; i < active.size(); ++i) {
      const std::size_t e = active[i];
      const auto& res = results[i];
      // A diverged step has no valid state to score.
      if (!res.diverged) {
        out.terms.push_back(res.terms);
        out.diagnostics.push_back(res.diagnostics);
        out.masses.push_back(masses[i]);
      }
      ret[e] += res.reward;
      ++len[e];
      if (!res.done) {
        still.push_back(e);
        continue;
      }
      out.returns.push_back(ret[e]);
      out.lengths.push_back(len[e]);
      ++out.episodes;
      if (res.diverged) {
        ++out.divergences;
      } else if (!res.truncated) {
        ++out.falls;
      }
      ret[e] = 0.0;
      len[e] = 0;
      if (++played[e] < quota(e)) {
        envs[e]->reset(sampler(e, played[e]));
        still.push_back(e);
      }
    }
    active = std::move(still);
  }
  return out;
}

}  // namespace morphopt::ppo
