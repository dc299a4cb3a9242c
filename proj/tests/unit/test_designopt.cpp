#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "morphopt/common/errors.hpp"
#include "morphopt/designopt/optimize.hpp"
#include "morphopt/designopt/surrogate.hpp"
#include "morphopt/env/bandit.hpp"
#include "trace_oracle.hpp"

using namespace morphopt;
using namespace morphopt::designopt;

namespace {

env::Diagnostics step_with(double e_v, double e_w, double tsq = 0.0, double power = 0.0, double speed = 0.0) {
  env::Diagnostics d;
  d.e_v = e_v;
  d.e_omega = e_w;
  d.torque_sq = tsq;
  d.positive_power = power;
  d.speed = speed;
  d.weight = env::tracking_weight(e_v, e_w);
  return d;
}

double bowl(const morphology::DesignParams& d) {
  const double a = d.thigh_scale - 0.83, b = d.shank_scale - 1.17;
  return 0.2 + a * a + 2.0 * b * b + 0.5 * a * b;
}

env::EnvFactory surrogate_factory(std::function<double(const morphology::DesignParams&)> cost, double noise,
                                  CostMetric metric = CostMetric::weighted_torque) {
  SurrogateConfig cfg;
  cfg.cost = std::move(cost);
  cfg.noise = noise;
  cfg.metric = metric;
  return [cfg] { return std::make_unique<AnalyticCostEnv>(cfg); };
}

struct SurrogateSetup {
  nn::PolicyLayout layout;
  nn::Vector<float> params;
  FitnessSettings fitness;

  explicit SurrogateSetup(const env::EnvFactory& factory)
      : layout([&] {
          nn::PolicySpec s;
          auto e = factory();
          s.obs_dim = e->observation_dim();
          s.act_dim = e->action_dim();
          s.hidden = {8};
          return s;
        }()) {
    Rng rng(5);
    params = nn::init_params(layout, rng);
    fitness.metric = CostMetric::weighted_torque;
    fitness.envs = 4;
    fitness.adapt_steps = 1;
    fitness.adapt_length = 5;
    fitness.eval_transitions = 25;
  }
};

std::vector<double> sphere(const std::vector<std::vector<double>>& pts, const std::vector<double>& xs) {
  std::vector<double> f;
  for (const auto& x : pts) {
    double v = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) v += (x[j] - xs[j]) * (x[j] - xs[j]);
    f.push_back(v);
  }
  return f;
}

}  // namespace

TEST_CASE("cost formulas on constructed traces") {
  SUBCASE("perfect tracking and the 62.5 example") {
    std::vector<env::Diagnostics> zero(250, step_with(0.0, 0.0));
    CHECK(cost_velocity(zero) == 0.0);
    std::vector<env::Diagnostics> half(250, step_with(0.5, 0.0));
    CHECK(cost_velocity(half) == doctest::Approx(62.5).epsilon(1e-15));
  }
  SUBCASE("torque weight") {
    CHECK(env::tracking_weight(std::sqrt(10.0), 0.0) == 100.0);
    CHECK(env::tracking_weight(0.0, 0.0) == 1.0);
    std::vector<env::Diagnostics> s{step_with(std::sqrt(10.0), 0.0, 3.0)};
    CHECK(cost_torque(s) == doctest::Approx(300.0));
    std::vector<env::Diagnostics> z(20, step_with(0.7, 0.1, 0.0));
    CHECK(cost_torque(z) == 0.0);
  }
  SUBCASE("power") {
    // Braking joints contribute nothing: the positive part is zero.
    const auto d = env::compute_diagnostics({}, 0.0, 0.0, {1.0, -2.0, 3.0, 0.5}, {-1.0, 2.0, -0.1, 0.0});
    CHECK(d.positive_power == 0.0);
    std::vector<env::Diagnostics> s(100, step_with(0.0, 0.0, 0.0, 2.0));
    CHECK(cost_power(s) == doctest::Approx(200.0).epsilon(1e-15));
  }
  SUBCASE("mcot") {
    std::vector<env::Diagnostics> s(10, step_with(0.0, 0.0, 0.0, 100.0, 0.36));
    CHECK(mcot(s, 30.0) == doctest::Approx(100.0 / (30.0 * 9.81 * 0.36)).epsilon(1e-14));
    CHECK(mcot(s, 30.0) == doctest::Approx(0.944).epsilon(1e-3));
    std::vector<env::Diagnostics> idle(10, step_with(0.0, 0.0, 0.0, 0.0, 0.5));
    CHECK(mcot(idle, 30.0) == 0.0);
    std::vector<env::Diagnostics> fast(10, step_with(0.0, 0.0, 0.0, 100.0, 0.72));
    CHECK(mcot(fast, 30.0) == doctest::Approx(0.5 * mcot(s, 30.0)).epsilon(1e-14));
    std::vector<env::Diagnostics> still(10, step_with(0.0, 0.0, 0.0, 100.0, 0.01));
    CHECK_THROWS_AS(mcot(still, 30.0), UndefinedMetric);
    CHECK_THROWS_AS(mcot({}, 30.0), UndefinedMetric);
  }
  SUBCASE("metric names") {
    for (auto m : {CostMetric::velocity_tracking, CostMetric::weighted_torque, CostMetric::weighted_power,
                   CostMetric::mcot}) {
      CHECK(metric_from_string(to_string(m)) == m);
    }
    CHECK(metric_from_string("weighted_torque") == CostMetric::weighted_torque);
    CHECK_THROWS_AS(metric_from_string("speed"), ConfigError);
  }
}

TEST_CASE("costs recomputed from the raw state trace") {
  env::EnvConfig c;
  env::LocomotionEnv env(c);
  std::mt19937_64 rng(17);
  int checked = 0;
  for (uint64_t k = 0; k < 40; ++k) {
    env::EpisodeSpec spec;
    spec.seed = 1000 + k;
    Rng r(spec.seed);
    spec.design = morphology::sample_design(r, c.space);
    spec.terrain = terrain::terrain_preset(k % 2 ? "hills_mid" : "flat");
    spec.command = env::sample_command(r, c.command_range);
    const auto trace = oracle::record(env, spec, 60, rng, 0.6);
    const auto ref = oracle::recompute(trace);
    std::vector<env::Diagnostics> diag;
    std::vector<double> masses;
    for (const auto& s : trace.steps) {
      diag.push_back(s.diag);
      masses.push_back(s.mass);
    }
    if (diag.empty()) continue;
    CHECK(oracle::rel_err(cost_velocity(diag), ref.c_v) < 1e-12);
    CHECK(oracle::rel_err(cost_torque(diag), ref.c_tau) < 1e-12);
    CHECK(oracle::rel_err(cost_power(diag), ref.c_p) < 1e-12);
    if (ref.mean_speed > kMinMcotSpeed) {
      const double expect = ref.mean_power / (ref.mean_mass * 9.81 * ref.mean_speed);
      CHECK(oracle::rel_err(mean_cost(CostMetric::mcot, diag, masses), expect) < 1e-12);
    }
    for (std::size_t t = 0; t < trace.steps.size(); ++t) {
      CHECK(oracle::rel_err(trace.steps[t].reward, ref.reward[t]) < 1e-12);
    }
    ++checked;
  }
  CHECK(checked == 40);
}

TEST_CASE("estimate_fitness on the analytic surrogate") {
  const auto factory = surrogate_factory(bowl, 0.2);
  SurrogateSetup setup(factory);
  const morphology::DesignParams d{1.1, 0.7};

  SUBCASE("matches the closed form within Monte-Carlo bounds") {
    const auto r = estimate_fitness(d, setup.layout, setup.params, factory, setup.fitness, 3);
    REQUIRE_FALSE(r.flagged);
    const double n = static_cast<double>(r.transitions);
    CHECK(r.transitions == setup.fitness.envs * setup.fitness.eval_transitions);
    // Uniform relative noise of half-width 0.2: sd = 0.2 g / sqrt(3).
    const double sd = 0.2 * bowl(d) / std::sqrt(3.0);
    CHECK(std::abs(r.cost - bowl(d)) < 4.0 * sd / std::sqrt(n));
  }
  SUBCASE("U = 0 is deterministic and leaves the meta-parameters alone") {
    setup.fitness.adapt_steps = 0;
    const auto before = setup.params;
    const auto a = estimate_fitness(d, setup.layout, setup.params, factory, setup.fitness, 9);
    const auto b = estimate_fitness(d, setup.layout, setup.params, factory, setup.fitness, 9);
    CHECK(a.cost == b.cost);
    CHECK(setup.params == before);
    const auto other = estimate_fitness(d, setup.layout, setup.params, factory, setup.fitness, 10);
    CHECK(other.cost != a.cost);
  }
  SUBCASE("out-of-space design and bad settings are rejected") {
    CHECK_THROWS_AS(estimate_fitness({1.5, 1.0}, setup.layout, setup.params, factory, setup.fitness, 0),
                    ConfigError);
    setup.fitness.eval_transitions = 0;
    CHECK_THROWS_AS(estimate_fitness(d, setup.layout, setup.params, factory, setup.fitness, 0), ConfigError);
  }
  SUBCASE("MCOT surrogate reproduces the closed form") {
    const auto f = surrogate_factory(bowl, 0.0, CostMetric::mcot);
    setup.fitness.metric = CostMetric::mcot;
    const auto ok = estimate_fitness(d, setup.layout, setup.params, f, setup.fitness, 1);
    CHECK_FALSE(ok.flagged);
    CHECK(ok.cost == doctest::Approx(bowl(d)).epsilon(1e-12));
  }
  SUBCASE("an undefined metric is flagged, not fatal") {
    // The bandit never moves, so its mean speed is zero.
    env::BanditConfig bc;
    bc.action_dim = env::kActionDim;
    bc.target = [](const morphology::DesignParams&) { return std::vector<double>(env::kActionDim, 0.0); };
    const env::EnvFactory still = [bc] { return std::make_unique<env::QuadraticBanditEnv>(bc); };
    SurrogateSetup s2(still);
    s2.fitness.metric = CostMetric::mcot;
    const auto r = estimate_fitness(d, s2.layout, s2.params, still, s2.fitness, 1);
    CHECK(r.flagged);
    CHECK(std::isnan(r.cost));
    CHECK_FALSE(r.reason.empty());
  }
}

TEST_CASE("DesignEvaluator penalizes flagged candidates") {
  const auto factory = surrogate_factory(bowl, 0.0);
  SurrogateSetup setup(factory);
  DesignEvaluator ev(setup.layout, setup.params, factory, setup.fitness, 1);
  std::vector<FitnessResult> rs(3);
  rs[0].flagged = true;
  rs[1].cost = 2.0;
  rs[2].cost = 5.0;
  auto p = ev.penalized(rs);
  CHECK(p == std::vector<double>{50.0, 2.0, 5.0});
  rs[1].cost = 7.0;
  p = ev.penalized(rs);
  CHECK(p[0] == 70.0);

  DesignEvaluator fresh(setup.layout, setup.params, factory, setup.fitness, 1);
  std::vector<FitnessResult> bad(2);
  bad[0].flagged = bad[1].flagged = true;
  CHECK(fresh.penalized(bad) == std::vector<double>{1e6, 1e6});
}

TEST_CASE("DesignEvaluator is independent of the worker count") {
  const auto factory = surrogate_factory(bowl, 0.3);
  SurrogateSetup setup(factory);
  std::vector<morphology::DesignParams> designs{{0.7, 0.9}, {1.2, 1.3}, {1.0, 1.0}, {0.65, 1.35}};
  DesignEvaluator serial(setup.layout, setup.params, factory, setup.fitness, 4);
  WorkerPool pool(3);
  DesignEvaluator parallel(setup.layout, setup.params, factory, setup.fitness, 4, true, &pool);
  const auto a = serial.evaluate(designs, 2);
  const auto b = parallel.evaluate(designs, 2);
  for (std::size_t i = 0; i < designs.size(); ++i) CHECK(a[i].cost == b[i].cost);

  SUBCASE("common random numbers share the noise across candidates") {
    // Same design twice in one batch: identical with CRN, different without.
    const std::vector<morphology::DesignParams> twins{{0.9, 0.9}, {0.9, 0.9}};
    const auto crn = serial.evaluate(twins, 5);
    CHECK(crn[0].cost == crn[1].cost);
    DesignEvaluator independent(setup.layout, setup.params, factory, setup.fitness, 4, false);
    const auto ind = independent.evaluate(twins, 5);
    CHECK(ind[0].cost != ind[1].cost);
  }
}

TEST_CASE("CMA-ES benchmarks") {
  SUBCASE("sphere reaches the optimum value within 200 n evaluations") {
    for (int n : {2, 4}) {
      std::vector<double> xs(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j) xs[j] = 0.3 + 0.1 * j;
      CmaSettings s;
      s.mean.assign(xs.size(), 0.0);
      s.sigma = 0.5;
      s.generations = 100000;
      s.max_evaluations = 200 * n;
      s.seed = 1;
      const auto r = cmaes_run([&](const auto& pts, int) { return sphere(pts, xs); }, s);
      CHECK(r.evaluations <= 200 * n);
      CHECK(r.best_fitness <= 1e-6);
      CHECK(r.covariance_resets == 0);
    }
  }
  SUBCASE("Rosenbrock") {
    CmaSettings s;
    s.mean = {-1.0, 1.0};
    s.sigma = 0.5;
    s.generations = 100000;
    s.max_evaluations = 5000;
    const auto r = cmaes_run(
        [](const auto& pts, int) {
          std::vector<double> f;
          for (const auto& x : pts) f.push_back(100 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1 - x[0], 2));
          return f;
        },
        s);
    CHECK(r.best_fitness <= 1e-4);
  }
  SUBCASE("rank invariance under f -> 2 f + 3") {
    const std::vector<double> xs{0.2, -0.4, 0.1};
    CmaSettings s;
    s.mean = {1.0, 1.0, 1.0};
    s.generations = 25;
    s.seed = 8;
    const auto a = cmaes_run([&](const auto& pts, int) { return sphere(pts, xs); }, s);
    const auto b = cmaes_run(
        [&](const auto& pts, int) {
          auto f = sphere(pts, xs);
          for (double& v : f) v = 2.0 * v + 3.0;
          return f;
        },
        s);
    REQUIRE(a.generations.size() == b.generations.size());
    for (std::size_t g = 0; g < a.generations.size(); ++g) {
      for (std::size_t i = 0; i < a.generations[g].candidates.size(); ++i) {
        CHECK(a.generations[g].candidates[i].sampled == b.generations[g].candidates[i].sampled);
      }
    }
    CHECK(a.final_state.mean == b.final_state.mean);
  }
  SUBCASE("generation count, bound repair and monotone best-so-far") {
    CmaSettings s;
    s.mean = {0.5, 0.5};
    s.sigma = 0.8;
    s.bounds = {{0.0, 1.0}, {0.0, 1.0}};
    s.generations = 0;
    const auto init = cmaes_run([&](const auto& pts, int) { return sphere(pts, {2.0, 2.0}); }, s);
    CHECK(init.generations.size() == 1);
    CHECK(init.evaluations == s.lambda());

    s.generations = 80;
    const auto r = cmaes_run([&](const auto& pts, int) { return sphere(pts, {2.0, 2.0}); }, s);
    CHECK(r.generations.size() == 81);
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& g : r.generations) {
      CHECK(g.best_fitness <= prev);
      prev = g.best_fitness;
      for (const auto& c : g.candidates) {
        for (double v : c.evaluated) CHECK((v >= 0.0 && v <= 1.0));
        double pen = 0.0;
        for (std::size_t j = 0; j < 2; ++j) pen += std::pow(c.sampled[j] - c.evaluated[j], 2);
        CHECK(c.fitness == doctest::Approx(c.objective + 1e3 * pen));
      }
    }
    // The constrained optimum is the corner.
    CHECK(r.best_point[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.best_point[1] == doctest::Approx(1.0).epsilon(1e-3));
  }
  SUBCASE("covariance stays SPD or is reset") {
    // Rank-deficient objective: only x0 matters, so C grows highly anisotropic.
    CmaSettings s;
    s.mean = {3.0, -2.0, 1.0, 0.5};
    s.generations = 150;
    const auto r = cmaes_run(
        [](const auto& pts, int) {
          std::vector<double> f;
          for (const auto& x : pts) f.push_back(x[0] * x[0]);
          return f;
        },
        s);
    const Eigen::LLT<Eigen::MatrixXd> llt(r.final_state.cov);
    CHECK(llt.info() == Eigen::Success);
    CHECK(r.final_state.sigma > 0.0);
  }
  SUBCASE("invalid settings") {
    CmaSettings s;
    CHECK_THROWS_AS(cmaes_run([](const auto& p, int) { return std::vector<double>(p.size()); }, s), ConfigError);
    s.mean = {0.0, 0.0};
    s.population = 1;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.population = 0;
    s.bounds = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(s.validate(), ConfigError);
  }
}

TEST_CASE("cost maps") {
  GridSpec grid;
  SUBCASE("constant fitness: 144 cells, first-cell argmin") {
    int calls = 0;
    const auto map = cost_map(grid, [&](const auto& cells) {
      calls += static_cast<int>(cells.size());
      return std::vector<double>(cells.size(), 3.0);
    });
    CHECK(calls == 144);
    CHECK(map.argmin_row == 0);
    CHECK(map.argmin_col == 0);
  }
  SUBCASE("interior minimum lies in the argmin cell") {
    const auto map = cost_map(grid, [](const auto& cells) {
      std::vector<double> v;
      for (const auto& d : cells) v.push_back(bowl(d));
      return v;
    });
    const double w = 0.8 / 12;
    CHECK(std::abs(grid.thigh_center(map.argmin_row) - 0.83) <= 0.5 * w);
    CHECK(std::abs(grid.shank_center(map.argmin_col) - 1.17) <= 0.5 * w);
  }
  SUBCASE("failed cells are marked and skipped") {
    const auto map = cost_map(grid, [](const auto& cells) {
      std::vector<double> v(cells.size(), 1.0);
      v[0] = std::numeric_limits<double>::quiet_NaN();
      v[5] = 0.5;
      return v;
    });
    CHECK(map.failed(0, 0));
    CHECK(map.argmin_row == 0);
    CHECK(map.argmin_col == 5);
  }
  SUBCASE("CSV round trip") {
    grid.resolution = 5;
    std::mt19937_64 rng(2);
    const auto map = cost_map(grid, [&](const auto& cells) {
      std::vector<double> v;
      for (std::size_t i = 0; i < cells.size(); ++i) v.push_back(std::uniform_real_distribution<double>(0, 1)(rng));
      v[3] = std::numeric_limits<double>::quiet_NaN();
      return v;
    });
    std::stringstream ss;
    write_cost_map_csv(ss, map);
    const auto text = ss.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 26);
    const auto back = read_cost_map_csv(ss);
    REQUIRE(back.cost.rows() == 5);
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        if (map.failed(i, j)) {
          CHECK(back.failed(i, j));
        } else {
          CHECK(back.cost(i, j) == map.cost(i, j));
        }
      }
    }
    CHECK(back.argmin_row == map.argmin_row);
    CHECK(back.argmin_col == map.argmin_col);
    std::stringstream bad("x,y,z\n");
    CHECK_THROWS_AS(read_cost_map_csv(bad), ConfigError);
  }
}

TEST_CASE("design optimization on the surrogate") {
  const auto factory = surrogate_factory(bowl, 0.0);
  SurrogateSetup setup(factory);
  OptimizeSettings s;
  s.fitness = setup.fitness;
  s.generations = 15;
  s.population = 8;
  s.seed = 3;
  const morphology::DesignParams nominal{1.0, 1.0};
  const auto report = optimize_design(setup.layout, setup.params, factory, nominal, s);
  CHECK(report.generations.size() == 16);
  CHECK(report.evaluations == 16 * 8);
  double prev = std::numeric_limits<double>::infinity();
  for (const auto& g : report.generations) {
    CHECK(g.candidates.size() == 8);
    CHECK(g.best_cost <= prev);
    prev = g.best_cost;
  }
  CHECK(std::abs(report.best_design.thigh_scale - 0.83) < 0.8 / 12);
  CHECK(std::abs(report.best_design.shank_scale - 1.17) < 0.8 / 12);
  REQUIRE(report.improvement_percent.has_value());
  CHECK(*report.improvement_percent ==
        doctest::Approx((bowl(nominal) - bowl(report.best_design)) / bowl(nominal) * 100.0).epsilon(1e-9));

  const auto j = report_to_json(report);
  CHECK(j["generations"].size() == 16);
  CHECK(j["schema"] == "morphopt.optimization_report/1");
  std::stringstream csv;
  write_generation_csv(csv, report);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "generation,best_cost,mean_cost,best_design_0,best_design_1");

  SUBCASE("zero generations keep only the initial population") {
    s.generations = 0;
    const auto r0 = optimize_design(setup.layout, setup.params, factory, nominal, s);
    CHECK(r0.generations.size() == 1);
    CHECK(r0.evaluations == 8);
  }
  SUBCASE("improvement percent") {
    CHECK(*improvement_percent(10.0, 6.0) == doctest::Approx(40.0));
    CHECK_FALSE(improvement_percent(0.0, 1.0).has_value());
    CHECK_FALSE(improvement_percent(std::nan(""), 1.0).has_value());
  }
}
