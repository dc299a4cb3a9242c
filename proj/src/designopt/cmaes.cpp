#include "morphopt/designopt/cmaes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "morphopt/common/errors.hpp"
#include "morphopt/common/rng.hpp"

namespace morphopt::designopt {

void CmaSettings::validate() const {
  if (mean.empty()) throw ConfigError("CMA-ES needs an initial mean");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("initial CMA step size must be positive");
  if (!bounds.empty() && bounds.size() != mean.size()) throw ConfigError("bounds/mean dimension mismatch");
  for (const auto& b : bounds) {
    if (!(b.lower < b.upper)) throw ConfigError("CMA bounds must satisfy lower < upper");
  }
  if (generations < 0) throw ConfigError("generations must be non-negative");
  if (population != 0 && population < 2) throw ConfigError("population must be at least 2");
  if (!(penalty_weight >= 0.0)) throw ConfigError("penalty weight must be non-negative");
  if (max_evaluations < 0) throw ConfigError("evaluation budget must be non-negative");
}

int CmaSettings::lambda() const {
  if (population > 0) return population;
  return 4 + static_cast<int>(std::floor(3.0 * std::log(static_cast<double>(mean.size()))));
}

namespace {

struct Constants {
  int n = 0, lambda = 0, mu = 0;
  Eigen::VectorXd weights;
  double mueff = 0.0, cc = 0.0, cs = 0.0, c1 = 0.0, cmu = 0.0, damps = 0.0, chi_n = 0.0;
};

Constants constants(int n, int lambda) {
  Constants k;
  k.n = n;
  k.lambda = lambda;
  k.mu = lambda / 2;
  k.weights.resize(k.mu);
  for (int i = 0; i < k.mu; ++i) k.weights[i] = std::log(k.mu + 0.5) - std::log(i + 1.0);
  k.weights /= k.weights.sum();
  k.mueff = 1.0 / k.weights.squaredNorm();
  const double nd = n;
  k.cc = (4.0 + k.mueff / nd) / (nd + 4.0 + 2.0 * k.mueff / nd);
  k.cs = (k.mueff + 2.0) / (nd + k.mueff + 5.0);
  k.c1 = 2.0 / ((nd + 1.3) * (nd + 1.3) + k.mueff);
  k.cmu = std::min(1.0 - k.c1, 2.0 * (k.mueff - 2.0 + 1.0 / k.mueff) / ((nd + 2.0) * (nd + 2.0) + k.mueff));
  k.damps = 1.0 + 2.0 * std::max(0.0, std::sqrt((k.mueff - 1.0) / (nd + 1.0)) - 1.0) + k.cs;
  k.chi_n = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));
  return k;
}

// Refreshes the eigendecomposition. Returns false (and resets the
// covariance to the identity) when the matrix is not SPD.
bool decompose(CmaState& s) {
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  const Eigen::LLT<Eigen::MatrixXd> llt(s.cov);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.cov);
  const bool ok = s.cov.allFinite() && llt.info() == Eigen::Success && eig.info() == Eigen::Success &&
                  eig.eigenvalues().minCoeff() > 0.0;
  if (!ok) {
    const auto n = s.mean.size();
    s.cov = Eigen::MatrixXd::Identity(n, n);
    s.basis = Eigen::MatrixXd::Identity(n, n);
    s.scale = Eigen::VectorXd::Ones(n);
    return false;
  }
  s.basis = eig.eigenvectors();
  s.scale = eig.eigenvalues().cwiseSqrt();
  return true;
}

}  // namespace

CmaResult cmaes_run(const BatchFitness& fitness, const CmaSettings& settings) {
  settings.validate();
  const int n = static_cast<int>(settings.mean.size());
  const Constants k = constants(n, settings.lambda());

  CmaResult out;
  CmaState& s = out.final_state;
  s.mean = Eigen::Map<const Eigen::VectorXd>(settings.mean.data(), n);
  s.sigma = settings.sigma;
  s.cov = Eigen::MatrixXd::Identity(n, n);
  s.path_sigma = Eigen::VectorXd::Zero(n);
  s.path_c = Eigen::VectorXd::Zero(n);
  s.population = k.lambda;
  decompose(s);

  Rng rng(derive_seed(settings.seed, {streams::kCma}));
  out.best_fitness = std::numeric_limits<double>::infinity();

  for (int g = 0; g <= settings.generations; ++g) {
    if (settings.max_evaluations > 0 && out.evaluations + k.lambda > settings.max_evaluations) break;
    s.generation = g;
    GenerationRecord rec;
    rec.generation = g;
    rec.mean.assign(s.mean.data(), s.mean.data() + n);
    rec.sigma = s.sigma;

    Eigen::MatrixXd xs(n, k.lambda);
    std::vector<std::vector<double>> points(static_cast<std::size_t>(k.lambda));
    std::vector<double> penalty(static_cast<std::size_t>(k.lambda), 0.0);
    for (int i = 0; i < k.lambda; ++i) {
      Eigen::VectorXd z(n);
      for (int j = 0; j < n; ++j) z[j] = std::normal_distribution<double>(0.0, 1.0)(rng);
      xs.col(i) = s.mean + s.sigma * (s.basis * s.scale.cwiseProduct(z));
      std::vector<double> p(xs.col(i).data(), xs.col(i).data() + n);
      if (!settings.bounds.empty()) {
        for (int j = 0; j < n; ++j) {
          const double c = std::clamp(p[j], settings.bounds[j].lower, settings.bounds[j].upper);
          penalty[i] += (p[j] - c) * (p[j] - c);
          p[j] = c;
        }
        penalty[i] *= settings.penalty_weight;
      }
      points[i] = std::move(p);
    }

    const std::vector<double> values = fitness(points, g);
    require(values.size() == points.size(), "fitness returned the wrong number of values");
    out.evaluations += k.lambda;
    std::vector<double> f(values.size());
    double total = 0.0;
    for (int i = 0; i < k.lambda; ++i) {
      f[i] = std::isnan(values[i]) ? std::numeric_limits<double>::infinity() : values[i] + penalty[i];
      total += f[i];
      CandidateRecord c;
      c.sampled.assign(xs.col(i).data(), xs.col(i).data() + n);
      c.evaluated = points[i];
      c.objective = values[i];
      c.fitness = f[i];
      rec.candidates.push_back(std::move(c));
      if (f[i] < out.best_fitness) {
        out.best_fitness = f[i];
        out.best_point = points[i];
      }
    }
    rec.mean_fitness = total / k.lambda;
    rec.best_fitness = out.best_fitness;
    rec.best_point = out.best_point;
    out.generations.push_back(std::move(rec));
    if (g == settings.generations) break;

    std::vector<int> order(static_cast<std::size_t>(k.lambda));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return f[a] < f[b]; });

    const Eigen::VectorXd old_mean = s.mean;
    Eigen::MatrixXd ys(n, k.mu);
    for (int i = 0; i < k.mu; ++i) ys.col(i) = (xs.col(order[i]) - old_mean) / s.sigma;
    const Eigen::VectorXd yw = ys * k.weights;
    s.mean = old_mean + s.sigma * yw;

    // C^{-1/2} y_w through the eigenbasis.
    const Eigen::VectorXd inv_sqrt_yw = s.basis * (s.basis.transpose() * yw).cwiseQuotient(s.scale);
    s.path_sigma = (1.0 - k.cs) * s.path_sigma + std::sqrt(k.cs * (2.0 - k.cs) * k.mueff) * inv_sqrt_yw;
    const double ps_norm = s.path_sigma.norm();
    const double decay = 1.0 - std::pow(1.0 - k.cs, 2.0 * (g + 1));
    const bool hsig = ps_norm / std::sqrt(decay) / k.chi_n < 1.4 + 2.0 / (n + 1.0);
    s.path_c = (1.0 - k.cc) * s.path_c + (hsig ? std::sqrt(k.cc * (2.0 - k.cc) * k.mueff) : 0.0) * yw;

    Eigen::MatrixXd rank_mu = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < k.mu; ++i) rank_mu += k.weights[i] * ys.col(i) * ys.col(i).transpose();
    const double lost = hsig ? 0.0 : k.cc * (2.0 - k.cc);
    s.cov = (1.0 - k.c1 - k.cmu) * s.cov + k.c1 * (s.path_c * s.path_c.transpose() + lost * s.cov) + k.cmu * rank_mu;
    s.sigma *= std::exp((k.cs / k.damps) * (ps_norm / k.chi_n - 1.0));
    if (!(s.sigma > 0.0) || !std::isfinite(s.sigma)) throw ContractViolation("CMA step size left (0, inf)");
    if (!decompose(s)) ++out.covariance_resets;
  }
  return out;
}

}  // namespace morphopt::designopt
