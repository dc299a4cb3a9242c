#include "morphopt/designopt/costs.hpp"

#include <numeric>

#include "morphopt/common/errors.hpp"

namespace morphopt::designopt {

std::string to_string(CostMetric metric) {
  switch (metric) {
    case CostMetric::velocity_tracking: return "velocity";
    case CostMetric::weighted_torque: return "torque";
    case CostMetric::weighted_power: return "power";
    case CostMetric::mcot: return "mcot";
  }
  return "unknown";
}

CostMetric metric_from_string(const std::string& name) {
  if (name == "velocity" || name == "velocity_tracking") return CostMetric::velocity_tracking;
  if (name == "torque" || name == "weighted_torque") return CostMetric::weighted_torque;
  if (name == "power" || name == "weighted_power") return CostMetric::weighted_power;
  if (name == "mcot") return CostMetric::mcot;
  throw ConfigError("unknown cost metric '" + name + "' (expected velocity, torque, power or mcot)");
}

double cost_velocity(std::span<const env::Diagnostics> steps) {
  double c = 0.0;
  for (const auto& d : steps) c += d.e_v * d.e_v + d.e_omega * d.e_omega;
  return c;
}

double cost_torque(std::span<const env::Diagnostics> steps) {
  double c = 0.0;
  for (const auto& d : steps) c += d.weight * d.torque_sq;
  return c;
}

double cost_power(std::span<const env::Diagnostics> steps) {
  double c = 0.0;
  for (const auto& d : steps) c += d.weight * d.positive_power;
  return c;
}

double mcot(std::span<const env::Diagnostics> steps, double total_mass) {
  if (!(total_mass > 0.0)) throw ConfigError("cost of transport needs a positive mass");
  if (steps.empty()) throw UndefinedMetric("cost of transport of an empty rollout");
  double power = 0.0, speed = 0.0;
  for (const auto& d : steps) {
    power += d.positive_power;
    speed += d.speed;
  }
  const auto n = static_cast<double>(steps.size());
  if (speed / n <= kMinMcotSpeed) throw UndefinedMetric("mean speed too low for cost of transport");
  return (power / n) / (total_mass * kGravity * (speed / n));
}

double mean_cost(CostMetric metric, std::span<const env::Diagnostics> steps, std::span<const double> masses) {
  require(!steps.empty(), "cost of an empty rollout");
  const auto n = static_cast<double>(steps.size());
  switch (metric) {
    case CostMetric::velocity_tracking: return cost_velocity(steps) / n;
    case CostMetric::weighted_torque: return cost_torque(steps) / n;
    case CostMetric::weighted_power: return cost_power(steps) / n;
    case CostMetric::mcot: {
      require(masses.size() == steps.size(), "one mass per step expected");
      return mcot(steps, std::accumulate(masses.begin(), masses.end(), 0.0) / n);
    }
  }
  return 0.0;
}

}  // namespace morphopt::designopt
