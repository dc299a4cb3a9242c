#pragma once

#include <span>
#include <string>

#include "morphopt/env/reward.hpp"

namespace morphopt::designopt {

enum class CostMetric { velocity_tracking, weighted_torque, weighted_power, mcot };

// Short names: velocity, torque, power, mcot.
std::string to_string(CostMetric metric);
CostMetric metric_from_string(const std::string& name);

inline constexpr double kGravity = 9.81;
inline constexpr double kMinMcotSpeed = 0.01;  // m/s

// Sums over a rollout of per-step diagnostics.
double cost_velocity(std::span<const env::Diagnostics> steps);
double cost_torque(std::span<const env::Diagnostics> steps);
double cost_power(std::span<const env::Diagnostics> steps);

// Mean positive mechanical power over m g times mean speed. Throws
// UndefinedMetric when the mean speed is at most 0.01 m/s.
double mcot(std::span<const env::Diagnostics> steps, double total_mass);

// Per-transition fitness of a batch of steps: the sum costs divided by the
// step count, MCOT as is with the mean of the per-step masses.
double mean_cost(CostMetric metric, std::span<const env::Diagnostics> steps, std::span<const double> masses);

}  // namespace morphopt::designopt
