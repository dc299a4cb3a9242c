#include "morphopt/env/reward.hpp"

#include <algorithm>
#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::env {

void CommandRange::validate() const {
  if (!std::isfinite(lower) || !std::isfinite(upper) || lower > upper) {
    throw ConfigError("command range must be finite with lower <= upper");
  }
}

Command sample_command(Rng& rng, const CommandRange& range) {
  range.validate();
  if (range.lower == range.upper) return {range.lower, 0.0};
  std::uniform_real_distribution<double> u(range.lower, range.upper);
  return {u(rng), 0.0};
}

const std::vector<std::string>& reward_term_names() {
  static const std::vector<std::string> names{
      "linear_velocity",   "angular_velocity",   "linear_stability",
      "angular_stability", "foot_motion",        "body_collision",
      "target_smoothness", "motion_smoothness",  "torque"};
  return names;
}

Reward compute_reward(const RewardInput& in) {
  RewardTerms t{};
  const double ev = in.command.vx - in.vx;
  const double ew = in.command.pitch_rate - in.pitch_rate;
  t[kLinearVelocity] = std::exp(-1.5 * ev * ev);
  t[kAngularVelocity] = std::exp(-2.0 * ew * ew);
  t[kLinearStability] = std::exp(-1.5 * in.vz * in.vz);
  // No roll or yaw in the plane.
  t[kAngularStability] = 1.0;

  int swing = 0, cleared = 0;
  for (int f = 0; f < 2; ++f) {
    if (!in.swing[f]) continue;
    ++swing;
    if (in.clearance[f] >= kClearanceThreshold) ++cleared;
  }
  t[kFootMotion] = swing > 0 ? static_cast<double>(cleared) / swing : 0.0;
  t[kBodyCollision] = static_cast<double>(in.nonfoot_contacts);

  double ts = 0.0;
  for (int j = 0; j < 4; ++j) {
    const double d = in.target[j] - 2.0 * in.target_prev[j] + in.target_prev2[j];
    ts += d * d;
  }
  t[kTargetSmoothness] = std::sqrt(ts);

  double ms = 0.0;
  for (int k = 0; k < kActionDim; ++k) {
    const double d = in.action[k] - in.action_prev[k];
    ms += d * d;
  }
  t[kMotionSmoothness] = std::sqrt(ms);

  double tau = 0.0;
  for (double v : in.torque) tau += std::abs(v);
  t[kTorque] = tau;

  Reward r;
  r.terms = t;
  for (int k = 0; k < kRewardTermCount; ++k) r.total += kRewardWeights[k] * t[k];
  return r;
}

double tracking_weight(double e_v, double e_omega) {
  return std::min(std::exp(1.5 * (e_v * e_v + e_omega * e_omega)), kTrackingWeightClip);
}

Diagnostics compute_diagnostics(const Command& command, double vx, double pitch_rate,
                                const sim::JointArray& joint_velocity,
                                const sim::JointArray& torque) {
  Diagnostics d;
  d.e_v = std::abs(command.vx - vx);
  d.e_omega = std::abs(command.pitch_rate - pitch_rate);
  for (int j = 0; j < 4; ++j) {
    d.torque_sq += torque[j] * torque[j];
    d.positive_power += std::max(joint_velocity[j] * torque[j], 0.0);
  }
  d.weight = tracking_weight(d.e_v, d.e_omega);
  d.speed = std::abs(vx);
  return d;
}

double base_forward_velocity(const sim::SimState& s) {
  return std::cos(s.pitch) * s.vx + std::sin(s.pitch) * s.vz;
}

double base_normal_velocity(const sim::SimState& s) {
  return -std::sin(s.pitch) * s.vx + std::cos(s.pitch) * s.vz;
}

}  // namespace morphopt::env
