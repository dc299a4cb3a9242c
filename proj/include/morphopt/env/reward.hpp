#pragma once

#include <array>
#include <string>
#include <vector>

#include "morphopt/common/rng.hpp"
#include "morphopt/sim/quadruped.hpp"

namespace morphopt::env {

inline constexpr int kActionDim = 6;
using ActionVec = std::array<double, kActionDim>;

// Velocity command. The pitch-rate target is always zero in the plane but is
// kept so the tracking terms read the same as their spatial counterparts.
struct Command {
  double vx = 0.0;          // m/s, base frame
  double pitch_rate = 0.0;  // rad/s

  bool operator==(const Command&) const = default;
};

struct CommandRange {
  double lower = -1.0;
  double upper = 1.5;

  void validate() const;
};

Command sample_command(Rng& rng, const CommandRange& range);

// Everything the reward needs about one control step, already reduced to
// scalars. Velocities are base-frame.
struct RewardInput {
  Command command;
  double vx = 0.0;
  double vz = 0.0;
  double pitch_rate = 0.0;
  std::array<bool, 2> swing{};        // per foot, from the gait phase
  std::array<double, 2> clearance{};  // foot height above local terrain
  int nonfoot_contacts = 0;
  sim::JointArray target{};        // PD targets at t, t-1, t-2
  sim::JointArray target_prev{};
  sim::JointArray target_prev2{};
  ActionVec action{};  // clamped policy outputs at t and t-1
  ActionVec action_prev{};
  sim::JointArray torque{};
};

enum RewardTerm : int {
  kLinearVelocity = 0,
  kAngularVelocity,
  kLinearStability,
  kAngularStability,
  kFootMotion,
  kBodyCollision,
  kTargetSmoothness,
  kMotionSmoothness,
  kTorque,
  kRewardTermCount
};

using RewardTerms = std::array<double, kRewardTermCount>;

// Signed weights, so total = sum(weight * term).
inline constexpr RewardTerms kRewardWeights{0.5, 0.2, 0.1, 0.1, 0.005, -0.5, -0.05, -0.005, -0.001};

inline constexpr double kClearanceThreshold = 0.03;  // m

const std::vector<std::string>& reward_term_names();

struct Reward {
  double total = 0.0;
  RewardTerms terms{};
};

Reward compute_reward(const RewardInput& in);

// Per-step quantities from which every design cost is recomputed.
struct Diagnostics {
  double e_v = 0.0;             // |vx* - vx|
  double e_omega = 0.0;         // |w* - w|
  double torque_sq = 0.0;       // sum tau^2
  double positive_power = 0.0;  // sum max(qd * tau, 0)
  double weight = 1.0;          // min(exp(1.5 (e_v^2 + e_w^2)), 100)
  double speed = 0.0;           // |vx|, base frame
};

inline constexpr double kTrackingWeightClip = 100.0;

double tracking_weight(double e_v, double e_omega);

Diagnostics compute_diagnostics(const Command& command, double vx, double pitch_rate,
                                const sim::JointArray& joint_velocity,
                                const sim::JointArray& torque);

// Base-frame forward and normal velocity of a state.
double base_forward_velocity(const sim::SimState& s);
double base_normal_velocity(const sim::SimState& s);

}  // namespace morphopt::env
