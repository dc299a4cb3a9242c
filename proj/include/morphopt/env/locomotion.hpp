#pragma once

#include <array>
#include <optional>
#include <vector>

#include "morphopt/env/environment.hpp"
#include "morphopt/sim/quadruped.hpp"

namespace morphopt::env {

struct EnvConfig {
  double dt = 2.5e-3;  // physics step, s
  int substeps = 8;    // physics steps per control step
  int max_steps = 500;
  double kp = 150.0;  // N*m/rad
  double kd = 1.0;    // N*m*s/rad
  double joint_action_scale = 0.6;  // rad per unit action
  double freq_action_scale = 1.0;   // Hz per unit action
  double base_frequency = 1.25;     // Hz
  double init_joint_noise = 0.05;   // rad, uniform half-width
  double fall_height = 0.18;        // m above local terrain
  double fall_pitch = 1.2;          // rad
  double nominal_knee = 1.0;  // rad, front knee; the hind knee mirrors it
  std::vector<double> scan_offsets{-0.2, -0.1, 0.1, 0.2, 0.3};
  CommandRange command_range;
  sim::ContactParams contact;
  morphology::NominalSpec nominal;
  morphology::DesignSpace space = morphology::DesignSpace::links_only();

  double control_dt() const { return dt * substeps; }
  void validate() const;
};

// Observation slot widths, in order.
struct ObservationLayout {
  static constexpr int kCommand = 1;
  static constexpr int kBaseVelocity = 2;
  static constexpr int kPitch = 2;
  static constexpr int kJointAngle = 4;
  static constexpr int kJointVelocity = 4;
  static constexpr int kPhase = 4;
  static constexpr int kFrequency = 2;
  static constexpr int kActionHistory = 2 * kActionDim;
  static constexpr int kFootContact = 2;
  static constexpr int kNonFootContact = 1;
  static constexpr int kFriction = 1;

  static int size(int scan_points_per_foot, int design_dim) {
    return kCommand + kBaseVelocity + kPitch + kJointAngle + kJointVelocity + kPhase + kFrequency +
           kActionHistory + kFootContact + kNonFootContact + 2 * scan_points_per_foot + kFriction +
           design_dim;
  }
};

inline constexpr double kObservationClip = 10.0;

// Standing pose of a robot: knees bent by +-knee and hips chosen so each foot
// sits directly below its hip. Equal links give (-knee/2, knee, knee/2, -knee).
sim::JointArray standing_pose(const morphology::RobotModel& model, double knee);

// Sagittal-plane quadruped on a generated terrain. Actions are residual PD
// targets around the nominal pose (4) and per-leg gait-frequency offsets (2),
// each clamped to [-1, 1] before scaling.
class LocomotionEnv final : public Environment {
 public:
  explicit LocomotionEnv(EnvConfig config);

  int observation_dim() const override;
  int action_dim() const override { return kActionDim; }
  const std::vector<double>& reset(const EpisodeSpec& spec) override;
  StepResult step(std::span<const double> action) override;
  const std::vector<double>& observation() const override { return obs_; }
  double total_mass() const override;

  const EnvConfig& config() const { return config_; }
  const sim::SimState& state() const { return state_; }
  const terrain::Heightfield& field() const { return *field_; }
  const sim::QuadrupedSim& simulator() const { return *sim_; }
  const EpisodeSpec& episode() const { return spec_; }
  const sim::JointArray& nominal_pose() const { return nominal_pose_; }
  const std::array<double, 2>& phases() const { return phase_; }
  const std::array<double, 2>& frequencies() const { return frequency_; }
  // PD targets of the last three control steps, newest first.
  const std::array<sim::JointArray, 3>& target_history() const { return targets_; }
  // Clamped actions of the last two control steps, newest first.
  const std::array<ActionVec, 2>& action_history() const { return actions_; }
  int steps_taken() const { return steps_; }

  // Foot height above the terrain directly below it.
  double foot_clearance(int foot) const;
  // Base height above the terrain directly below it.
  double base_clearance() const;
  bool fallen() const;

  // Replaces the current state; used to construct test situations.
  void set_state(const sim::SimState& state);

 private:
  void assemble_observation();

  EnvConfig config_;
  EpisodeSpec spec_;
  std::optional<sim::QuadrupedSim> sim_;
  std::optional<terrain::Heightfield> field_;
  std::vector<double> design_features_;
  sim::JointArray nominal_pose_{};
  sim::SimState state_;
  std::array<double, 2> phase_{};
  std::array<double, 2> frequency_{};
  std::array<sim::JointArray, 3> targets_{};
  std::array<ActionVec, 2> actions_{};
  std::vector<double> obs_;
  int steps_ = 0;
  bool needs_reset_ = true;
};

}  // namespace morphopt::env
