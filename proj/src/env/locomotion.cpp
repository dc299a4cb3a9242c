#include "morphopt/env/locomotion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "morphopt/common/errors.hpp"
#include "morphopt/sim/actuator.hpp"

namespace morphopt::env {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPitchRateScale = 0.25;
constexpr double kJointVelocityScale = 0.1;
constexpr double kScanScale = 5.0;

}  // namespace

void EnvConfig::validate() const {
  const auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(dt) || substeps < 1 || max_steps < 1) {
    throw ConfigError("env: dt, substeps and max_steps must be positive");
  }
  if (!positive(kp) || !(kd >= 0.0) || !positive(joint_action_scale) ||
      !(freq_action_scale >= 0.0) || !positive(base_frequency)) {
    throw ConfigError("env: PD gains and action scales must be positive");
  }
  if (base_frequency - freq_action_scale < 0.0) {
    throw ConfigError("env: gait frequency could become negative");
  }
  if (!positive(nominal_knee) || nominal_knee >= std::numbers::pi) {
    throw ConfigError("env: nominal knee angle must lie in (0, pi)");
  }
  if (!(init_joint_noise >= 0.0) || !positive(fall_height) || !positive(fall_pitch)) {
    throw ConfigError("env: invalid reset or termination parameters");
  }
  for (double o : scan_offsets) {
    if (!std::isfinite(o)) throw ConfigError("env: scan offsets must be finite");
  }
  command_range.validate();
  contact.validate();
  nominal.validate();
  space.validate();
}

sim::JointArray standing_pose(const morphology::RobotModel& model, double knee) {
  const double lt = model.thigh.length;
  const double ls = model.shank.length;
  const double hip = std::atan2(ls * std::sin(knee), lt + ls * std::cos(knee));
  return {-hip, knee, hip, -knee};
}

LocomotionEnv::LocomotionEnv(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
  obs_.assign(static_cast<std::size_t>(observation_dim()), 0.0);
}

int LocomotionEnv::observation_dim() const {
  return ObservationLayout::size(static_cast<int>(config_.scan_offsets.size()),
                                 static_cast<int>(config_.space.dim()));
}

double LocomotionEnv::total_mass() const {
  require(sim_.has_value(), "environment was never reset");
  return sim_->model().total_mass();
}

const std::vector<double>& LocomotionEnv::reset(const EpisodeSpec& spec) {
  if (spec.design.dim() != config_.space.dim() ||
      !morphology::within_bounds(spec.design, config_.space)) {
    throw ConfigError("env: design outside the configured design space");
  }
  spec_ = spec;
  sim_.emplace(morphology::build_robot(spec.design, config_.nominal), config_.contact);
  field_.emplace(terrain::generate(spec.terrain, derive_seed(spec.seed, {streams::kTerrain})));
  design_features_ = morphology::design_to_features(spec.design, config_.space);
  nominal_pose_ = standing_pose(sim_->model(), config_.nominal_knee);

  Rng rng = make_rng(derive_seed(spec.seed, {streams::kInit}));
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  state_ = sim::SimState{};
  for (int j = 0; j < 4; ++j) {
    state_.joint_angle[j] = nominal_pose_[j] + config_.init_joint_noise * noise(rng);
  }
  sim_->seat_on_terrain(state_, *field_);

  phase_ = {0.0, std::numbers::pi};
  frequency_ = {config_.base_frequency, config_.base_frequency};
  targets_.fill(nominal_pose_);
  actions_ = {};
  steps_ = 0;
  needs_reset_ = false;
  assemble_observation();
  return obs_;
}

void LocomotionEnv::set_state(const sim::SimState& state) {
  require(sim_.has_value(), "environment was never reset");
  state_ = state;
  sim_->update_contacts(state_, *field_);
  assemble_observation();
}

double LocomotionEnv::foot_clearance(int foot) const {
  const sim::Vec2 p = sim_->point_position(state_, static_cast<sim::ContactPoint>(foot));
  return p.y() - field_->height_at(p.x());
}

double LocomotionEnv::base_clearance() const { return state_.z - field_->height_at(state_.x); }

bool LocomotionEnv::fallen() const {
  return base_clearance() < config_.fall_height || std::abs(state_.pitch) > config_.fall_pitch;
}

StepResult LocomotionEnv::step(std::span<const double> action) {
  require(!needs_reset_, "step called on a finished episode");
  require(action.size() == kActionDim, "action width mismatch");

  ActionVec u;
  for (int k = 0; k < kActionDim; ++k) {
    require(std::isfinite(action[k]), "non-finite action");
    u[k] = std::clamp(action[k], -1.0, 1.0);
  }
  sim::JointArray target;
  for (int j = 0; j < 4; ++j) target[j] = nominal_pose_[j] + config_.joint_action_scale * u[j];
  for (int f = 0; f < 2; ++f) {
    frequency_[f] = config_.base_frequency + config_.freq_action_scale * u[4 + f];
    phase_[f] = std::fmod(phase_[f] + kTwoPi * frequency_[f] * config_.control_dt(), kTwoPi);
  }

  StepResult result;
  const auto& model = sim_->model();
  try {
    for (int s = 0; s < config_.substeps; ++s) {
      sim::JointArray torque;
      for (int j = 0; j < 4; ++j) {
        const double cmd = config_.kp * (target[j] - state_.joint_angle[j]) -
                           config_.kd * state_.joint_velocity[j];
        const auto& spec = (j == sim::kFrontHip || j == sim::kHindHip) ? model.hip : model.knee;
        torque[j] = sim::actuator_torque(cmd, state_.joint_velocity[j], spec);
      }
      state_ = sim_->step(state_, torque, *field_, config_.dt);
    }
  } catch (const SimulationDiverged&) {
    result.done = true;
    result.diverged = true;
    needs_reset_ = true;
    return result;
  }

  targets_ = {target, targets_[0], targets_[1]};
  actions_ = {u, actions_[0]};
  ++steps_;

  RewardInput in;
  in.command = spec_.command;
  in.vx = base_forward_velocity(state_);
  in.vz = base_normal_velocity(state_);
  in.pitch_rate = state_.pitch_rate;
  for (int f = 0; f < 2; ++f) {
    in.swing[f] = std::sin(phase_[f]) > 0.0;
    in.clearance[f] = foot_clearance(f);
  }
  in.nonfoot_contacts = state_.nonfoot_contacts;
  in.target = targets_[0];
  in.target_prev = targets_[1];
  in.target_prev2 = targets_[2];
  in.action = actions_[0];
  in.action_prev = actions_[1];
  in.torque = state_.torque;
  const Reward r = compute_reward(in);
  result.reward = r.total;
  result.terms = r.terms;
  result.diagnostics =
      compute_diagnostics(spec_.command, in.vx, state_.pitch_rate, state_.joint_velocity, state_.torque);

  if (fallen()) {
    result.done = true;
  } else if (steps_ >= config_.max_steps) {
    result.done = true;
    result.truncated = true;
  }
  needs_reset_ = result.done;
  assemble_observation();
  return result;
}

void LocomotionEnv::assemble_observation() {
  std::size_t i = 0;
  const auto put = [&](double v) { obs_[i++] = std::clamp(v, -kObservationClip, kObservationClip); };
  put(spec_.command.vx);
  put(base_forward_velocity(state_));
  put(base_normal_velocity(state_));
  put(state_.pitch);
  put(kPitchRateScale * state_.pitch_rate);
  for (int j = 0; j < 4; ++j) put(state_.joint_angle[j] - nominal_pose_[j]);
  for (int j = 0; j < 4; ++j) put(kJointVelocityScale * state_.joint_velocity[j]);
  for (int f = 0; f < 2; ++f) {
    put(std::sin(phase_[f]));
    put(std::cos(phase_[f]));
  }
  for (int f = 0; f < 2; ++f) put(frequency_[f] - config_.base_frequency);
  for (const auto& a : actions_) {
    for (double v : a) put(v);
  }
  for (int f = 0; f < 2; ++f) put(state_.foot_contact[f] ? 1.0 : 0.0);
  put(state_.nonfoot_contacts > 0 ? 1.0 : 0.0);
  for (int f = 0; f < 2; ++f) {
    const sim::Vec2 p = sim_->point_position(state_, static_cast<sim::ContactPoint>(f));
    for (double h : field_->height_scan(p.x(), config_.scan_offsets)) put(kScanScale * h);
  }
  put(field_->mu());
  for (double v : design_features_) put(v);
}

}  // namespace morphopt::env
