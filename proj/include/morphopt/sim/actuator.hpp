#pragma once

namespace morphopt::sim {

// Geared motor with a linear torque-speed derating curve.
struct ActuatorSpec {
  double motor_stall_torque = 10.0;  // N*m at the motor
  double motor_no_load_speed = 96.0; // rad/s at the motor
  double gear = 8.0;

  double stall_torque() const { return gear * motor_stall_torque; }
  double no_load_speed() const { return motor_no_load_speed / gear; }
  void validate() const;

  bool operator==(const ActuatorSpec&) const = default;
};

// Clamps a commanded joint torque to what the actuator can deliver at the
// given joint speed. Torque opposing the motion is limited by the stall torque
// only; torque in the direction of motion derates linearly to zero at the
// no-load speed.
double actuator_torque(double commanded, double joint_velocity, const ActuatorSpec& spec);

}  // namespace morphopt::sim
