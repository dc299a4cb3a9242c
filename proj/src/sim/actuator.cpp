#include "morphopt/sim/actuator.hpp"

#include <algorithm>
#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::sim {

void ActuatorSpec::validate() const {
  if (!(motor_stall_torque > 0.0) || !(motor_no_load_speed > 0.0) || !(gear > 0.0)) {
    throw ConfigError("actuator constants and gear ratio must be positive");
  }
}

double actuator_torque(double commanded, double joint_velocity, const ActuatorSpec& spec) {
  const double stall = spec.stall_torque();
  const bool driving = commanded * joint_velocity > 0.0;
  double available = stall;
  if (driving) {
    available = stall * std::max(0.0, 1.0 - std::abs(joint_velocity) / spec.no_load_speed());
  }
  return std::clamp(commanded, -available, available);
}

}  // namespace morphopt::sim
