#include "morphopt/sim/contact.hpp"

#include <algorithm>
#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::sim {

void ContactParams::validate() const {
  if (!(normal_stiffness > 0.0) || normal_damping < 0.0 || tangential_damping < 0.0) {
    throw ConfigError("contact stiffness must be positive and damping non-negative");
  }
}

ContactForce contact_force(double penetration, double tangential_velocity, double normal_velocity,
                           double mu, const ContactParams& params) {
  if (!(penetration > 0.0)) return {};
  double normal = params.normal_stiffness * penetration +
                  params.normal_damping * std::max(0.0, -normal_velocity);
  normal = std::max(0.0, normal);
  const double limit = mu * normal;
  const double tangential =
      -std::clamp(params.tangential_damping * tangential_velocity, -limit, limit);
  return {normal, tangential};
}

}  // namespace morphopt::sim
