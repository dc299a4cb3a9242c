#pragma once

namespace morphopt::sim {

struct ContactParams {
  double normal_stiffness = 4e4;     // N/m
  double normal_damping = 400.0;     // N*s/m, acts only while approaching
  double tangential_damping = 2e3;   // N*s/m, regularized Coulomb friction

  void validate() const;
};

struct ContactForce {
  double normal = 0.0;
  double tangential = 0.0;
};

// Penalty contact at a single point. Normal velocity is positive when the
// point moves away from the surface.
ContactForce contact_force(double penetration, double tangential_velocity, double normal_velocity,
                           double mu, const ContactParams& params = {});

}  // namespace morphopt::sim
