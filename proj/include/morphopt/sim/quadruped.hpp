#pragma once

#include <array>

#include "morphopt/morphology/morphology.hpp"
#include "morphopt/sim/contact.hpp"
#include "morphopt/sim/planar_tree.hpp"
#include "morphopt/terrain/terrain.hpp"

namespace morphopt::sim {

inline constexpr double kGravity = 9.81;

enum Joint : int { kFrontHip = 0, kFrontKnee = 1, kHindHip = 2, kHindKnee = 3 };
enum Leg : int { kFront = 0, kHind = 1 };

using JointArray = std::array<double, 4>;

// State of the sagittal-plane quadruped. Base quantities are in the world
// frame; pitch is counter-clockwise (nose up) positive.
struct SimState {
  double x = 0.0;
  double z = 0.0;
  double pitch = 0.0;
  double vx = 0.0;
  double vz = 0.0;
  double pitch_rate = 0.0;
  JointArray joint_angle{};
  JointArray joint_velocity{};
  std::array<bool, 2> foot_contact{};
  int nonfoot_contacts = 0;
  JointArray torque{};

  VecX positions() const;
  VecX velocities() const;
  void set(const VecX& q, const VecX& qd);

  bool operator==(const SimState&) const = default;
};

// Collision points: both feet, both knees, two bottom body corners.
enum ContactPoint : int {
  kFrontFoot = 0,
  kHindFoot = 1,
  kFrontKneePoint = 2,
  kHindKneePoint = 3,
  kFrontCorner = 4,
  kHindCorner = 5,
  kContactPointCount = 6
};

class QuadrupedSim {
 public:
  explicit QuadrupedSim(const morphology::RobotModel& model, ContactParams contact = {},
                        double gravity = kGravity);

  // Semi-implicit Euler step of the 7-DoF system. Torques are applied as
  // given (the caller is responsible for actuator limits). Throws
  // SimulationDiverged when the resulting state is not finite.
  SimState step(const SimState& state, const JointArray& torques,
                const terrain::Heightfield& field, double dt) const;

  Vec2 point_position(const SimState& state, ContactPoint point) const;
  Vec2 point_velocity(const SimState& state, ContactPoint point) const;

  // Recomputes contact flags from the penetration test at the current state.
  void update_contacts(SimState& state, const terrain::Heightfield& field) const;

  // Moves the base vertically so that the lowest foot touches the terrain.
  void seat_on_terrain(SimState& state, const terrain::Heightfield& field) const;

  double total_energy(const SimState& state) const;

  const PlanarTree& tree() const { return tree_; }
  const morphology::RobotModel& model() const { return model_; }
  const ContactParams& contact_params() const { return contact_; }
  double gravity() const { return gravity_; }

 private:
  struct Site {
    int body;
    Vec2 local;
  };
  static PlanarTree make_tree(const morphology::RobotModel& model);

  morphology::RobotModel model_;
  ContactParams contact_;
  double gravity_;
  PlanarTree tree_;
  std::array<Site, kContactPointCount> sites_;
};

// Convenience wrapper building the dynamics for one step.
SimState step(const SimState& state, const JointArray& torques,
              const morphology::RobotModel& model, const terrain::Heightfield& field, double dt,
              const ContactParams& contact = {});

}  // namespace morphopt::sim
