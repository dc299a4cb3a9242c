#pragma once

#include <optional>
#include <span>
#include <vector>

#include "morphopt/common/rng.hpp"
#include "morphopt/sim/actuator.hpp"

namespace morphopt::morphology {

struct Bounds {
  double lower = 0.0;
  double upper = 0.0;
};

// Axis-aligned box of admissible designs. Coordinates are ordered
// (thigh_scale, shank_scale[, hip_gear, knee_gear]).
struct DesignSpace {
  std::vector<Bounds> bounds;

  static DesignSpace links_only();  // [0.6, 1.4]^2
  static DesignSpace with_gears();  // links plus gears in [2.8, 12.0]

  std::size_t dim() const { return bounds.size(); }
  bool has_gears() const { return bounds.size() == 4; }
  void validate() const;
};

struct DesignParams {
  double thigh_scale = 1.0;
  double shank_scale = 1.0;
  std::optional<double> hip_gear;
  std::optional<double> knee_gear;

  std::size_t dim() const { return hip_gear ? 4 : 2; }
  std::vector<double> to_vector() const;
  static DesignParams from_vector(std::span<const double> x);

  bool operator==(const DesignParams&) const = default;
};

// Nominal robot from which every design is derived by scaling. Values are
// configuration; the defaults describe a 24 kg planar quadruped.
struct NominalSpec {
  double thigh_length = 0.35;
  double shank_length = 0.35;
  double thigh_mass = 1.2;
  double shank_mass = 0.8;
  double body_mass = 20.0;
  double body_length = 0.6;
  double body_height = 0.15;
  double hip_gear = 5.6;
  double knee_gear = 8.0;
  double motor_stall_torque = 10.0;
  double motor_no_load_speed = 96.0;

  void validate() const;
};

struct LinkModel {
  double length = 0.0;
  double mass = 0.0;
  double com_offset = 0.0;  // distance from the proximal joint
  double inertia = 0.0;     // about the center of mass

  bool operator==(const LinkModel&) const = default;
};

struct RobotModel {
  double body_mass = 0.0;
  double body_length = 0.0;
  double body_height = 0.0;
  double body_inertia = 0.0;
  LinkModel thigh;  // shared by the front and hind leg
  LinkModel shank;
  sim::ActuatorSpec hip;
  sim::ActuatorSpec knee;

  double total_mass() const { return body_mass + 2.0 * (thigh.mass + shank.mass); }
  bool operator==(const RobotModel&) const = default;
};

// Rod of uniform density: center of mass at the midpoint.
LinkModel make_rod(double length, double mass);

DesignParams nominal_design(const DesignSpace& space, const NominalSpec& nominal);

DesignParams sample_design(Rng& rng, const DesignSpace& space);

RobotModel build_robot(const DesignParams& design, const NominalSpec& nominal);

bool within_bounds(const DesignParams& design, const DesignSpace& space);

// Affine map of each coordinate onto [-1, 1].
std::vector<double> design_to_features(const DesignParams& design, const DesignSpace& space);
DesignParams features_to_design(std::span<const double> features, const DesignSpace& space);

}  // namespace morphopt::morphology
