#include "morphopt/morphology/morphology.hpp"

#include <cmath>
#include <string>

#include "morphopt/common/errors.hpp"

namespace morphopt::morphology {

DesignSpace DesignSpace::links_only() { return DesignSpace{{{0.6, 1.4}, {0.6, 1.4}}}; }

DesignSpace DesignSpace::with_gears() {
  return DesignSpace{{{0.6, 1.4}, {0.6, 1.4}, {2.8, 12.0}, {2.8, 12.0}}};
}

void DesignSpace::validate() const {
  if (bounds.size() != 2 && bounds.size() != 4) {
    throw ConfigError("design space must have 2 or 4 dimensions, got " +
                      std::to_string(bounds.size()));
  }
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    const auto& b = bounds[i];
    if (!std::isfinite(b.lower) || !std::isfinite(b.upper) || b.lower > b.upper) {
      throw ConfigError("invalid bounds for design coordinate " + std::to_string(i));
    }
    if (!(b.lower > 0.0)) {
      throw ConfigError("design scales and gears must be positive");
    }
  }
}

std::vector<double> DesignParams::to_vector() const {
  std::vector<double> x{thigh_scale, shank_scale};
  if (hip_gear) {
    x.push_back(*hip_gear);
    x.push_back(knee_gear.value());
  }
  return x;
}

DesignParams DesignParams::from_vector(std::span<const double> x) {
  require(x.size() == 2 || x.size() == 4, "design vector must have 2 or 4 entries");
  DesignParams d;
  d.thigh_scale = x[0];
  d.shank_scale = x[1];
  if (x.size() == 4) {
    d.hip_gear = x[2];
    d.knee_gear = x[3];
  }
  return d;
}

void NominalSpec::validate() const {
  for (double v : {thigh_length, shank_length, thigh_mass, shank_mass, body_mass, body_length,
                   body_height, hip_gear, knee_gear, motor_stall_torque, motor_no_load_speed}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError("nominal lengths, masses, gears and motor constants must be positive");
    }
  }
}

LinkModel make_rod(double length, double mass) {
  return LinkModel{length, mass, 0.5 * length, mass * length * length / 12.0};
}

DesignParams nominal_design(const DesignSpace& space, const NominalSpec& nominal) {
  DesignParams d;
  if (space.has_gears()) {
    d.hip_gear = nominal.hip_gear;
    d.knee_gear = nominal.knee_gear;
  }
  return d;
}

DesignParams sample_design(Rng& rng, const DesignSpace& space) {
  space.validate();
  std::vector<double> x(space.dim());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& b = space.bounds[i];
    if (b.lower == b.upper) {
      x[i] = b.lower;
    } else {
      x[i] = std::uniform_real_distribution<double>(b.lower, b.upper)(rng);
    }
  }
  return DesignParams::from_vector(x);
}

RobotModel build_robot(const DesignParams& design, const NominalSpec& nominal) {
  RobotModel m;
  m.body_mass = nominal.body_mass;
  m.body_length = nominal.body_length;
  m.body_height = nominal.body_height;
  m.body_inertia = nominal.body_mass *
                   (nominal.body_length * nominal.body_length +
                    nominal.body_height * nominal.body_height) / 12.0;
  m.thigh = make_rod(design.thigh_scale * nominal.thigh_length,
                     design.thigh_scale * nominal.thigh_mass);
  m.shank = make_rod(design.shank_scale * nominal.shank_length,
                     design.shank_scale * nominal.shank_mass);
  m.hip = sim::ActuatorSpec{nominal.motor_stall_torque, nominal.motor_no_load_speed,
                            design.hip_gear.value_or(nominal.hip_gear)};
  m.knee = sim::ActuatorSpec{nominal.motor_stall_torque, nominal.motor_no_load_speed,
                             design.knee_gear.value_or(nominal.knee_gear)};
  return m;
}

bool within_bounds(const DesignParams& design, const DesignSpace& space) {
  const auto x = design.to_vector();
  if (x.size() != space.dim()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= space.bounds[i].lower && x[i] <= space.bounds[i].upper)) return false;
  }
  return true;
}

std::vector<double> design_to_features(const DesignParams& design, const DesignSpace& space) {
  const auto x = design.to_vector();
  require(x.size() == space.dim(), "design dimension does not match design space");
  std::vector<double> f(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& b = space.bounds[i];
    const double half = 0.5 * (b.upper - b.lower);
    f[i] = half > 0.0 ? (x[i] - b.lower) / half - 1.0 : 0.0;
  }
  return f;
}

DesignParams features_to_design(std::span<const double> features, const DesignSpace& space) {
  require(features.size() == space.dim(), "feature dimension does not match design space");
  std::vector<double> x(features.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto& b = space.bounds[i];
    x[i] = b.lower + (features[i] + 1.0) * 0.5 * (b.upper - b.lower);
  }
  return DesignParams::from_vector(x);
}

}  // namespace morphopt::morphology
