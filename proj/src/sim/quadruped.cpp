#include "morphopt/sim/quadruped.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>

#include "morphopt/common/errors.hpp"

namespace morphopt::sim {

namespace {

// Fraction of the single-contact deadbeat limit used when capping contact
// gains. Several simultaneous contacts can add up, so stay below one.
constexpr double kCapFactor = 0.5;

}  // namespace

VecX SimState::positions() const {
  VecX q(7);
  q << x, z, pitch, joint_angle[0], joint_angle[1], joint_angle[2], joint_angle[3];
  return q;
}

VecX SimState::velocities() const {
  VecX qd(7);
  qd << vx, vz, pitch_rate, joint_velocity[0], joint_velocity[1], joint_velocity[2],
      joint_velocity[3];
  return qd;
}

void SimState::set(const VecX& q, const VecX& qd) {
  x = q[0];
  z = q[1];
  pitch = q[2];
  vx = qd[0];
  vz = qd[1];
  pitch_rate = qd[2];
  for (int j = 0; j < 4; ++j) {
    joint_angle[static_cast<std::size_t>(j)] = q[3 + j];
    joint_velocity[static_cast<std::size_t>(j)] = qd[3 + j];
  }
}

PlanarTree QuadrupedSim::make_tree(const morphology::RobotModel& m) {
  const double half = 0.5 * m.body_length;
  const auto link = [](int parent, Vec2 joint, const morphology::LinkModel& l) {
    return TreeBody{parent, joint, l.mass, l.inertia, Vec2(0.0, -l.com_offset)};
  };
  std::vector<TreeBody> bodies{
      TreeBody{-1, Vec2::Zero(), m.body_mass, m.body_inertia, Vec2::Zero()},
      link(0, Vec2(half, 0.0), m.thigh),
      link(1, Vec2(0.0, -m.thigh.length), m.shank),
      link(0, Vec2(-half, 0.0), m.thigh),
      link(3, Vec2(0.0, -m.thigh.length), m.shank),
  };
  return PlanarTree(true, std::move(bodies));
}

QuadrupedSim::QuadrupedSim(const morphology::RobotModel& model, ContactParams contact,
                           double gravity)
    : model_(model), contact_(contact), gravity_(gravity), tree_(make_tree(model)) {
  const double half = 0.5 * model.body_length;
  const double bottom = -0.5 * model.body_height;
  sites_ = {Site{2, Vec2(0.0, -model.shank.length)}, Site{4, Vec2(0.0, -model.shank.length)},
            Site{1, Vec2(0.0, -model.thigh.length)}, Site{3, Vec2(0.0, -model.thigh.length)},
            Site{0, Vec2(half, bottom)},               Site{0, Vec2(-half, bottom)}};
}

Vec2 QuadrupedSim::point_position(const SimState& state, ContactPoint point) const {
  const auto& s = sites_[static_cast<std::size_t>(point)];
  return tree_.point_position(state.positions(), s.body, s.local);
}

Vec2 QuadrupedSim::point_velocity(const SimState& state, ContactPoint point) const {
  const auto& s = sites_[static_cast<std::size_t>(point)];
  return tree_.point_velocity(state.positions(), state.velocities(), s.body, s.local);
}

void QuadrupedSim::update_contacts(SimState& state, const terrain::Heightfield& field) const {
  const VecX q = state.positions();
  state.nonfoot_contacts = 0;
  for (int i = 0; i < kContactPointCount; ++i) {
    const auto& s = sites_[static_cast<std::size_t>(i)];
    const Vec2 p = tree_.point_position(q, s.body, s.local);
    const bool touching = field.height_at(p.x()) - p.y() >= 0.0;
    if (i < 2) {
      state.foot_contact[static_cast<std::size_t>(i)] = touching;
    } else if (touching) {
      ++state.nonfoot_contacts;
    }
  }
}

void QuadrupedSim::seat_on_terrain(SimState& state, const terrain::Heightfield& field) const {
  double lift = -std::numeric_limits<double>::infinity();
  for (ContactPoint foot : {kFrontFoot, kHindFoot}) {
    const Vec2 p = point_position(state, foot);
    lift = std::max(lift, field.height_at(p.x()) - p.y());
  }
  state.z += lift;
  update_contacts(state, field);
}

double QuadrupedSim::total_energy(const SimState& state) const {
  const VecX q = state.positions();
  return tree_.kinetic_energy(q, state.velocities()) + tree_.potential_energy(q, gravity_);
}

SimState QuadrupedSim::step(const SimState& state, const JointArray& torques,
                            const terrain::Heightfield& field, double dt) const {
  require(dt > 0.0, "time step must be positive");
  const VecX q = state.positions();
  const VecX qd = state.velocities();

  VecX generalized = VecX::Zero(7);
  for (int j = 0; j < 4; ++j) generalized[3 + j] = torques[static_cast<std::size_t>(j)];

  const MatX M = tree_.mass_matrix(q);
  const Eigen::LDLT<MatX> mass_ldlt(M);
  const double mu = field.mu();
  for (const auto& s : sites_) {
    const Vec2 p = tree_.point_position(q, s.body, s.local);
    const double h = field.height_at(p.x());
    if (h - p.y() <= 0.0) continue;
    const Jacobian J = tree_.point_jacobian(q, s.body, s.local);
    const double slope = field.slope_at(p.x());
    const double inv = 1.0 / std::sqrt(1.0 + slope * slope);
    const Vec2 normal(-slope * inv, inv);
    const Vec2 tangent(inv, slope * inv);
    const Vec2 v = J * qd;

    // Effective masses seen by this contact alone. Damping and stiffness are
    // capped below the point where the explicit update would overshoot within
    // one step.
    const VecX jn = J.transpose() * normal;
    const VecX jt = J.transpose() * tangent;
    const double mass_n = 1.0 / jn.dot(mass_ldlt.solve(jn));
    const double mass_t = 1.0 / jt.dot(mass_ldlt.solve(jt));
    ContactParams local = contact_;
    local.normal_stiffness = std::min(contact_.normal_stiffness, kCapFactor * mass_n / (dt * dt));
    local.normal_damping = std::min(contact_.normal_damping, kCapFactor * mass_n / dt);
    local.tangential_damping = std::min(contact_.tangential_damping, kCapFactor * mass_t / dt);

    const ContactForce f =
        contact_force((h - p.y()) * inv, v.dot(tangent), v.dot(normal), mu, local);
    generalized.noalias() += f.normal * jn + f.tangential * jt;
  }

  const VecX qdd = mass_ldlt.solve(generalized - tree_.bias_forces(q, qd, gravity_));
  const VecX qd_next = qd + dt * qdd;
  const VecX q_next = q + dt * qd_next;

  SimState next = state;
  next.set(q_next, qd_next);
  next.torque = torques;
  if (!q_next.allFinite() || !qd_next.allFinite()) {
    throw SimulationDiverged("non-finite simulation state");
  }
  update_contacts(next, field);
  return next;
}

SimState step(const SimState& state, const JointArray& torques,
              const morphology::RobotModel& model, const terrain::Heightfield& field, double dt,
              const ContactParams& contact) {
  return QuadrupedSim(model, contact).step(state, torques, field, dt);
}

}  // namespace morphopt::sim
