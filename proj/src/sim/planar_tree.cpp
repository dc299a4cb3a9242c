#include "morphopt/sim/planar_tree.hpp"

#include <Eigen/Cholesky>
#include <array>
#include <cmath>

#include "morphopt/common/errors.hpp"

namespace morphopt::sim {

namespace {

Vec2 rotate(double angle, const Vec2& v) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

// omega x r for a scalar angular rate in the plane.
Vec2 spin(double omega, const Vec2& r) { return {-omega * r.y(), omega * r.x()}; }

double cross(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace

PlanarTree::PlanarTree(bool floating_base, std::vector<TreeBody> bodies, Vec2 fixed_origin)
    : floating_(floating_base), bodies_(std::move(bodies)), fixed_origin_(fixed_origin) {
  require(!bodies_.empty() && bodies_.size() <= kMaxBodies, "planar tree body count out of range");
  require(bodies_[0].parent == -1, "body 0 must be the base");
  for (std::size_t i = 1; i < bodies_.size(); ++i) {
    require(bodies_[i].parent >= 0 && static_cast<std::size_t>(bodies_[i].parent) < i,
            "bodies must be ordered parents-first");
  }
  dof_ = (floating_ ? 3 : 0) + static_cast<int>(bodies_.size()) - 1;
  require(dof_ <= kMaxDof && dof_ > 0, "planar tree dof out of range");
}

void PlanarTree::frames(const VecX& q, Frame* out) const {
  if (floating_) {
    out[0] = {Vec2(q[0], q[1]), q[2]};
  } else {
    out[0] = {fixed_origin_, 0.0};
  }
  for (int i = 1; i < body_count(); ++i) {
    const auto& b = bodies_[static_cast<std::size_t>(i)];
    const Frame& par = out[b.parent];
    out[i] = {par.p + rotate(par.angle, b.joint_offset), par.angle + q[joint_coordinate(i)]};
  }
}

double PlanarTree::body_angle(const VecX& q, int body) const {
  std::array<Frame, kMaxBodies> f;
  frames(q, f.data());
  return f[static_cast<std::size_t>(body)].angle;
}

Vec2 PlanarTree::point_position(const VecX& q, int body, const Vec2& local) const {
  std::array<Frame, kMaxBodies> f;
  frames(q, f.data());
  const Frame& fr = f[static_cast<std::size_t>(body)];
  return fr.p + rotate(fr.angle, local);
}

Jacobian PlanarTree::point_jacobian(const VecX& q, int body, const Vec2& local) const {
  std::array<Frame, kMaxBodies> f;
  frames(q, f.data());
  const Frame& fr = f[static_cast<std::size_t>(body)];
  const Vec2 p = fr.p + rotate(fr.angle, local);
  Jacobian J = Jacobian::Zero(2, dof_);
  for (int i = body; i > 0; i = bodies_[static_cast<std::size_t>(i)].parent) {
    J.col(joint_coordinate(i)) = spin(1.0, p - f[static_cast<std::size_t>(i)].p);
  }
  if (floating_) {
    J(0, 0) = 1.0;
    J(1, 1) = 1.0;
    J.col(2) = spin(1.0, p - f[0].p);
  }
  return J;
}

Vec2 PlanarTree::point_velocity(const VecX& q, const VecX& qd, int body, const Vec2& local) const {
  return point_jacobian(q, body, local) * qd;
}

VecX PlanarTree::inverse_dynamics(const VecX& q, const VecX& qd, const VecX& qdd,
                                  double gravity) const {
  const int nb = body_count();
  std::array<Frame, kMaxBodies> fr;
  std::array<double, kMaxBodies> omega{}, alpha{};
  std::array<Vec2, kMaxBodies> acc, force;
  std::array<double, kMaxBodies> moment{};
  const Vec2 g(0.0, -gravity);

  if (floating_) {
    fr[0] = {Vec2(q[0], q[1]), q[2]};
    omega[0] = qd[2];
    alpha[0] = qdd[2];
    acc[0] = Vec2(qdd[0], qdd[1]);
  } else {
    fr[0] = {fixed_origin_, 0.0};
    acc[0] = Vec2::Zero();
  }

  for (int i = 0; i < nb; ++i) {
    const auto& b = bodies_[static_cast<std::size_t>(i)];
    if (i > 0) {
      const int k = joint_coordinate(i);
      const Frame& par = fr[b.parent];
      const Vec2 r = rotate(par.angle, b.joint_offset);
      fr[i] = {par.p + r, par.angle + q[k]};
      acc[i] = acc[b.parent] + spin(alpha[b.parent], r) - omega[b.parent] * omega[b.parent] * r;
      omega[i] = omega[b.parent] + qd[k];
      alpha[i] = alpha[b.parent] + qdd[k];
    }
    if (i == 0 && !floating_) {
      force[0] = Vec2::Zero();
      moment[0] = 0.0;
      continue;
    }
    const Vec2 c = rotate(fr[i].angle, b.com);
    const Vec2 acc_com = acc[i] + spin(alpha[i], c) - omega[i] * omega[i] * c;
    force[i] = b.mass * (acc_com - g);
    moment[i] = b.inertia * alpha[i] + cross(c, force[i]);
  }

  VecX tau = VecX::Zero(dof_);
  for (int i = nb - 1; i > 0; --i) {
    const int par = bodies_[static_cast<std::size_t>(i)].parent;
    tau[joint_coordinate(i)] = moment[i];
    force[par] += force[i];
    moment[par] += moment[i] + cross(fr[i].p - fr[par].p, force[i]);
  }
  if (floating_) {
    tau[0] = force[0].x();
    tau[1] = force[0].y();
    tau[2] = moment[0];
  }
  return tau;
}

MatX PlanarTree::mass_matrix(const VecX& q) const {
  MatX M(dof_, dof_);
  const VecX zero = VecX::Zero(dof_);
  VecX unit = VecX::Zero(dof_);
  for (int k = 0; k < dof_; ++k) {
    unit[k] = 1.0;
    M.col(k) = inverse_dynamics(q, zero, unit, 0.0);
    unit[k] = 0.0;
  }
  // Symmetric by construction up to rounding; enforce it exactly.
  return 0.5 * (M + M.transpose());
}

VecX PlanarTree::bias_forces(const VecX& q, const VecX& qd, double gravity) const {
  return inverse_dynamics(q, qd, VecX::Zero(dof_), gravity);
}

VecX PlanarTree::forward_dynamics(const VecX& q, const VecX& qd, const VecX& tau,
                                  double gravity) const {
  const MatX M = mass_matrix(q);
  return M.ldlt().solve(tau - bias_forces(q, qd, gravity));
}

void semi_implicit_euler(const PlanarTree& tree, VecX& q, VecX& qd, const VecX& tau, double dt,
                         double gravity) {
  qd += dt * tree.forward_dynamics(q, qd, tau, gravity);
  q += dt * qd;
}

double PlanarTree::kinetic_energy(const VecX& q, const VecX& qd) const {
  double e = 0.0;
  for (int i = floating_ ? 0 : 1; i < body_count(); ++i) {
    const auto& b = bodies_[static_cast<std::size_t>(i)];
    const Vec2 v = point_velocity(q, qd, i, b.com);
    double w = floating_ ? qd[2] : 0.0;
    for (int j = i; j > 0; j = bodies_[static_cast<std::size_t>(j)].parent) w += qd[joint_coordinate(j)];
    e += 0.5 * b.mass * v.squaredNorm() + 0.5 * b.inertia * w * w;
  }
  return e;
}

double PlanarTree::potential_energy(const VecX& q, double gravity) const {
  double e = 0.0;
  for (int i = floating_ ? 0 : 1; i < body_count(); ++i) {
    const auto& b = bodies_[static_cast<std::size_t>(i)];
    e += b.mass * gravity * point_position(q, i, b.com).y();
  }
  return e;
}

}  // namespace morphopt::sim
