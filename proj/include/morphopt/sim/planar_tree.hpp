#pragma once

#include <Eigen/Core>
#include <vector>

namespace morphopt::sim {

inline constexpr int kMaxDof = 16;
inline constexpr int kMaxBodies = 16;

using Vec2 = Eigen::Vector2d;
using VecX = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDof, 1>;
using MatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDof, kMaxDof>;
using Jacobian = Eigen::Matrix<double, 2, Eigen::Dynamic, 0, 2, kMaxDof>;

// Rigid body of a planar kinematic tree living in the (x, z) plane. Angles
// are counter-clockwise from +x towards +z. Each non-base body hangs from a
// revolute joint placed at joint_offset in its parent's frame; its own frame
// origin sits on that joint.
struct TreeBody {
  int parent = -1;
  Vec2 joint_offset = Vec2::Zero();
  double mass = 0.0;
  double inertia = 0.0;  // about the center of mass
  Vec2 com = Vec2::Zero();
};

// Generalized coordinates are (x, z, theta, q_1..q_n) with a floating base or
// (q_1..q_n) with the base welded to the world at (origin, angle 0). Body 0
// is the base; bodies must be ordered parents-first.
class PlanarTree {
 public:
  PlanarTree(bool floating_base, std::vector<TreeBody> bodies, Vec2 fixed_origin = Vec2::Zero());

  int dof() const { return dof_; }
  int body_count() const { return static_cast<int>(bodies_.size()); }
  bool floating_base() const { return floating_; }
  const TreeBody& body(int i) const { return bodies_[static_cast<std::size_t>(i)]; }

  // Index of the generalized coordinate driving body i's joint (i >= 1).
  int joint_coordinate(int body) const { return (floating_ ? 3 : 0) + body - 1; }

  Vec2 point_position(const VecX& q, int body, const Vec2& local) const;
  Vec2 point_velocity(const VecX& q, const VecX& qd, int body, const Vec2& local) const;
  Jacobian point_jacobian(const VecX& q, int body, const Vec2& local) const;
  double body_angle(const VecX& q, int body) const;

  // Recursive Newton-Euler: generalized forces producing qdd at (q, qd) under
  // gravity acceleration `gravity` along -z.
  VecX inverse_dynamics(const VecX& q, const VecX& qd, const VecX& qdd, double gravity) const;
  // Columns assembled from unit-acceleration inverse dynamics.
  MatX mass_matrix(const VecX& q) const;
  VecX bias_forces(const VecX& q, const VecX& qd, double gravity) const;
  // Accelerations under applied generalized forces tau.
  VecX forward_dynamics(const VecX& q, const VecX& qd, const VecX& tau, double gravity) const;

  double kinetic_energy(const VecX& q, const VecX& qd) const;
  double potential_energy(const VecX& q, double gravity) const;

 private:
  struct Frame {
    Vec2 p;
    double angle;
  };
  void frames(const VecX& q, Frame* out) const;

  bool floating_;
  std::vector<TreeBody> bodies_;
  Vec2 fixed_origin_;
  int dof_;
};

// One semi-implicit (symplectic) Euler step: velocities first, then
// positions with the updated velocities.
void semi_implicit_euler(const PlanarTree& tree, VecX& q, VecX& qd, const VecX& tau, double dt,
                         double gravity);

}  // namespace morphopt::sim
