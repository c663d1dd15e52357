#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>

#include "mskteach/arm_model.hpp"

namespace msk {

template <typename Scalar>
using Vector3T = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Matrix3T = Eigen::Matrix<Scalar, 3, 3>;

/// Rigid transform x -> rotation * x + translation.
template <typename Scalar>
struct RigidTransform {
  Matrix3T<Scalar> rotation = Matrix3T<Scalar>::Identity();
  Vector3T<Scalar> translation = Vector3T<Scalar>::Zero();

  Vector3T<Scalar> operator*(const Vector3T<Scalar>& x) const { return rotation * x + translation; }
  RigidTransform operator*(const RigidTransform& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }
};

/// Rotation by `angle` about the unit vector `axis` (Rodrigues).
template <typename Scalar>
Matrix3T<Scalar> axis_rotation(const Vector3& axis, const Scalar& angle) {
  using std::cos;
  using std::sin;
  const Scalar c = cos(angle);
  const Scalar s = sin(angle);
  const Matrix3T<Scalar> a = axis.cast<Scalar>() * axis.transpose().cast<Scalar>();
  Matrix3T<Scalar> cross;
  cross << Scalar(0), Scalar(-axis.z()), Scalar(axis.y()),
           Scalar(axis.z()), Scalar(0), Scalar(-axis.x()),
           Scalar(-axis.y()), Scalar(axis.x()), Scalar(0);
  return Matrix3T<Scalar>::Identity() * c + cross * s + a * (Scalar(1) - c);
}

/// Transform of joint j's child body expressed in its parent body frame.
template <typename Scalar>
RigidTransform<Scalar> joint_transform(const Joint& joint, const Scalar& angle) {
  return {axis_rotation<Scalar>(joint.axis, angle), joint.offset.cast<Scalar>()};
}

/// Pose of `body` expressed in the frame of `reference` (reference <= body).
/// Only the joints between the two bodies enter the product, so derivatives
/// with respect to every other joint are exactly zero.
template <typename Scalar>
RigidTransform<Scalar> relative_pose(const ArmModel& model, const JointVectorT<Scalar>& q,
                                     int reference, int body) {
  RigidTransform<Scalar> pose;
  for (int j = reference + 1; j <= body; ++j) pose = pose * joint_transform(model.joints()[j], q(j));
  return pose;
}

/// World position of an anchor [m].
template <typename Scalar>
Vector3T<Scalar> anchor_position(const ArmModel& model, const JointVectorT<Scalar>& q,
                                 const Anchor& anchor) {
  return relative_pose(model, q, kBaseBody, anchor.body) * anchor.point.cast<Scalar>();
}

/// Polyline length of one muscle [mm]. Each segment is measured in the frame
/// of its proximal body.
template <typename Scalar>
Scalar muscle_path_length(const ArmModel& model, const JointVectorT<Scalar>& q, const Muscle& muscle) {
  Scalar length(0);
  for (std::size_t k = 0; k + 1 < muscle.path.size(); ++k) {
    const Anchor& a = muscle.path[k];
    const Anchor& b = muscle.path[k + 1];
    const int proximal = std::min(a.body, b.body);
    const Vector3T<Scalar> pa = relative_pose(model, q, proximal, a.body) * a.point.cast<Scalar>();
    const Vector3T<Scalar> pb = relative_pose(model, q, proximal, b.body) * b.point.cast<Scalar>();
    length += (pb - pa).norm();
  }
  return length * Scalar(1000);
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> chain_path_lengths(const ArmModel& model, const JointVectorT<Scalar>& q) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> lengths(model.muscle_count());
  for (int i = 0; i < model.muscle_count(); ++i) lengths(i) = muscle_path_length(model, q, model.muscles()[i]);
  return lengths;
}

/// Gravitational potential energy of the point masses [J].
template <typename Scalar>
Scalar gravity_potential(const ArmModel& model, const JointVectorT<Scalar>& q) {
  Scalar potential(0);
  for (const PointMass& m : model.masses()) {
    const Vector3T<Scalar> x = anchor_position(model, q, Anchor{m.body, m.point});
    potential -= Scalar(m.mass) * model.gravity().cast<Scalar>().dot(x);
  }
  return potential;
}

}  // namespace msk
