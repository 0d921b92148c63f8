#pragma once

#include "crisp/types.hpp"

namespace crisp {

// Euler convention used everywhere in this library:
//
//   R = Rz(psi) * Ry(theta) * Rx(phi)
//
// i.e. Z-Y-X (yaw-pitch-roll). Imported pose data must use the same
// convention or every angle in the results will be wrong. Pose covariances
// are interpreted in the global frame over [x y z phi theta psi].

/// Rotation matrix from roll/pitch/yaw, R = Rz(psi)*Ry(theta)*Rx(phi).
Eigen::Matrix3d rotation_zyx(double phi, double theta, double psi);

/// Inverse of rotation_zyx. At gimbal lock (|cos(theta)| < 1e-6) the split
/// between roll and yaw is ambiguous; roll is set to 0 by convention.
void euler_from_rotation(const Eigen::Matrix3d& R, double& phi, double& theta,
                         double& psi);

/// Homogeneous transform of an egomotion pose. The scale factor multiplies
/// the translation only; the rotation block is scale-free.
Transform pose_to_transform(const Pose& pose, double scale);

/// Rigid lidar-to-camera transform T_{C,L} built from the calibration
/// parameters. The scale s is deliberately NOT applied here: it belongs to
/// the camera-to-global transform (see pose_to_transform).
Transform calib_to_transform(const CalibParams& params);

/// Recover the 6-DOF part of a rigid transform as CalibParams (s = 1, since
/// scale is not encoded in T_{C,L}).
CalibParams transform_to_calib(const Transform& T);

/// True if T is a valid rigid transform: R'R = I and det R = 1 within tol,
/// bottom row (0,0,0,1).
bool is_rigid_transform(const Transform& T, double tol = 1e-9);

/// Map a 2D lidar return into the global frame:
///   p_G = T_{G,C}(s) * T_{C,L} * [x y 0 1]'
Eigen::Vector3d lift_position(const Eigen::Vector2d& scan_point,
                              const Pose& pose, const CalibParams& params);

/// Same, with positions precomputed once per (pose, params):
/// p_G = R_pose * (R_cl * [x y 0]' + t_cl) + s * t_pose.
/// Exposed for hot loops that lift many points under one pose.
struct LiftCache {
  Eigen::Matrix3d rotation;     // R_pose * R_cl
  Eigen::Vector3d translation;  // R_pose * t_cl + s * t_pose
};
LiftCache make_lift_cache(const Pose& pose, const CalibParams& params);
inline Eigen::Vector3d lift_cached(const LiftCache& c,
                                   const Eigen::Vector2d& p) {
  return c.rotation.col(0) * p.x() + c.rotation.col(1) * p.y() +
         c.translation;
}

/// Symmetrize Q, clamp eigenvalues >= 0. Throws if Q is asymmetric beyond
/// 1e-12 or has an eigenvalue below -1e-12.
Matrix6d conditioned_pose_covariance(const Matrix6d& Q);

/// Covariance of a lifted point: Sigma = J Q J' where J is the 3x6 Jacobian
/// of lift_position w.r.t. the 6 pose parameters. The translation block is
/// s*I (the lift is linear in the pose translation, so this is exact); the
/// three angle columns use central finite differences with step
/// max(1e-6, 1e-6*|y_i|) per component. The result is symmetrized and
/// eigenvalue-clamped to PSD.
Eigen::Matrix3d propagate_covariance(const Eigen::Vector2d& scan_point,
                                     const Pose& pose,
                                     const CalibParams& params);

/// The 3x6 finite-difference Jacobian used by propagate_covariance.
Eigen::Matrix<double, 3, 6> lift_jacobian(const Eigen::Vector2d& scan_point,
                                          const Pose& pose,
                                          const CalibParams& params);

/// Full lift: position plus propagated covariance and provenance.
WorldPoint lift_point(const Eigen::Vector2d& scan_point, const Pose& pose,
                      const CalibParams& params);

/// Symmetrize a 3x3 matrix and clamp its eigenvalues to >= 0.
Eigen::Matrix3d clamp_psd(const Eigen::Matrix3d& A);

/// Largest eigenvalue of a symmetric 3x3 matrix.
double largest_eigenvalue(const Eigen::Matrix3d& A);

}  // namespace crisp
