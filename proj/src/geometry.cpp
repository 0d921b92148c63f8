#include "crisp/geometry.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>

namespace crisp {

namespace {

void require_finite(const CalibParams& p, const char* who) {
  if (!p.finite()) {
    throw std::invalid_argument(std::string(who) +
                                ": non-finite calibration parameters");
  }
}

}  // namespace

Eigen::Matrix3d rotation_zyx(double phi, double theta, double psi) {
  const double cf = std::cos(phi), sf = std::sin(phi);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double cp = std::cos(psi), sp = std::sin(psi);
  Eigen::Matrix3d R;
  R << cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf,
       sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf,
       -st,     ct * sf,                ct * cf;
  return R;
}

void euler_from_rotation(const Eigen::Matrix3d& R, double& phi, double& theta,
                         double& psi) {
  const double st = -R(2, 0);
  theta = std::asin(std::clamp(st, -1.0, 1.0));
  if (std::abs(std::cos(theta)) < 1e-6) {
    // Gimbal lock: only phi+psi (or phi-psi) observable. Fix phi = 0.
    phi = 0.0;
    psi = std::atan2(-R(0, 1), R(1, 1));
  } else {
    phi = std::atan2(R(2, 1), R(2, 2));
    psi = std::atan2(R(1, 0), R(0, 0));
  }
}

Transform pose_to_transform(const Pose& pose, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw std::invalid_argument("pose_to_transform: scale must be finite and > 0");
  }
  if (!pose.vec().allFinite()) {
    throw std::invalid_argument("pose_to_transform: non-finite pose");
  }
  Transform T = Transform::Identity();
  T.topLeftCorner<3, 3>() = rotation_zyx(pose.phi, pose.theta, pose.psi);
  T.topRightCorner<3, 1>() =
      scale * Eigen::Vector3d(pose.x, pose.y, pose.z);
  return T;
}

Transform calib_to_transform(const CalibParams& params) {
  require_finite(params, "calib_to_transform");
  Transform T = Transform::Identity();
  T.topLeftCorner<3, 3>() = rotation_zyx(params.phi, params.theta, params.psi);
  T.topRightCorner<3, 1>() = Eigen::Vector3d(params.x, params.y, params.z);
  return T;
}

CalibParams transform_to_calib(const Transform& T) {
  if (!is_rigid_transform(T)) {
    throw std::invalid_argument("transform_to_calib: not a rigid transform");
  }
  CalibParams p;
  p.x = T(0, 3);
  p.y = T(1, 3);
  p.z = T(2, 3);
  euler_from_rotation(T.topLeftCorner<3, 3>(), p.phi, p.theta, p.psi);
  p.s = 1.0;
  return p;
}

bool is_rigid_transform(const Transform& T, double tol) {
  if (!T.allFinite()) return false;
  const Eigen::Matrix3d R = T.topLeftCorner<3, 3>();
  if ((R.transpose() * R - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() >
      tol) {
    return false;
  }
  if (std::abs(R.determinant() - 1.0) > tol) return false;
  return T(3, 0) == 0.0 && T(3, 1) == 0.0 && T(3, 2) == 0.0 && T(3, 3) == 1.0;
}

LiftCache make_lift_cache(const Pose& pose, const CalibParams& params) {
  const Eigen::Matrix3d r_pose =
      rotation_zyx(pose.phi, pose.theta, pose.psi);
  const Eigen::Matrix3d r_cl =
      rotation_zyx(params.phi, params.theta, params.psi);
  LiftCache c;
  c.rotation = r_pose * r_cl;
  c.translation = r_pose * Eigen::Vector3d(params.x, params.y, params.z) +
                  params.s * Eigen::Vector3d(pose.x, pose.y, pose.z);
  return c;
}

Eigen::Vector3d lift_position(const Eigen::Vector2d& scan_point,
                              const Pose& pose, const CalibParams& params) {
  if (!scan_point.allFinite()) {
    throw std::invalid_argument("lift_position: non-finite scan point");
  }
  require_finite(params, "lift_position");
  if (!pose.vec().allFinite()) {
    throw std::invalid_argument("lift_position: non-finite pose");
  }
  return lift_cached(make_lift_cache(pose, params), scan_point);
}

Matrix6d conditioned_pose_covariance(const Matrix6d& Q) {
  if (!Q.allFinite()) {
    throw std::invalid_argument("pose covariance has non-finite entries");
  }
  if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("pose covariance asymmetric beyond 1e-12");
  }
  const Matrix6d sym = 0.5 * (Q + Q.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix6d> eig(sym);
  if (eig.eigenvalues().minCoeff() < -1e-12) {
    throw std::invalid_argument("pose covariance not PSD (eigenvalue < -1e-12)");
  }
  Vector6d clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() *
         eig.eigenvectors().transpose();
}

Eigen::Matrix<double, 3, 6> lift_jacobian(const Eigen::Vector2d& scan_point,
                                          const Pose& pose,
                                          const CalibParams& params) {
  Eigen::Matrix<double, 3, 6> J;
  // The pose translation enters the lift linearly (position = s * t_pose +
  // R_pose * v), so its block is s * I exactly; finite differences would only
  // add rounding noise there. The angle columns use central differences with
  // step h = max(1e-6, 1e-6 * |y_i|).
  J.leftCols<3>() = params.s * Eigen::Matrix3d::Identity();
  const Vector6d y = pose.vec();
  for (int i = 3; i < 6; ++i) {
    const double h = std::max(1e-6, 1e-6 * std::abs(y[i]));
    Pose lo = pose, hi = pose;
    Vector6d ylo = y, yhi = y;
    ylo[i] -= h;
    yhi[i] += h;
    lo.set_vec(ylo);
    hi.set_vec(yhi);
    J.col(i) = (lift_position(scan_point, hi, params) -
                lift_position(scan_point, lo, params)) /
               (2.0 * h);
  }
  return J;
}

Eigen::Matrix3d clamp_psd(const Eigen::Matrix3d& A) {
  const Eigen::Matrix3d sym = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  eig.computeDirect(sym);
  if (eig.eigenvalues().minCoeff() >= 0.0) return sym;
  const Eigen::Vector3d clamped = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * clamped.asDiagonal() *
         eig.eigenvectors().transpose();
}

double largest_eigenvalue(const Eigen::Matrix3d& A) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig;
  eig.computeDirect(A, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().maxCoeff();
}

Eigen::Matrix3d propagate_covariance(const Eigen::Vector2d& scan_point,
                                     const Pose& pose,
                                     const CalibParams& params) {
  const Matrix6d Q = conditioned_pose_covariance(pose.Q);
  if (Q.isZero(0.0)) return Eigen::Matrix3d::Zero();
  const Eigen::Matrix<double, 3, 6> J =
      lift_jacobian(scan_point, pose, params);
  return clamp_psd(J * Q * J.transpose());
}

WorldPoint lift_point(const Eigen::Vector2d& scan_point, const Pose& pose,
                      const CalibParams& params) {
  WorldPoint w;
  w.position = lift_position(scan_point, pose, params);
  w.sigma = propagate_covariance(scan_point, pose, params);
  w.t = pose.t;
  return w;
}

}  // namespace crisp
