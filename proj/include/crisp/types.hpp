#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace crisp {

using Matrix6d = Eigen::Matrix<double, 6, 6>;
using Vector6d = Eigen::Matrix<double, 6, 1>;

/// Homogeneous 4x4 transform. Rotation block orthonormal, bottom row (0,0,0,1).
using Transform = Eigen::Matrix4d;

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a <= 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// The 7 similarity-transform parameters being estimated: the lidar's pose
/// in the egomotion-sensor frame plus the trajectory scale factor.
///
/// Angles are radians, roll/pitch/yaw with the Z-Y-X convention described in
/// geometry.hpp. The scale s is dimensionless and strictly positive; the
/// optimizer searches over log(s) so positivity holds by construction.
struct CalibParams {
  double x = 0.0;      // metres
  double y = 0.0;
  double z = 0.0;
  double phi = 0.0;    // roll, radians
  double theta = 0.0;  // pitch
  double psi = 0.0;    // yaw
  double s = 1.0;      // scale > 0

  bool finite() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(z) &&
           std::isfinite(phi) && std::isfinite(theta) && std::isfinite(psi) &&
           std::isfinite(s) && s > 0.0;
  }

  /// Copy with all angles wrapped to (-pi, pi].
  CalibParams normalized() const {
    CalibParams p = *this;
    p.phi = wrap_angle(p.phi);
    p.theta = wrap_angle(p.theta);
    p.psi = wrap_angle(p.psi);
    return p;
  }
};

/// Timestamped 6-DOF egomotion sample with covariance over
/// [x y z phi theta psi], expressed in the global frame.
struct Pose {
  double t = 0.0;      // seconds
  double x = 0.0;      // metres
  double y = 0.0;
  double z = 0.0;
  double phi = 0.0;    // roll, radians
  double theta = 0.0;  // pitch
  double psi = 0.0;    // yaw
  Matrix6d Q = Matrix6d::Zero();

  Vector6d vec() const {
    Vector6d v;
    v << x, y, z, phi, theta, psi;
    return v;
  }
  void set_vec(const Vector6d& v) {
    x = v[0]; y = v[1]; z = v[2];
    phi = v[3]; theta = v[4]; psi = v[5];
  }
};

/// One 2D lidar sweep: returns in the lidar x-y plane plus a validity mask
/// (false = miss or out-of-range reading, kept to preserve beam slots).
struct Scan {
  double t = 0.0;
  std::vector<Eigen::Vector2d> points;
  std::vector<std::uint8_t> valid;

  std::size_t size() const { return points.size(); }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += (v != 0);
    return n;
  }
};

/// A reconstructed 3D point in the global frame: one GMM centroid with its
/// propagated covariance and provenance (scan index k, beam index n).
struct WorldPoint {
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
  double t = 0.0;
  std::int32_t scan_index = -1;
  std::int32_t point_index = -1;
};

}  // namespace crisp
