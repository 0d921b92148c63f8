#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "crisp/types.hpp"

namespace crisp {

// ---------------------------------------------------------------------------
// Scene primitives. All raycast-intersectable in closed form; none need to
// form a watertight mesh.

/// Finite rectangle: center plus two orthogonal unit in-plane axes and the
/// half extents along them.
struct PlanePatch {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d u_axis = Eigen::Vector3d::UnitX();
  Eigen::Vector3d v_axis = Eigen::Vector3d::UnitY();
  double half_u = 1.0;
  double half_v = 1.0;

  Eigen::Vector3d normal() const { return u_axis.cross(v_axis).normalized(); }
};

/// Finite cylinder, lateral surface only (no end caps).
struct Cylinder {
  Eigen::Vector3d base = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit
  double height = 1.0;
  double radius = 0.5;
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;
};

struct Triangle {
  Eigen::Vector3d a = Eigen::Vector3d::Zero();
  Eigen::Vector3d b = Eigen::Vector3d::UnitX();
  Eigen::Vector3d c = Eigen::Vector3d::UnitY();
};

struct Environment {
  std::string name;
  std::vector<PlanePatch> planes;
  std::vector<Cylinder> cylinders;
  std::vector<Sphere> spheres;
  std::vector<Triangle> triangles;

  std::size_t primitive_count() const {
    return planes.size() + cylinders.size() + spheres.size() +
           triangles.size();
  }
};

/// Named scenes: simple_room (closed 10x8x3 m box, x in [-5,5], y in [-4,4],
/// z in [0,3]), parking_lot (the room plus pillar cylinders), plane_city
/// (ground plane plus varied building facades), quadratic_forest (ground
/// plane plus sphere-on-cylinder trees only), triangle_array (free-floating
/// triangles only). Unknown names are an error.
Environment build_environment(const std::string& name);

// Ray intersections: distance along the unit direction to the nearest hit
// with positive distance, or +infinity if the ray misses.
double intersect_plane(const PlanePatch& plane, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir);
double intersect_cylinder(const Cylinder& cyl, const Eigen::Vector3d& origin,
                          const Eigen::Vector3d& dir);
double intersect_sphere(const Sphere& sphere, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& dir);
double intersect_triangle(const Triangle& tri, const Eigen::Vector3d& origin,
                          const Eigen::Vector3d& dir);
double raycast(const Environment& env, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir);

/// Distance from a point to the nearest primitive surface.
double clearance(const Environment& env, const Eigen::Vector3d& point);

// ---------------------------------------------------------------------------
// Trajectories.

struct Sinusoid {
  double amplitude = 0.0;
  double frequency = 0.0;  // Hz
  double phase = 0.0;      // radians

  double eval(double t) const {
    return amplitude * std::sin(2.0 * kPi * frequency * t + phase);
  }
};

/// Sum-of-sinusoids offsets around a base pose for each of the 6 DOF, in the
/// order x, y, z, phi, theta, psi.
struct TrajectorySpec {
  double duration = 50.0;  // seconds
  Pose base;
  std::array<std::vector<Sinusoid>, 6> motion;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Default motion for the built-in scenes: distinct amplitude, frequency and
/// phase per DOF, staying well inside the simple room.
TrajectorySpec default_trajectory_spec(double duration = 50.0);

/// Randomized variant: every amplitude scaled by U[0.5, 1.5), frequencies
/// redrawn from U[0.05, 0.4) Hz, phases from U[0, 2pi). Deterministic in
/// the seed, which is also stored in the returned spec.
TrajectorySpec randomize_trajectory(const TrajectorySpec& base,
                                    std::uint64_t seed);

/// Poses sampled at t_k = k/rate for k = 0 .. round(duration*rate)-1, with
/// ground-truth covariance Q = 0.
std::vector<Pose> generate_trajectory(const TrajectorySpec& spec, double rate);

/// Throws if any of the given points comes closer than margin to a surface.
void check_clearance(const Environment& env,
                     const std::vector<Eigen::Vector3d>& points,
                     double margin);

// ---------------------------------------------------------------------------
// Lidar.

struct LidarModel {
  double rate = 40.0;                     // Hz
  double fov = deg_to_rad(240.0);         // radians
  double resolution = deg_to_rad(0.25);   // radians per beam step
  double range_min = 0.1;                 // metres
  double range_max = 80.0;                // metres

  int beam_count() const {
    return static_cast<int>(std::llround(fov / resolution)) + 1;
  }
  void validate() const;
};

/// One ray per beam across the FOV in the lidar's x-y plane, beam i at angle
/// -fov/2 + i*resolution. Nearest hit; misses and hits outside
/// [range_min, range_max] are marked invalid with a zero point. The returned
/// scan has t = 0 (the caller owns timestamps).
Scan raycast_scan(const Environment& env, const Transform& lidar_pose,
                  const LidarModel& model);

// ---------------------------------------------------------------------------
// Noise.

struct NoiseModel {
  double trans_std = 0.05;              // metres, per pose translation axis
  double rot_std = deg_to_rad(1.0);     // radians, per pose Euler angle
  double range_std = 0.05;              // metres, along each beam
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// I.i.d. Gaussian perturbations, deterministic in rng_seed. Draw order is
/// fixed: for each pose in order x, y, z, phi, theta, psi; then for each
/// scan one draw per valid return in beam order (range noise pushes the
/// point along its beam). Q on every output pose is set to
/// diag(trans_std^2 x3, rot_std^2 x3).
std::pair<std::vector<Pose>, std::vector<Scan>> apply_noise(
    const std::vector<Pose>& poses, const std::vector<Scan>& scans,
    const NoiseModel& noise);

// ---------------------------------------------------------------------------
// Dataset assembly.

/// Default ground-truth extrinsic for simulations: a deliberately non-trivial
/// offset so that no parameter sits at a symmetric identity.
CalibParams default_true_params();

struct Dataset {
  std::vector<Pose> poses;       // reported egomotion: noisy, translation/s
  std::vector<Scan> scans;       // noisy scans; timestamps shifted by true_td
  std::vector<Pose> true_poses;  // noiseless metric trajectory, Q = 0
  CalibParams true_params;
  double true_td = 0.0;          // seconds
};

/// Closed-loop dataset: raycasts the lidar (mounted on the trajectory via
/// calib_to_transform(true_params)) through the environment, then applies
/// noise and the scale ambiguity, and finally shifts every scan timestamp
/// by +td. Reported poses are expressed in the egomotion sensor's own frame,
/// the way a visual-SLAM map frame is anchored to the trajectory rather than
/// to the surveyed environment: origin at spec.base, world-aligned axes,
/// translations divided by true_params.s. true_poses stay in the
/// environment frame.
Dataset make_dataset(const Environment& env, const TrajectorySpec& spec,
                     const LidarModel& lidar, const NoiseModel& noise,
                     const CalibParams& true_params, double td = 0.0);

}  // namespace crisp
