#include "crisp/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "crisp/geometry.hpp"
#include "crisp/parallel.hpp"

namespace crisp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double uniform_in(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

// Box-Muller, one deviate per pair of uniforms, portable across platforms.
double gaussian(std::mt19937_64& gen) {
  const double u1 = 1.0 - uniform01(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

}  // namespace

// ---------------------------------------------------------------------------
// Environments.

namespace {

PlanePatch make_patch(const Eigen::Vector3d& center, const Eigen::Vector3d& u,
                      double half_u, const Eigen::Vector3d& v, double half_v) {
  PlanePatch p;
  p.center = center;
  p.u_axis = u.normalized();
  p.v_axis = v.normalized();
  p.half_u = half_u;
  p.half_v = half_v;
  return p;
}

void add_room(Environment& env, double hx, double hy, double zlo, double zhi) {
  using V = Eigen::Vector3d;
  const double zc = 0.5 * (zlo + zhi);
  const double hz = 0.5 * (zhi - zlo);
  env.planes.push_back(make_patch({0, 0, zlo}, V::UnitX(), hx, V::UnitY(), hy));
  env.planes.push_back(make_patch({0, 0, zhi}, V::UnitX(), hx, V::UnitY(), hy));
  env.planes.push_back(
      make_patch({-hx, 0, zc}, V::UnitY(), hy, V::UnitZ(), hz));
  env.planes.push_back(make_patch({hx, 0, zc}, V::UnitY(), hy, V::UnitZ(), hz));
  env.planes.push_back(
      make_patch({0, -hy, zc}, V::UnitX(), hx, V::UnitZ(), hz));
  env.planes.push_back(make_patch({0, hy, zc}, V::UnitX(), hx, V::UnitZ(), hz));
}

Eigen::Vector3d yawed(double yaw, double x, double y, double z) {
  return {std::cos(yaw) * x - std::sin(yaw) * y,
          std::sin(yaw) * x + std::cos(yaw) * y, z};
}

}  // namespace

Environment build_environment(const std::string& name) {
  using V = Eigen::Vector3d;
  Environment env;
  env.name = name;
  if (name == "simple_room") {
    add_room(env, 5.0, 4.0, 0.0, 3.0);
  } else if (name == "parking_lot") {
    add_room(env, 5.0, 4.0, 0.0, 3.0);
    const double pillar[6][2] = {{-3.0, -2.2}, {-3.0, 2.2}, {3.0, -2.2},
                                 {3.0, 2.2},   {0.0, -2.8}, {0.0, 2.8}};
    for (const auto& xy : pillar) {
      Cylinder c;
      c.base = {xy[0], xy[1], 0.0};
      c.axis = V::UnitZ();
      c.height = 3.0;
      c.radius = 0.3;
      env.cylinders.push_back(c);
    }
  } else if (name == "plane_city") {
    env.planes.push_back(
        make_patch({0, 0, 0}, V::UnitX(), 12.0, V::UnitY(), 12.0));
    // Building facades: varied positions, yaws and sizes around the origin.
    struct Facade {
      double cx, cy, yaw, half_w, half_h;
    };
    const Facade facades[] = {
        {6.0, 0.0, kPi / 2, 3.0, 2.0},   {-5.5, 1.0, kPi / 2, 2.5, 1.5},
        {0.5, 5.0, 0.0, 3.0, 2.5},       {-1.0, -5.5, 0.0, 2.0, 1.2},
        {4.5, 4.5, kPi / 4, 2.0, 1.8},   {-4.5, -4.0, -kPi / 3, 2.2, 2.2},
        {5.0, -4.5, 3 * kPi / 4, 1.8, 1.4}, {-4.0, 4.8, kPi / 6, 2.4, 1.6},
    };
    for (const Facade& f : facades) {
      env.planes.push_back(make_patch({f.cx, f.cy, f.half_h},
                                      yawed(f.yaw, 1, 0, 0), f.half_w,
                                      V::UnitZ(), f.half_h));
    }
    // One tilted roof plane for variety.
    env.planes.push_back(make_patch({0.0, 7.5, 2.5}, V::UnitX(), 2.5,
                                    V(0.0, 0.6, 0.8), 1.5));
  } else if (name == "quadratic_forest") {
    env.planes.push_back(
        make_patch({0, 0, 0}, V::UnitX(), 12.0, V::UnitY(), 12.0));
    // Trees on a golden-angle spiral, radius 3.5 .. 9 m from the origin.
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < 10; ++i) {
      const double r = 3.5 + 5.5 * i / 9.0;
      const double a = golden * i;
      const V base(r * std::cos(a), r * std::sin(a), 0.0);
      Cylinder trunk;
      trunk.base = base;
      trunk.axis = V::UnitZ();
      trunk.height = 1.8;
      trunk.radius = 0.2;
      env.cylinders.push_back(trunk);
      Sphere crown;
      crown.center = base + V(0.0, 0.0, 2.2);
      crown.radius = 0.8;
      env.spheres.push_back(crown);
    }
  } else if (name == "triangle_array") {
    // A ring of large free-floating triangles with varied orientations.
    for (int i = 0; i < 12; ++i) {
      const double a = 2.0 * kPi * i / 12.0;
      const double r = 4.0 + 1.5 * ((i * 7) % 3);
      const V center(r * std::cos(a), r * std::sin(a), 1.5);
      const V inward = -V(std::cos(a), std::sin(a), 0.0);
      const V side = V(-std::sin(a), std::cos(a), 0.0);
      const double tilt = 0.4 * std::sin(3.0 * a);
      const V up = (V::UnitZ() + tilt * inward).normalized();
      const double e = 1.6 + 0.4 * ((i * 5) % 3);
      Triangle t;
      t.a = center - e * side - 0.8 * e * up;
      t.b = center + e * side - 0.8 * e * up;
      t.c = center + 1.1 * e * up;
      env.triangles.push_back(t);
    }
  } else {
    throw std::invalid_argument("build_environment: unknown environment '" +
                                name + "'");
  }
  return env;
}

// ---------------------------------------------------------------------------
// Ray intersections.

double intersect_plane(const PlanePatch& plane, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir) {
  const Eigen::Vector3d n = plane.u_axis.cross(plane.v_axis);
  const double denom = dir.dot(n);
  if (std::abs(denom) < 1e-12) return kInf;
  const double t = (plane.center - origin).dot(n) / denom;
  if (t <= 0.0) return kInf;
  const Eigen::Vector3d rel = origin + t * dir - plane.center;
  if (std::abs(rel.dot(plane.u_axis)) > plane.half_u ||
      std::abs(rel.dot(plane.v_axis)) > plane.half_v) {
    return kInf;
  }
  return t;
}

double intersect_cylinder(const Cylinder& cyl, const Eigen::Vector3d& origin,
                          const Eigen::Vector3d& dir) {
  const Eigen::Vector3d w = origin - cyl.base;
  const Eigen::Vector3d d_perp = dir - dir.dot(cyl.axis) * cyl.axis;
  const Eigen::Vector3d w_perp = w - w.dot(cyl.axis) * cyl.axis;
  const double a = d_perp.squaredNorm();
  if (a < 1e-24) return kInf;  // parallel to the axis, lateral surface only
  const double b = d_perp.dot(w_perp);
  const double c = w_perp.squaredNorm() - cyl.radius * cyl.radius;
  const double disc = b * b - a * c;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  for (const double t : {(-b - sq) / a, (-b + sq) / a}) {
    if (t <= 0.0) continue;
    const double h = (w + t * dir).dot(cyl.axis);
    if (h >= 0.0 && h <= cyl.height) return t;
  }
  return kInf;
}

double intersect_sphere(const Sphere& sphere, const Eigen::Vector3d& origin,
                        const Eigen::Vector3d& dir) {
  const Eigen::Vector3d w = origin - sphere.center;
  const double b = dir.dot(w);
  const double c = w.squaredNorm() - sphere.radius * sphere.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  double t = -b - sq;
  if (t <= 0.0) t = -b + sq;
  return t > 0.0 ? t : kInf;
}

double intersect_triangle(const Triangle& tri, const Eigen::Vector3d& origin,
                          const Eigen::Vector3d& dir) {
  // Moeller-Trumbore.
  const Eigen::Vector3d e1 = tri.b - tri.a;
  const Eigen::Vector3d e2 = tri.c - tri.a;
  const Eigen::Vector3d pvec = dir.cross(e2);
  const double det = e1.dot(pvec);
  if (std::abs(det) < 1e-12) return kInf;
  const double inv = 1.0 / det;
  const Eigen::Vector3d tvec = origin - tri.a;
  const double u = tvec.dot(pvec) * inv;
  if (u < 0.0 || u > 1.0) return kInf;
  const Eigen::Vector3d qvec = tvec.cross(e1);
  const double v = dir.dot(qvec) * inv;
  if (v < 0.0 || u + v > 1.0) return kInf;
  const double t = e2.dot(qvec) * inv;
  return t > 0.0 ? t : kInf;
}

double raycast(const Environment& env, const Eigen::Vector3d& origin,
               const Eigen::Vector3d& dir) {
  double best = kInf;
  for (const PlanePatch& p : env.planes) {
    best = std::min(best, intersect_plane(p, origin, dir));
  }
  for (const Cylinder& c : env.cylinders) {
    best = std::min(best, intersect_cylinder(c, origin, dir));
  }
  for (const Sphere& s : env.spheres) {
    best = std::min(best, intersect_sphere(s, origin, dir));
  }
  for (const Triangle& t : env.triangles) {
    best = std::min(best, intersect_triangle(t, origin, dir));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Distances (collision checking).

namespace {

double distance_to_plane(const PlanePatch& p, const Eigen::Vector3d& q) {
  const Eigen::Vector3d rel = q - p.center;
  const double du = std::clamp(rel.dot(p.u_axis), -p.half_u, p.half_u);
  const double dv = std::clamp(rel.dot(p.v_axis), -p.half_v, p.half_v);
  return (rel - du * p.u_axis - dv * p.v_axis).norm();
}

double distance_to_cylinder(const Cylinder& c, const Eigen::Vector3d& q) {
  const Eigen::Vector3d w = q - c.base;
  const double h = w.dot(c.axis);
  const double radial = (w - h * c.axis).norm();
  const double dr = radial - c.radius;
  if (h >= 0.0 && h <= c.height) return std::abs(dr);
  const double dh = h < 0.0 ? -h : h - c.height;
  return std::sqrt(dh * dh + dr * dr);
}

double distance_to_sphere(const Sphere& s, const Eigen::Vector3d& q) {
  return std::abs((q - s.center).norm() - s.radius);
}

// Closest point on a triangle (Ericson, Real-Time Collision Detection).
Eigen::Vector3d closest_on_triangle(const Triangle& t,
                                    const Eigen::Vector3d& p) {
  const Eigen::Vector3d ab = t.b - t.a, ac = t.c - t.a, ap = p - t.a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return t.a;
  const Eigen::Vector3d bp = p - t.b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return t.b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    return t.a + ab * (d1 / (d1 - d3));
  }
  const Eigen::Vector3d cp = p - t.c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return t.c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    return t.a + ac * (d2 / (d2 - d6));
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
    return t.b + (t.c - t.b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  }
  const double denom = 1.0 / (va + vb + vc);
  return t.a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace

double clearance(const Environment& env, const Eigen::Vector3d& point) {
  double best = kInf;
  for (const PlanePatch& p : env.planes) {
    best = std::min(best, distance_to_plane(p, point));
  }
  for (const Cylinder& c : env.cylinders) {
    best = std::min(best, distance_to_cylinder(c, point));
  }
  for (const Sphere& s : env.spheres) {
    best = std::min(best, distance_to_sphere(s, point));
  }
  for (const Triangle& t : env.triangles) {
    best = std::min(best, (point - closest_on_triangle(t, point)).norm());
  }
  return best;
}

void check_clearance(const Environment& env,
                     const std::vector<Eigen::Vector3d>& points,
                     double margin) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = clearance(env, points[i]);
    if (!(d > margin)) {
      throw std::runtime_error(
          "trajectory collision: sample " + std::to_string(i) +
          " has clearance " + std::to_string(d) + " m (margin " +
          std::to_string(margin) + " m) in environment '" + env.name + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Trajectories.

void TrajectorySpec::validate() const {
  if (!(duration > 0.0)) {
    throw std::invalid_argument("TrajectorySpec: duration must be positive");
  }
  for (const auto& dof : motion) {
    for (const Sinusoid& s : dof) {
      if (!std::isfinite(s.amplitude) || !std::isfinite(s.frequency) ||
          !std::isfinite(s.phase) || s.frequency < 0.0) {
        throw std::invalid_argument("TrajectorySpec: invalid sinusoid");
      }
    }
  }
}

TrajectorySpec default_trajectory_spec(double duration) {
  TrajectorySpec spec;
  spec.duration = duration;
  spec.base.x = 0.0;
  spec.base.y = 0.0;
  spec.base.z = 1.5;
  spec.motion[0] = {{1.2, 0.11, 0.0}};
  spec.motion[1] = {{0.9, 0.17, 1.0}};
  spec.motion[2] = {{0.4, 0.23, 2.0}};
  spec.motion[3] = {{deg_to_rad(8.0), 0.13, 0.5}};
  spec.motion[4] = {{deg_to_rad(6.0), 0.19, 1.5}};
  spec.motion[5] = {{deg_to_rad(25.0), 0.07, 2.5}};
  return spec;
}

TrajectorySpec randomize_trajectory(const TrajectorySpec& base,
                                    std::uint64_t seed) {
  TrajectorySpec spec = base;
  spec.rng_seed = seed;
  std::mt19937_64 gen(seed);
  for (auto& dof : spec.motion) {
    for (Sinusoid& s : dof) {
      s.amplitude *= uniform_in(gen, 0.5, 1.5);
      s.frequency = uniform_in(gen, 0.05, 0.4);
      s.phase = uniform_in(gen, 0.0, 2.0 * kPi);
    }
  }
  return spec;
}

std::vector<Pose> generate_trajectory(const TrajectorySpec& spec,
                                      double rate) {
  spec.validate();
  if (!(rate > 0.0)) {
    throw std::invalid_argument("generate_trajectory: rate must be positive");
  }
  const auto count = static_cast<std::size_t>(
      std::llround(spec.duration * rate));
  std::vector<Pose> poses(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / rate;
    double dof[6] = {spec.base.x,   spec.base.y,     spec.base.z,
                     spec.base.phi, spec.base.theta, spec.base.psi};
    for (int d = 0; d < 6; ++d) {
      for (const Sinusoid& s : spec.motion[d]) dof[d] += s.eval(t);
    }
    Pose& p = poses[k];
    p.t = t;
    p.x = dof[0];
    p.y = dof[1];
    p.z = dof[2];
    p.phi = dof[3];
    p.theta = dof[4];
    p.psi = dof[5];
    p.Q.setZero();
  }
  return poses;
}

// ---------------------------------------------------------------------------
// Lidar.

void LidarModel::validate() const {
  if (!(rate > 0.0) || !(fov > 0.0) || !(resolution > 0.0) ||
      !(range_min >= 0.0) || !(range_max > range_min)) {
    throw std::invalid_argument("LidarModel: invalid configuration");
  }
}

Scan raycast_scan(const Environment& env, const Transform& lidar_pose,
                  const LidarModel& model) {
  model.validate();
  const Eigen::Matrix3d r = lidar_pose.block<3, 3>(0, 0);
  const Eigen::Vector3d origin = lidar_pose.block<3, 1>(0, 3);
  const int beams = model.beam_count();

  Scan scan;
  scan.t = 0.0;
  scan.points.assign(beams, Eigen::Vector2d::Zero());
  scan.valid.assign(beams, 0);
  for (int i = 0; i < beams; ++i) {
    const double a = -0.5 * model.fov + i * model.resolution;
    const Eigen::Vector2d dir2(std::cos(a), std::sin(a));
    const Eigen::Vector3d dir = r * Eigen::Vector3d(dir2[0], dir2[1], 0.0);
    const double range = raycast(env, origin, dir);
    if (range >= model.range_min && range <= model.range_max) {
      scan.points[i] = range * dir2;
      scan.valid[i] = 1;
    }
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Noise.

void NoiseModel::validate() const {
  if (trans_std < 0.0 || rot_std < 0.0 || range_std < 0.0) {
    throw std::invalid_argument("NoiseModel: std-devs must be >= 0");
  }
}

std::pair<std::vector<Pose>, std::vector<Scan>> apply_noise(
    const std::vector<Pose>& poses, const std::vector<Scan>& scans,
    const NoiseModel& noise) {
  noise.validate();
  std::mt19937_64 gen(noise.rng_seed);

  Matrix6d q = Matrix6d::Zero();
  q.diagonal() << noise.trans_std * noise.trans_std,
      noise.trans_std * noise.trans_std, noise.trans_std * noise.trans_std,
      noise.rot_std * noise.rot_std, noise.rot_std * noise.rot_std,
      noise.rot_std * noise.rot_std;

  std::vector<Pose> out_poses = poses;
  for (Pose& p : out_poses) {
    p.x += noise.trans_std * gaussian(gen);
    p.y += noise.trans_std * gaussian(gen);
    p.z += noise.trans_std * gaussian(gen);
    p.phi += noise.rot_std * gaussian(gen);
    p.theta += noise.rot_std * gaussian(gen);
    p.psi += noise.rot_std * gaussian(gen);
    p.Q = q;
  }

  std::vector<Scan> out_scans = scans;
  for (Scan& s : out_scans) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s.valid[i]) continue;
      const double range = s.points[i].norm();
      if (range <= 0.0) continue;
      s.points[i] += (noise.range_std * gaussian(gen) / range) * s.points[i];
    }
  }
  return {std::move(out_poses), std::move(out_scans)};
}

// ---------------------------------------------------------------------------
// Dataset assembly.

CalibParams default_true_params() {
  CalibParams p;
  p.x = 0.1;
  p.y = -0.05;
  p.z = 0.2;
  p.phi = deg_to_rad(5.0);
  p.theta = deg_to_rad(90.0);
  p.psi = deg_to_rad(-10.0);
  p.s = 1.0;
  return p;
}

Dataset make_dataset(const Environment& env, const TrajectorySpec& spec,
                     const LidarModel& lidar, const NoiseModel& noise,
                     const CalibParams& true_params, double td) {
  if (!true_params.finite()) {
    throw std::invalid_argument("make_dataset: true_params not finite");
  }
  lidar.validate();
  noise.validate();

  Dataset ds;
  ds.true_params = true_params;
  ds.true_td = td;
  ds.true_poses = generate_trajectory(spec, lidar.rate);
  if (ds.true_poses.empty()) {
    throw std::invalid_argument("make_dataset: empty trajectory");
  }

  const Transform t_cl = calib_to_transform(true_params);
  std::vector<Transform> lidar_poses(ds.true_poses.size());
  std::vector<Eigen::Vector3d> sample_points;
  sample_points.reserve(2 * ds.true_poses.size());
  for (std::size_t k = 0; k < ds.true_poses.size(); ++k) {
    const Transform t_gc = pose_to_transform(ds.true_poses[k], 1.0);
    lidar_poses[k] = t_gc * t_cl;
    sample_points.push_back(t_gc.block<3, 1>(0, 3));
    sample_points.push_back(lidar_poses[k].block<3, 1>(0, 3));
  }
  check_clearance(env, sample_points, 0.3);

  std::vector<Scan> scans(ds.true_poses.size());
  parallel_blocks(ds.true_poses.size(), 16,
                  [&](std::size_t, std::size_t begin, std::size_t end) {
                    for (std::size_t k = begin; k < end; ++k) {
                      scans[k] = raycast_scan(env, lidar_poses[k], lidar);
                      scans[k].t = ds.true_poses[k].t;
                    }
                  });

  // The egomotion sensor reports translations in its own frame and its own
  // scale-free units: origin at the trajectory base (a visual-SLAM map frame
  // is anchored to the trajectory, not to the surveyed environment), metric
  // divided by s. Noise is applied in reported units. The entropy cost is
  // invariant to the origin choice (it shifts the reconstruction uniformly);
  // only the reported coordinates change.
  std::vector<Pose> reported = ds.true_poses;
  for (Pose& p : reported) {
    p.x = (p.x - spec.base.x) / true_params.s;
    p.y = (p.y - spec.base.y) / true_params.s;
    p.z = (p.z - spec.base.z) / true_params.s;
  }
  auto noisy = apply_noise(reported, scans, noise);
  ds.poses = std::move(noisy.first);
  ds.scans = std::move(noisy.second);
  for (Scan& s : ds.scans) s.t += td;
  return ds;
}

}  // namespace crisp
