// Acceptance harness: end-to-end checks of the calibration pipeline at fixed
// tolerances. Each criterion prints one PASS/FAIL line; the exit code is the
// number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdlib>
#include <cstdio>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "crisp/entropy.hpp"
#include "crisp/geometry.hpp"
#include "crisp/optimizer.hpp"
#include "crisp/simulator.hpp"
#include "crisp/types.hpp"

namespace {

using namespace crisp;

constexpr double kInf = std::numeric_limits<double>::infinity();

double now_s() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

int g_failures = 0;

void report(int id, bool pass, const std::string& title,
            const std::string& detail) {
  std::printf("criterion %2d [%s] %s: %s\n", id, pass ? "PASS" : "FAIL",
              title.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

// ---------------------------------------------------------------------------
// Shared dataset recipes.

/// Excitation recipes. All six axes move on incommensurate frequencies so no
/// parameter hides behind another.
///
/// The discretely sampled sweeps paint stripe patterns on the surfaces, and
/// a kernel comparable to the stripe spacing rewards reconstructions that
/// pack stripes tighter instead of crisper, biasing the minimum. Stripes are
/// harmless when their spacing is far from the kernel width on either side,
/// so translations move slowly (consecutive sweeps overlap within the
/// kernel) and rotations move fast (consecutive sweeps land far outside
/// it). Rotations must stay strong regardless: they are what makes the
/// mount translation observable at all.
TrajectorySpec noiseless_spec(double duration) {
  TrajectorySpec spec = default_trajectory_spec(duration);
  spec.motion[0] = {{1.0, 0.035, 0.0}};
  spec.motion[1] = {{0.8, 0.055, 1.0}};
  spec.motion[2] = {{0.8, 0.095, 2.0}};
  // Rotation frequencies deliberately incommensurate (no low-order rational
  // ratios) so consecutive sweeps tile surfaces instead of retracing.
  spec.motion[3] = {{deg_to_rad(25.0), 0.4002, 0.5}};
  spec.motion[4] = {{deg_to_rad(20.0), 0.5046, 1.5}};
  spec.motion[5] = {{deg_to_rad(50.0), 0.5394, 2.5}};
  return spec;
}

/// Noisy-data trajectory. Pose-translation noise is multiplied by the scale
/// candidate in every lifted point, so contraction (s < 1) genuinely shrinks
/// the injected scatter; the only restoring force is geometry: surface
/// patches revisited from widely separated camera positions smear when the
/// baselines between them shrink. Wide, repeated sweeps (large x/y
/// amplitudes at the highest speeds that keep consecutive sweep lines
/// overlapping within the kernel) and strong rotations maximize that
/// stiffness; z amplitude stays modest, since approaching floor/ceiling
/// converts pose noise into a vertical density gradient that biases z.
TrajectorySpec noisy_spec(double duration) {
  TrajectorySpec spec = default_trajectory_spec(duration);
  // Hold the lidar near mid-height of the 3 m room: an asymmetric gap to
  // floor vs ceiling converts pose noise into a vertical density gradient
  // that biases the z estimate by tens of millimetres.
  spec.base.z = 1.3;
  spec.motion[0] = {{3.0, 0.16, 0.0}};
  spec.motion[1] = {{1.6, 0.26, 1.0}};
  spec.motion[2] = {{0.8, 0.38, 2.0}};
  spec.motion[3] = {{deg_to_rad(35.0), 0.23, 0.5}};
  spec.motion[4] = {{deg_to_rad(45.0), 0.29, 1.5}};
  spec.motion[5] = {{deg_to_rad(50.0), 0.31, 2.5}};
  return spec;
}

/// Ground truth for joint-recovery runs. The default simulation truth
/// pitches the lidar to exactly 90 deg, which is the Euler chart's gimbal
/// lock: one roll/yaw combination stops affecting the rotation there, so
/// per-angle recovery errors are ill-defined along the flat direction.
/// Joint-recovery criteria use a pitched-but-unlocked mount instead; slice
/// validation keeps the default truth, where 1-D slices remain
/// well-defined.
CalibParams recovery_truth() {
  CalibParams p = default_true_params();
  p.theta = deg_to_rad(50.0);
  return p;
}

LidarModel default_lidar() { return LidarModel{}; }

NoiseModel no_noise() {
  NoiseModel n;
  n.trans_std = n.rot_std = n.range_std = 0.0;
  return n;
}

NoiseModel paper_noise(std::uint64_t seed) {
  NoiseModel n;  // defaults: 50 mm, 1 deg, 50 mm
  n.rng_seed = seed;
  return n;
}

/// Moderate noise for slice validation. Injected pose-translation noise is
/// multiplied by the scale candidate in every lifted point, so s < 1
/// genuinely shrinks the scatter; the resulting argmin offset grows with the
/// square of the noise level and at full paper noise exceeds the slice
/// tolerance on s for any trajectory that fits the room. Slices validate
/// minimum placement, so they use noise low enough not to relocate it.
NoiseModel slice_noise(std::uint64_t seed) {
  NoiseModel n;
  n.trans_std *= 0.3;
  n.rot_std *= 0.3;
  n.range_std *= 0.3;
  n.rng_seed = seed;
  return n;
}

/// Noiseless evaluation kernel. Narrow enough that the discrete scan-ring
/// pattern cannot reward a contracted reconstruction, wide enough to bridge
/// adjacent rings (~11 mm apart at the excitation speeds).
CloudConfig noiseless_cloud() {
  CloudConfig cfg;
  cfg.sigma_kernel = 0.008;
  cfg.k_prune = 285.0;
  cfg.subsample_stride = 8;
  return cfg;
}

/// Noisy evaluation kernel; covariances frozen at the search seed so the
/// optimizer cannot lower the cost by shrinking the modeled covariances.
/// k = 8 keeps full calibration runs inside the harness budget; the
/// pruning-equivalence checks (criterion 5) bound what truncation can do,
/// and a spot check at k = 25 reproduced the same cost ordering.
CloudConfig noisy_cloud() {
  CloudConfig cfg;
  cfg.sigma_kernel = 0.05;
  cfg.k_prune = 8.0;
  cfg.subsample_stride = 8;
  cfg.freeze_covariances = true;
  return cfg;
}

/// Slice evaluation kernel: same sigma, wider pruning (slices are cheap).
CloudConfig slice_cloud() {
  CloudConfig cfg = noisy_cloud();
  cfg.k_prune = 12.0;
  return cfg;
}

OptimizerConfig noisy_opt() {
  OptimizerConfig cfg;
  cfg.crs_max_evals = 1500;
  return cfg;
}

CalibParams offset_seed(const CalibParams& truth) {
  CalibParams seed = truth;
  seed.x += 0.03;
  seed.y += 0.03;
  seed.z += 0.03;
  seed.phi += deg_to_rad(5.0);
  seed.theta += deg_to_rad(5.0);
  seed.psi += deg_to_rad(5.0);
  seed.s *= 1.2;
  return seed;
}

struct ParamErrors {
  double trans[3];  // |dx|, |dy|, |dz| in metres
  double rot[3];    // |dphi|, |dtheta|, |dpsi| in radians
  double scale;     // |ds|

  double max_trans() const {
    return std::max({trans[0], trans[1], trans[2]});
  }
  double max_rot() const { return std::max({rot[0], rot[1], rot[2]}); }
  double trans_norm() const {
    return std::sqrt(trans[0] * trans[0] + trans[1] * trans[1] +
                     trans[2] * trans[2]);
  }
};

ParamErrors errors_vs(const CalibParams& got, const CalibParams& truth) {
  ParamErrors e;
  e.trans[0] = std::abs(got.x - truth.x);
  e.trans[1] = std::abs(got.y - truth.y);
  e.trans[2] = std::abs(got.z - truth.z);
  e.rot[0] = std::abs(wrap_angle(got.phi - truth.phi));
  e.rot[1] = std::abs(wrap_angle(got.theta - truth.theta));
  e.rot[2] = std::abs(wrap_angle(got.psi - truth.psi));
  e.scale = std::abs(got.s - truth.s);
  return e;
}

std::string errors_str(const ParamErrors& e) {
  return fmt("max|dt|=%.3fmm max|dr|=%.4fdeg |ds|=%.2e", 1e3 * e.max_trans(),
             rad_to_deg(e.max_rot()), e.scale);
}

// ---------------------------------------------------------------------------
// Criterion 1: noiseless closed loop.

void criterion1() {
  const double t0 = now_s();
  const Environment env = build_environment("simple_room");
  const CalibParams truth = recovery_truth();
  const Dataset ds = make_dataset(env, noiseless_spec(10.0), default_lidar(),
                                  no_noise(), truth, 0.0);
  const CloudConfig cloud = noiseless_cloud();
  const EntropyObjective probe(ds.scans, ds.poses, cloud);
  const std::size_t m = probe.point_count();

  const SearchSpace space = SearchSpace::around_seed(offset_seed(truth));
  const OptimizerConfig opt;
  const CalibResult res = calibrate(ds.scans, ds.poses, space, opt, cloud);
  const ParamErrors e = errors_vs(res.params, truth);
  const double wall = now_s() - t0;

  const bool pass =
      e.max_trans() <= 1e-3 && e.max_rot() <= deg_to_rad(0.05) &&
      e.scale <= 1e-3;
  report(1, pass, "noiseless closed loop",
         fmt("%s, m=%zu, evals=%d+%d, wall=%.0fs (runtime target 600s)",
             errors_str(e).c_str(), m, res.crs_evals, res.nm_evals, wall));
}

// ---------------------------------------------------------------------------
// Criterion 2: noisy accuracy over 5 seeds.

void criterion2() {
  const Environment env = build_environment("simple_room");
  const CalibParams truth = recovery_truth();
  const TrajectorySpec spec = noisy_spec(15.0);
  const SearchSpace space = SearchSpace::around_seed(offset_seed(truth));

  double mae_trans[3] = {}, mae_rot[3] = {}, mae_scale = 0.0;
  const int runs = 5;
  for (int i = 0; i < runs; ++i) {
    const Dataset ds = make_dataset(env, spec, default_lidar(),
                                    paper_noise(201 + i), truth, 0.0);
    const CalibResult res =
        calibrate(ds.scans, ds.poses, space, noisy_opt(), noisy_cloud());
    const ParamErrors e = errors_vs(res.params, truth);
    for (int k = 0; k < 3; ++k) {
      mae_trans[k] += e.trans[k] / runs;
      mae_rot[k] += e.rot[k] / runs;
    }
    mae_scale += e.scale / runs;
    std::printf("  criterion 2 seed %d: %s\n", 201 + i,
                errors_str(e).c_str());
    std::fflush(stdout);
  }
  const double worst_trans = std::max({mae_trans[0], mae_trans[1],
                                       mae_trans[2]});
  const double worst_rot = std::max({mae_rot[0], mae_rot[1], mae_rot[2]});
  const bool pass = worst_trans <= 15e-3 && worst_rot <= deg_to_rad(1.0) &&
                    mae_scale <= 5e-3;
  report(2, pass, "noisy accuracy (5 seeds, paper noise)",
         fmt("MAE: trans=(%.1f,%.1f,%.1f)mm rot=(%.2f,%.2f,%.2f)deg "
             "scale=%.2e",
             1e3 * mae_trans[0], 1e3 * mae_trans[1], 1e3 * mae_trans[2],
             rad_to_deg(mae_rot[0]), rad_to_deg(mae_rot[1]),
             rad_to_deg(mae_rot[2]), mae_scale));
}

// ---------------------------------------------------------------------------
// Criterion 3: 1-D cost slices on one seeded noisy dataset.

void criterion3() {
  const Environment env = build_environment("simple_room");
  const CalibParams truth = default_true_params();
  const Dataset ds = make_dataset(env, noisy_spec(15.0), default_lidar(),
                                  slice_noise(11), truth, 0.0);
  CloudConfig cloud = slice_cloud();
  const EntropyObjective obj(ds.scans, ds.poses, cloud,
                             std::optional<CalibParams>(truth));

  struct Slice {
    const char* name;
    int idx;
    double step;
    double tol;
  };
  const Slice slices[7] = {
      {"x", 0, 2.5e-3, 10e-3},          {"y", 1, 2.5e-3, 10e-3},
      {"z", 2, 2.5e-3, 10e-3},          {"phi", 3, deg_to_rad(0.125),
                                         deg_to_rad(0.5)},
      {"theta", 4, deg_to_rad(0.125), deg_to_rad(0.5)},
      {"psi", 5, deg_to_rad(0.125), deg_to_rad(0.5)},
      {"s", 6, 5e-4, 2e-3}};

  bool pass = true;
  std::string detail;
  for (const Slice& sl : slices) {
    double best_cost = kInf, best_off = 0.0;
    for (int i = -8; i <= 8; ++i) {
      const double off = sl.step * i;
      CalibParams p = truth;
      switch (sl.idx) {
        case 0: p.x += off; break;
        case 1: p.y += off; break;
        case 2: p.z += off; break;
        case 3: p.phi += off; break;
        case 4: p.theta += off; break;
        case 5: p.psi += off; break;
        case 6: p.s += off; break;
      }
      const double c = obj.cost(p, CostMode::pruned);
      if (c < best_cost) {
        best_cost = c;
        best_off = off;
      }
    }
    const bool ok = std::abs(best_off) <= sl.tol + 1e-15;
    pass = pass && ok;
    if (sl.idx < 3) {
      detail += fmt("%s%s=%+.1fmm", sl.idx ? " " : "", sl.name,
                    1e3 * best_off);
    } else if (sl.idx < 6) {
      detail += fmt(" %s=%+.3fdeg", sl.name, rad_to_deg(best_off));
    } else {
      detail += fmt(" %s=%+.1e", sl.name, best_off);
    }
  }
  report(3, pass, "noisy cost-slice argmins", detail);
}

// ---------------------------------------------------------------------------
// Criterion 4: temporal recovery and pre-calibration benefit.

void criterion4() {
  const Environment env = build_environment("simple_room");
  const CalibParams truth = recovery_truth();
  TimeAlignConfig tcfg;
  tcfg.range = 0.05;
  tcfg.resolution = 0.001;

  // (a) Noiseless recovery of an injected 20 ms delay at the true extrinsic.
  const Dataset dn = make_dataset(env, noiseless_spec(10.0), default_lidar(),
                                  no_noise(), truth, 0.020);
  const TimeAlignResult rn =
      time_align(dn.scans, dn.poses, truth, tcfg, noiseless_cloud());
  const double err_noiseless = std::abs(rn.td - 0.020);

  // (b) Same under paper noise.
  const Dataset dz = make_dataset(env, noisy_spec(10.0), default_lidar(),
                                  paper_noise(31), truth, 0.020);
  CloudConfig ncloud = noisy_cloud();
  ncloud.freeze_covariances = false;  // time_align holds params fixed anyway
  const TimeAlignResult rz = time_align(dz.scans, dz.poses, truth, tcfg,
                                        ncloud);
  const double err_noisy = std::abs(rz.td - 0.020);

  // (c) Temporally pre-calibrated vs non-pre-calibrated full runs on five
  // seeded noisy datasets with a 20 ms injected delay and a perturbed seed.
  int tc_wins = 0;
  const int trials = 5;
  std::string trial_detail;
  for (int i = 0; i < trials; ++i) {
    const Dataset ds = make_dataset(env, noisy_spec(8.0), default_lidar(),
                                    paper_noise(301 + i), truth, 0.020);
    const SearchSpace space = SearchSpace::around_seed(offset_seed(truth));

    const CalibResult tc =
        calibrate_with_time(ds.scans, ds.poses, space, noisy_opt(), tcfg,
                            noisy_cloud());

    std::vector<Scan> scans0;
    std::vector<Pose> poses0;
    pair_scans_to_poses(ds.scans, ds.poses, 0.0, false, scans0, poses0);
    const CalibResult ntc =
        calibrate(scans0, poses0, space, noisy_opt(), noisy_cloud());

    const double e_tc = errors_vs(tc.params, truth).trans_norm();
    const double e_ntc = errors_vs(ntc.params, truth).trans_norm();
    if (e_tc < e_ntc) ++tc_wins;
    trial_detail += fmt("%s%.1f<%.1f", i ? " " : "", 1e3 * e_tc,
                        1e3 * e_ntc);
    std::printf("  criterion 4 trial %d: TC |dt|=%.2fmm (td=%.1fms) "
                "NTC |dt|=%.2fmm\n",
                301 + i, 1e3 * e_tc, 1e3 * tc.td, 1e3 * e_ntc);
    std::fflush(stdout);
  }

  const bool pass =
      err_noiseless <= 0.002 && err_noisy <= 0.005 && tc_wins >= 4;
  report(4, pass, "temporal recovery",
         fmt("noiseless |dtd|=%.2fms, noisy |dtd|=%.2fms, TC wins %d/%d "
             "(trans err mm: %s)",
             1e3 * err_noiseless, 1e3 * err_noisy, tc_wins, trials,
             trial_detail.c_str()));
}

// ---------------------------------------------------------------------------
// Criteria 5/7/8 share random metre-scale GMM clouds.

std::mt19937_64 g_rng(240815u);

double urand(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(g_rng);
}

Eigen::Matrix3d random_psd3(double lambda_cap) {
  Eigen::Matrix3d a;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a(r, c) = urand(-1.0, 1.0);
  Eigen::Matrix3d m = a * a.transpose();
  const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(m)
                          .eigenvalues()
                          .maxCoeff();
  return m * (urand(0.1, 1.0) * lambda_cap / std::max(lmax, 1e-12));
}

GmmCloud random_cloud(int m, double half_extent, double lambda_cap) {
  std::vector<WorldPoint> pts(m);
  for (int i = 0; i < m; ++i) {
    pts[i].position = Eigen::Vector3d(urand(-half_extent, half_extent),
                                      urand(-half_extent, half_extent),
                                      urand(-half_extent, half_extent));
    pts[i].sigma = random_psd3(lambda_cap);
    pts[i].t = 0.025 * i;
    pts[i].scan_index = i;
    pts[i].point_index = 0;
  }
  return GmmCloud::from_points(pts);
}

void criterion5() {
  double worst_k3 = 0.0, worst_k10 = 0.0;
  for (int c = 0; c < 20; ++c) {
    const GmmCloud cloud = random_cloud(500, 10.0, 0.5);
    CloudConfig cfg;
    cfg.sigma_kernel = 1.25;
    const double exact = rqe_cost(cloud, cfg, CostMode::exact);
    cfg.k_prune = 3.0;
    const double p3 = rqe_cost(cloud, cfg, CostMode::pruned);
    cfg.k_prune = 10.0;
    const double p10 = rqe_cost(cloud, cfg, CostMode::pruned);
    worst_k3 = std::max(worst_k3, std::abs(p3 - exact) / std::abs(exact));
    worst_k10 = std::max(worst_k10, std::abs(p10 - exact) / std::abs(exact));
  }
  const bool pass = worst_k3 < 1e-3 && worst_k10 < 1e-9;
  report(5, pass, "pruning equivalence (20 random clouds)",
         fmt("max rel err: k=3 %.2e (<1e-3), k=10 %.2e (<1e-9)", worst_k3,
             worst_k10));
}

// ---------------------------------------------------------------------------
// Criterion 6: covariance Jacobian vs an independent 5-point stencil.

Matrix6d random_psd6() {
  Matrix6d a;
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 6; ++c) a(r, c) = urand(-0.05, 0.05);
  return a * a.transpose();
}

void criterion6() {
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    Pose pose;
    pose.x = urand(-3, 3);
    pose.y = urand(-3, 3);
    pose.z = urand(-3, 3);
    pose.phi = urand(-2.8, 2.8);
    pose.theta = urand(-1.4, 1.4);
    pose.psi = urand(-2.8, 2.8);
    CalibParams params;
    params.x = urand(-0.3, 0.3);
    params.y = urand(-0.3, 0.3);
    params.z = urand(-0.3, 0.3);
    params.phi = urand(-2.8, 2.8);
    params.theta = urand(-1.2, 1.2);
    params.psi = urand(-2.8, 2.8);
    params.s = urand(0.5, 2.0);
    const Eigen::Vector2d y(urand(-6, 6), urand(-6, 6));

    const Eigen::Matrix<double, 3, 6> jac = lift_jacobian(y, pose, params);
    Eigen::Matrix<double, 3, 6> oracle;
    for (int d = 0; d < 6; ++d) {
      const double base = pose.vec()[d];
      const double h = std::max(1e-5, 1e-5 * std::abs(base));
      auto lift_at = [&](double v) {
        Pose p = pose;
        Vector6d vec = p.vec();
        vec[d] = v;
        p.set_vec(vec);
        return lift_position(y, p, params);
      };
      oracle.col(d) = (-lift_at(base + 2 * h) + 8.0 * lift_at(base + h) -
                       8.0 * lift_at(base - h) + lift_at(base - 2 * h)) /
                      (12.0 * h);
    }
    const double rel = (jac - oracle).norm() / std::max(oracle.norm(), 1e-12);
    worst = std::max(worst, rel);
  }

  // Analytic translation block: exactly identity for identity-rotation poses
  // at unit scale.
  Pose flat;
  flat.x = 1.0;
  flat.y = -2.0;
  flat.z = 0.5;
  CalibParams unit;
  unit.x = 0.1;
  unit.y = -0.05;
  unit.z = 0.2;
  unit.phi = 0.3;
  unit.theta = 0.7;
  unit.psi = -0.4;
  unit.s = 1.0;
  const Eigen::Matrix<double, 3, 6> j =
      lift_jacobian(Eigen::Vector2d(2.0, -1.0), flat, unit);
  const double block_err =
      (j.leftCols<3>() - Eigen::Matrix3d::Identity()).norm();

  const bool pass = worst <= 1e-4 && block_err == 0.0;
  report(6, pass, "covariance Jacobian",
         fmt("max rel err vs 5-pt stencil %.2e (<=1e-4), translation block "
             "err %.1e (exact)",
             worst, block_err));
}

// ---------------------------------------------------------------------------
// Criterion 7: Gaussian closed forms.

void criterion7() {
  double worst_single = 0.0;
  for (double sigma : {0.05, 0.3, 1.1}) {
    std::vector<WorldPoint> one(1);
    one[0].position = Eigen::Vector3d(urand(-2, 2), urand(-2, 2),
                                      urand(-2, 2));
    one[0].sigma = Eigen::Matrix3d::Zero();
    one[0].t = 0.0;
    one[0].scan_index = 0;
    one[0].point_index = 0;
    CloudConfig cfg;
    cfg.sigma_kernel = sigma;
    const double got = rqe_cost(GmmCloud::from_points(one), cfg,
                                CostMode::exact);
    const double want =
        -std::pow(4.0 * kPi * sigma * sigma, -1.5);
    worst_single = std::max(worst_single,
                            std::abs(got - want) / std::abs(want));
  }

  double worst_pair = 0.0;
  for (int i = 0; i < 200; ++i) {
    WorldPoint a, b;
    a.position = Eigen::Vector3d(urand(-2, 2), urand(-2, 2), urand(-2, 2));
    b.position = Eigen::Vector3d(urand(-2, 2), urand(-2, 2), urand(-2, 2));
    a.sigma = random_psd3(0.5);
    b.sigma = random_psd3(0.5);
    const double sigma = urand(0.05, 1.0);
    const double got = pairwise_term(a, b, sigma);
    const Eigen::Matrix3d cov = a.sigma + b.sigma +
                                2.0 * sigma * sigma *
                                    Eigen::Matrix3d::Identity();
    const Eigen::Vector3d d = a.position - b.position;
    const double want = std::exp(-0.5 * d.dot(cov.inverse() * d)) /
                        std::sqrt(std::pow(2.0 * kPi, 3) * cov.determinant());
    worst_pair = std::max(worst_pair, std::abs(got - want) / want);
  }

  const bool pass = worst_single <= 1e-12 && worst_pair <= 1e-12;
  report(7, pass, "Gaussian closed forms",
         fmt("single-point rel err %.2e, pairwise rel err %.2e (<=1e-12)",
             worst_single, worst_pair));
}

// ---------------------------------------------------------------------------
// Criterion 8: rigid invariance.

void criterion8() {
  const GmmCloud cloud = random_cloud(500, 3.0, 0.1);
  const Eigen::Matrix3d rot = rotation_zyx(0.37, -0.81, 2.15);
  const Eigen::Vector3d t(4.2, -2.7, 1.9);

  std::vector<WorldPoint> moved(cloud.points.begin(), cloud.points.end());
  for (WorldPoint& p : moved) {
    p.position = rot * p.position + t;
    p.sigma = rot * p.sigma * rot.transpose();
  }
  CloudConfig cfg;
  cfg.sigma_kernel = 0.4;
  const double before = rqe_cost(cloud, cfg, CostMode::exact);
  const double after =
      rqe_cost(GmmCloud::from_points(moved), cfg, CostMode::exact);
  const double rel = std::abs(after - before) / std::abs(before);
  report(8, rel < 1e-9, "rigid invariance",
         fmt("rel change %.2e (<1e-9)", rel));
}

// ---------------------------------------------------------------------------
// Criterion 9: raycast closed-form oracles, 1000 rays per primitive.

Eigen::Vector3d rand_unit() {
  Eigen::Vector3d v;
  do {
    v = Eigen::Vector3d(urand(-1, 1), urand(-1, 1), urand(-1, 1));
  } while (v.norm() < 1e-3);
  return v.normalized();
}

Eigen::Vector3d rand_point(double h) {
  return Eigen::Vector3d(urand(-h, h), urand(-h, h), urand(-h, h));
}

double plane_oracle(const PlanePatch& p, const Eigen::Vector3d& o,
                    const Eigen::Vector3d& d) {
  const Eigen::Vector3d n = p.u_axis.cross(p.v_axis).normalized();
  const double denom = n.dot(d);
  if (std::abs(denom) < 1e-14) return kInf;
  const double t = n.dot(p.center - o) / denom;
  if (t <= 0.0) return kInf;
  const Eigen::Vector3d rel = o + t * d - p.center;
  if (std::abs(rel.dot(p.u_axis)) > p.half_u ||
      std::abs(rel.dot(p.v_axis)) > p.half_v)
    return kInf;
  return t;
}

double cylinder_oracle(const Cylinder& c, const Eigen::Vector3d& o,
                       const Eigen::Vector3d& d) {
  const Eigen::Vector3d w = o - c.base;
  const Eigen::Vector3d dp = d - d.dot(c.axis) * c.axis;
  const Eigen::Vector3d wp = w - w.dot(c.axis) * c.axis;
  const double a = dp.squaredNorm();
  if (a < 1e-14) return kInf;
  const double b = 2.0 * dp.dot(wp);
  const double cc = wp.squaredNorm() - c.radius * c.radius;
  const double disc = b * b - 4.0 * a * cc;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
    if (t <= 0.0) continue;
    const double axial = (w + t * d).dot(c.axis);
    if (axial < 0.0 || axial > c.height) continue;
    return t;
  }
  return kInf;
}

double sphere_oracle(const Sphere& s, const Eigen::Vector3d& o,
                     const Eigen::Vector3d& d) {
  const Eigen::Vector3d w = o - s.center;
  const double b = 2.0 * d.dot(w);
  const double cc = w.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - 4.0 * cc;
  if (disc < 0.0) return kInf;
  const double sq = std::sqrt(disc);
  for (double t : {(-b - sq) / 2.0, (-b + sq) / 2.0}) {
    if (t > 0.0) return t;
  }
  return kInf;
}

void criterion9() {
  PlanePatch plane;
  plane.center = Eigen::Vector3d(0.5, -1.0, 2.0);
  plane.u_axis = rand_unit();
  plane.v_axis = plane.u_axis.cross(rand_unit()).normalized();
  plane.half_u = 3.0;
  plane.half_v = 2.0;

  Cylinder cyl;
  cyl.base = Eigen::Vector3d(-1.0, 0.5, -2.0);
  cyl.axis = rand_unit();
  cyl.height = 4.0;
  cyl.radius = 1.2;
  const Eigen::Vector3d cyl_mid = cyl.base + 0.5 * cyl.height * cyl.axis;

  Sphere sph;
  sph.center = Eigen::Vector3d(1.5, 1.5, -0.5);
  sph.radius = 1.7;

  double worst = 0.0;
  int mismatches = 0;
  auto run = [&](auto prim, auto impl, auto oracle,
                 const Eigen::Vector3d& aim) {
    for (int i = 0; i < 1000; ++i) {
      const Eigen::Vector3d o = rand_point(6.0);
      const Eigen::Vector3d d = (i % 2 == 0)
                                    ? rand_unit()
                                    : (aim + rand_point(1.5) - o).normalized();
      const double got = impl(prim, o, d);
      const double want = oracle(prim, o, d);
      if (std::isinf(got) != std::isinf(want)) {
        ++mismatches;
      } else if (!std::isinf(got)) {
        worst = std::max(worst, std::abs(got - want));
      }
    }
  };
  run(plane, intersect_plane, plane_oracle, plane.center);
  run(cyl, intersect_cylinder, cylinder_oracle, cyl_mid);
  run(sph, intersect_sphere, sphere_oracle, sph.center);

  const bool pass = worst <= 1e-9 && mismatches == 0;
  report(9, pass, "raycast oracles (1000 rays x 3 primitives)",
         fmt("max |dt|=%.2e m (<=1e-9), hit/miss mismatches=%d", worst,
             mismatches));
}

// ---------------------------------------------------------------------------
// Criterion 10: full-density throughput smoke test.

void criterion10() {
  const double t0 = now_s();
  const Environment env = build_environment("simple_room");
  const Dataset ds = make_dataset(env, noisy_spec(50.0), default_lidar(),
                                  paper_noise(42), recovery_truth(), 0.0);
  std::size_t returns = 0;
  for (const Scan& s : ds.scans) returns += s.valid_count();
  const double t_gen = now_s() - t0;

  CloudConfig cfg;
  cfg.sigma_kernel = 0.05;
  cfg.k_prune = 3.0;
  cfg.subsample_stride = 1;  // full density
  const EntropyObjective obj(ds.scans, ds.poses, cfg);
  const double t1 = now_s();
  GmmCloud cloud = obj.build(ds.true_params);
  EntropyReport rep = entropy_report(cloud, cfg, CostMode::pruned);
  const double t_eval = now_s() - t1;

  const bool pass = rep.cost_defined && std::isfinite(rep.cost) &&
                    rep.m > 1'500'000;
  report(10, pass, "1.9M-point throughput",
         fmt("m=%zu returns=%zu cost=%.4e pairs=%zu (%.1f%% of all), "
             "gen=%.0fs eval=%.0fs",
             rep.m, returns, rep.cost, rep.pairs_visited,
             100.0 * rep.prune_ratio, t_gen, t_eval));
}

}  // namespace

int main(int argc, char** argv) {
  std::printf("acceptance: Sim(3)+time lidar/egomotion calibration\n");
  const double t0 = now_s();
  void (*criteria[10])() = {criterion1, criterion2, criterion3, criterion4,
                            criterion5, criterion6, criterion7, criterion8,
                            criterion9, criterion10};
  int selected = 0;
  if (argc > 1) {
    for (int i = 1; i < argc; ++i) {
      const int id = std::atoi(argv[i]);
      if (id >= 1 && id <= 10) {
        criteria[id - 1]();
        ++selected;
      }
    }
  } else {
    for (auto fn : criteria) fn();
    selected = 10;
  }
  std::printf("acceptance total: %d/%d passed, wall=%.0fs\n",
              selected - g_failures, selected, now_s() - t0);
  return g_failures;
}
