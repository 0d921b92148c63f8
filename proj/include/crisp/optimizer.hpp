#pragma once

#include <functional>
#include <string>

#include "crisp/entropy.hpp"
#include "crisp/types.hpp"

namespace crisp {

/// Bounded search box over the 7 calibration parameters in the encoding
/// [x y z phi theta psi log(s)]. Searching log(s) keeps s > 0 always.
struct SearchSpace {
  CalibParams seed;
  Eigen::Matrix<double, 7, 1> lower;
  Eigen::Matrix<double, 7, 1> upper;
  std::uint64_t rng_seed = 0;

  static Eigen::Matrix<double, 7, 1> encode(const CalibParams& p);
  static CalibParams decode(const Eigen::Matrix<double, 7, 1>& v);

  /// Box centered on the seed: +-trans_halfwidth on x/y/z,
  /// +-rot_halfwidth on the angles, log s in
  /// [log(s/scale_factor), log(s*scale_factor)].
  static SearchSpace around_seed(const CalibParams& seed,
                                 double trans_halfwidth = 0.5,
                                 double rot_halfwidth = deg_to_rad(15.0),
                                 double scale_factor = 4.0,
                                 std::uint64_t rng_seed = 0);

  void validate() const;
  bool contains(const Eigen::Matrix<double, 7, 1>& v) const;
};

struct OptimizerConfig {
  int crs_population = 0;   // 0 -> 10 * (dim + 1)
  int crs_max_evals = 3000;
  double nm_xtol = 1e-4;    // per-parameter, as a fraction of bound width
  double nm_ftol = 1e-10;   // relative cost tolerance
  int nm_max_evals = 2000;

  void validate(int dim) const;
};

struct TimeAlignConfig {
  double range = 0.05;       // search t_d in [-range, +range] seconds
  double resolution = 0.001; // grid step, seconds
  int refine_passes = 10;    // golden-section iterations after the grid

  void validate() const;
};

/// One row of the evaluation trace.
struct TraceRow {
  int eval = 0;
  double cost = 0.0;
  double best = 0.0;  // best-so-far, non-increasing
};

struct CalibResult {
  CalibParams params;
  bool has_td = false;
  double td = 0.0;  // seconds
  double final_cost = 0.0;
  int crs_evals = 0;
  int nm_evals = 0;
  double crs_seconds = 0.0;
  double nm_seconds = 0.0;
  double td_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<TraceRow> trace;
  std::string config_echo;
  std::uint64_t input_digest = 0;
};

// ---------------------------------------------------------------------------
// Generic derivative-free cores (dimension-agnostic, used by the calibration
// wrappers below and directly testable on analytic problems).

using ObjectiveFn = std::function<double(const Eigen::VectorXd&)>;

struct BoxBounds {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int evals = 0;
  std::vector<TraceRow> trace;
};

/// Controlled random search (CRS2 with local mutation). Population-based
/// global search over a box; deterministic for a fixed rng_seed. The
/// optional seed point is inserted into the initial population.
MinimizeResult crs_minimize(const ObjectiveFn& f, const BoxBounds& box,
                            int population, int max_evals,
                            std::uint64_t rng_seed,
                            const Eigen::VectorXd* seed_point = nullptr);

/// Nelder-Mead simplex with standard coefficients (reflect 1, expand 2,
/// contract 0.5, shrink 0.5). step gives the initial simplex edge per
/// dimension; xtol the per-dimension termination width. Terminates on
/// xtol, ftol (relative spread of simplex costs) or max_evals. On simplex
/// collapse the search restarts once from a perturbed seed, then fails.
MinimizeResult nelder_mead_minimize(const ObjectiveFn& f,
                                    const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& step,
                                    const Eigen::VectorXd& xtol, double ftol,
                                    int max_evals);

// ---------------------------------------------------------------------------
// Calibration-facing wrappers.

using CalibObjective = std::function<double(const CalibParams&)>;

/// Coarse global stage. Candidates outside the box are clamped before
/// evaluation, so the objective is only ever called inside it.
CalibParams crs_search(const CalibObjective& objective,
                       const SearchSpace& space, const OptimizerConfig& cfg);

/// Fine local stage, seeded inside the box (initial simplex edge = 10% of
/// each parameter's bound width).
CalibParams nelder_mead(const CalibObjective& objective,
                        const CalibParams& seed, const SearchSpace& space,
                        const OptimizerConfig& cfg);

/// Full spatial calibration: CRS2 then Nelder-Mead seeded by its result.
/// Scans and poses must be index-aligned (see pair_scans_to_poses).
CalibResult calibrate(const std::vector<Scan>& scans,
                      const std::vector<Pose>& poses, const SearchSpace& space,
                      const OptimizerConfig& opt_cfg,
                      const CloudConfig& cloud_cfg);

/// Linear interpolation within a trajectory. Translation and covariance are
/// interpolated linearly (covariance PSD-clamped); rotation follows the
/// shortest geodesic unless euler_lerp is set, which interpolates each
/// Euler angle independently. t outside the trajectory is an error.
Pose interpolate_pose(const std::vector<Pose>& poses, double t,
                      bool euler_lerp = false);

/// Shift scan timestamps by -td and pair each shifted scan with a pose
/// interpolated at the shifted time. Scans falling outside the trajectory
/// are dropped. Timestamps of the returned scans and poses match exactly.
void pair_scans_to_poses(const std::vector<Scan>& scans,
                         const std::vector<Pose>& poses, double td,
                         bool euler_lerp, std::vector<Scan>& out_scans,
                         std::vector<Pose>& out_poses);

struct TimeAlignResult {
  double td = 0.0;
  std::vector<std::pair<double, double>> grid;  // (td, cost) samples
};

/// Temporal pre-calibration: grid scan of the entropy cost over the time
/// offset with the Sim(3) parameters locked at fixed_params, followed by
/// golden-section refinement around the best grid cell.
TimeAlignResult time_align(const std::vector<Scan>& scans,
                           const std::vector<Pose>& poses,
                           const CalibParams& fixed_params,
                           const TimeAlignConfig& ta_cfg,
                           const CloudConfig& cloud_cfg,
                           bool euler_lerp = false);

/// time_align at the seed parameters, then calibrate on the shifted data.
CalibResult calibrate_with_time(const std::vector<Scan>& scans,
                                const std::vector<Pose>& poses,
                                const SearchSpace& space,
                                const OptimizerConfig& opt_cfg,
                                const TimeAlignConfig& ta_cfg,
                                const CloudConfig& cloud_cfg,
                                bool euler_lerp = false);

/// Cost variation along each parameter's 1-D slice across the search box
/// (other parameters held at the seed). Parameters whose variation is
/// below 10x the local evaluation jitter are flagged as poorly observable
/// (degenerate trajectory diagnostic); no automatic rejection happens.
struct ObservabilityReport {
  std::array<double, 7> variation{};
  std::array<bool, 7> observable{};
  double eval_noise = 0.0;
};
ObservabilityReport observability_scan(const CalibObjective& objective,
                                       const SearchSpace& space,
                                       int steps = 9);

/// FNV-1a digest of the scan/pose payload, recorded in CalibResult.
std::uint64_t input_digest(const std::vector<Scan>& scans,
                           const std::vector<Pose>& poses);

}  // namespace crisp
