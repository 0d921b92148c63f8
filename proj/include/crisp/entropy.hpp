#pragma once

#include <optional>

#include "crisp/kdtree.hpp"
#include "crisp/types.hpp"

namespace crisp {

/// Knobs for cloud construction and cost evaluation.
struct CloudConfig {
  double sigma_kernel = 0.05;   // isotropic kernel std-dev, metres
  double k_prune = 3.0;         // pruning factor (>= 1); larger = more exact
  int subsample_stride = 1;     // keep every n-th valid lidar return
  std::size_t max_points = 2'500'000;

  // When true, per-point covariances are computed once at a reference
  // parameter set and reused for every candidate during optimization
  // instead of being re-propagated per evaluation. Positions are always
  // recomputed. Cuts evaluation cost roughly in half for noisy data.
  bool freeze_covariances = false;

  void validate() const {
    if (!(sigma_kernel > 0.0)) {
      throw std::invalid_argument("CloudConfig: sigma_kernel must be > 0");
    }
    if (!(k_prune >= 1.0)) {
      throw std::invalid_argument("CloudConfig: k_prune must be >= 1");
    }
    if (subsample_stride < 1) {
      throw std::invalid_argument("CloudConfig: subsample_stride must be >= 1");
    }
    if (max_points < 1) {
      throw std::invalid_argument("CloudConfig: max_points must be >= 1");
    }
  }
};

/// The reconstructed GMM point cloud: M centroids with covariances, the
/// largest eigenvalue of each covariance (for the pruning bound), and a
/// spatial index over the positions.
struct GmmCloud {
  std::vector<WorldPoint> points;
  std::vector<Eigen::Vector3d> positions;  // copy of points[i].position
  std::vector<double> lambda_max;          // largest eigenvalue of sigma_i
  double lambda_p95 = 0.0;                 // 95th percentile of lambda_max
  KdTree3 index;

  std::size_t size() const { return points.size(); }

  /// Assemble a cloud directly from world points (computes eigenvalues and
  /// builds the index). build_cloud is the usual entry point.
  static GmmCloud from_points(std::vector<WorldPoint> pts);
};

enum class CostMode { exact, pruned };

/// Pairwise entropy contribution: the 3-D Gaussian density
///   N(x_i - x_j; 0, Sigma_i + Sigma_j + 2 sigma^2 I).
/// Symmetric in (i, j); the 2 sigma^2 I term keeps the covariance SPD.
double pairwise_term(const WorldPoint& a, const WorldPoint& b, double sigma);

/// Negated sum of pairwise Gaussian contributions over all pairs j >= i
/// (self-terms included). Lower = crisper cloud.
///
/// exact:  every pair, fixed summation order, bitwise deterministic.
/// pruned: pairs with |x_i - x_j| >= 2k(max(lambda_i, lambda_j) + sigma^2)
///         are skipped; candidates gathered through the spatial index.
///         Every pair passing that bound is visited exactly once.
double rqe_cost(const GmmCloud& cloud, const CloudConfig& cfg, CostMode mode);

struct EntropyReport {
  std::size_t m = 0;
  std::uint64_t pairs_visited = 0;  // pairs summed, self-terms included
  std::uint64_t pairs_total = 0;    // M(M+1)/2
  double prune_ratio = 0.0;         // 1 - visited/total
  bool cost_defined = false;
  double cost = 0.0;
  double wall_seconds = 0.0;
};

/// rqe_cost plus instrumentation; tolerates an empty cloud (cost_defined
/// is false instead of an error).
EntropyReport entropy_report(const GmmCloud& cloud, const CloudConfig& cfg,
                             CostMode mode = CostMode::pruned);

/// Build the GMM cloud for one candidate parameter set: drop invalid
/// returns, apply the subsample stride and max_points cap, lift every kept
/// return into the global frame with its propagated covariance, and build
/// the spatial index. Scans and poses must be index-aligned with exactly
/// matching timestamps.
GmmCloud build_cloud(const std::vector<Scan>& scans,
                     const std::vector<Pose>& poses, const CalibParams& params,
                     const CloudConfig& cfg);

/// Reusable cost pipeline for optimization: pairs scans to poses once,
/// applies stride/cap once, then evaluates candidates. With
/// cfg.freeze_covariances the covariances are propagated once at
/// freeze_reference (or the first evaluated candidate if unset).
class EntropyObjective {
 public:
  EntropyObjective(std::vector<Scan> scans, std::vector<Pose> poses,
                   CloudConfig cfg,
                   std::optional<CalibParams> freeze_reference = {});

  /// Number of lidar returns that survive masking, stride and cap.
  std::size_t point_count() const { return flat_points_.size(); }

  GmmCloud build(const CalibParams& params) const;
  double cost(const CalibParams& params, CostMode mode = CostMode::pruned) const;
  double operator()(const CalibParams& params) const { return cost(params); }

  const CloudConfig& config() const { return cfg_; }
  const std::vector<Pose>& poses() const { return poses_; }

 private:
  CloudConfig cfg_;
  std::vector<Pose> poses_;                   // one per kept scan
  std::vector<Eigen::Vector2d> flat_points_;  // kept returns
  std::vector<std::int32_t> flat_scan_;       // scan index per return
  std::vector<std::int32_t> flat_beam_;       // beam index per return
  mutable std::vector<Eigen::Matrix3d> frozen_sigmas_;
  mutable std::vector<double> frozen_lambda_;
  mutable bool frozen_ready_ = false;

  void freeze_at(const CalibParams& params) const;
};

}  // namespace crisp
