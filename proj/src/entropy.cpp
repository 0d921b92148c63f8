#include "crisp/entropy.hpp"

#include <chrono>
#include <iostream>

#include <Eigen/Cholesky>

#include "crisp/geometry.hpp"
#include "crisp/parallel.hpp"

namespace crisp {

namespace {

constexpr double kTwoPiCubedRoot = 15.749609945722419;  // (2*pi)^(3/2)

// Gaussian density at d with covariance S (SPD by construction).
inline double gaussian3(const Eigen::Vector3d& d, const Eigen::Matrix3d& S) {
  const Eigen::LLT<Eigen::Matrix3d> llt(S);
  const Eigen::Matrix3d& L = llt.matrixL();
  const double det_sqrt = L(0, 0) * L(1, 1) * L(2, 2);
  const Eigen::Vector3d w = L.triangularView<Eigen::Lower>().solve(d);
  return std::exp(-0.5 * w.squaredNorm()) / (kTwoPiCubedRoot * det_sqrt);
}

struct PairSum {
  KahanSum sum;
  std::uint64_t visited = 0;
};

}  // namespace

double pairwise_term(const WorldPoint& a, const WorldPoint& b, double sigma) {
  const Eigen::Matrix3d S =
      a.sigma + b.sigma +
      2.0 * sigma * sigma * Eigen::Matrix3d::Identity();
  const double v = gaussian3(a.position - b.position, S);
  if (!std::isfinite(v)) {
    throw std::runtime_error("pairwise_term: non-finite result");
  }
  return v;
}

GmmCloud GmmCloud::from_points(std::vector<WorldPoint> pts) {
  GmmCloud cloud;
  cloud.points = std::move(pts);
  const std::size_t m = cloud.points.size();
  cloud.positions.resize(m);
  cloud.lambda_max.resize(m);
  parallel_blocks(m, 4096, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      cloud.positions[i] = cloud.points[i].position;
      cloud.lambda_max[i] =
          std::max(0.0, largest_eigenvalue(cloud.points[i].sigma));
    }
  });
  if (m > 0) {
    std::vector<double> sorted = cloud.lambda_max;
    std::nth_element(sorted.begin(), sorted.begin() + (95 * (m - 1)) / 100,
                     sorted.end());
    cloud.lambda_p95 = sorted[(95 * (m - 1)) / 100];
  }
  cloud.index.build(cloud.positions);
  return cloud;
}

namespace {

EntropyReport evaluate_cost(const GmmCloud& cloud, const CloudConfig& cfg,
                            CostMode mode) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t m = cloud.size();
  EntropyReport report;
  report.m = m;
  report.pairs_total = static_cast<std::uint64_t>(m) * (m + 1) / 2;
  if (m == 0) return report;

  const double sigma2 = cfg.sigma_kernel * cfg.sigma_kernel;
  const Eigen::Matrix3d kernel2 = 2.0 * sigma2 * Eigen::Matrix3d::Identity();
  const auto& pos = cloud.positions;
  const auto& pts = cloud.points;
  const auto& lam = cloud.lambda_max;

  const std::size_t block = 256;
  const std::size_t num_blocks = (m + block - 1) / block;
  std::vector<PairSum> partials(num_blocks);

  if (mode == CostMode::exact) {
    parallel_blocks(m, block, [&](std::size_t bi, std::size_t b,
                                  std::size_t e) {
      PairSum acc;
      for (std::size_t i = b; i < e; ++i) {
        for (std::size_t j = i; j < m; ++j) {
          const Eigen::Matrix3d S = pts[i].sigma + pts[j].sigma + kernel2;
          acc.sum.add(gaussian3(pos[i] - pos[j], S));
          ++acc.visited;
        }
      }
      partials[bi] = acc;
    });
  } else {
    const double two_k = 2.0 * cfg.k_prune;
    // Query radius covers the per-pair bound for any neighbor whose
    // largest eigenvalue is below the cloud's 95th percentile; pairs
    // beyond that are still caught from the higher-eigenvalue side
    // (see the j < i branch below), so no bounded pair is ever lost.
    const double pad = two_k * cloud.lambda_p95;
    parallel_blocks(m, block, [&](std::size_t bi, std::size_t b,
                                  std::size_t e) {
      PairSum acc;
      std::vector<int> neighbors;
      for (std::size_t i = b; i < e; ++i) {
        const Eigen::Matrix3d self = 2.0 * pts[i].sigma + kernel2;
        acc.sum.add(gaussian3(Eigen::Vector3d::Zero(), self));
        ++acc.visited;
        const double radius_i = two_k * (lam[i] + sigma2) + pad;
        cloud.index.radius_search(pos[i], radius_i, neighbors);
        for (const int j : neighbors) {
          const std::size_t ju = static_cast<std::size_t>(j);
          if (ju == i) continue;
          const double d2 = (pos[i] - pos[ju]).squaredNorm();
          const double bound =
              two_k * (std::max(lam[i], lam[ju]) + sigma2);
          if (d2 >= bound * bound) continue;
          if (ju < i) {
            // Counted from the smaller index unless its own query radius
            // could not reach this pair.
            const double radius_j = two_k * (lam[ju] + sigma2) + pad;
            if (d2 <= radius_j * radius_j) continue;
          }
          const Eigen::Matrix3d S = pts[i].sigma + pts[ju].sigma + kernel2;
          acc.sum.add(gaussian3(pos[i] - pos[ju], S));
          ++acc.visited;
        }
      }
      partials[bi] = acc;
    });
  }

  KahanSum total;
  for (const auto& p : partials) {
    total.add(p.sum);
    report.pairs_visited += p.visited;
  }
  report.cost = -total.value();
  report.cost_defined = true;
  report.prune_ratio =
      1.0 - static_cast<double>(report.pairs_visited) /
                static_cast<double>(report.pairs_total);
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  if (!std::isfinite(report.cost)) {
    throw std::runtime_error("rqe_cost: non-finite cost");
  }
  return report;
}

}  // namespace

double rqe_cost(const GmmCloud& cloud, const CloudConfig& cfg, CostMode mode) {
  if (cloud.size() == 0) {
    throw std::invalid_argument("rqe_cost: empty cloud");
  }
  return evaluate_cost(cloud, cfg, mode).cost;
}

EntropyReport entropy_report(const GmmCloud& cloud, const CloudConfig& cfg,
                             CostMode mode) {
  return evaluate_cost(cloud, cfg, mode);
}

EntropyObjective::EntropyObjective(std::vector<Scan> scans,
                                   std::vector<Pose> poses, CloudConfig cfg,
                                   std::optional<CalibParams> freeze_reference)
    : cfg_(cfg) {
  cfg_.validate();
  if (scans.size() != poses.size()) {
    throw std::invalid_argument("EntropyObjective: " +
                                std::to_string(scans.size()) + " scans vs " +
                                std::to_string(poses.size()) + " poses");
  }
  for (std::size_t k = 0; k < scans.size(); ++k) {
    if (scans[k].t != poses[k].t) {
      throw std::invalid_argument(
          "EntropyObjective: scan/pose timestamp mismatch at index " +
          std::to_string(k));
    }
  }
  poses_ = std::move(poses);

  // Flatten: validity mask, then stride over the valid returns per scan.
  for (std::size_t k = 0; k < scans.size(); ++k) {
    const Scan& scan = scans[k];
    std::size_t kept = 0;
    for (std::size_t n = 0; n < scan.points.size(); ++n) {
      if (n < scan.valid.size() && !scan.valid[n]) continue;
      if (kept++ % static_cast<std::size_t>(cfg_.subsample_stride) != 0) {
        continue;
      }
      flat_points_.push_back(scan.points[n]);
      flat_scan_.push_back(static_cast<std::int32_t>(k));
      flat_beam_.push_back(static_cast<std::int32_t>(n));
    }
  }

  // Uniform decimation down to the cap.
  if (flat_points_.size() > cfg_.max_points) {
    const std::size_t n = flat_points_.size();
    const std::size_t extra =
        (n + cfg_.max_points - 1) / cfg_.max_points;  // ceil
    std::size_t w = 0;
    for (std::size_t i = 0; i < n; i += extra) {
      flat_points_[w] = flat_points_[i];
      flat_scan_[w] = flat_scan_[i];
      flat_beam_[w] = flat_beam_[i];
      ++w;
    }
    flat_points_.resize(w);
    flat_scan_.resize(w);
    flat_beam_.resize(w);
  }

  if (flat_points_.empty()) {
    std::cerr << "warning: no valid lidar returns after masking/subsampling\n";
  }

  if (cfg_.freeze_covariances && freeze_reference) {
    freeze_at(*freeze_reference);
  }
}

void EntropyObjective::freeze_at(const CalibParams& params) const {
  const std::size_t n = flat_points_.size();
  frozen_sigmas_.resize(n);
  frozen_lambda_.resize(n);
  parallel_blocks(n, 1024, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      frozen_sigmas_[i] = propagate_covariance(
          flat_points_[i], poses_[flat_scan_[i]], params);
    }
  });
  frozen_ready_ = true;
}

GmmCloud EntropyObjective::build(const CalibParams& params) const {
  if (!params.finite()) {
    throw std::invalid_argument("EntropyObjective: non-finite parameters");
  }
  const std::size_t n = flat_points_.size();
  const bool frozen = cfg_.freeze_covariances;
  if (frozen && !frozen_ready_) freeze_at(params);

  std::vector<WorldPoint> world(n);
  // One lift cache per pose, shared by all that pose's returns.
  std::vector<LiftCache> caches(poses_.size());
  parallel_blocks(poses_.size(), 64,
                  [&](std::size_t, std::size_t b, std::size_t e) {
                    for (std::size_t k = b; k < e; ++k) {
                      caches[k] = make_lift_cache(poses_[k], params);
                    }
                  });
  parallel_blocks(n, 1024, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const std::int32_t k = flat_scan_[i];
      WorldPoint& w = world[i];
      w.position = lift_cached(caches[k], flat_points_[i]);
      w.sigma = frozen ? frozen_sigmas_[i]
                       : propagate_covariance(flat_points_[i], poses_[k],
                                              params);
      w.t = poses_[k].t;
      w.scan_index = k;
      w.point_index = flat_beam_[i];
    }
  });
  return GmmCloud::from_points(std::move(world));
}

double EntropyObjective::cost(const CalibParams& params, CostMode mode) const {
  const GmmCloud cloud = build(params);
  if (cloud.size() == 0) {
    throw std::runtime_error("EntropyObjective: empty cloud (no valid returns)");
  }
  return rqe_cost(cloud, cfg_, mode);
}

GmmCloud build_cloud(const std::vector<Scan>& scans,
                     const std::vector<Pose>& poses, const CalibParams& params,
                     const CloudConfig& cfg) {
  CloudConfig one_shot = cfg;
  one_shot.freeze_covariances = false;
  EntropyObjective objective(scans, poses, one_shot);
  return objective.build(params);
}

}  // namespace crisp
