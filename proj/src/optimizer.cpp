#include "crisp/optimizer.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>
#include "crisp/geometry.hpp"

namespace crisp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

// Portable deterministic helpers on top of mt19937_64 (the std distributions
// are implementation-defined, which would break cross-platform determinism).
double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

double uniform_in(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform01(gen);
}

std::size_t uniform_index(std::mt19937_64& gen, std::size_t n) {
  return static_cast<std::size_t>(gen() % n);
}

Eigen::VectorXd clamp_to_box(const Eigen::VectorXd& v, const BoxBounds& box) {
  return v.cwiseMax(box.lower).cwiseMin(box.upper);
}

Eigen::Matrix<double, 7, 1> to7(const Eigen::VectorXd& v) {
  return Eigen::Matrix<double, 7, 1>(v);
}

}  // namespace

// ---------------------------------------------------------------------------
// SearchSpace

Eigen::Matrix<double, 7, 1> SearchSpace::encode(const CalibParams& p) {
  if (!(p.s > 0.0)) {
    throw std::invalid_argument("SearchSpace::encode: scale must be positive");
  }
  Eigen::Matrix<double, 7, 1> v;
  v << p.x, p.y, p.z, p.phi, p.theta, p.psi, std::log(p.s);
  return v;
}

CalibParams SearchSpace::decode(const Eigen::Matrix<double, 7, 1>& v) {
  CalibParams p;
  p.x = v[0];
  p.y = v[1];
  p.z = v[2];
  p.phi = v[3];
  p.theta = v[4];
  p.psi = v[5];
  p.s = std::exp(v[6]);
  return p;
}

SearchSpace SearchSpace::around_seed(const CalibParams& seed,
                                     double trans_halfwidth,
                                     double rot_halfwidth, double scale_factor,
                                     std::uint64_t rng_seed) {
  if (!(trans_halfwidth > 0.0) || !(rot_halfwidth > 0.0) ||
      !(scale_factor > 1.0)) {
    throw std::invalid_argument("SearchSpace::around_seed: invalid halfwidths");
  }
  SearchSpace space;
  space.seed = seed;
  space.rng_seed = rng_seed;
  const Eigen::Matrix<double, 7, 1> center = encode(seed);
  Eigen::Matrix<double, 7, 1> half;
  half << trans_halfwidth, trans_halfwidth, trans_halfwidth, rot_halfwidth,
      rot_halfwidth, rot_halfwidth, std::log(scale_factor);
  space.lower = center - half;
  space.upper = center + half;
  return space;
}

void SearchSpace::validate() const {
  if (!seed.finite()) {
    throw std::invalid_argument("SearchSpace: seed is not finite");
  }
  for (int d = 0; d < 7; ++d) {
    if (!std::isfinite(lower[d]) || !std::isfinite(upper[d]) ||
        !(lower[d] < upper[d])) {
      throw std::invalid_argument(
          "SearchSpace: lower < upper must hold elementwise (parameter " +
          std::to_string(d) + ")");
    }
  }
  if (!contains(encode(seed))) {
    throw std::invalid_argument("SearchSpace: seed outside bounds");
  }
}

bool SearchSpace::contains(const Eigen::Matrix<double, 7, 1>& v) const {
  for (int d = 0; d < 7; ++d) {
    if (v[d] < lower[d] || v[d] > upper[d]) return false;
  }
  return true;
}

void OptimizerConfig::validate(int dim) const {
  const int min_pop = 10 * (dim + 1);
  if (crs_population != 0 && crs_population < min_pop) {
    throw std::invalid_argument("OptimizerConfig: crs_population must be 0 "
                                "(default) or >= 10*(dim+1) = " +
                                std::to_string(min_pop));
  }
  if (crs_max_evals < 1 || nm_max_evals < dim + 1) {
    throw std::invalid_argument("OptimizerConfig: evaluation budgets too small");
  }
  if (!(nm_xtol > 0.0) || !(nm_ftol > 0.0)) {
    throw std::invalid_argument("OptimizerConfig: tolerances must be positive");
  }
}

void TimeAlignConfig::validate() const {
  if (!(range > 0.0) || !(resolution > 0.0) || resolution > 2.0 * range) {
    throw std::invalid_argument(
        "TimeAlignConfig: need range > 0 and 0 < resolution <= 2*range");
  }
  if (refine_passes < 0) {
    throw std::invalid_argument("TimeAlignConfig: refine_passes must be >= 0");
  }
}

// ---------------------------------------------------------------------------
// CRS2 with local mutation (Kaelo & Ali variant).

MinimizeResult crs_minimize(const ObjectiveFn& f, const BoxBounds& box,
                            int population, int max_evals,
                            std::uint64_t rng_seed,
                            const Eigen::VectorXd* seed_point) {
  const int dim = static_cast<int>(box.lower.size());
  if (dim < 1 || box.upper.size() != dim) {
    throw std::invalid_argument("crs_minimize: inconsistent bounds");
  }
  for (int d = 0; d < dim; ++d) {
    if (!(box.lower[d] < box.upper[d])) {
      throw std::invalid_argument("crs_minimize: lower < upper must hold");
    }
  }
  if (population < dim + 2) {
    throw std::invalid_argument("crs_minimize: population must be >= dim+2");
  }
  if (max_evals < 1) {
    throw std::invalid_argument("crs_minimize: max_evals must be >= 1");
  }

  std::mt19937_64 gen(rng_seed);
  MinimizeResult result;
  result.f = kInf;

  std::vector<Eigen::VectorXd> pts;
  std::vector<double> costs;
  pts.reserve(population);
  costs.reserve(population);
  int evals = 0;

  const auto evaluate = [&](const Eigen::VectorXd& x) {
    double c = f(x);
    if (!std::isfinite(c)) c = kInf;
    ++evals;
    if (c < result.f) {
      result.f = c;
      result.x = x;
    }
    result.trace.push_back({evals, c, result.f});
    return c;
  };

  const int init = std::min(population, max_evals);
  for (int i = 0; i < init; ++i) {
    Eigen::VectorXd x(dim);
    if (i == 0 && seed_point != nullptr) {
      x = clamp_to_box(*seed_point, box);
    } else {
      for (int d = 0; d < dim; ++d) {
        x[d] = uniform_in(gen, box.lower[d], box.upper[d]);
      }
    }
    pts.push_back(x);
    costs.push_back(evaluate(x));
  }

  std::vector<std::size_t> pick(dim);
  while (evals < max_evals && pts.size() >= static_cast<std::size_t>(dim + 2)) {
    std::size_t best = 0, worst = 0;
    for (std::size_t i = 1; i < costs.size(); ++i) {
      if (costs[i] < costs[best]) best = i;
      if (costs[i] > costs[worst]) worst = i;
    }

    // Reflection set: the best point plus dim distinct others; the centroid
    // of all but the last is reflected through the last.
    for (int k = 0; k < dim; ++k) {
      bool fresh = false;
      while (!fresh) {
        pick[k] = uniform_index(gen, pts.size());
        fresh = pick[k] != best;
        for (int j = 0; fresh && j < k; ++j) fresh = pick[k] != pick[j];
      }
    }
    Eigen::VectorXd centroid = pts[best];
    for (int k = 0; k < dim - 1; ++k) centroid += pts[pick[k]];
    centroid /= static_cast<double>(dim);
    const Eigen::VectorXd& last = pts[pick[dim - 1]];
    Eigen::VectorXd trial = 2.0 * centroid - last;

    bool accepted = false;
    if ((trial.array() >= box.lower.array()).all() &&
        (trial.array() <= box.upper.array()).all()) {
      const double c = evaluate(trial);
      if (c < costs[worst]) {
        pts[worst] = trial;
        costs[worst] = c;
        accepted = true;
      }
      if (evals >= max_evals) break;
    }
    if (!accepted) {
      // Local mutation around the current best.
      Eigen::VectorXd mutated(dim);
      for (int d = 0; d < dim; ++d) {
        const double w = uniform01(gen);
        mutated[d] = (1.0 + w) * pts[best][d] - w * trial[d];
      }
      mutated = clamp_to_box(mutated, box);
      const double c = evaluate(mutated);
      if (c < costs[worst]) {
        pts[worst] = mutated;
        costs[worst] = c;
      }
    }
  }

  if (!std::isfinite(result.f)) {
    throw std::runtime_error(
        "crs_minimize: optimization failed, all " + std::to_string(evals) +
        " evaluations non-finite");
  }
  result.evals = evals;
  return result;
}

// ---------------------------------------------------------------------------
// Nelder-Mead simplex.

namespace {

double simplex_volume(const std::vector<Eigen::VectorXd>& simplex) {
  const int dim = static_cast<int>(simplex[0].size());
  Eigen::MatrixXd edges(dim, dim);
  for (int i = 0; i < dim; ++i) edges.col(i) = simplex[i + 1] - simplex[0];
  double factorial = 1.0;
  for (int i = 2; i <= dim; ++i) factorial *= i;
  return std::abs(edges.determinant()) / factorial;
}

struct NmRun {
  Eigen::VectorXd x;
  double f = kInf;
  bool degenerate = false;
};

NmRun nm_once(const ObjectiveFn& f, const Eigen::VectorXd& x0,
              const Eigen::VectorXd& step, const Eigen::VectorXd& xtol,
              double ftol, int max_evals, int& evals, MinimizeResult& result) {
  const int dim = static_cast<int>(x0.size());
  const double kAlpha = 1.0, kGamma = 2.0, kRho = 0.5, kSigma = 0.5;

  NmRun run;
  const auto evaluate = [&](const Eigen::VectorXd& x) {
    double c = f(x);
    if (!std::isfinite(c)) c = kInf;
    ++evals;
    if (c < run.f) {
      run.f = c;
      run.x = x;
    }
    const double global_best = std::min(result.f, run.f);
    result.trace.push_back({evals, c, global_best});
    return c;
  };

  std::vector<Eigen::VectorXd> simplex(dim + 1, x0);
  std::vector<double> cost(dim + 1);
  for (int i = 1; i <= dim; ++i) simplex[i][i - 1] += step[i - 1];
  for (int i = 0; i <= dim && evals < max_evals; ++i) {
    cost[i] = evaluate(simplex[i]);
  }

  std::vector<int> order(dim + 1);
  while (evals < max_evals) {
    for (int i = 0; i <= dim; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return cost[a] < cost[b]; });
    const int ib = order[0], isw = order[dim - 1], iw = order[dim];

    bool within_xtol = true;
    for (int d = 0; d < dim && within_xtol; ++d) {
      double spread = 0.0;
      for (int i = 0; i <= dim; ++i) {
        spread = std::max(spread, std::abs(simplex[i][d] - simplex[ib][d]));
      }
      within_xtol = spread <= xtol[d];
    }
    const double fspread = std::abs(cost[iw] - cost[ib]);
    const bool within_ftol =
        fspread <= ftol * (std::abs(cost[ib]) + std::abs(cost[iw])) ||
        fspread == 0.0;
    if (within_xtol || within_ftol) break;

    if (simplex_volume(simplex) < 1e-300) {
      run.degenerate = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
    for (int i = 0; i <= dim; ++i) {
      if (i != iw) centroid += simplex[i];
    }
    centroid /= static_cast<double>(dim);

    const Eigen::VectorXd reflected = centroid + kAlpha * (centroid - simplex[iw]);
    const double fr = evaluate(reflected);
    if (evals >= max_evals) break;

    if (fr < cost[ib]) {
      const Eigen::VectorXd expanded = centroid + kGamma * (centroid - simplex[iw]);
      const double fe = evaluate(expanded);
      if (fe < fr) {
        simplex[iw] = expanded;
        cost[iw] = fe;
      } else {
        simplex[iw] = reflected;
        cost[iw] = fr;
      }
      continue;
    }
    if (fr < cost[isw]) {
      simplex[iw] = reflected;
      cost[iw] = fr;
      continue;
    }
    if (fr < cost[iw]) {
      const Eigen::VectorXd outside = centroid + kRho * (reflected - centroid);
      const double fo = evaluate(outside);
      if (fo <= fr) {
        simplex[iw] = outside;
        cost[iw] = fo;
        continue;
      }
    } else {
      const Eigen::VectorXd inside = centroid + kRho * (simplex[iw] - centroid);
      const double fi = evaluate(inside);
      if (fi < cost[iw]) {
        simplex[iw] = inside;
        cost[iw] = fi;
        continue;
      }
    }
    // Shrink toward the best vertex.
    for (int i = 0; i <= dim && evals < max_evals; ++i) {
      if (i == ib) continue;
      simplex[i] = simplex[ib] + kSigma * (simplex[i] - simplex[ib]);
      cost[i] = evaluate(simplex[i]);
    }
  }
  return run;
}

}  // namespace

MinimizeResult nelder_mead_minimize(const ObjectiveFn& f,
                                    const Eigen::VectorXd& x0,
                                    const Eigen::VectorXd& step,
                                    const Eigen::VectorXd& xtol, double ftol,
                                    int max_evals) {
  const int dim = static_cast<int>(x0.size());
  if (dim < 1 || step.size() != dim || xtol.size() != dim) {
    throw std::invalid_argument("nelder_mead_minimize: size mismatch");
  }
  for (int d = 0; d < dim; ++d) {
    if (!(step[d] != 0.0) || !(xtol[d] > 0.0)) {
      throw std::invalid_argument(
          "nelder_mead_minimize: step must be nonzero and xtol positive");
    }
  }
  if (!(ftol > 0.0) || max_evals < dim + 1) {
    throw std::invalid_argument("nelder_mead_minimize: bad termination config");
  }

  MinimizeResult result;
  result.f = kInf;
  int evals = 0;

  NmRun run = nm_once(f, x0, step, xtol, ftol, max_evals, evals, result);
  if (run.f < result.f) {
    result.f = run.f;
    result.x = run.x;
  }
  if (run.degenerate && evals < max_evals) {
    // Restart once from a perturbed copy of the best point so far.
    Eigen::VectorXd x1 = result.x;
    for (int d = 0; d < dim; ++d) x1[d] += 0.05 * step[d];
    NmRun retry = nm_once(f, x1, step, xtol, ftol, max_evals, evals, result);
    if (retry.f < result.f) {
      result.f = retry.f;
      result.x = retry.x;
    }
    if (retry.degenerate) {
      throw std::runtime_error(
          "nelder_mead_minimize: simplex degenerate after restart");
    }
  }
  if (!std::isfinite(result.f)) {
    throw std::runtime_error(
        "nelder_mead_minimize: optimization failed, all " +
        std::to_string(evals) + " evaluations non-finite");
  }
  result.evals = evals;
  return result;
}

// ---------------------------------------------------------------------------
// Calibration-facing wrappers.

namespace {

BoxBounds to_box(const SearchSpace& space) {
  BoxBounds box;
  box.lower = space.lower;
  box.upper = space.upper;
  return box;
}

ObjectiveFn wrap_objective(const CalibObjective& objective,
                           const BoxBounds& box) {
  return [&objective, box](const Eigen::VectorXd& v) {
    const Eigen::VectorXd c = clamp_to_box(v, box);
    return objective(SearchSpace::decode(to7(c)));
  };
}

}  // namespace

CalibParams crs_search(const CalibObjective& objective,
                       const SearchSpace& space, const OptimizerConfig& cfg) {
  space.validate();
  cfg.validate(7);
  const BoxBounds box = to_box(space);
  const ObjectiveFn f = wrap_objective(objective, box);
  const int population = cfg.crs_population > 0 ? cfg.crs_population : 10 * 8;
  const Eigen::VectorXd seed = SearchSpace::encode(space.seed);
  const MinimizeResult r = crs_minimize(f, box, population, cfg.crs_max_evals,
                                        space.rng_seed, &seed);
  return SearchSpace::decode(to7(clamp_to_box(r.x, box)));
}

CalibParams nelder_mead(const CalibObjective& objective,
                        const CalibParams& seed, const SearchSpace& space,
                        const OptimizerConfig& cfg) {
  space.validate();
  cfg.validate(7);
  if (!seed.finite()) {
    throw std::invalid_argument("nelder_mead: seed is not finite");
  }
  const BoxBounds box = to_box(space);
  const ObjectiveFn f = wrap_objective(objective, box);
  const Eigen::VectorXd width = space.upper - space.lower;
  const Eigen::VectorXd step = 0.1 * width;
  const Eigen::VectorXd xtol = cfg.nm_xtol * width;
  const Eigen::VectorXd x0 =
      clamp_to_box(SearchSpace::encode(seed), box);
  const MinimizeResult r =
      nelder_mead_minimize(f, x0, step, xtol, cfg.nm_ftol, cfg.nm_max_evals);
  return SearchSpace::decode(to7(clamp_to_box(r.x, box)));
}

namespace {

std::string echo_configs(const SearchSpace& space, const OptimizerConfig& opt,
                         const CloudConfig& cloud) {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << space.seed.x << "," << space.seed.y << "," << space.seed.z
     << "," << space.seed.phi << "," << space.seed.theta << ","
     << space.seed.psi << "," << space.seed.s << "\n";
  os << "lower=" << space.lower.transpose() << "\n";
  os << "upper=" << space.upper.transpose() << "\n";
  os << "rng_seed=" << space.rng_seed << "\n";
  os << "crs_population=" << opt.crs_population
     << "\ncrs_max_evals=" << opt.crs_max_evals << "\nnm_xtol=" << opt.nm_xtol
     << "\nnm_ftol=" << opt.nm_ftol << "\nnm_max_evals=" << opt.nm_max_evals
     << "\n";
  os << "sigma_kernel=" << cloud.sigma_kernel << "\nk_prune=" << cloud.k_prune
     << "\nsubsample_stride=" << cloud.subsample_stride
     << "\nmax_points=" << cloud.max_points
     << "\nfreeze_covariances=" << (cloud.freeze_covariances ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace

CalibResult calibrate(const std::vector<Scan>& scans,
                      const std::vector<Pose>& poses, const SearchSpace& space,
                      const OptimizerConfig& opt_cfg,
                      const CloudConfig& cloud_cfg) {
  space.validate();
  opt_cfg.validate(7);
  cloud_cfg.validate();
  if (poses.size() < 2) {
    throw std::invalid_argument("calibrate: need at least 2 poses");
  }
  std::size_t valid = 0;
  for (const Scan& s : scans) valid += s.valid_count();
  if (valid == 0) {
    throw std::invalid_argument("calibrate: no valid lidar returns");
  }

  const double t0 = now_seconds();
  EntropyObjective objective(scans, poses, cloud_cfg,
                             cloud_cfg.freeze_covariances
                                 ? std::optional<CalibParams>(space.seed)
                                 : std::nullopt);
  const BoxBounds box = to_box(space);
  const CalibObjective calib_obj = [&objective](const CalibParams& p) {
    return objective.cost(p, CostMode::pruned);
  };
  const ObjectiveFn f = wrap_objective(calib_obj, box);

  CalibResult result;
  result.config_echo = echo_configs(space, opt_cfg, cloud_cfg);
  result.input_digest = input_digest(scans, poses);

  const int population =
      opt_cfg.crs_population > 0 ? opt_cfg.crs_population : 10 * 8;
  const Eigen::VectorXd seed = SearchSpace::encode(space.seed);
  const double t_crs = now_seconds();
  MinimizeResult crs = crs_minimize(f, box, population, opt_cfg.crs_max_evals,
                                    space.rng_seed, &seed);
  const double t_nm = now_seconds();

  const Eigen::VectorXd width = space.upper - space.lower;
  MinimizeResult nm = nelder_mead_minimize(
      f, clamp_to_box(crs.x, box), 0.1 * width, opt_cfg.nm_xtol * width,
      opt_cfg.nm_ftol, opt_cfg.nm_max_evals);
  const double t_end = now_seconds();

  const bool nm_better = nm.f < crs.f;
  const Eigen::VectorXd best_x =
      clamp_to_box(nm_better ? nm.x : crs.x, box);
  result.params = SearchSpace::decode(to7(best_x));
  result.final_cost = nm_better ? nm.f : crs.f;
  assert(result.final_cost <= crs.f && result.final_cost <= nm.f);

  result.crs_evals = crs.evals;
  result.nm_evals = nm.evals;
  result.crs_seconds = t_nm - t_crs;
  result.nm_seconds = t_end - t_nm;
  result.total_seconds = t_end - t0;
  result.trace = std::move(crs.trace);
  double best = result.trace.empty() ? kInf : result.trace.back().best;
  for (TraceRow row : nm.trace) {
    row.eval += result.crs_evals;
    best = std::min(best, row.cost);
    row.best = best;
    result.trace.push_back(row);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Pose interpolation and temporal alignment.

Pose interpolate_pose(const std::vector<Pose>& poses, double t,
                      bool euler_lerp) {
  if (poses.empty()) {
    throw std::invalid_argument("interpolate_pose: empty trajectory");
  }
  if (t < poses.front().t || t > poses.back().t) {
    throw std::out_of_range(
        "interpolate_pose: t=" + std::to_string(t) +
        " outside trajectory [" + std::to_string(poses.front().t) + ", " +
        std::to_string(poses.back().t) + "], extrapolation not supported");
  }
  const auto it = std::lower_bound(
      poses.begin(), poses.end(), t,
      [](const Pose& p, double value) { return p.t < value; });
  if (it != poses.end() && it->t == t) return *it;
  const Pose& b = *it;
  const Pose& a = *(it - 1);
  const double u = (t - a.t) / (b.t - a.t);

  Pose out;
  out.t = t;
  out.x = a.x + u * (b.x - a.x);
  out.y = a.y + u * (b.y - a.y);
  out.z = a.z + u * (b.z - a.z);
  if (euler_lerp) {
    out.phi = wrap_angle(a.phi + u * wrap_angle(b.phi - a.phi));
    out.theta = wrap_angle(a.theta + u * wrap_angle(b.theta - a.theta));
    out.psi = wrap_angle(a.psi + u * wrap_angle(b.psi - a.psi));
  } else {
    const Eigen::Quaterniond qa(rotation_zyx(a.phi, a.theta, a.psi));
    const Eigen::Quaterniond qb(rotation_zyx(b.phi, b.theta, b.psi));
    const Eigen::Matrix3d r = qa.slerp(u, qb).toRotationMatrix();
    euler_from_rotation(r, out.phi, out.theta, out.psi);
  }
  if (a.Q.isZero(0.0) && b.Q.isZero(0.0)) {
    out.Q.setZero();
  } else {
    // Convex combination of PSD matrices; conditioning only mops up rounding.
    out.Q = conditioned_pose_covariance(a.Q + u * (b.Q - a.Q));
  }
  return out;
}

void pair_scans_to_poses(const std::vector<Scan>& scans,
                         const std::vector<Pose>& poses, double td,
                         bool euler_lerp, std::vector<Scan>& out_scans,
                         std::vector<Pose>& out_poses) {
  out_scans.clear();
  out_poses.clear();
  if (poses.empty()) return;
  const double t_first = poses.front().t;
  const double t_last = poses.back().t;
  for (const Scan& scan : scans) {
    const double ts = scan.t - td;
    if (ts < t_first || ts > t_last) continue;
    Scan shifted = scan;
    shifted.t = ts;
    out_poses.push_back(interpolate_pose(poses, ts, euler_lerp));
    out_scans.push_back(std::move(shifted));
  }
}

TimeAlignResult time_align(const std::vector<Scan>& scans,
                           const std::vector<Pose>& poses,
                           const CalibParams& fixed_params,
                           const TimeAlignConfig& ta_cfg,
                           const CloudConfig& cloud_cfg, bool euler_lerp) {
  ta_cfg.validate();
  cloud_cfg.validate();
  if (!fixed_params.finite()) {
    throw std::invalid_argument("time_align: fixed_params not finite");
  }

  TimeAlignResult result;
  const auto eval_td = [&](double td) {
    std::vector<Scan> s;
    std::vector<Pose> p;
    pair_scans_to_poses(scans, poses, td, euler_lerp, s, p);
    std::size_t valid = 0;
    for (const Scan& sc : s) valid += sc.valid_count();
    double cost = kInf;
    if (!s.empty() && valid > 0) {
      EntropyObjective objective(s, p, cloud_cfg);
      cost = objective.cost(fixed_params, CostMode::pruned);
      if (!std::isfinite(cost)) cost = kInf;
    }
    result.grid.emplace_back(td, cost);
    return cost;
  };

  const int half = static_cast<int>(std::llround(ta_cfg.range /
                                                 ta_cfg.resolution));
  double best_td = 0.0;
  double best_cost = kInf;
  for (int i = -half; i <= half; ++i) {
    const double td = i * ta_cfg.resolution;
    const double cost = eval_td(td);
    if (cost < best_cost) {
      best_cost = cost;
      best_td = td;
    }
  }
  if (!std::isfinite(best_cost)) {
    throw std::runtime_error(
        "time_align: every candidate offset left no scans inside the "
        "trajectory");
  }

  // Golden-section refinement inside the bracket around the best cell.
  double lo = std::max(best_td - ta_cfg.resolution, -ta_cfg.range);
  double hi = std::min(best_td + ta_cfg.resolution, ta_cfg.range);
  if (ta_cfg.refine_passes > 0 && hi > lo) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo);
    double d = lo + gr * (hi - lo);
    double fc = eval_td(c);
    double fd = eval_td(d);
    if (fc < best_cost) { best_cost = fc; best_td = c; }
    if (fd < best_cost) { best_cost = fd; best_td = d; }
    for (int pass = 0; pass < ta_cfg.refine_passes; ++pass) {
      if (fc <= fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - gr * (hi - lo);
        fc = eval_td(c);
        if (fc < best_cost) { best_cost = fc; best_td = c; }
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + gr * (hi - lo);
        fd = eval_td(d);
        if (fd < best_cost) { best_cost = fd; best_td = d; }
      }
    }
  }
  result.td = best_td;
  return result;
}

CalibResult calibrate_with_time(const std::vector<Scan>& scans,
                                const std::vector<Pose>& poses,
                                const SearchSpace& space,
                                const OptimizerConfig& opt_cfg,
                                const TimeAlignConfig& ta_cfg,
                                const CloudConfig& cloud_cfg,
                                bool euler_lerp) {
  const double t0 = now_seconds();
  const TimeAlignResult ta =
      time_align(scans, poses, space.seed, ta_cfg, cloud_cfg, euler_lerp);
  const double t1 = now_seconds();

  std::vector<Scan> shifted_scans;
  std::vector<Pose> shifted_poses;
  pair_scans_to_poses(scans, poses, ta.td, euler_lerp, shifted_scans,
                      shifted_poses);
  CalibResult result =
      calibrate(shifted_scans, shifted_poses, space, opt_cfg, cloud_cfg);
  result.has_td = true;
  result.td = ta.td;
  result.td_seconds = t1 - t0;
  result.total_seconds += result.td_seconds;
  result.input_digest = input_digest(scans, poses);
  return result;
}

ObservabilityReport observability_scan(const CalibObjective& objective,
                                       const SearchSpace& space, int steps) {
  space.validate();
  if (steps < 3) {
    throw std::invalid_argument("observability_scan: steps must be >= 3");
  }
  const Eigen::Matrix<double, 7, 1> center = SearchSpace::encode(space.seed);

  ObservabilityReport report;
  const double f_seed = objective(SearchSpace::decode(center));
  report.eval_noise = 1e-9 * (1.0 + std::abs(f_seed));
  for (int d = 0; d < 7; ++d) {
    double lo = kInf, hi = -kInf;
    for (int i = 0; i < steps; ++i) {
      Eigen::Matrix<double, 7, 1> v = center;
      v[d] = space.lower[d] +
             (space.upper[d] - space.lower[d]) * i /
                 static_cast<double>(steps - 1);
      const double c = objective(SearchSpace::decode(v));
      lo = std::min(lo, c);
      hi = std::max(hi, c);
    }
    report.variation[d] = hi - lo;
    report.observable[d] = report.variation[d] >= 10.0 * report.eval_noise;
    if (!report.observable[d]) {
      static const char* names[7] = {"x", "y", "z", "phi", "theta", "psi",
                                     "log_s"};
      std::cerr << "warning: parameter " << names[d]
                << " appears unobservable on this trajectory (cost slice "
                   "variation "
                << report.variation[d] << " < 10 x evaluation noise "
                << report.eval_noise << ")\n";
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

void fnv1a(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
}

void fnv1a_double(std::uint64_t& h, double v) { fnv1a(h, &v, sizeof(v)); }

}  // namespace

std::uint64_t input_digest(const std::vector<Scan>& scans,
                           const std::vector<Pose>& poses) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Pose& p : poses) {
    fnv1a_double(h, p.t);
    fnv1a_double(h, p.x);
    fnv1a_double(h, p.y);
    fnv1a_double(h, p.z);
    fnv1a_double(h, p.phi);
    fnv1a_double(h, p.theta);
    fnv1a_double(h, p.psi);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) fnv1a_double(h, p.Q(r, c));
    }
  }
  for (const Scan& s : scans) {
    fnv1a_double(h, s.t);
    for (std::size_t i = 0; i < s.size(); ++i) {
      fnv1a_double(h, s.points[i][0]);
      fnv1a_double(h, s.points[i][1]);
      fnv1a(h, &s.valid[i], 1);
    }
  }
  return h;
}

}  // namespace crisp
