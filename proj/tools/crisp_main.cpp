#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "crisp/entropy.hpp"
#include "crisp/geometry.hpp"
#include "crisp/io.hpp"
#include "crisp/optimizer.hpp"
#include "crisp/simulator.hpp"

namespace {

using namespace crisp;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Config load_config(const std::string& path) {
  return path.empty() ? Config{} : read_config(path);
}

/// Index-align scans with poses at the given offset; drops out-of-range
/// scans and errors when nothing is left.
void align_dataset(const LoadedDataset& data, double td, bool euler_lerp,
                   std::vector<Scan>& scans, std::vector<Pose>& poses) {
  pair_scans_to_poses(data.scans, data.poses, td, euler_lerp, scans, poses);
  if (scans.empty()) {
    throw std::runtime_error(
        "no scans overlap the trajectory at offset td=" + fmt(td));
  }
}

int cmd_simulate(const std::string& env_name, std::uint64_t seed,
                 double duration, double td_ms, bool noiseless,
                 const std::string& truth_path, const std::string& out_dir) {
  const Environment env = build_environment(env_name);
  const TrajectorySpec spec =
      randomize_trajectory(default_trajectory_spec(duration), seed);
  LidarModel lidar;
  NoiseModel noise;
  noise.rng_seed = seed;
  if (noiseless) {
    noise.trans_std = 0.0;
    noise.rot_std = 0.0;
    noise.range_std = 0.0;
  }
  CalibParams truth = default_true_params();
  if (!truth_path.empty()) truth = read_params_file(truth_path).params;

  const Dataset ds =
      make_dataset(env, spec, lidar, noise, truth, td_ms * 1e-3);
  write_dataset(out_dir, ds, lidar);
  std::size_t points = 0;
  for (const Scan& s : ds.scans) points += s.valid_count();
  std::cout << "wrote " << ds.scans.size() << " scans (" << points
            << " valid returns), " << ds.poses.size() << " poses to "
            << out_dir << "\n";
  return 0;
}

int cmd_calibrate(const std::string& data_dir, const std::string& config_path,
                  const std::string& out_path, bool observability) {
  const LoadedDataset data = read_dataset(data_dir);
  const Config cfg = load_config(config_path);
  const SearchSpace space = cfg.search_space();

  CalibResult result;
  if (cfg.estimate_time_offset) {
    result = calibrate_with_time(data.scans, data.poses, space, cfg.opt,
                                 cfg.ta, cfg.cloud, cfg.euler_lerp);
  } else {
    std::vector<Scan> scans;
    std::vector<Pose> poses;
    align_dataset(data, 0.0, cfg.euler_lerp, scans, poses);
    result = calibrate(scans, poses, space, cfg.opt, cfg.cloud);
  }

  if (observability) {
    std::vector<Scan> scans;
    std::vector<Pose> poses;
    align_dataset(data, result.has_td ? result.td : 0.0, cfg.euler_lerp,
                  scans, poses);
    EntropyObjective objective(scans, poses, cfg.cloud);
    observability_scan(
        [&objective](const CalibParams& p) {
          return objective.cost(p, CostMode::pruned);
        },
        space);
  }

  write_result_file(out_path, result);
  write_trace_csv(out_path + ".trace.csv", result.trace);
  std::cout << "x_mm=" << fmt(result.params.x * 1e3)
            << "\ny_mm=" << fmt(result.params.y * 1e3)
            << "\nz_mm=" << fmt(result.params.z * 1e3)
            << "\nphi_deg=" << fmt(rad_to_deg(result.params.phi))
            << "\ntheta_deg=" << fmt(rad_to_deg(result.params.theta))
            << "\npsi_deg=" << fmt(rad_to_deg(result.params.psi))
            << "\ns=" << fmt(result.params.s) << '\n';
  if (result.has_td) std::cout << "td_ms=" << fmt(result.td * 1e3) << '\n';
  std::cout << "final_cost=" << fmt(result.final_cost)
            << "\ntotal_seconds=" << fmt(result.total_seconds) << '\n';
  return 0;
}

int cmd_cost_slice(const std::string& data_dir, const std::string& param,
                   double lo, double hi, int steps,
                   const std::string& config_path,
                   const std::string& out_path) {
  if (steps < 2) throw std::runtime_error("cost-slice: need --steps >= 2");
  if (!(hi > lo)) throw std::runtime_error("cost-slice: need range A < B");
  const LoadedDataset data = read_dataset(data_dir);
  const Config cfg = load_config(config_path);

  // Offsets are CLI-facing units: metres (x/y/z), degrees (angles),
  // absolute scale offset (s), milliseconds (td).
  std::vector<std::pair<double, double>> samples;
  samples.reserve(steps);
  if (param == "td") {
    for (int i = 0; i < steps; ++i) {
      const double off_ms = lo + (hi - lo) * i / (steps - 1);
      std::vector<Scan> scans;
      std::vector<Pose> poses;
      align_dataset(data, off_ms * 1e-3, cfg.euler_lerp, scans, poses);
      EntropyObjective objective(scans, poses, cfg.cloud);
      samples.emplace_back(off_ms,
                           objective.cost(cfg.seed, CostMode::pruned));
    }
  } else {
    std::vector<Scan> scans;
    std::vector<Pose> poses;
    align_dataset(data, 0.0, cfg.euler_lerp, scans, poses);
    EntropyObjective objective(scans, poses, cfg.cloud);
    for (int i = 0; i < steps; ++i) {
      const double off = lo + (hi - lo) * i / (steps - 1);
      CalibParams p = cfg.seed;
      if (param == "x") p.x += off;
      else if (param == "y") p.y += off;
      else if (param == "z") p.z += off;
      else if (param == "phi") p.phi += deg_to_rad(off);
      else if (param == "theta") p.theta += deg_to_rad(off);
      else if (param == "psi") p.psi += deg_to_rad(off);
      else if (param == "s") p.s += off;
      else throw std::runtime_error("cost-slice: unknown parameter '" +
                                    param + "'");
      samples.emplace_back(off, objective.cost(p, CostMode::pruned));
    }
  }
  write_slice_csv(out_path, samples);
  std::cout << "wrote " << samples.size() << " samples to " << out_path
            << '\n';
  return 0;
}

int cmd_export_cloud(const std::string& data_dir,
                     const std::string& params_path,
                     const std::string& config_path,
                     const std::string& out_path) {
  const LoadedDataset data = read_dataset(data_dir);
  const ParamsFile pf = read_params_file(params_path);
  const Config cfg = load_config(config_path);

  std::vector<Scan> scans;
  std::vector<Pose> poses;
  align_dataset(data, pf.has_td ? pf.td : 0.0, cfg.euler_lerp, scans, poses);
  const GmmCloud cloud = build_cloud(scans, poses, pf.params, cfg.cloud);
  export_ply(cloud, out_path);
  std::cout << "wrote " << cloud.size() << " points to " << out_path << '\n';
  return 0;
}

int cmd_evaluate(const std::string& result_path,
                 const std::string& truth_path) {
  const ResultFile result = read_result_file(result_path);
  const ResultFile truth = read_result_file(truth_path);

  std::cout << "x_mm=" << fmt(std::abs(result.params.x - truth.params.x) * 1e3)
            << "\ny_mm="
            << fmt(std::abs(result.params.y - truth.params.y) * 1e3)
            << "\nz_mm="
            << fmt(std::abs(result.params.z - truth.params.z) * 1e3)
            << "\nphi_deg="
            << fmt(rad_to_deg(
                   std::abs(wrap_angle(result.params.phi - truth.params.phi))))
            << "\ntheta_deg="
            << fmt(rad_to_deg(std::abs(
                   wrap_angle(result.params.theta - truth.params.theta))))
            << "\npsi_deg="
            << fmt(rad_to_deg(
                   std::abs(wrap_angle(result.params.psi - truth.params.psi))))
            << "\nscale_x1e3="
            << fmt(std::abs(result.params.s - truth.params.s) * 1e3) << '\n';
  if (result.has_td && truth.has_td) {
    std::cout << "td_ms=" << fmt(std::abs(result.td - truth.td) * 1e3) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crisp: lidar/egomotion Sim(3) + time offset calibration by "
               "point cloud crispness maximization"};
  app.require_subcommand(1);

  // simulate
  std::string sim_env = "simple_room";
  std::uint64_t sim_seed = 0;
  double sim_duration = 50.0;
  double sim_td_ms = 0.0;
  bool sim_noiseless = false;
  std::string sim_truth;
  std::string sim_out;
  CLI::App* sim = app.add_subcommand("simulate", "Generate a dataset bundle");
  sim->add_option("--env", sim_env,
                  "Environment: simple_room, parking_lot, plane_city, "
                  "quadratic_forest, triangle_array");
  sim->add_option("--seed", sim_seed, "Trajectory and noise seed");
  sim->add_option("--duration", sim_duration, "Trajectory duration, seconds");
  sim->add_option("--td", sim_td_ms, "Injected time offset, milliseconds");
  sim->add_flag("--noiseless", sim_noiseless, "Disable all noise");
  sim->add_option("--truth", sim_truth,
                  "Ground-truth parameter file (default built-in)");
  sim->add_option("--out", sim_out, "Output directory")->required();

  // calibrate
  std::string cal_data, cal_config, cal_out;
  bool cal_observability = false;
  CLI::App* cal = app.add_subcommand("calibrate", "Run the calibration");
  cal->add_option("--data", cal_data, "Dataset directory")->required();
  cal->add_option("--config", cal_config, "Configuration file");
  cal->add_option("--out", cal_out, "Result file path")->required();
  cal->add_flag("--observability", cal_observability,
                "Run the per-parameter observability diagnostic");

  // cost-slice
  std::string cs_data, cs_param, cs_config, cs_out = "slice.csv";
  std::vector<double> cs_range;
  int cs_steps = 21;
  CLI::App* cs = app.add_subcommand(
      "cost-slice", "1-D cost slice through one parameter");
  cs->add_option("--data", cs_data, "Dataset directory")->required();
  cs->add_option("--param", cs_param, "x|y|z|phi|theta|psi|s|td")->required();
  cs->add_option("--range", cs_range,
                 "Offset range A B around the seed (m, deg, scale, ms)")
      ->expected(2)
      ->required();
  cs->add_option("--steps", cs_steps, "Number of samples");
  cs->add_option("--config", cs_config, "Configuration file");
  cs->add_option("--out", cs_out, "Output CSV path");

  // export-cloud
  std::string ec_data, ec_params, ec_config, ec_out;
  CLI::App* ec = app.add_subcommand("export-cloud",
                                    "Export the reconstructed cloud as PLY");
  ec->add_option("--data", ec_data, "Dataset directory")->required();
  ec->add_option("--params", ec_params, "Calibration parameter file")
      ->required();
  ec->add_option("--config", ec_config, "Configuration file");
  ec->add_option("--out", ec_out, "Output PLY path")->required();

  // evaluate
  std::string ev_result, ev_truth;
  CLI::App* ev = app.add_subcommand(
      "evaluate", "Per-parameter absolute errors of a result vs truth");
  ev->add_option("--result", ev_result, "Result file")->required();
  ev->add_option("--truth", ev_truth, "Ground-truth parameter file")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      return cmd_simulate(sim_env, sim_seed, sim_duration, sim_td_ms,
                          sim_noiseless, sim_truth, sim_out);
    }
    if (cal->parsed()) {
      return cmd_calibrate(cal_data, cal_config, cal_out, cal_observability);
    }
    if (cs->parsed()) {
      return cmd_cost_slice(cs_data, cs_param, cs_range[0], cs_range[1],
                            cs_steps, cs_config, cs_out);
    }
    if (ec->parsed()) {
      return cmd_export_cloud(ec_data, ec_params, ec_config, ec_out);
    }
    if (ev->parsed()) {
      return cmd_evaluate(ev_result, ev_truth);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
