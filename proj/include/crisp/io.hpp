#pragma once

#include <string>
#include <vector>

#include "crisp/entropy.hpp"
#include "crisp/optimizer.hpp"
#include "crisp/simulator.hpp"
#include "crisp/types.hpp"

namespace crisp {

// All file formats are UTF-8 text with '#' comment lines, values in SI units
// and radians, doubles serialized with 17 significant digits so that
// write-then-read round-trips exactly.

/// Pose file: one record per line, "t x y z phi theta psi" optionally
/// followed by the 36 row-major entries of Q (omitted Q reads as zero).
/// Timestamps must be strictly increasing.
std::vector<Pose> read_pose_file(const std::string& path);
void write_pose_file(const std::string& path, const std::vector<Pose>& poses);

/// Scan file: one record per return, "t beam_index x y valid_flag", records
/// grouped by identical t with strictly increasing beam indices inside a
/// group and strictly increasing timestamps across groups.
std::vector<Scan> read_scan_file(const std::string& path);
void write_scan_file(const std::string& path, const std::vector<Scan>& scans);

/// Calibration parameter file: key=value lines x, y, z, phi, theta, psi, s
/// and optionally td (seconds).
struct ParamsFile {
  CalibParams params;
  bool has_td = false;
  double td = 0.0;
};
ParamsFile read_params_file(const std::string& path);
void write_params_file(const std::string& path, const CalibParams& params,
                       const double* td = nullptr);

/// Dataset manifest: key=value description of a dataset directory.
struct DatasetManifest {
  int version = 1;
  std::string scan_file = "scans.txt";  // relative to the manifest
  std::string pose_file = "poses.txt";
  std::string units = "si";
  LidarModel lidar;
  bool has_truth = false;
  CalibParams true_params;
  bool has_true_td = false;
  double true_td = 0.0;
};
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& manifest);

/// Dataset directory bundle: manifest.txt + poses.txt + scans.txt, plus
/// truth.txt when ground truth is known.
void write_dataset(const std::string& dir, const Dataset& dataset,
                   const LidarModel& lidar);
struct LoadedDataset {
  std::vector<Scan> scans;
  std::vector<Pose> poses;
  DatasetManifest manifest;
};
LoadedDataset read_dataset(const std::string& dir);

/// Flat key=value run configuration; every field of the optimizer, cloud and
/// time-alignment configs is addressable. Unknown keys are errors.
struct Config {
  CalibParams seed;
  double bound_trans_halfwidth = 0.5;        // metres
  double bound_rot_halfwidth = deg_to_rad(15.0);
  double bound_scale_factor = 4.0;
  std::uint64_t rng_seed = 0;
  OptimizerConfig opt;
  CloudConfig cloud;
  bool estimate_time_offset = false;
  TimeAlignConfig ta;
  bool euler_lerp = false;

  SearchSpace search_space() const;
};
Config read_config(const std::string& path);
void write_config(const std::string& path, const Config& config);

/// Calibration result: key=value (parameters, cost, eval counts, timings,
/// input digest, config echo under config.*). The cost trace goes to a
/// sibling CSV. read_result_file recovers the fields evaluate needs.
void write_result_file(const std::string& path, const CalibResult& result);
struct ResultFile {
  CalibParams params;
  bool has_td = false;
  double td = 0.0;
  double final_cost = 0.0;
};
ResultFile read_result_file(const std::string& path);
void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace);

/// CSV of (offset, cost) samples, header "offset,cost".
void write_slice_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& samples);

/// ASCII PLY export of the cloud's centroids (property float x/y/z).
void export_ply(const GmmCloud& cloud, const std::string& path);

}  // namespace crisp
