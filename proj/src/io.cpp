#include "crisp/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace crisp {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(const std::string& path, int line,
                       const std::string& message) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + message);
}

double parse_double(const std::string& token, const std::string& path,
                    int line) {
  const std::string t = trim(token);
  if (t.empty()) fail(path, line, "empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    fail(path, line, "malformed number '" + t + "'");
  }
  return v;
}

long long parse_int(const std::string& token, const std::string& path,
                    int line) {
  const std::string t = trim(token);
  if (t.empty()) fail(path, line, "empty integer field");
  char* end = nullptr;
  const long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) {
    fail(path, line, "malformed integer '" + t + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& token, const std::string& path,
                         int line) {
  const std::string t = trim(token);
  if (t.empty()) fail(path, line, "empty integer field");
  char* end = nullptr;
  const unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) {
    fail(path, line, "malformed unsigned integer '" + t + "'");
  }
  return v;
}

bool parse_bool(const std::string& token, const std::string& path, int line) {
  const long long v = parse_int(token, path, line);
  if (v != 0 && v != 1) fail(path, line, "boolean field must be 0 or 1");
  return v == 1;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open '" + path + "' for writing");
  }
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open '" + path + "' for reading");
  }
  return in;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failure on '" + path + "'");
}

bool is_content_line(const std::string& line) {
  const std::string t = trim(line);
  return !t.empty() && t[0] != '#';
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::istringstream is(line);
  std::string tok;
  while (is >> tok) fields.push_back(tok);
  return fields;
}

/// key=value lines in file order; duplicate keys are errors.
std::vector<std::pair<std::string, std::string>> read_kv_file(
    const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!is_content_line(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(path, lineno, "expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(path, lineno, "empty key");
    if (!seen.emplace(key, lineno).second) {
      fail(path, lineno, "duplicate key '" + key + "'");
    }
    entries.emplace_back(key, value);
  }
  return entries;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pose files.

std::vector<Pose> read_pose_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<Pose> poses;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!is_content_line(line)) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 7 && f.size() != 43) {
      fail(path, lineno,
           "pose record needs 7 or 43 fields, got " + std::to_string(f.size()));
    }
    Pose p;
    p.t = parse_double(f[0], path, lineno);
    p.x = parse_double(f[1], path, lineno);
    p.y = parse_double(f[2], path, lineno);
    p.z = parse_double(f[3], path, lineno);
    p.phi = parse_double(f[4], path, lineno);
    p.theta = parse_double(f[5], path, lineno);
    p.psi = parse_double(f[6], path, lineno);
    p.Q.setZero();
    if (f.size() == 43) {
      for (int r = 0; r < 6; ++r) {
        for (int c = 0; c < 6; ++c) {
          p.Q(r, c) = parse_double(f[7 + 6 * r + c], path, lineno);
        }
      }
    }
    if (!poses.empty() && !(p.t > poses.back().t)) {
      fail(path, lineno, "timestamps must be strictly increasing (" +
                             fmt(p.t) + " after " + fmt(poses.back().t) + ")");
    }
    poses.push_back(p);
  }
  return poses;
}

void write_pose_file(const std::string& path, const std::vector<Pose>& poses) {
  std::ofstream out = open_out(path);
  out << "# t x y z phi theta psi Q[36 row-major]\n";
  for (const Pose& p : poses) {
    out << fmt(p.t) << ' ' << fmt(p.x) << ' ' << fmt(p.y) << ' ' << fmt(p.z)
        << ' ' << fmt(p.phi) << ' ' << fmt(p.theta) << ' ' << fmt(p.psi);
    for (int r = 0; r < 6; ++r) {
      for (int c = 0; c < 6; ++c) out << ' ' << fmt(p.Q(r, c));
    }
    out << '\n';
  }
  finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Scan files.

std::vector<Scan> read_scan_file(const std::string& path) {
  std::ifstream in = open_in(path);
  std::vector<Scan> scans;
  std::string line;
  int lineno = 0;
  long long last_beam = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!is_content_line(line)) continue;
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 5) {
      fail(path, lineno,
           "scan record needs 5 fields, got " + std::to_string(f.size()));
    }
    const double t = parse_double(f[0], path, lineno);
    const long long beam = parse_int(f[1], path, lineno);
    const double x = parse_double(f[2], path, lineno);
    const double y = parse_double(f[3], path, lineno);
    const bool valid = parse_bool(f[4], path, lineno);
    if (beam < 0) fail(path, lineno, "beam index must be >= 0");

    if (scans.empty() || t != scans.back().t) {
      if (!scans.empty() && !(t > scans.back().t)) {
        fail(path, lineno, "timestamps must be strictly increasing (" +
                               fmt(t) + " after " + fmt(scans.back().t) + ")");
      }
      scans.emplace_back();
      scans.back().t = t;
      last_beam = -1;
    }
    if (beam <= last_beam) {
      fail(path, lineno, "beam indices must be strictly increasing within a "
                         "scan");
    }
    last_beam = beam;
    scans.back().points.emplace_back(x, y);
    scans.back().valid.push_back(valid ? 1 : 0);
  }
  if (scans.empty()) {
    std::cerr << "warning: scan file '" << path << "' contains no returns\n";
  }
  return scans;
}

void write_scan_file(const std::string& path, const std::vector<Scan>& scans) {
  std::ofstream out = open_out(path);
  out << "# t beam_index x y valid_flag\n";
  for (const Scan& s : scans) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << fmt(s.t) << ' ' << i << ' ' << fmt(s.points[i][0]) << ' '
          << fmt(s.points[i][1]) << ' ' << int(s.valid[i]) << '\n';
    }
  }
  finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Parameter files.

ParamsFile read_params_file(const std::string& path) {
  ParamsFile result;
  bool have[7] = {false, false, false, false, false, false, false};
  for (const auto& [key, value] : read_kv_file(path)) {
    if (key == "x") { result.params.x = parse_double(value, path, 0); have[0] = true; }
    else if (key == "y") { result.params.y = parse_double(value, path, 0); have[1] = true; }
    else if (key == "z") { result.params.z = parse_double(value, path, 0); have[2] = true; }
    else if (key == "phi") { result.params.phi = parse_double(value, path, 0); have[3] = true; }
    else if (key == "theta") { result.params.theta = parse_double(value, path, 0); have[4] = true; }
    else if (key == "psi") { result.params.psi = parse_double(value, path, 0); have[5] = true; }
    else if (key == "s") { result.params.s = parse_double(value, path, 0); have[6] = true; }
    else if (key == "td") { result.td = parse_double(value, path, 0); result.has_td = true; }
    else {
      throw std::runtime_error(path + ": unknown key '" + key + "'");
    }
  }
  for (int i = 0; i < 7; ++i) {
    if (!have[i]) {
      static const char* names[7] = {"x", "y", "z", "phi", "theta", "psi", "s"};
      throw std::runtime_error(path + ": missing key '" +
                               std::string(names[i]) + "'");
    }
  }
  if (!(result.params.s > 0.0)) {
    throw std::runtime_error(path + ": scale must be positive");
  }
  return result;
}

void write_params_file(const std::string& path, const CalibParams& params,
                       const double* td) {
  std::ofstream out = open_out(path);
  out << "# calibration parameters (metres, radians)\n";
  out << "x=" << fmt(params.x) << "\ny=" << fmt(params.y)
      << "\nz=" << fmt(params.z) << "\nphi=" << fmt(params.phi)
      << "\ntheta=" << fmt(params.theta) << "\npsi=" << fmt(params.psi)
      << "\ns=" << fmt(params.s) << '\n';
  if (td != nullptr) out << "td=" << fmt(*td) << '\n';
  finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Manifests and dataset directories.

DatasetManifest read_manifest(const std::string& path) {
  DatasetManifest m;
  bool truth_field[7] = {};
  for (const auto& [key, value] : read_kv_file(path)) {
    if (key == "version") m.version = static_cast<int>(parse_int(value, path, 0));
    else if (key == "scan_file") m.scan_file = value;
    else if (key == "pose_file") m.pose_file = value;
    else if (key == "units") m.units = value;
    else if (key == "lidar_rate") m.lidar.rate = parse_double(value, path, 0);
    else if (key == "lidar_fov") m.lidar.fov = parse_double(value, path, 0);
    else if (key == "lidar_resolution") m.lidar.resolution = parse_double(value, path, 0);
    else if (key == "lidar_range_min") m.lidar.range_min = parse_double(value, path, 0);
    else if (key == "lidar_range_max") m.lidar.range_max = parse_double(value, path, 0);
    else if (key == "true_x") { m.true_params.x = parse_double(value, path, 0); truth_field[0] = true; }
    else if (key == "true_y") { m.true_params.y = parse_double(value, path, 0); truth_field[1] = true; }
    else if (key == "true_z") { m.true_params.z = parse_double(value, path, 0); truth_field[2] = true; }
    else if (key == "true_phi") { m.true_params.phi = parse_double(value, path, 0); truth_field[3] = true; }
    else if (key == "true_theta") { m.true_params.theta = parse_double(value, path, 0); truth_field[4] = true; }
    else if (key == "true_psi") { m.true_params.psi = parse_double(value, path, 0); truth_field[5] = true; }
    else if (key == "true_s") { m.true_params.s = parse_double(value, path, 0); truth_field[6] = true; }
    else if (key == "true_td") { m.true_td = parse_double(value, path, 0); m.has_true_td = true; }
    else {
      throw std::runtime_error(path + ": unknown key '" + key + "'");
    }
  }
  if (m.version != 1) {
    throw std::runtime_error(path + ": unsupported manifest version " +
                             std::to_string(m.version));
  }
  const int truth_count = truth_field[0] + truth_field[1] + truth_field[2] +
                          truth_field[3] + truth_field[4] + truth_field[5] +
                          truth_field[6];
  if (truth_count != 0 && truth_count != 7) {
    throw std::runtime_error(path +
                             ": ground-truth parameters must be all present "
                             "or all absent");
  }
  m.has_truth = truth_count == 7;
  const fs::path dir = fs::path(path).parent_path();
  for (const std::string& ref : {m.scan_file, m.pose_file}) {
    if (!fs::exists(dir / ref)) {
      throw std::runtime_error(path + ": referenced file '" + ref +
                               "' does not exist");
    }
  }
  return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out = open_out(path);
  out << "version=" << m.version << "\nscan_file=" << m.scan_file
      << "\npose_file=" << m.pose_file << "\nunits=" << m.units << '\n';
  out << "lidar_rate=" << fmt(m.lidar.rate) << "\nlidar_fov="
      << fmt(m.lidar.fov) << "\nlidar_resolution=" << fmt(m.lidar.resolution)
      << "\nlidar_range_min=" << fmt(m.lidar.range_min)
      << "\nlidar_range_max=" << fmt(m.lidar.range_max) << '\n';
  if (m.has_truth) {
    out << "true_x=" << fmt(m.true_params.x) << "\ntrue_y="
        << fmt(m.true_params.y) << "\ntrue_z=" << fmt(m.true_params.z)
        << "\ntrue_phi=" << fmt(m.true_params.phi)
        << "\ntrue_theta=" << fmt(m.true_params.theta)
        << "\ntrue_psi=" << fmt(m.true_params.psi)
        << "\ntrue_s=" << fmt(m.true_params.s) << '\n';
  }
  if (m.has_true_td) out << "true_td=" << fmt(m.true_td) << '\n';
  finish_out(out, path);
}

void write_dataset(const std::string& dir, const Dataset& dataset,
                   const LidarModel& lidar) {
  fs::create_directories(dir);
  const fs::path base(dir);
  write_pose_file((base / "poses.txt").string(), dataset.poses);
  write_scan_file((base / "scans.txt").string(), dataset.scans);

  DatasetManifest m;
  m.lidar = lidar;
  m.has_truth = true;
  m.true_params = dataset.true_params;
  m.has_true_td = true;
  m.true_td = dataset.true_td;
  write_manifest((base / "manifest.txt").string(), m);
  write_params_file((base / "truth.txt").string(), dataset.true_params,
                    &dataset.true_td);
}

LoadedDataset read_dataset(const std::string& dir) {
  const fs::path base(dir);
  LoadedDataset ds;
  ds.manifest = read_manifest((base / "manifest.txt").string());
  ds.poses = read_pose_file((base / ds.manifest.pose_file).string());
  ds.scans = read_scan_file((base / ds.manifest.scan_file).string());
  return ds;
}

// ---------------------------------------------------------------------------
// Config files.

SearchSpace Config::search_space() const {
  return SearchSpace::around_seed(seed, bound_trans_halfwidth,
                                  bound_rot_halfwidth, bound_scale_factor,
                                  rng_seed);
}

Config read_config(const std::string& path) {
  Config c;
  for (const auto& [key, value] : read_kv_file(path)) {
    if (key == "seed_x") c.seed.x = parse_double(value, path, 0);
    else if (key == "seed_y") c.seed.y = parse_double(value, path, 0);
    else if (key == "seed_z") c.seed.z = parse_double(value, path, 0);
    else if (key == "seed_phi") c.seed.phi = parse_double(value, path, 0);
    else if (key == "seed_theta") c.seed.theta = parse_double(value, path, 0);
    else if (key == "seed_psi") c.seed.psi = parse_double(value, path, 0);
    else if (key == "seed_s") c.seed.s = parse_double(value, path, 0);
    else if (key == "bound_trans_halfwidth") c.bound_trans_halfwidth = parse_double(value, path, 0);
    else if (key == "bound_rot_halfwidth") c.bound_rot_halfwidth = parse_double(value, path, 0);
    else if (key == "bound_scale_factor") c.bound_scale_factor = parse_double(value, path, 0);
    else if (key == "rng_seed") c.rng_seed = parse_uint(value, path, 0);
    else if (key == "crs_population") c.opt.crs_population = static_cast<int>(parse_int(value, path, 0));
    else if (key == "crs_max_evals") c.opt.crs_max_evals = static_cast<int>(parse_int(value, path, 0));
    else if (key == "nm_xtol") c.opt.nm_xtol = parse_double(value, path, 0);
    else if (key == "nm_ftol") c.opt.nm_ftol = parse_double(value, path, 0);
    else if (key == "nm_max_evals") c.opt.nm_max_evals = static_cast<int>(parse_int(value, path, 0));
    else if (key == "sigma_kernel") c.cloud.sigma_kernel = parse_double(value, path, 0);
    else if (key == "k_prune") c.cloud.k_prune = parse_double(value, path, 0);
    else if (key == "subsample_stride") c.cloud.subsample_stride = static_cast<int>(parse_int(value, path, 0));
    else if (key == "max_points") c.cloud.max_points = static_cast<std::size_t>(parse_uint(value, path, 0));
    else if (key == "freeze_covariances") c.cloud.freeze_covariances = parse_bool(value, path, 0);
    else if (key == "estimate_time_offset") c.estimate_time_offset = parse_bool(value, path, 0);
    else if (key == "td_range") c.ta.range = parse_double(value, path, 0);
    else if (key == "td_resolution") c.ta.resolution = parse_double(value, path, 0);
    else if (key == "td_refine_passes") c.ta.refine_passes = static_cast<int>(parse_int(value, path, 0));
    else if (key == "euler_lerp") c.euler_lerp = parse_bool(value, path, 0);
    else {
      throw std::runtime_error(path + ": unknown config key '" + key + "'");
    }
  }
  return c;
}

void write_config(const std::string& path, const Config& c) {
  std::ofstream out = open_out(path);
  out << "# crisp calibration configuration (metres, radians, seconds)\n";
  out << "seed_x=" << fmt(c.seed.x) << "\nseed_y=" << fmt(c.seed.y)
      << "\nseed_z=" << fmt(c.seed.z) << "\nseed_phi=" << fmt(c.seed.phi)
      << "\nseed_theta=" << fmt(c.seed.theta)
      << "\nseed_psi=" << fmt(c.seed.psi) << "\nseed_s=" << fmt(c.seed.s)
      << '\n';
  out << "bound_trans_halfwidth=" << fmt(c.bound_trans_halfwidth)
      << "\nbound_rot_halfwidth=" << fmt(c.bound_rot_halfwidth)
      << "\nbound_scale_factor=" << fmt(c.bound_scale_factor)
      << "\nrng_seed=" << c.rng_seed << '\n';
  out << "crs_population=" << c.opt.crs_population
      << "\ncrs_max_evals=" << c.opt.crs_max_evals
      << "\nnm_xtol=" << fmt(c.opt.nm_xtol)
      << "\nnm_ftol=" << fmt(c.opt.nm_ftol)
      << "\nnm_max_evals=" << c.opt.nm_max_evals << '\n';
  out << "sigma_kernel=" << fmt(c.cloud.sigma_kernel)
      << "\nk_prune=" << fmt(c.cloud.k_prune)
      << "\nsubsample_stride=" << c.cloud.subsample_stride
      << "\nmax_points=" << c.cloud.max_points
      << "\nfreeze_covariances=" << (c.cloud.freeze_covariances ? 1 : 0)
      << '\n';
  out << "estimate_time_offset=" << (c.estimate_time_offset ? 1 : 0)
      << "\ntd_range=" << fmt(c.ta.range)
      << "\ntd_resolution=" << fmt(c.ta.resolution)
      << "\ntd_refine_passes=" << c.ta.refine_passes << '\n';
  out << "euler_lerp=" << (c.euler_lerp ? 1 : 0) << '\n';
  finish_out(out, path);
}

// ---------------------------------------------------------------------------
// Result files.

void write_result_file(const std::string& path, const CalibResult& r) {
  std::ofstream out = open_out(path);
  out << "# calibration result (metres, radians, seconds)\n";
  out << "x=" << fmt(r.params.x) << "\ny=" << fmt(r.params.y)
      << "\nz=" << fmt(r.params.z) << "\nphi=" << fmt(r.params.phi)
      << "\ntheta=" << fmt(r.params.theta) << "\npsi=" << fmt(r.params.psi)
      << "\ns=" << fmt(r.params.s) << '\n';
  if (r.has_td) out << "td=" << fmt(r.td) << '\n';
  out << "final_cost=" << fmt(r.final_cost) << "\ncrs_evals=" << r.crs_evals
      << "\nnm_evals=" << r.nm_evals << "\ncrs_seconds=" << fmt(r.crs_seconds)
      << "\nnm_seconds=" << fmt(r.nm_seconds)
      << "\ntd_seconds=" << fmt(r.td_seconds)
      << "\ntotal_seconds=" << fmt(r.total_seconds)
      << "\ninput_digest=" << r.input_digest << '\n';
  std::istringstream echo(r.config_echo);
  std::string line;
  while (std::getline(echo, line)) {
    if (!trim(line).empty()) out << "config." << line << '\n';
  }
  finish_out(out, path);
}

ResultFile read_result_file(const std::string& path) {
  ResultFile r;
  bool have[7] = {};
  for (const auto& [key, value] : read_kv_file(path)) {
    if (key.rfind("config.", 0) == 0) continue;
    if (key == "x") { r.params.x = parse_double(value, path, 0); have[0] = true; }
    else if (key == "y") { r.params.y = parse_double(value, path, 0); have[1] = true; }
    else if (key == "z") { r.params.z = parse_double(value, path, 0); have[2] = true; }
    else if (key == "phi") { r.params.phi = parse_double(value, path, 0); have[3] = true; }
    else if (key == "theta") { r.params.theta = parse_double(value, path, 0); have[4] = true; }
    else if (key == "psi") { r.params.psi = parse_double(value, path, 0); have[5] = true; }
    else if (key == "s") { r.params.s = parse_double(value, path, 0); have[6] = true; }
    else if (key == "td") { r.td = parse_double(value, path, 0); r.has_td = true; }
    else if (key == "final_cost") r.final_cost = parse_double(value, path, 0);
    // Remaining bookkeeping keys are ignored on read.
  }
  for (int i = 0; i < 7; ++i) {
    if (!have[i]) {
      throw std::runtime_error(path + ": incomplete result file");
    }
  }
  return r;
}

void write_trace_csv(const std::string& path,
                     const std::vector<TraceRow>& trace) {
  std::ofstream out = open_out(path);
  out << "eval,cost,best\n";
  for (const TraceRow& row : trace) {
    out << row.eval << ',' << fmt(row.cost) << ',' << fmt(row.best) << '\n';
  }
  finish_out(out, path);
}

void write_slice_csv(const std::string& path,
                     const std::vector<std::pair<double, double>>& samples) {
  std::ofstream out = open_out(path);
  out << "offset,cost\n";
  for (const auto& [offset, cost] : samples) {
    out << fmt(offset) << ',' << fmt(cost) << '\n';
  }
  finish_out(out, path);
}

// ---------------------------------------------------------------------------
// PLY export.

void export_ply(const GmmCloud& cloud, const std::string& path) {
  if (cloud.size() == 0) {
    throw std::invalid_argument("export_ply: empty cloud");
  }
  std::ofstream out = open_out(path);
  out << "ply\nformat ascii 1.0\ncomment crisp calibration cloud\n"
      << "element vertex " << cloud.size() << '\n'
      << "property float x\nproperty float y\nproperty float z\n"
      << "end_header\n";
  char buf[96];
  for (const Eigen::Vector3d& p : cloud.positions) {
    std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n",
                  static_cast<float>(p[0]), static_cast<float>(p[1]),
                  static_cast<float>(p[2]));
    out << buf;
  }
  finish_out(out, path);
}

}  // namespace crisp
