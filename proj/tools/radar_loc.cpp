// Copyright 2026, radarloc contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "radarloc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace radarloc;

namespace {

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return RunConfig{};
  return load_run_config(path);
}

std::set<std::string> parse_inputs(const std::string& csv) {
  std::set<std::string> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item != "radar" && item != "camera" && item != "lidar" && item != "odo" &&
        item != "gnss") {
      throw ConfigError("unknown input '" + item + "'");
    }
    out.insert(item);
  }
  if (out.empty()) throw ConfigError("enabled inputs must be nonempty");
  return out;
}

void write_residuals_json(const ResidualStats& r, const fs::path& file) {
  std::ofstream out(file);
  out << "{\n"
      << "  \"r_vx\": {\"mean\": " << r.mean_vx << ", \"std\": " << r.std_vx << "},\n"
      << "  \"r_vy\": {\"mean\": " << r.mean_vy << ", \"std\": " << r.std_vy << "},\n"
      << "  \"r_yawrate\": {\"mean\": " << r.mean_omega << ", \"std\": " << r.std_omega << "},\n"
      << "  \"samples\": " << r.samples << ",\n"
      << "  \"degraded_cycles\": " << r.degraded << "\n"
      << "}\n";
}

int cmd_simulate(const std::string& scenario, std::uint64_t seed, const std::string& out_dir,
                 const std::string& config_path) {
  RunConfig config = load_config_or_default(config_path);
  config.seed = seed;
  const auto manifest = run_simulate(scenario, seed, out_dir, config);
  for (const auto& e : manifest) {
    std::cout << e.name << "  bytes=" << e.bytes << "  fnv1a=" << e.hash << "\n";
  }
  return 0;
}

int cmd_odometry(const std::string& log_dir, const std::string& out_dir,
                 const std::string& config_path) {
  RunConfig config = load_config_or_default(config_path);
  const LogBundle bundle = read_log_dir(log_dir);
  const std::vector<SensorModel> sensors = resolve_sensors(config, bundle);
  CalibrationTable calib;
  for (const auto& s : sensors) calib[s.id] = s.calibration;

  const OdometryRunResult result = run_odometry_stream(
      bundle.detections, calib, config.odometry, bundle.has_truth() ? &bundle.truth : nullptr);

  const fs::path out = out_dir.empty() ? fs::path(log_dir) : fs::path(out_dir);
  fs::create_directories(out);
  {
    std::ofstream f(out / "ego.jsonl");
    for (const auto& m : result.ego) f << to_jsonl_record(m) << "\n";
  }
  std::cout << "cycles=" << result.cycles << " guard_triggers=" << result.guard_triggers << "\n";
  if (result.residuals) {
    write_residuals_json(*result.residuals, out / "residuals.json");
    std::cout << "r_vx " << result.residuals->mean_vx << " +- " << result.residuals->std_vx
              << " m/s\n"
              << "r_vy " << result.residuals->mean_vy << " +- " << result.residuals->std_vy
              << " m/s\n"
              << "r_yawrate " << result.residuals->mean_omega * 180.0 / kPi << " +- "
              << result.residuals->std_omega * 180.0 / kPi << " deg/s\n";
  } else {
    std::cout << "no truth.csv in the log; residual report skipped\n";
  }
  return 0;
}

int cmd_slam(const std::string& log_dir, const std::string& map_path, const std::string& out_dir,
             const std::string& config_path, const std::string& inputs_csv) {
  RunConfig config = load_config_or_default(config_path);
  if (!inputs_csv.empty()) config.inputs = parse_inputs(inputs_csv);
  LogBundle bundle = read_log_dir(log_dir);
  if (!map_path.empty()) bundle.map = read_map_json(map_path);

  const SlamRunResult result = run_slam_stream(bundle, config);
  if (result.poses.empty()) throw ConfigError("no poses produced; empty input set?");

  const fs::path out = out_dir.empty() ? fs::path(log_dir) : fs::path(out_dir);
  fs::create_directories(out);
  {
    std::ofstream f(out / "poses.jsonl");
    for (std::size_t i = 0; i < result.poses.size(); ++i) {
      f << pose_jsonl_record(result.poses[i], result.covariances[i]) << "\n";
    }
  }
  if (bundle.has_truth()) {
    const EvalRunResult eval = run_eval(result.poses, bundle.truth);
    std::optional<ResidualStats> residuals;
    if (!result.ego.empty()) {
      std::vector<TimedTwist> ref;
      for (const auto& row : bundle.truth) ref.push_back({row.t, row.twist});
      try {
        residuals = odometry_residuals(result.ego, ref);
      } catch (const InsufficientDataError&) {
        // placeholder motion streams (e.g. gnss-only) have no residuals
      }
    }
    write_metrics_json(eval.summary, eval.errors.absolute.size(), residuals,
                       out / "metrics.json");
    std::cout << "lateral p68.2=" << eval.summary.lateral_p68
              << " m  p95.4=" << eval.summary.lateral_p95 << " m\n"
              << "absolute p68.2=" << eval.summary.absolute_p68
              << " m  p95.4=" << eval.summary.absolute_p95 << " m\n";
  } else {
    std::cout << "no truth.csv in the log; metrics skipped\n";
  }
  return 0;
}

int cmd_calibrate(const std::string& log_dir, const std::string& reference,
                  const std::string& mode, const std::string& out_dir,
                  const std::string& config_path) {
  RunConfig config = load_config_or_default(config_path);
  const LogBundle bundle = read_log_dir(log_dir);
  const CalibrationRunResult result = run_calibrate(bundle, reference, mode, config);
  const fs::path out = out_dir.empty() ? fs::path(log_dir) : fs::path(out_dir);
  fs::create_directories(out);
  write_calibration_json(result.entries, out / "calibration.json");
  for (const auto& e : result.entries) {
    std::cout << "sensor " << e.sensor_id << ": beta=" << e.calibration.beta * 180.0 / kPi
              << " deg, mount=(" << e.calibration.mount_x << ", " << e.calibration.mount_y
              << "), alpha_v=" << e.calibration.alpha_doppler
              << ", alpha_theta=" << e.calibration.alpha_azimuth
              << (e.positions_constrained ? "" : "  [positions unconstrained]") << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& estimates_path, const std::string& truth_path,
             const std::string& out_dir) {
  const auto poses_with_cov = read_pose_stream(estimates_path);
  std::vector<TimedPose> estimates;
  for (const auto& [p, cov] : poses_with_cov) estimates.push_back(p);
  const auto truth = read_truth_csv(truth_path);
  const EvalRunResult result = run_eval(estimates, truth);

  const fs::path out = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(out);
  write_metrics_json(result.summary, result.errors.absolute.size(), std::nullopt,
                     out / "metrics.json");
  std::vector<double> lat;
  for (double v : result.errors.lateral) lat.push_back(std::abs(v));
  write_cdf_csv(cdf_points(lat), out / "cdf_lateral.csv");
  write_cdf_csv(cdf_points(result.errors.absolute), out / "cdf_absolute.csv");
  std::cout << "lateral p68.2=" << result.summary.lateral_p68
            << " m  p95.4=" << result.summary.lateral_p95 << " m\n"
            << "absolute p68.2=" << result.summary.absolute_p68
            << " m  p95.4=" << result.summary.absolute_p95 << " m\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"radarloc: Doppler radar odometry, feature extraction and graph localization"};
  app.require_subcommand(1);

  std::string scenario = "city", log_dir, map_path, out_dir, config_path, inputs_csv;
  std::string reference = "truth", mode = "offline", estimates_path, truth_path;
  std::uint64_t seed = 1;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic drive log");
  sim->add_option("scenario", scenario, "Scenario preset")->required();
  sim->add_option("--seed", seed, "RNG seed");
  sim->add_option("--out", out_dir, "Output directory")->required();
  sim->add_option("--config", config_path, "Run configuration JSON");

  auto* odo = app.add_subcommand("odometry", "Replay a log through the radar odometry");
  odo->add_option("--log", log_dir, "Log directory")->required();
  odo->add_option("--out", out_dir, "Output directory (default: the log directory)");
  odo->add_option("--config", config_path, "Run configuration JSON");

  auto* slam = app.add_subcommand("slam", "Run feature extraction and graph localization");
  slam->add_option("--log", log_dir, "Log directory")->required();
  slam->add_option("--map", map_path, "Map JSON (default: map.json in the log)");
  slam->add_option("--out", out_dir, "Output directory (default: the log directory)");
  slam->add_option("--config", config_path, "Run configuration JSON");
  slam->add_option("--inputs", inputs_csv, "Comma list of radar,camera,lidar,odo,gnss");

  auto* cal = app.add_subcommand("calibrate", "Estimate per-sensor calibration from a log");
  cal->add_option("--log", log_dir, "Log directory")->required();
  cal->add_option("--reference", reference, "truth | radar");
  cal->add_option("--mode", mode, "online | offline");
  cal->add_option("--out", out_dir, "Output directory (default: the log directory)");
  cal->add_option("--config", config_path, "Run configuration JSON");

  auto* ev = app.add_subcommand("eval", "Compare a pose stream against a reference");
  ev->add_option("--estimates", estimates_path, "poses.jsonl")->required();
  ev->add_option("--truth", truth_path, "truth.csv")->required();
  ev->add_option("--out", out_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) return cmd_simulate(scenario, seed, out_dir, config_path);
    if (odo->parsed()) return cmd_odometry(log_dir, out_dir, config_path);
    if (slam->parsed()) return cmd_slam(log_dir, map_path, out_dir, config_path, inputs_csv);
    if (cal->parsed()) return cmd_calibrate(log_dir, reference, mode, out_dir, config_path);
    if (ev->parsed()) return cmd_eval(estimates_path, truth_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
