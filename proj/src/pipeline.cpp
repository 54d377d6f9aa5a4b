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

#include "radarloc/pipeline.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "radarloc/calibration.hpp"

namespace radarloc {

namespace {

constexpr double kTimeMatchTol = 1e-6;

}  // namespace

Twist2 LogBundle::truth_twist_at(double t) const {
  if (truth.empty()) return {};
  auto it = std::lower_bound(truth.begin(), truth.end(), t,
                             [](const TruthRow& r, double v) { return r.t < v; });
  if (it == truth.begin()) return it->twist;
  if (it == truth.end()) return truth.back().twist;
  const auto prev = std::prev(it);
  return (t - prev->t <= it->t - t) ? prev->twist : it->twist;
}

LogBundle bundle_from_sim(const SimLog& log) {
  LogBundle b;
  b.detections = log.detections;
  b.external_features = log.external_features;
  b.wheel = log.wheel_odometry;
  b.gnss = log.gnss;
  b.map = log.map;
  b.truth.reserve(log.truth.size());
  for (const auto& s : log.truth) b.truth.push_back({s.t, s.pose, s.twist});
  return b;
}

LogBundle read_log_dir(const std::filesystem::path& dir) {
  LogBundle b;
  DetectionStream stream = read_detection_stream(dir / "detections.jsonl");
  b.detections = std::move(stream.radar);
  b.external_features = std::move(stream.features);
  b.sensors = std::move(stream.sensors);
  if (std::filesystem::exists(dir / "odometry.jsonl")) {
    b.wheel = read_wheel_odometry(dir / "odometry.jsonl");
  }
  if (std::filesystem::exists(dir / "gnss.jsonl")) b.gnss = read_gnss(dir / "gnss.jsonl");
  if (std::filesystem::exists(dir / "map.json")) b.map = read_map_json(dir / "map.json");
  if (std::filesystem::exists(dir / "truth.csv")) b.truth = read_truth_csv(dir / "truth.csv");
  return b;
}

namespace {

void scale_sigmas(std::vector<SensorModel>& sensors, double scale) {
  if (scale == 1.0) return;
  for (auto& s : sensors) {
    s.sigma_range *= scale;
    s.calibration.sigma_doppler *= scale;
    s.calibration.sigma_azimuth *= scale;
  }
}

}  // namespace

std::vector<SensorModel> effective_sensors(const RunConfig& config) {
  std::vector<SensorModel> sensors =
      config.sensors.empty() ? scenario_preset(config.scenario).sensors : config.sensors;
  scale_sigmas(sensors, config.sensor_sigma_scale);
  return sensors;
}

std::vector<SensorModel> resolve_sensors(const RunConfig& config, const LogBundle& bundle) {
  std::vector<SensorModel> sensors = config.sensors;
  if (sensors.empty()) sensors = bundle.sensors;
  if (sensors.empty()) sensors = scenario_preset(config.scenario).sensors;
  scale_sigmas(sensors, config.sensor_sigma_scale);
  return sensors;
}

std::vector<ManifestEntry> run_simulate(const std::string& scenario, std::uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        const RunConfig& config) {
  ScenarioPreset preset = scenario_preset(scenario);
  RunConfig cfg = config;
  cfg.scenario = scenario;
  preset.sensors = effective_sensors(cfg);
  const SimLog log = simulate_drive(preset.world, preset.trajectory, preset.sensors, config.sim, seed);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::exists(out_dir)) {
    throw ConfigError("cannot create output directory " + out_dir.string());
  }

  {
    std::ofstream out(out_dir / "detections.jsonl");
    if (!out) throw ConfigError("cannot write " + (out_dir / "detections.jsonl").string());
    // Leading meta record carries the sensor table; radar detections and
    // external feature records then share the stream in time order.
    out << sensors_meta_record(preset.sensors) << "\n";
    std::size_t fi = 0;
    for (const auto& det : log.detections) {
      while (fi < log.external_features.size() &&
             log.external_features[fi].timestamp <= det.timestamp) {
        out << to_jsonl_record(log.external_features[fi++]) << "\n";
      }
      out << to_jsonl_record(det) << "\n";
    }
    for (; fi < log.external_features.size(); ++fi) {
      out << to_jsonl_record(log.external_features[fi]) << "\n";
    }
  }
  {
    std::ofstream out(out_dir / "odometry.jsonl");
    for (const auto& inc : log.wheel_odometry) out << to_jsonl_record(inc) << "\n";
  }
  {
    std::ofstream out(out_dir / "gnss.jsonl");
    for (const auto& fix : log.gnss) out << to_jsonl_record(fix) << "\n";
  }
  write_map_json(log.map, out_dir / "map.json");
  write_truth_csv(log.truth, out_dir / "truth.csv");

  std::vector<ManifestEntry> manifest;
  for (const char* name :
       {"detections.jsonl", "odometry.jsonl", "gnss.jsonl", "map.json", "truth.csv"}) {
    ManifestEntry e;
    e.name = name;
    e.bytes = std::filesystem::file_size(out_dir / name);
    e.hash = file_hash_hex(out_dir / name);
    manifest.push_back(e);
  }
  {
    std::ofstream out(out_dir / "manifest.json");
    out << "{\n  \"files\": [\n";
    for (std::size_t i = 0; i < manifest.size(); ++i) {
      out << "    {\"name\": \"" << manifest[i].name << "\", \"bytes\": " << manifest[i].bytes
          << ", \"fnv1a\": \"" << manifest[i].hash << "\"}" << (i + 1 < manifest.size() ? "," : "")
          << "\n";
    }
    out << "  ]\n}\n";
  }
  return manifest;
}

OdometryRunResult run_odometry_stream(const std::vector<RadarDetection>& detections,
                                      const CalibrationTable& calib, const OdometryConfig& config,
                                      const std::vector<TruthRow>* truth) {
  OdometryRunResult result;
  RadarOdometryEstimator estimator(calib, config);
  for (const auto& det : detections) {
    for (auto& m : estimator.push(det)) {
      result.ego.push_back(m);
      if (estimator.last_cycle_debug().guard_triggered) ++result.guard_triggers;
    }
  }
  for (auto& m : estimator.finish()) {
    result.ego.push_back(m);
    if (estimator.last_cycle_debug().guard_triggered) ++result.guard_triggers;
  }
  result.cycles = result.ego.size();

  if (truth != nullptr && !truth->empty() && !result.ego.empty()) {
    std::vector<TimedTwist> ref;
    ref.reserve(truth->size());
    for (const auto& row : *truth) ref.push_back({row.t, row.twist});
    result.residuals = odometry_residuals(result.ego, ref);
  }
  return result;
}

namespace {

// Dead-reckoned wheel path with covariance accumulation.
class WheelPath {
 public:
  explicit WheelPath(const std::vector<OdometryIncrement>& incs) {
    if (incs.empty()) throw ConfigError("wheel odometry stream is empty");
    Pose2 p;
    Mat3 cov_sum = Mat3::Zero();
    for (const auto& inc : incs) {
      starts_.push_back(inc.t0);
      poses_.push_back(p);
      cov_prefix_.push_back(cov_sum);
      twists_.push_back(twist_from_pose(inc.delta, inc.t1 - inc.t0));
      p = compose(p, inc.delta);
      cov_sum += inc.covariance;
    }
    starts_.push_back(incs.back().t1);
    poses_.push_back(p);
    cov_prefix_.push_back(cov_sum);
  }

  bool covers(double t) const { return t >= starts_.front() && t <= starts_.back(); }

  Pose2 pose_at(double t) const {
    t = std::clamp(t, starts_.front(), starts_.back());
    const std::size_t i = piece(t);
    return compose(poses_[i], integrate_twist(twists_[i], t - starts_[i]));
  }

  Pose2 relative(double a, double b) const { return radarloc::relative(pose_at(a), pose_at(b)); }

  Mat3 covariance_between(double a, double b) const {
    return interp_cov(b) - interp_cov(a) + Mat3::Identity() * 1e-12;
  }

 private:
  std::size_t piece(double t) const {
    auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
    const std::size_t i =
        (it == starts_.begin()) ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
    return std::min(i, twists_.size() - 1);
  }
  Mat3 interp_cov(double t) const {
    t = std::clamp(t, starts_.front(), starts_.back());
    const std::size_t i = piece(t);
    const double span = starts_[i + 1] - starts_[i];
    const double f = span > 0.0 ? (t - starts_[i]) / span : 0.0;
    return cov_prefix_[i] + f * (cov_prefix_[i + 1] - cov_prefix_[i]);
  }

  std::vector<double> starts_;
  std::vector<Pose2> poses_;
  std::vector<Twist2> twists_;
  std::vector<Mat3> cov_prefix_;
};

}  // namespace

SlamRunResult run_slam_stream(const LogBundle& bundle, const RunConfig& config) {
  const bool use_radar = config.inputs.count("radar") > 0;
  const bool use_camera = config.inputs.count("camera") > 0;
  const bool use_lidar = config.inputs.count("lidar") > 0;
  const bool use_wheel = config.inputs.count("odo") > 0;
  const bool use_gnss = config.inputs.count("gnss") > 0;
  if (config.inputs.empty()) throw ConfigError("enabled inputs must be nonempty");

  SlamRunResult result;
  RunConfig cfg = config;
  cfg.sensors = resolve_sensors(config, bundle);
  const CalibrationTable calib = cfg.calibration_table();

  // The ego-motion stream that drives the pose chain.
  std::optional<WheelPath> wheel;
  if (!bundle.wheel.empty() && use_wheel) wheel.emplace(bundle.wheel);

  if (use_radar) {
    result.ego = run_odometry_stream(bundle.detections, calib, cfg.odometry).ego;
  } else if (wheel) {
    const double period = cfg.odometry.cycle_period;
    for (double t = std::ceil((bundle.wheel.front().t0 + 0.5 * period) / period) * period -
                    0.5 * period;
         t + 0.5 * period <= bundle.wheel.back().t1; t += period) {
      if (!wheel->covers(t - 0.5 * period)) continue;
      const Pose2 d = wheel->relative(t - 0.5 * period, t + 0.5 * period);
      EgoMotion m;
      const Twist2 u = twist_from_pose(d, period);
      m.omega = u.omega;
      m.vx = u.vx;
      m.vy = u.vy;
      m.timestamp = t;
      m.covariance = wheel->covariance_between(t - 0.5 * period, t + 0.5 * period) /
                     (period * period);
      result.ego.push_back(m);
    }
  } else if (use_gnss && !bundle.gnss.empty()) {
    // No motion source: uninformative twists at the fix times, so the pose
    // chain simply follows the fixes.
    for (const auto& fix : bundle.gnss) {
      EgoMotion m;
      m.timestamp = fix.timestamp;
      Mat3 cov = Mat3::Zero();
      cov(0, 0) = 1.0;
      cov(1, 1) = 25.0;
      cov(2, 2) = 25.0;
      m.covariance = cov;
      m.degraded = true;
      result.ego.push_back(m);
    }
  } else {
    throw ConfigError("no usable motion source among the enabled inputs");
  }
  if (result.ego.empty()) return result;

  // Group external features and GNSS by the cycle timestamps they match.
  std::map<std::int64_t, std::vector<FeatureObservation>> features_at;
  auto key_of = [](double t) { return static_cast<std::int64_t>(std::llround(t * 1e6)); };
  for (const auto& f : bundle.external_features) {
    if (f.source == FeatureSource::Camera && !use_camera) continue;
    if (f.source == FeatureSource::Lidar && !use_lidar) continue;
    features_at[key_of(f.timestamp)].push_back(f);
  }
  std::map<std::int64_t, GnssFix> gnss_at;
  if (use_gnss) {
    for (const auto& fix : bundle.gnss) gnss_at[key_of(fix.timestamp)] = fix;
  }

  // Initial pose: configured, else the reference start, else the first fix.
  SlamGraph graph(cfg.slam, bundle.map);
  Pose2 init;
  Mat3 init_info = Mat3::Zero();
  if (cfg.initial_pose) {
    init = *cfg.initial_pose;
    init_info.diagonal() << 1e2, 1e2, 1e3;
  } else if (bundle.has_truth()) {
    init = bundle.truth.front().pose;
    init_info.diagonal() << 1e2, 1e2, 1e3;
  } else if (!bundle.gnss.empty()) {
    init = Pose2(bundle.gnss.front().x, bundle.gnss.front().y, 0.0);
    init_info.diagonal() << 1.0, 1.0, 0.01;
  } else {
    init_info.diagonal() << 1e2, 1e2, 1e3;
  }

  // Radar feature extraction state.
  std::vector<RadarDetection> window_dets;
  std::vector<EgoMotion> window_motions;
  std::size_t det_index = 0;
  int cycles_in_window = 0;

  NodeId prev_pose = 0;
  double prev_time = 0.0;
  bool first = true;
  for (const auto& motion : result.ego) {
    NodeId pose_id;
    if (first) {
      pose_id = graph.set_initial_pose(init, init_info, motion.timestamp);
      first = false;
    } else {
      pose_id = graph.add_odometry(motion);
      if (wheel && use_radar && wheel->covers(prev_time) && wheel->covers(motion.timestamp)) {
        const Pose2 z = wheel->relative(prev_time, motion.timestamp);
        const Mat3 cov = wheel->covariance_between(prev_time, motion.timestamp);
        graph.add_relative_factor(prev_pose, pose_id, z, cov.inverse());
      }
    }

    std::vector<FeatureObservation> features;
    if (use_radar) {
      while (det_index < bundle.detections.size() &&
             bundle.detections[det_index].timestamp <
                 motion.timestamp + 0.5 * cfg.odometry.cycle_period) {
        window_dets.push_back(bundle.detections[det_index++]);
      }
      window_motions.push_back(motion);
      ++cycles_in_window;
      if (cycles_in_window >= cfg.feature_window_cycles) {
        if (!window_dets.empty()) {
          features = extract_features_window(window_dets, window_motions, calib,
                                             motion.timestamp, cfg.features);
        }
        window_dets.clear();
        window_motions.clear();
        cycles_in_window = 0;
      }
    }
    if (auto it = features_at.find(key_of(motion.timestamp)); it != features_at.end()) {
      features.insert(features.end(), it->second.begin(), it->second.end());
    }

    if (!features.empty()) graph.local_associate(features, pose_id);
    if (auto it = gnss_at.find(key_of(motion.timestamp)); it != gnss_at.end()) {
      graph.add_gnss(pose_id, it->second);
    }
    const int map_factors = graph.map_associate();
    result.map_factors_peak = std::max<std::size_t>(result.map_factors_peak, map_factors);
    graph.optimize();
    graph.slide_window();

    result.poses.push_back({motion.timestamp, graph.pose(pose_id).estimate});
    result.covariances.push_back(graph.pose_marginal_covariance(pose_id));
    prev_pose = pose_id;
    prev_time = motion.timestamp;
  }
  return result;
}

CalibrationRunResult run_calibrate(const LogBundle& bundle, const std::string& reference,
                                   const std::string& mode, const RunConfig& config) {
  if (reference != "truth" && reference != "radar") {
    throw ConfigError("reference must be 'truth' or 'radar'");
  }
  if (mode != "online" && mode != "offline") {
    throw ConfigError("mode must be 'online' or 'offline'");
  }
  RunConfig cfg = config;
  cfg.sensors = resolve_sensors(config, bundle);
  const CalibrationTable calib = cfg.calibration_table();

  std::function<Twist2(double)> lookup;
  std::vector<EgoMotion> radar_ego;
  if (reference == "truth") {
    if (!bundle.has_truth()) throw ConfigError("log has no truth.csv for a truth reference");
    lookup = [&bundle](double t) { return bundle.truth_twist_at(t); };
  } else {
    radar_ego = run_odometry_stream(bundle.detections, calib, cfg.odometry).ego;
    if (radar_ego.empty()) throw ConfigError("radar odometry produced no reference motions");
    lookup = [ego = std::move(radar_ego)](double t) -> Twist2 {
      auto it = std::lower_bound(ego.begin(), ego.end(), t,
                                 [](const EgoMotion& m, double v) { return m.timestamp < v; });
      if (it == ego.end()) it = std::prev(ego.end());
      if (it != ego.begin() &&
          std::abs(std::prev(it)->timestamp - t) < std::abs(it->timestamp - t)) {
        it = std::prev(it);
      }
      return it->twist();
    };
  }

  CalibrationRunResult result;
  if (mode == "offline") {
    // Pre-filter with the odometry's own static selection: run the pipeline
    // and keep only MSAC-consistent rows via the batch trimmer.
    OfflineCalibConfig ocfg;
    ocfg.cycle_period = cfg.odometry.cycle_period;
    const auto fits = calibrate_offline_batch(bundle.detections, lookup, calib, ocfg);
    for (const auto& [id, fit] : fits) {
      CalibrationFileEntry e;
      e.sensor_id = id;
      e.calibration = fit.calibration;
      e.std_errors = fit.std_errors;
      e.positions_constrained = fit.positions_constrained;
      e.samples = fit.rows_used;
      result.entries.push_back(e);
    }
  } else {
    OdometryConfig ocfg = cfg.odometry;
    ocfg.collect_calibration = true;
    RadarOdometryEstimator estimator(calib, ocfg);
    if (reference == "truth") estimator.set_calibration_reference(lookup);
    for (const auto& det : bundle.detections) estimator.push(det);
    estimator.finish();
    CalibrationEstimate& est = estimator.calibration_estimate();
    for (const auto& [id, base] : calib) {
      CalibrationFileEntry e;
      e.sensor_id = id;
      e.samples = est.sample_count(id);
      const auto median = est.median(id, base);
      e.calibration = median.value_or(base);
      e.positions_constrained = est.positions_constrained(id);
      result.entries.push_back(e);
    }
  }
  return result;
}

EvalRunResult run_eval(const std::vector<TimedPose>& estimates,
                       const std::vector<TruthRow>& truth) {
  std::vector<TimedPose> ref;
  ref.reserve(truth.size());
  for (const auto& row : truth) ref.push_back({row.t, row.pose});
  EvalRunResult out;
  out.errors = compute_pose_errors(estimates, ref);
  out.summary = quantiles(out.errors);
  return out;
}

}  // namespace radarloc
