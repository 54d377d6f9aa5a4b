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

#include "radarloc/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <sstream>

namespace radarloc {

using nlohmann::json;

namespace {

json mat_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json out = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

template <int N>
Eigen::Matrix<double, N, N> mat_from_json(const json& j) {
  Eigen::Matrix<double, N, N> m;
  if (!j.is_array() || j.size() != static_cast<std::size_t>(N * N)) {
    throw ConfigError("covariance array must have " + std::to_string(N * N) + " entries");
  }
  for (int r = 0; r < N; ++r) {
    for (int c = 0; c < N; ++c) m(r, c) = j[r * N + c].get<double>();
  }
  return m;
}

json vec2_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

Vec2 vec2_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

json calibration_to_json(const SensorCalibration& c) {
  return json{{"beta", c.beta},
              {"mount_x", c.mount_x},
              {"mount_y", c.mount_y},
              {"alpha_doppler", c.alpha_doppler},
              {"alpha_azimuth", c.alpha_azimuth},
              {"sigma_doppler", c.sigma_doppler},
              {"sigma_azimuth", c.sigma_azimuth}};
}

SensorCalibration calibration_from_json(const json& j, SensorCalibration base = {}) {
  base.beta = j.value("beta", base.beta);
  base.mount_x = j.value("mount_x", base.mount_x);
  base.mount_y = j.value("mount_y", base.mount_y);
  base.alpha_doppler = j.value("alpha_doppler", base.alpha_doppler);
  base.alpha_azimuth = j.value("alpha_azimuth", base.alpha_azimuth);
  base.sigma_doppler = j.value("sigma_doppler", base.sigma_doppler);
  base.sigma_azimuth = j.value("sigma_azimuth", base.sigma_azimuth);
  return base;
}

SensorModel sensor_from_json(const json& j) {
  SensorModel s;
  s.id = j.at("id").get<int>();
  s.calibration = calibration_from_json(j);
  s.fov = j.value("fov", s.fov);
  s.max_range = j.value("max_range", s.max_range);
  s.min_range = j.value("min_range", s.min_range);
  s.sigma_range = j.value("sigma_range", s.sigma_range);
  s.stagger = j.value("stagger", s.stagger);
  return s;
}

std::ifstream open_input(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  return out;
}

}  // namespace

std::string sensors_meta_record(const std::vector<SensorModel>& sensors) {
  json arr = json::array();
  for (const auto& s : sensors) {
    json sj = calibration_to_json(s.calibration);
    sj["id"] = s.id;
    sj["fov"] = s.fov;
    sj["max_range"] = s.max_range;
    sj["min_range"] = s.min_range;
    sj["sigma_range"] = s.sigma_range;
    sj["stagger"] = s.stagger;
    arr.push_back(sj);
  }
  return json{{"type", "meta"}, {"sensors", arr}}.dump();
}

std::string to_jsonl_record(const RadarDetection& det) {
  json j{{"type", "radar"},     {"t", det.timestamp},      {"sensor", det.sensor_id},
         {"range", det.range},  {"azimuth", det.azimuth_sensor},
         {"doppler", det.doppler}, {"snr", det.snr}};
  return j.dump();
}

std::string to_jsonl_record(const EgoMotion& m) {
  json j{{"type", "ego"},  {"t", m.timestamp}, {"omega", m.omega},
         {"vx", m.vx},     {"vy", m.vy},       {"cov", mat_to_json(m.covariance)},
         {"degraded", m.degraded}};
  return j.dump();
}

std::string to_jsonl_record(const GnssFix& fix) {
  json j{{"type", "gnss"},
         {"t", fix.timestamp},
         {"x", fix.x},
         {"y", fix.y},
         {"cov", mat_to_json(fix.covariance)}};
  return j.dump();
}

std::string to_jsonl_record(const OdometryIncrement& inc) {
  json j{{"type", "odo"},     {"t0", inc.t0},        {"t1", inc.t1},
         {"dx", inc.delta.x}, {"dy", inc.delta.y},   {"dpsi", inc.delta.psi},
         {"cov", mat_to_json(inc.covariance)}};
  return j.dump();
}

std::string to_jsonl_record(const FeatureObservation& obs) {
  json j{{"type", "feature"},
         {"t", obs.timestamp},
         {"source", to_string(obs.source)},
         {"support", obs.support_count}};
  if (obs.kind_hint) j["kind"] = to_string(*obs.kind_hint);
  if (obs.is_point()) {
    j["shape"] = "point";
    j["p"] = vec2_to_json(obs.point().position);
    j["cov"] = mat_to_json(obs.point().covariance);
  } else {
    j["shape"] = "line";
    j["p1"] = vec2_to_json(obs.line().p1);
    j["p2"] = vec2_to_json(obs.line().p2);
    j["cov_p1"] = mat_to_json(obs.line().cov_p1);
    j["cov_p2"] = mat_to_json(obs.line().cov_p2);
  }
  return j.dump();
}

std::string pose_jsonl_record(const TimedPose& pose, const Mat3& covariance) {
  json j{{"type", "pose"}, {"t", pose.t},        {"x", pose.pose.x},
         {"y", pose.pose.y}, {"psi", pose.pose.psi}, {"cov", mat_to_json(covariance)}};
  return j.dump();
}

namespace {

FeatureObservation feature_from_json(const json& j) {
  FeatureObservation obs;
  obs.timestamp = j.at("t").get<double>();
  obs.support_count = j.value("support", 0);
  const std::string source = j.value("source", "radar");
  obs.source = source == "camera"  ? FeatureSource::Camera
               : source == "lidar" ? FeatureSource::Lidar
                                   : FeatureSource::Radar;
  if (j.contains("kind")) obs.kind_hint = landmark_kind_from_string(j.at("kind").get<std::string>());
  if (j.at("shape").get<std::string>() == "point") {
    PointFeature pf;
    pf.position = vec2_from_json(j.at("p"));
    pf.covariance = mat_from_json<2>(j.at("cov"));
    obs.shape = pf;
  } else {
    LineFeature lf;
    lf.p1 = vec2_from_json(j.at("p1"));
    lf.p2 = vec2_from_json(j.at("p2"));
    lf.cov_p1 = mat_from_json<2>(j.at("cov_p1"));
    lf.cov_p2 = mat_from_json<2>(j.at("cov_p2"));
    obs.shape = lf;
  }
  return obs;
}

}  // namespace

DetectionStream read_detection_stream(const std::filesystem::path& file) {
  DetectionStream out;
  auto in = open_input(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "meta") {
      for (const auto& sj : j.at("sensors")) out.sensors.push_back(sensor_from_json(sj));
    } else if (type == "radar") {
      RadarDetection det;
      det.timestamp = j.at("t").get<double>();
      det.sensor_id = j.at("sensor").get<int>();
      det.range = j.at("range").get<double>();
      det.azimuth_sensor = j.at("azimuth").get<double>();
      det.doppler = j.at("doppler").get<double>();
      det.snr = j.value("snr", 0.0);
      out.radar.push_back(det);
    } else if (type == "feature") {
      out.features.push_back(feature_from_json(j));
    } else {
      throw ConfigError("unexpected record type '" + type + "' in " + file.string());
    }
  }
  return out;
}

std::vector<OdometryIncrement> read_wheel_odometry(const std::filesystem::path& file) {
  std::vector<OdometryIncrement> out;
  auto in = open_input(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    OdometryIncrement inc;
    inc.t0 = j.at("t0").get<double>();
    inc.t1 = j.at("t1").get<double>();
    inc.delta = Pose2(j.at("dx").get<double>(), j.at("dy").get<double>(),
                      j.at("dpsi").get<double>());
    inc.covariance = mat_from_json<3>(j.at("cov"));
    out.push_back(inc);
  }
  return out;
}

std::vector<GnssFix> read_gnss(const std::filesystem::path& file) {
  std::vector<GnssFix> out;
  auto in = open_input(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    GnssFix fix;
    fix.timestamp = j.at("t").get<double>();
    fix.x = j.at("x").get<double>();
    fix.y = j.at("y").get<double>();
    fix.covariance = mat_from_json<2>(j.at("cov"));
    out.push_back(fix);
  }
  return out;
}

std::vector<EgoMotion> read_ego_stream(const std::filesystem::path& file) {
  std::vector<EgoMotion> out;
  auto in = open_input(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    EgoMotion m;
    m.timestamp = j.at("t").get<double>();
    m.omega = j.at("omega").get<double>();
    m.vx = j.at("vx").get<double>();
    m.vy = j.at("vy").get<double>();
    m.covariance = mat_from_json<3>(j.at("cov"));
    m.degraded = j.value("degraded", false);
    out.push_back(m);
  }
  return out;
}

std::vector<std::pair<TimedPose, Mat3>> read_pose_stream(const std::filesystem::path& file) {
  std::vector<std::pair<TimedPose, Mat3>> out;
  auto in = open_input(file);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    TimedPose p;
    p.t = j.at("t").get<double>();
    p.pose = Pose2(j.at("x").get<double>(), j.at("y").get<double>(), j.at("psi").get<double>());
    out.emplace_back(p, mat_from_json<3>(j.at("cov")));
  }
  return out;
}

void write_map_json(const LandmarkMap& map, const std::filesystem::path& file) {
  json landmarks = json::array();
  for (const auto& l : map.landmarks()) {
    json geometry;
    if (l.is_point()) {
      geometry["point"] = vec2_to_json(l.p1);
    } else {
      geometry["segment"] = json::array({vec2_to_json(l.p1), vec2_to_json(l.p2)});
    }
    landmarks.push_back({{"id", l.id}, {"kind", to_string(l.kind)}, {"geometry", geometry}});
  }
  const json j{{"version", 1}, {"frame", "local-xy"}, {"landmarks", landmarks}};
  open_output(file) << j.dump(2) << "\n";
}

LandmarkMap read_map_json(const std::filesystem::path& file) {
  const json j = json::parse(open_input(file));
  if (j.value("version", 0) != 1) throw ConfigError("unsupported map version in " + file.string());
  if (j.value("frame", "") != "local-xy") {
    throw ConfigError("unsupported map frame in " + file.string());
  }
  LandmarkMap map;
  for (const auto& lj : j.at("landmarks")) {
    const auto kind = landmark_kind_from_string(lj.at("kind").get<std::string>());
    const auto& geometry = lj.at("geometry");
    if (geometry.contains("point")) {
      if (!kind_has_point_geometry(kind)) {
        throw ConfigError("landmark kind/geometry mismatch in map");
      }
      map.add(Landmark::pole(lj.at("id").get<std::int64_t>(), vec2_from_json(geometry.at("point"))));
    } else {
      const auto& seg = geometry.at("segment");
      map.add(Landmark::segment(lj.at("id").get<std::int64_t>(), kind, vec2_from_json(seg.at(0)),
                                vec2_from_json(seg.at(1))));
    }
  }
  return map;
}

void write_truth_csv(const std::vector<TruthSample>& truth, const std::filesystem::path& file) {
  auto out = open_output(file);
  out << "t,x,y,psi,omega,vx,vy\n";
  char buf[256];
  for (const auto& s : truth) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n", s.t, s.pose.x,
                  s.pose.y, s.pose.psi, s.twist.omega, s.twist.vx, s.twist.vy);
    out << buf;
  }
}

std::vector<TruthRow> read_truth_csv(const std::filesystem::path& file) {
  auto in = open_input(file);
  std::vector<TruthRow> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TruthRow row;
    double x, y, psi;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%lf,%lf,%lf", &row.t, &x, &y, &psi,
                    &row.twist.omega, &row.twist.vx, &row.twist.vy) != 7) {
      throw ConfigError("malformed truth row: " + line);
    }
    row.pose = Pose2(x, y, psi);
    out.push_back(row);
  }
  return out;
}

void write_metrics_json(const QuantileSummary& summary, std::size_t samples,
                        const std::optional<ResidualStats>& residuals,
                        const std::filesystem::path& file) {
  json j{{"samples", samples},
         {"lateral", {{"p68_2", summary.lateral_p68}, {"p95_4", summary.lateral_p95}}},
         {"absolute", {{"p68_2", summary.absolute_p68}, {"p95_4", summary.absolute_p95}}}};
  if (residuals) {
    j["odometry"] = {{"r_vx", {{"mean", residuals->mean_vx}, {"std", residuals->std_vx}}},
                     {"r_vy", {{"mean", residuals->mean_vy}, {"std", residuals->std_vy}}},
                     {"r_yawrate", {{"mean", residuals->mean_omega}, {"std", residuals->std_omega}}},
                     {"samples", residuals->samples},
                     {"degraded_cycles", residuals->degraded}};
  }
  open_output(file) << j.dump(2) << "\n";
}

void write_cdf_csv(const std::vector<std::pair<double, double>>& cdf,
                   const std::filesystem::path& file) {
  auto out = open_output(file);
  out << "error,fraction\n";
  char buf[128];
  for (const auto& [e, f] : cdf) {
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g\n", e, f);
    out << buf;
  }
}

void write_calibration_json(const std::vector<CalibrationFileEntry>& entries,
                            const std::filesystem::path& file) {
  json sensors = json::array();
  for (const auto& e : entries) {
    json s = calibration_to_json(e.calibration);
    s["id"] = e.sensor_id;
    s["std_errors"] = calibration_to_json(e.std_errors);
    s["positions_constrained"] = e.positions_constrained;
    s["samples"] = e.samples;
    sensors.push_back(s);
  }
  open_output(file) << json{{"sensors", sensors}}.dump(2) << "\n";
}

std::vector<CalibrationFileEntry> read_calibration_json(const std::filesystem::path& file) {
  const json j = json::parse(open_input(file));
  std::vector<CalibrationFileEntry> out;
  for (const auto& s : j.at("sensors")) {
    CalibrationFileEntry e;
    e.sensor_id = s.at("id").get<int>();
    e.calibration = calibration_from_json(s);
    if (s.contains("std_errors")) e.std_errors = calibration_from_json(s.at("std_errors"));
    e.positions_constrained = s.value("positions_constrained", true);
    e.samples = s.value("samples", std::size_t{0});
    out.push_back(e);
  }
  return out;
}

std::string file_hash_hex(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::uint64_t hash = 1469598103934665603ull;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof(buf));
    const std::streamsize n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      hash ^= static_cast<unsigned char>(buf[i]);
      hash *= 1099511628211ull;
    }
  }
  char out[32];
  std::snprintf(out, sizeof(out), "%016" PRIx64, hash);
  return out;
}

CalibrationTable RunConfig::calibration_table() const {
  CalibrationTable table;
  for (const auto& s : sensors) table[s.id] = s.calibration;
  return table;
}

namespace {

void parse_sim(const json& j, SimConfig& c) {
  c.radar_rate = j.value("radar_rate", c.radar_rate);
  c.gnss_rate = j.value("gnss_rate", c.gnss_rate);
  c.wheel_rate = j.value("wheel_rate", c.wheel_rate);
  c.camera_rate = j.value("camera_rate", c.camera_rate);
  c.lidar_rate = j.value("lidar_rate", c.lidar_rate);
  c.noise = j.value("noise", c.noise);
  c.clutter = j.value("clutter", c.clutter);
  c.moving_objects = j.value("moving_objects", c.moving_objects);
  c.gnss_sigma = j.value("gnss_sigma", c.gnss_sigma);
  c.wheel_scale = j.value("wheel_scale", c.wheel_scale);
  c.wheel_sigma_xy = j.value("wheel_sigma_xy", c.wheel_sigma_xy);
  c.wheel_sigma_psi = j.value("wheel_sigma_psi", c.wheel_sigma_psi);
  c.camera_sigma_lateral = j.value("camera_sigma_lateral", c.camera_sigma_lateral);
  c.camera_sigma_angle = j.value("camera_sigma_angle", c.camera_sigma_angle);
  c.lidar_sigma = j.value("lidar_sigma", c.lidar_sigma);
  c.max_detections_per_scan = j.value("max_detections_per_scan", c.max_detections_per_scan);
  c.segment_sample_spacing = j.value("segment_sample_spacing", c.segment_sample_spacing);
  if (j.contains("gnss_bias")) c.gnss_bias = vec2_from_json(j.at("gnss_bias"));
}

void parse_odometry(const json& j, OdometryConfig& c) {
  c.cycle_period = j.value("cycle_period", c.cycle_period);
  c.history_length = j.value("history_length", c.history_length);
  c.min_rows = j.value("min_rows", c.min_rows);
  c.msac_k = j.value("msac_k", c.msac_k);
  c.msac_threshold_floor = j.value("msac_threshold_floor", c.msac_threshold_floor);
  c.msac.max_iterations = j.value("msac_max_iterations", c.msac.max_iterations);
  c.msac.target_inlier_fraction = j.value("target_inlier_fraction", c.msac.target_inlier_fraction);
  c.resync_iterations = j.value("resync_iterations", c.resync_iterations);
  c.gate.max_accel = j.value("gate_max_accel", c.gate.max_accel);
  c.gate.max_yaw_accel = j.value("gate_max_yaw_accel", c.gate.max_yaw_accel);
  c.gate.margin = j.value("gate_margin", c.gate.margin);
  c.guard.max_accel = j.value("guard_max_accel", c.guard.max_accel);
  c.guard.max_yaw_accel = j.value("guard_max_yaw_accel", c.guard.max_yaw_accel);
  c.guard.margin_v = j.value("guard_margin_v", c.guard.margin_v);
  c.guard.margin_omega = j.value("guard_margin_omega", c.guard.margin_omega);
  const std::string mode = j.value("mode", "odrc");
  c.solve.mode = (mode == "lsq" || mode == "weighted-lsq") ? SolveMode::WeightedLsq : SolveMode::OdrC;
}

void parse_features(const json& j, FeatureExtractorConfig& c) {
  c.aggregate.window = j.value("window", c.aggregate.window);
  c.aggregate.doppler_margin = j.value("doppler_margin", c.aggregate.doppler_margin);
  c.optics.min_pts = j.value("optics_min_pts", c.optics.min_pts);
  c.optics.max_reach_eps = j.value("optics_max_reach_eps", c.optics.max_reach_eps);
  c.optics.extraction_threshold = j.value("optics_extraction_threshold",
                                          c.optics.extraction_threshold);
  c.optics.point_max_extent = j.value("optics_point_max_extent", c.optics.point_max_extent);
  c.lines.inlier_dist = j.value("line_inlier_dist", c.lines.inlier_dist);
  c.lines.min_support = j.value("line_min_support", c.lines.min_support);
  c.lines.max_lines = j.value("line_max_lines", c.lines.max_lines);
  c.lines.min_length = j.value("line_min_length", c.lines.min_length);
  c.merge.max_gap = j.value("merge_max_gap", c.merge.max_gap);
  c.merge.max_angle = j.value("merge_max_angle", c.merge.max_angle);
  c.merge.max_lateral = j.value("merge_max_lateral", c.merge.max_lateral);
  c.merge_lines = j.value("merge_lines", c.merge_lines);
}

void parse_slam(const json& j, SlamConfig& c) {
  c.window_capacity = j.value("window_capacity", c.window_capacity);
  c.optimize.max_iterations = j.value("max_iterations", c.optimize.max_iterations);
  c.optimize.huber_width = j.value("huber_width", c.optimize.huber_width);
  c.optimize.robust = j.value("robust", c.optimize.robust);
  const std::string alg = j.value("algorithm", "lm");
  c.optimize.algorithm = (alg == "gn" || alg == "gauss-newton") ? OptimizerAlgorithm::GaussNewton
                                                                : OptimizerAlgorithm::LevenbergMarquardt;
  c.association.chi2_gate = j.value("chi2_gate", c.association.chi2_gate);
  c.association.map_min_observations =
      j.value("map_min_observations", c.association.map_min_observations);
  c.association.map_point_gate = j.value("map_point_gate", c.association.map_point_gate);
  c.association.map_line_angle_gate =
      j.value("map_line_angle_gate", c.association.map_line_angle_gate);
  c.association.map_line_lateral_gate =
      j.value("map_line_lateral_gate", c.association.map_line_lateral_gate);
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
  const json j = json::parse(json_text);
  RunConfig c;
  c.seed = j.value("seed", c.seed);
  c.scenario = j.value("scenario", c.scenario);
  if (j.contains("inputs")) {
    c.inputs.clear();
    for (const auto& s : j.at("inputs")) c.inputs.insert(s.get<std::string>());
    if (c.inputs.empty()) throw ConfigError("enabled inputs must be nonempty");
  }
  if (j.contains("sensors")) {
    for (const auto& s : j.at("sensors")) c.sensors.push_back(sensor_from_json(s));
  }
  if (j.contains("sim")) parse_sim(j.at("sim"), c.sim);
  if (j.contains("odometry")) parse_odometry(j.at("odometry"), c.odometry);
  if (j.contains("features")) parse_features(j.at("features"), c.features);
  if (j.contains("slam")) parse_slam(j.at("slam"), c.slam);
  c.feature_window_cycles = j.value("feature_window_cycles", c.feature_window_cycles);
  c.sensor_sigma_scale = j.value("sensor_sigma_scale", c.sensor_sigma_scale);
  if (j.contains("initial_pose")) {
    const auto& p = j.at("initial_pose");
    c.initial_pose = Pose2(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& file) {
  std::ostringstream text;
  text << open_input(file).rdbuf();
  return parse_run_config(text.str());
}

}  // namespace radarloc
