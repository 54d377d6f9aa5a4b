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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "radarloc/evaluation.hpp"
#include "radarloc/features.hpp"
#include "radarloc/graph.hpp"
#include "radarloc/odometry.hpp"
#include "radarloc/simulator.hpp"
#include "radarloc/types.hpp"

namespace radarloc {

// Stream formats are JSONL with an explicit "type" tag per record and float
// seconds timestamps; the map and configs are JSON, trajectories and metrics
// CSV. See README for the schemas.

std::string to_jsonl_record(const RadarDetection& det);
std::string to_jsonl_record(const EgoMotion& m);
std::string to_jsonl_record(const GnssFix& fix);
std::string to_jsonl_record(const OdometryIncrement& inc);
std::string to_jsonl_record(const FeatureObservation& obs);
std::string pose_jsonl_record(const TimedPose& pose, const Mat3& covariance);

/// Parsed content of a detections stream: radar detections plus labeled
/// feature records (camera/lidar), each time ordered, and the sensor table
/// from the leading meta record.
struct DetectionStream {
  std::vector<RadarDetection> radar;
  std::vector<FeatureObservation> features;
  std::vector<SensorModel> sensors;
};

std::string sensors_meta_record(const std::vector<SensorModel>& sensors);

DetectionStream read_detection_stream(const std::filesystem::path& file);
std::vector<OdometryIncrement> read_wheel_odometry(const std::filesystem::path& file);
std::vector<GnssFix> read_gnss(const std::filesystem::path& file);
std::vector<EgoMotion> read_ego_stream(const std::filesystem::path& file);
std::vector<std::pair<TimedPose, Mat3>> read_pose_stream(const std::filesystem::path& file);

void write_map_json(const LandmarkMap& map, const std::filesystem::path& file);
LandmarkMap read_map_json(const std::filesystem::path& file);

struct TruthRow {
  double t{0.0};
  Pose2 pose;
  Twist2 twist;
};
void write_truth_csv(const std::vector<TruthSample>& truth, const std::filesystem::path& file);
std::vector<TruthRow> read_truth_csv(const std::filesystem::path& file);

void write_metrics_json(const QuantileSummary& summary, std::size_t samples,
                        const std::optional<ResidualStats>& residuals,
                        const std::filesystem::path& file);
void write_cdf_csv(const std::vector<std::pair<double, double>>& cdf,
                   const std::filesystem::path& file);

struct CalibrationFileEntry {
  int sensor_id{0};
  SensorCalibration calibration;
  SensorCalibration std_errors;
  bool positions_constrained{true};
  std::size_t samples{0};
};
void write_calibration_json(const std::vector<CalibrationFileEntry>& entries,
                            const std::filesystem::path& file);
std::vector<CalibrationFileEntry> read_calibration_json(const std::filesystem::path& file);

/// FNV-1a 64-bit hash of a file's bytes, as a hex string.
std::string file_hash_hex(const std::filesystem::path& file);

/// Everything the pipeline commands take from a config file. All gates and
/// tolerances live here; JSON fields override the defaults selectively.
struct RunConfig {
  std::uint64_t seed{1};
  std::string scenario{"city"};
  std::set<std::string> inputs{"radar", "camera", "lidar", "odo", "gnss"};
  std::vector<SensorModel> sensors;  // empty: take the scenario's layout
  /// Scales every per-sensor noise sigma (generation and estimator
  /// assumption alike); 0 turns a preset into its noise-free twin.
  double sensor_sigma_scale{1.0};
  SimConfig sim;
  OdometryConfig odometry;
  FeatureExtractorConfig features;
  SlamConfig slam;
  int feature_window_cycles{8};  // 400 ms at 20 Hz
  std::optional<Pose2> initial_pose;

  CalibrationTable calibration_table() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& file);

}  // namespace radarloc
