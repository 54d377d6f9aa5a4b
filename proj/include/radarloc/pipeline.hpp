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

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "radarloc/io.hpp"

namespace radarloc {

/// In-memory form of a recorded drive, as read from a log directory or
/// converted from a simulated drive.
struct LogBundle {
  std::vector<RadarDetection> detections;
  std::vector<FeatureObservation> external_features;
  std::vector<OdometryIncrement> wheel;
  std::vector<GnssFix> gnss;
  std::vector<TruthRow> truth;  // empty when no reference is available
  std::vector<SensorModel> sensors;  // from the log's meta record
  LandmarkMap map;

  bool has_truth() const { return !truth.empty(); }
  Twist2 truth_twist_at(double t) const;  // nearest sample
};

LogBundle bundle_from_sim(const SimLog& log);
/// Reads detections.jsonl, odometry.jsonl, gnss.jsonl, map.json, truth.csv
/// (the last two optional unless required later).
LogBundle read_log_dir(const std::filesystem::path& dir);

struct ManifestEntry {
  std::string name;
  std::uintmax_t bytes{0};
  std::string hash;
};

/// Simulates a preset drive and writes the five log files plus
/// manifest.json; returns the manifest.
std::vector<ManifestEntry> run_simulate(const std::string& scenario, std::uint64_t seed,
                                        const std::filesystem::path& out_dir,
                                        const RunConfig& config);

/// Replays a detection log through the radar odometry.
struct OdometryRunResult {
  std::vector<EgoMotion> ego;
  std::optional<ResidualStats> residuals;  // when the log has a reference
  std::size_t guard_triggers{0};
  std::size_t cycles{0};
};
OdometryRunResult run_odometry_stream(const std::vector<RadarDetection>& detections,
                                      const CalibrationTable& calib, const OdometryConfig& config,
                                      const std::vector<TruthRow>* truth = nullptr);

/// Full localization run over a log bundle with the configured input subset.
struct SlamRunResult {
  std::vector<TimedPose> poses;
  std::vector<Mat3> covariances;
  std::vector<EgoMotion> ego;  // the odometry stream that drove the graph
  std::size_t map_factors_peak{0};
};
SlamRunResult run_slam_stream(const LogBundle& bundle, const RunConfig& config);

/// Sensor layout used for a run: the config's table when given, otherwise
/// the scenario preset's.
std::vector<SensorModel> effective_sensors(const RunConfig& config);

/// Layout for replaying a log: config override, else the log's own meta
/// sensors, else the configured scenario's layout.
std::vector<SensorModel> resolve_sensors(const RunConfig& config, const LogBundle& bundle);

struct CalibrationRunResult {
  std::vector<CalibrationFileEntry> entries;
};
CalibrationRunResult run_calibrate(const LogBundle& bundle, const std::string& reference,
                                   const std::string& mode, const RunConfig& config);

struct EvalRunResult {
  ErrorSeries errors;
  QuantileSummary summary;
};
EvalRunResult run_eval(const std::vector<TimedPose>& estimates,
                       const std::vector<TruthRow>& truth);

}  // namespace radarloc
