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
#include <random>
#include <string>
#include <vector>

#include "radarloc/landmark_map.hpp"
#include "radarloc/types.hpp"

namespace radarloc {

/// Radar sensor model: mounting/scale truth plus field of view and range.
struct SensorModel {
  int id{0};
  SensorCalibration calibration;
  double fov{2.6179938779914944};  // rad, full width (150 deg)
  double max_range{60.0};
  double min_range{0.5};
  double sigma_range{0.15};  // m
  double stagger{0.0};       // firing offset within the radar cycle, s
};

/// Rigid rectangle moving on a constant body twist, active on [t_start, t_end].
struct MovingObject {
  Pose2 start;  // center pose at t_start
  Twist2 twist;
  double length{8.0};
  double width{2.5};
  double t_start{0.0};
  double t_end{1e18};

  Pose2 pose_at(double t) const;
  bool active_at(double t) const { return t >= t_start && t <= t_end; }
};

/// Synthetic world: ground-truth landmarks, moving objects and clutter rate.
/// Landmarks listed in unmapped_ids exist physically (they reflect and
/// occlude) but are withheld from the localization map.
struct World {
  LandmarkMap landmarks;
  std::vector<std::int64_t> unmapped_ids;
  std::vector<MovingObject> moving_objects;
  double clutter_rate{2.0};  // mean spurious detections per scan per sensor

  LandmarkMap localization_map() const;
};

struct TrajectorySegment {
  double duration{0.0};
  Twist2 twist;
};

/// Piecewise-constant body-twist trajectory.
struct TrajectorySpec {
  Pose2 start;
  std::vector<TrajectorySegment> segments;

  double total_duration() const;
};

/// Evaluates a TrajectorySpec with exact constant-twist integration.
class Trajectory {
 public:
  explicit Trajectory(const TrajectorySpec& spec);

  double duration() const { return duration_; }
  Pose2 pose_at(double t) const;
  /// Right-continuous: at a segment boundary the next segment's twist applies.
  Twist2 twist_at(double t) const;

 private:
  std::vector<double> starts_;  // cumulative segment start times
  std::vector<Pose2> poses_;    // pose at each segment start
  std::vector<Twist2> twists_;
  double duration_{0.0};
};

/// Incrementally builds grid-aligned piecewise-constant trajectories with
/// bounded per-step twist changes (so downstream gating is never violated by
/// construction).
class TrajectoryBuilder {
 public:
  explicit TrajectoryBuilder(const Pose2& start, double grid = 0.05);

  TrajectoryBuilder& hold(double duration);
  /// Ramps to the target twist in small steps over `ramp_time`, then holds it
  /// for `hold_time`.
  TrajectoryBuilder& ramp_to(const Twist2& target, double ramp_time, double hold_time);
  /// Constant-speed turn through exactly `heading_change` radians: yaw rate
  /// ramps up to roughly `omega_approx`, holds, and ramps back to zero.
  TrajectoryBuilder& turn(double heading_change, double speed, double omega_approx,
                          double ramp_time);
  TrajectorySpec build() const;
  Twist2 current() const { return current_; }

 private:
  void push(const Twist2& u, double duration);
  TrajectorySpec spec_;
  Twist2 current_;
  double grid_;
};

struct SimConfig {
  double radar_rate{20.0};   // Hz
  double gnss_rate{5.0};     // Hz (emitted on radar cycle midpoints)
  double wheel_rate{50.0};   // Hz
  double camera_rate{10.0};  // Hz
  double lidar_rate{10.0};   // Hz

  bool noise{true};
  bool clutter{true};
  bool moving_objects{true};
  bool emit_camera{true};
  bool emit_lidar{true};
  bool emit_wheel{true};
  bool emit_gnss{true};

  double gnss_sigma{0.5};
  Vec2 gnss_bias{0.0, 0.0};
  double wheel_scale{1.0};       // systematic translation scale error
  double wheel_sigma_xy{0.002};  // per 20 ms increment
  double wheel_sigma_psi{0.0004};

  double camera_fov{1.2217304763960306};  // rad (70 deg), forward
  double camera_max_range{18.0};
  double camera_sigma_lateral{0.03};
  double camera_sigma_angle{0.005};

  double lidar_max_range{40.0};
  double lidar_sigma{0.03};

  double segment_sample_spacing{0.5};  // m between reflection samples on a wall
  int max_detections_per_scan{64};
  double clutter_max_doppler{30.0};
};

/// One sensor's scan at time t. Pose and twist are the vehicle state at t.
std::vector<RadarDetection> simulate_sensor_scan(const World& world, const Pose2& pose,
                                                 const Twist2& twist, const SensorModel& sensor,
                                                 const SimConfig& config, double t,
                                                 std::mt19937_64& rng,
                                                 std::vector<int>* source_tags = nullptr);

/// All sensors fired at the same instant t.
std::vector<RadarDetection> simulate_scan(const World& world, const Pose2& pose,
                                          const Twist2& twist,
                                          const std::vector<SensorModel>& sensors,
                                          const SimConfig& config, double t, std::mt19937_64& rng);

enum class DetectionSource : int { Static = 0, Moving = 1, Clutter = 2 };

struct TruthSample {
  double t{0.0};
  Pose2 pose;
  Twist2 twist;
};

struct SimLog {
  std::vector<RadarDetection> detections;
  std::vector<int> detection_source;  // DetectionSource per detection
  std::vector<OdometryIncrement> wheel_odometry;
  std::vector<GnssFix> gnss;
  std::vector<FeatureObservation> external_features;  // camera + lidar
  std::vector<TruthSample> truth;                     // at every radar cycle midpoint
  LandmarkMap map;                                    // localization map

  Twist2 truth_twist_at(double t) const;  // nearest truth sample
  Pose2 truth_pose_at(double t) const;    // interpolated
};

/// Deterministic full-drive simulation; identical seeds give identical logs.
SimLog simulate_drive(const World& world, const TrajectorySpec& trajectory,
                      const std::vector<SensorModel>& sensors, const SimConfig& config,
                      std::uint64_t seed);

std::vector<SensorModel> car_sensor_layout();
std::vector<SensorModel> truck_sensor_layout();

struct ScenarioPreset {
  std::string name;
  World world;
  TrajectorySpec trajectory;
  std::vector<SensorModel> sensors;
};

/// Known presets: "city", "terminal", "figure-eight-calib".
ScenarioPreset scenario_preset(const std::string& name);
std::vector<std::string> scenario_preset_names();

}  // namespace radarloc
