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
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "radarloc/geometry.hpp"

namespace radarloc {

/// Configuration problems (unknown sensors, bad files, inconsistent setups).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an estimation step has too little data to proceed.
class InsufficientDataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One untracked radar reflection point.
struct RadarDetection {
  int sensor_id{0};
  double range{0.0};           // m
  double azimuth_sensor{0.0};  // rad, in the sensor frame
  double doppler{0.0};         // m/s, positive when the sensor closes on the target
  double timestamp{0.0};       // s
  double snr{0.0};             // dB, optional quality
};

/// Mounting pose and per-sensor scale/noise parameters of one radar.
struct SensorCalibration {
  double beta{0.0};             // mounting yaw, rad
  double mount_x{0.0};          // m, vehicle frame
  double mount_y{0.0};          // m, vehicle frame
  double alpha_doppler{1.0};    // Doppler scale factor
  double alpha_azimuth{1.0};    // azimuth scale factor
  double sigma_doppler{0.1};    // m/s
  double sigma_azimuth{0.008726646259971648};  // rad (0.5 deg)
};

/// 3-DOF ego-motion state with covariance.
struct EgoMotion {
  double omega{0.0};  // rad/s
  double vx{0.0};     // m/s
  double vy{0.0};     // m/s
  double timestamp{0.0};
  Mat3 covariance{Mat3::Zero()};
  bool degraded{false};

  Twist2 twist() const { return {omega, vx, vy}; }
};

enum class LandmarkKind { Pole, Plane, Curb, Guardrail, LaneMarking };

inline const char* to_string(LandmarkKind k) {
  switch (k) {
    case LandmarkKind::Pole: return "Pole";
    case LandmarkKind::Plane: return "Plane";
    case LandmarkKind::Curb: return "Curb";
    case LandmarkKind::Guardrail: return "Guardrail";
    case LandmarkKind::LaneMarking: return "LaneMarking";
  }
  return "Pole";
}

inline LandmarkKind landmark_kind_from_string(const std::string& s) {
  if (s == "Pole") return LandmarkKind::Pole;
  if (s == "Plane") return LandmarkKind::Plane;
  if (s == "Curb") return LandmarkKind::Curb;
  if (s == "Guardrail") return LandmarkKind::Guardrail;
  if (s == "LaneMarking") return LandmarkKind::LaneMarking;
  throw ConfigError("unknown landmark kind: " + s);
}

inline bool kind_has_point_geometry(LandmarkKind k) { return k == LandmarkKind::Pole; }

/// Globally referenced semantic map object. Poles carry point geometry, all
/// other kinds carry a segment.
struct Landmark {
  std::int64_t id{0};
  LandmarkKind kind{LandmarkKind::Pole};
  Vec2 p1{0.0, 0.0};
  Vec2 p2{0.0, 0.0};  // == p1 for point geometry

  bool is_point() const { return kind_has_point_geometry(kind); }

  static Landmark pole(std::int64_t id, const Vec2& p) {
    Landmark l;
    l.id = id;
    l.kind = LandmarkKind::Pole;
    l.p1 = l.p2 = p;
    return l;
  }

  static Landmark segment(std::int64_t id, LandmarkKind kind, const Vec2& a, const Vec2& b) {
    if (kind_has_point_geometry(kind)) throw ConfigError("point kind cannot carry a segment");
    if ((b - a).norm() <= 0.0) throw ConfigError("segment length must be > 0");
    Landmark l;
    l.id = id;
    l.kind = kind;
    l.p1 = a;
    l.p2 = b;
    return l;
  }
};

/// Point feature: cluster centroid with positional covariance.
struct PointFeature {
  Vec2 position{0.0, 0.0};
  Mat2 covariance{Mat2::Identity()};
};

/// Line feature: fitted segment with per-endpoint covariances.
struct LineFeature {
  Vec2 p1{0.0, 0.0};
  Vec2 p2{0.0, 0.0};
  Mat2 cov_p1{Mat2::Identity()};
  Mat2 cov_p2{Mat2::Identity()};

  double length() const { return (p2 - p1).norm(); }
};

enum class FeatureSource { Radar, Camera, Lidar };

inline const char* to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::Radar: return "radar";
    case FeatureSource::Camera: return "camera";
    case FeatureSource::Lidar: return "lidar";
  }
  return "radar";
}

/// Point or line feature in the vehicle frame at a stated reference time.
struct FeatureObservation {
  std::variant<PointFeature, LineFeature> shape;
  int support_count{0};
  double timestamp{0.0};
  FeatureSource source{FeatureSource::Radar};
  /// Semantic label, known for camera/lidar features, absent for radar.
  std::optional<LandmarkKind> kind_hint;

  bool is_point() const { return std::holds_alternative<PointFeature>(shape); }
  const PointFeature& point() const { return std::get<PointFeature>(shape); }
  const LineFeature& line() const { return std::get<LineFeature>(shape); }
};

/// Planar global position fix (pre-projected to the local map frame).
struct GnssFix {
  double x{0.0};
  double y{0.0};
  Mat2 covariance{Mat2::Identity()};
  double timestamp{0.0};
};

/// Relative-pose odometry increment (wheel/IMU path).
struct OdometryIncrement {
  Pose2 delta;
  Mat3 covariance{Mat3::Zero()};
  double t0{0.0};
  double t1{0.0};
};

/// Undirected line in Hessian normal form: n(eta) . p = rho.
struct LineCoords {
  double eta{0.0};
  double rho{0.0};

  Vec2 normal() const { return {std::cos(eta), std::sin(eta)}; }

  static LineCoords from_segment(const Vec2& p1, const Vec2& p2) {
    const Vec2 d = (p2 - p1).normalized();
    const Vec2 n(-d.y(), d.x());
    LineCoords lc;
    lc.eta = std::atan2(n.y(), n.x());
    lc.rho = n.dot(p1);
    return lc;
  }

  /// Returns this line re-expressed so its normal angle is within pi/2 of
  /// `ref.eta` (lines are undirected; (eta, rho) and (eta+pi, -rho) coincide).
  LineCoords aligned_to(const LineCoords& ref) const {
    LineCoords out = *this;
    if (std::abs(wrap_angle(eta - ref.eta)) > kPi / 2.0) {
      out.eta = wrap_angle(eta + kPi);
      out.rho = -rho;
    }
    return out;
  }
};

}  // namespace radarloc
