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
#include <vector>

#include "radarloc/odometry.hpp"
#include "radarloc/types.hpp"

namespace radarloc {

/// Piecewise dead-reckoned vehicle trajectory built from an ego-motion
/// stream; each sample's twist is valid over its surrounding cycle.
class EgoTrajectory {
 public:
  explicit EgoTrajectory(const std::vector<EgoMotion>& motions);

  bool covers(double t) const { return t >= t_min_ - 1e-9 && t <= t_max_ + 1e-9; }
  double t_min() const { return t_min_; }
  double t_max() const { return t_max_; }

  /// Pose relative to the trajectory's internal origin.
  Pose2 pose_at(double t) const;
  Twist2 twist_at(double t) const;
  /// Pose of the vehicle frame at time t expressed in the frame at t_ref.
  Pose2 relative_pose(double t_ref, double t) const;

 private:
  std::vector<double> knots_;   // piece boundaries
  std::vector<Twist2> twists_;  // twist on [knots_[i], knots_[i+1])
  std::vector<Pose2> poses_;    // pose at knots_[i]
  double t_min_{0.0}, t_max_{0.0};
};

struct AggregatedPoint {
  Vec2 position{0.0, 0.0};  // vehicle frame at the reference timestamp
  double doppler{0.0};      // scaled measurement
  int sensor_id{0};
  double timestamp{0.0};
  double range{0.0};  // measured range, kept for the covariance floor
};

/// Moving-object-free accumulation of one aggregation window.
struct AggregatedScan {
  std::vector<AggregatedPoint> points;
  double window{0.4};
  double reference_timestamp{0.0};
};

struct AggregateConfig {
  double window{0.4};
  double doppler_margin{0.5};  // m/s on top of 3 sigma in the static test
};

/// Transforms a window of detections into the reference-time vehicle frame
/// using the ego-motion stream, dropping points whose Doppler is
/// inconsistent with a static world.
AggregatedScan aggregate_and_filter(const std::vector<RadarDetection>& detections,
                                    const std::vector<EgoMotion>& motions,
                                    const CalibrationTable& calib, double reference_time,
                                    const AggregateConfig& config);

struct OpticsConfig {
  int min_pts{4};
  double max_reach_eps{2.0};        // neighborhood bound of the OPTICS pass
  double extraction_threshold{0.8}; // flat reachability cut, m
  double point_max_extent{1.5};     // clusters larger than this are not point-like
};

struct ClusterResult {
  std::vector<std::vector<std::size_t>> clusters;  // indices into scan.points
  std::vector<std::size_t> leftover;               // everything else
};

/// OPTICS ordering with flat reachability extraction. Clusters below min_pts
/// or beyond the point-like extent stay in the leftover set; clusters and
/// leftover always partition the input.
ClusterResult cluster_points(const AggregatedScan& scan, const OpticsConfig& config);

struct PointFeatureConfig {
  double sigma_range{0.15};
  double sigma_azimuth{0.008726646259971648};
};

std::vector<FeatureObservation> extract_point_features(
    const AggregatedScan& scan, const std::vector<std::vector<std::size_t>>& clusters,
    const PointFeatureConfig& config);

struct LineFitConfig {
  double inlier_dist{0.3};
  int min_support{8};
  int max_lines{10};
  double min_length{1.0};
  int iterations_per_line{100};
  std::uint64_t seed{777};
  double sigma_floor{0.02};  // residual floor for covariances, m
};

/// Fitted segment plus its supporting points (kept so merges can refit).
struct LineSegmentCandidate {
  Vec2 p1{0.0, 0.0};
  Vec2 p2{0.0, 0.0};
  std::vector<Vec2> points;
  double residual_rms{0.0};

  double length() const { return (p2 - p1).norm(); }
};

/// Sequential MSAC line extraction: best line, inliers clipped to their
/// extent, removed, repeated.
std::vector<LineSegmentCandidate> fit_lines(const std::vector<Vec2>& points,
                                            const LineFitConfig& config);

struct MergeConfig {
  double max_gap{1.0};       // m along track
  double max_angle{0.0872664625997165};  // rad (5 deg)
  double max_lateral{0.3};   // m
};

/// Joins near-collinear overlapping segments by refitting their point
/// unions; idempotent.
std::vector<LineSegmentCandidate> merge_segments(std::vector<LineSegmentCandidate> segments,
                                                 const MergeConfig& config);

FeatureObservation to_line_feature(const LineSegmentCandidate& seg, double timestamp,
                                   const LineFitConfig& config);

struct FeatureExtractorConfig {
  AggregateConfig aggregate;
  OpticsConfig optics;
  PointFeatureConfig point_feature;
  LineFitConfig lines;
  MergeConfig merge;
  bool merge_lines{true};
};

/// Full window pipeline: aggregate -> cluster -> point features + line
/// features from the leftover points.
std::vector<FeatureObservation> extract_features_window(
    const std::vector<RadarDetection>& detections, const std::vector<EgoMotion>& motions,
    const CalibrationTable& calib, double reference_time, const FeatureExtractorConfig& config);

}  // namespace radarloc
