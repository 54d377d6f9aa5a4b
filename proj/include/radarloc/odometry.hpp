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
#include <deque>
#include <memory>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "radarloc/types.hpp"

namespace radarloc {

using CalibrationTable = std::map<int, SensorCalibration>;

/// One row of the stacked Doppler equation system, synchronized to the
/// cycle's reference timestamp.
struct DopplerRow {
  int sensor_id{0};
  double corrected_doppler{0.0};  // scaled and time-synced Doppler, m/s
  double vehicle_azimuth{0.0};    // target azimuth in the vehicle frame at T_odo
  Vec3 design_row{Vec3::Zero()};  // maps (omega, vx, vy) to predicted Doppler
  Vec3 design_row_dtheta{Vec3::Zero()};  // derivative of design_row w.r.t. azimuth
  double sigma_doppler{0.1};      // effective Doppler noise of this row, m/s
  double sigma_azimuth{0.0};      // azimuth noise, rad
  double raw_azimuth{0.0};        // theta^S as measured, rad (kept for calibration)
  double raw_doppler{0.0};        // v^D as measured, m/s
  double timestamp{0.0};
};

struct DopplerEquationSystem {
  std::vector<DopplerRow> rows;
  double reference_timestamp{0.0};

  std::size_t row_count() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
};

/// Linear-in-time twist model used for extrapolation and time sync:
/// u(t) = value + slope * (t - t_ref).
struct TwistTrend {
  Vec3 value{Vec3::Zero()};
  Vec3 slope{Vec3::Zero()};
  double t_ref{0.0};
  double horizon{1.0};  // |t - t_ref| is clamped to this in at()

  Twist2 at(double t) const;
  /// psi(t1) - psi(t0) under the yaw-rate line.
  double heading_change(double t0, double t1) const;

  static TwistTrend constant(const Twist2& u, double t_ref);
};

/// Ring buffer of the most recent ego-motion results.
class EgoMotionHistory {
 public:
  explicit EgoMotionHistory(std::size_t capacity = 20) : capacity_(capacity) {}

  void push(const EgoMotion& m);
  std::size_t size() const { return buf_.size(); }
  bool empty() const { return buf_.empty(); }
  const std::deque<EgoMotion>& entries() const { return buf_; }
  const EgoMotion* latest() const { return buf_.empty() ? nullptr : &buf_.back(); }

  /// Order-1 regression over the buffer; constant extrapolation from the
  /// latest entry with fewer than 3 entries; zero twist when empty.
  TwistTrend trend() const;

 private:
  std::size_t capacity_;
  std::deque<EgoMotion> buf_;
};

/// Builds the stacked Doppler system of one measurement window. Applies the
/// per-sensor scale factors and synchronizes every row to `reference_time`
/// using the supplied twist model.
DopplerEquationSystem build_doppler_system(const std::vector<RadarDetection>& detections,
                                           const CalibrationTable& calib, const TwistTrend& rates,
                                           double reference_time);

DopplerEquationSystem build_doppler_system(const std::vector<RadarDetection>& detections,
                                           const CalibrationTable& calib,
                                           const EgoMotionHistory& history, double reference_time);

struct GateLimits {
  double max_accel{10.0};      // m/s^2
  double max_yaw_accel{6.0};   // rad/s^2
  double margin{0.3};          // m/s, absorbs model error at twist changes
};

/// Stage-1 dynamic filtering: drops rows whose Doppler deviates from the
/// history prediction by more than the acceleration limits allow over the
/// prediction age, plus 3 sigma and the margin. Everything passes when the
/// history is empty.
DopplerEquationSystem gate_by_vehicle_model(const DopplerEquationSystem& system,
                                            const EgoMotionHistory& history,
                                            const GateLimits& limits);

struct MsacConfig {
  double threshold{0.15};  // d_MSAC, m/s
  int max_iterations{60};
  double target_inlier_fraction{0.7};  // in [0.6, 0.8]
  double vy_prior{0.0};
  std::uint64_t seed{12345};
};

struct MsacResult {
  DopplerEquationSystem inliers;
  double inlier_fraction{0.0};
};

/// d_MSAC from the sensor noise propagated through the row residual:
/// k * sqrt(sigma_v^2 + (speed * sigma_theta)^2), floored.
double msac_threshold(double sigma_doppler, double sigma_azimuth, double speed, double k = 1.0,
                      double floor = 0.1);

/// Stage-2 dynamic filtering: MSAC consensus on the 2-parameter (omega, vx)
/// model after subtracting the vy prior. Returns the consensus rows in their
/// original 3-column form and the achieved inlier fraction.
MsacResult msac_filter_static(const DopplerEquationSystem& system, const MsacConfig& config);

enum class SolveMode { WeightedLsq, OdrC };

struct SolveConfig {
  SolveMode mode{SolveMode::OdrC};
  double vy_prior{0.0};             // used by the rank-deficient fallback
  int max_iterations{15};
  double tolerance{1e-13};
  double rank_rel_threshold{1e-9};  // smallest/largest singular value
  double fallback_vy_variance{1e4};
};

/// Step-3a solve of the stacked system for (omega, vx, vy). OdrC treats both
/// Doppler and azimuth as noisy and corrects the errors-in-variables bias of
/// the normal equations; WeightedLsq is the plain baseline. Rank-deficient
/// systems (single-sensor geometry) fall back to a 2-DOF solve with
/// vy = vy_prior and a large vy variance.
EgoMotion solve_ego_motion(const DopplerEquationSystem& inliers, const SolveConfig& config);

struct GuardLimits {
  double max_accel{10.0};     // m/s^2
  double max_yaw_accel{6.0};  // rad/s^2
  double margin_v{0.5};       // m/s
  double margin_omega{0.2};   // rad/s
  double covariance_inflation{10.0};
};

/// Step-4a outlier guard: returns the candidate unchanged when it is within
/// the acceleration limits of the history trend, otherwise the regression
/// extrapolation at the candidate's timestamp, flagged degraded with
/// inflated covariance.
EgoMotion guard_and_extrapolate(const EgoMotion& candidate, const EgoMotionHistory& history,
                                const GuardLimits& limits);

struct OdometryConfig {
  double cycle_period{0.05};  // s; 20 Hz output
  std::size_t history_length{20};
  int min_rows{8};
  GateLimits gate;
  MsacConfig msac;
  double msac_k{1.0};
  double msac_threshold_floor{0.1};
  SolveConfig solve;
  GuardLimits guard;
  /// Re-synchronization fixed point: after each solve the time-sync rates are
  /// replaced by the solution and the system rebuilt, until convergence. The
  /// first pass always uses the history trend.
  int resync_iterations{10};
  double resync_tolerance{1e-11};
  double degraded_variance{100.0};  // per-component variance when nothing to solve
  bool collect_calibration{false};
  std::size_t calibration_min_inliers{10};
};

struct CycleDebug {
  std::size_t raw_rows{0};
  std::size_t gated_rows{0};
  std::size_t inlier_rows{0};
  double inlier_fraction{0.0};
  bool guard_triggered{false};
};

class CalibrationEstimate;  // calibration.hpp

/// Stateful 20 Hz odometry pipeline: collects detections into fixed cycles
/// and runs build -> gate -> MSAC -> solve -> guard, maintaining the history.
class RadarOdometryEstimator {
 public:
  RadarOdometryEstimator(CalibrationTable calib, OdometryConfig config);
  ~RadarOdometryEstimator();

  /// Feed one detection (streams must be time ordered). Returns the outputs
  /// of any cycles completed by this detection.
  std::vector<EgoMotion> push(const RadarDetection& det);
  /// Flush the final partial cycle.
  std::vector<EgoMotion> finish();

  /// Run one complete measurement window. Exposed for tests and replays.
  EgoMotion process_cycle(const std::vector<RadarDetection>& batch, double reference_time);

  const EgoMotionHistory& history() const { return history_; }
  const CalibrationTable& calibration() const { return calib_; }
  const CycleDebug& last_cycle_debug() const { return debug_; }

  /// Online calibration (step 3b). When collect_calibration is set, every
  /// non-degraded cycle contributes per-sensor parameter samples. The
  /// reference twist defaults to the cycle's own solution; an external
  /// reference (e.g. ground truth) can be supplied instead.
  void set_calibration_reference(std::function<Twist2(double)> lookup);
  CalibrationEstimate& calibration_estimate();

 private:
  EgoMotion degraded_output(double reference_time) const;
  void collect_calibration_samples(const DopplerEquationSystem& inliers, const EgoMotion& motion);

  CalibrationTable calib_;
  OdometryConfig config_;
  EgoMotionHistory history_;
  std::vector<RadarDetection> batch_;
  std::int64_t window_index_{-1};
  CycleDebug debug_;
  std::function<Twist2(double)> calibration_reference_;
  std::unique_ptr<CalibrationEstimate> calibration_estimate_;
};

}  // namespace radarloc
