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

#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "radarloc/odometry.hpp"
#include "radarloc/types.hpp"

namespace radarloc {

/// One per-cycle calibration parameter sample. Mount positions are absent in
/// cycles without yaw excitation, where they are unobservable.
struct CalibrationSample {
  double beta{0.0};
  double alpha_doppler{1.0};
  double alpha_azimuth{1.0};
  std::optional<double> mount_x;
  std::optional<double> mount_y;
};

struct CalibCycleConfig {
  double min_yaw_rate{0.05};  // rad/s below which mount positions are skipped
  int max_iterations{20};
  double tolerance{1e-12};
};

/// Step-3b single-cycle estimate: fits the per-sensor parameters
/// (beta, x, y, alpha_vD, alpha_theta) to the Doppler residuals of one
/// sensor's static detections, holding the reference motion fixed.
CalibrationSample estimate_calibration_cycle(const std::vector<RadarDetection>& detections,
                                             const EgoMotion& reference_motion,
                                             const SensorCalibration& current,
                                             const CalibCycleConfig& config);

/// Collects per-cycle samples and reports the per-parameter medians once
/// enough cycles have contributed.
class CalibrationEstimate {
 public:
  explicit CalibrationEstimate(std::size_t min_samples = 100) : min_samples_(min_samples) {}

  void add_sample(int sensor_id, const CalibrationSample& sample);
  std::size_t sample_count(int sensor_id) const;

  /// Median-filtered calibration for one sensor; empty until sample_count
  /// reaches the minimum. Noise sigmas and unobserved positions are taken
  /// from `base`.
  std::optional<SensorCalibration> median(int sensor_id, const SensorCalibration& base) const;

  /// True when enough yaw-excited cycles contributed position samples.
  bool positions_constrained(int sensor_id) const;

 private:
  struct Buffers {
    std::vector<double> beta, alpha_doppler, alpha_azimuth, mount_x, mount_y;
  };
  std::size_t min_samples_;
  std::map<int, Buffers> buffers_;
};

struct OfflineCalibConfig {
  double yaw_threshold{0.1};   // rad/s
  double min_yaw_time{30.0};   // s of |omega| above threshold for positions
  double cycle_period{0.05};   // s, used to measure yaw-excited time
  int max_iterations{40};
  double tolerance{1e-12};
  double outlier_nsigma{3.0};
  int trim_rounds{2};
};

struct SensorCalibrationResult {
  SensorCalibration calibration;
  /// Per-parameter standard errors (sigma fields unused).
  SensorCalibration std_errors;
  bool positions_constrained{true};
  std::size_t rows_used{0};
};

/// Step-3b offline path: joint nonlinear least squares per sensor over the
/// retained detections of a whole drive, against a reference twist lookup.
/// Drives without enough yaw excitation keep the initial mount positions and
/// are flagged unconstrained.
std::map<int, SensorCalibrationResult> calibrate_offline_batch(
    const std::vector<RadarDetection>& detections,
    const std::function<Twist2(double)>& reference, const CalibrationTable& initial,
    const OfflineCalibConfig& config);

}  // namespace radarloc
