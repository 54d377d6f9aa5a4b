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

#include <vector>

#include "radarloc/types.hpp"

namespace radarloc {

struct TimedPose {
  double t{0.0};
  Pose2 pose;
};

/// Per-timestamp position errors against the interpolated reference.
struct ErrorSeries {
  std::vector<double> timestamps;
  std::vector<double> lateral;   // signed, perpendicular to the reference heading
  std::vector<double> absolute;  // Euclidean
};

/// Interpolates the reference to the estimate timestamps and decomposes the
/// position error. Requires at least 90% time overlap.
ErrorSeries compute_pose_errors(const std::vector<TimedPose>& estimates,
                                const std::vector<TimedPose>& truth);

struct QuantileSummary {
  double lateral_p68{0.0};
  double lateral_p95{0.0};
  double absolute_p68{0.0};
  double absolute_p95{0.0};
};

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

/// 68.2% / 95.4% quantiles of |lateral| and absolute error.
QuantileSummary quantiles(const ErrorSeries& series);

struct ResidualStats {
  double mean_vx{0.0}, std_vx{0.0};
  double mean_vy{0.0}, std_vy{0.0};
  double mean_omega{0.0}, std_omega{0.0};
  std::size_t samples{0};
  std::size_t degraded{0};  // degraded cycles, reported separately
};

struct TimedTwist {
  double t{0.0};
  Twist2 twist;
};

/// Mean and sample standard deviation of the per-cycle ego-motion residuals,
/// matched to the reference by nearest timestamp within 10 ms.
ResidualStats odometry_residuals(const std::vector<EgoMotion>& estimates,
                                 const std::vector<TimedTwist>& truth);

/// Sorted (error, cumulative fraction) pairs for CDF export.
std::vector<std::pair<double, double>> cdf_points(std::vector<double> errors);

}  // namespace radarloc
