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

#include <Eigen/Core>

#include "radarloc/types.hpp"

namespace radarloc {

// Error models of every factor type, kept as pure functions of the node
// states so they can be checked against finite differences and reused by the
// dense reference solver in the tests.

/// Line landmark state: rotation/offset relative to an anchor segment
/// captured at creation, avoiding the unobservable endpoint parameters.
struct LineNodeState {
  Vec2 anchor_center{0.0, 0.0};
  double anchor_eta{0.0};  // normal angle of the anchor line
  double d_eta{0.0};
  double d_lat{0.0};

  LineCoords line() const {
    LineCoords lc;
    lc.eta = anchor_eta + d_eta;
    lc.rho = lc.normal().dot(anchor_center) + d_lat;
    return lc;
  }
};

using Mat23 = Eigen::Matrix<double, 2, 3>;

/// Relative-pose error: t2v(z^-1 * (a^-1 * b)).
Vec3 odometry_error(const Pose2& a, const Pose2& b, const Pose2& z);
void odometry_jacobians(const Pose2& a, const Pose2& b, const Pose2& z, Mat3& ja, Mat3& jb);

Vec2 gnss_error(const Pose2& a, const Vec2& z);
void gnss_jacobian(const Pose2& a, Mat23& ja);

/// Point landmark observed in the vehicle frame: R(psi)^T (l - t) - z.
Vec2 point_obs_error(const Pose2& pose, const Vec2& landmark, const Vec2& z);
void point_obs_jacobians(const Pose2& pose, const Vec2& landmark, Mat23& jpose, Mat2& jlm);

/// Line landmark observed in the vehicle frame as (normal angle, distance).
/// The prediction is sign-aligned to the observation before differencing.
Vec2 line_obs_error(const Pose2& pose, const LineNodeState& lm, const LineCoords& z);
void line_obs_jacobians(const Pose2& pose, const LineNodeState& lm, const LineCoords& z,
                        Mat23& jpose, Mat2& jlm);

/// Map association error for point landmarks: x^l - m.
Vec2 point_map_error(const Vec2& landmark, const Vec2& map_position);

/// Map association error for line landmarks, in (angle, distance) form.
Vec2 line_map_error(const LineNodeState& lm, const LineCoords& map_line);
void line_map_jacobian(const LineNodeState& lm, const LineCoords& map_line, Mat2& jlm);

Vec3 pose_prior_error(const Pose2& x, const Pose2& z);

/// (eta, rho) of a line feature in its own frame plus the information matrix
/// implied by the endpoint covariances.
void line_feature_coords(const LineFeature& feature, LineCoords& coords, Mat2& information);

}  // namespace radarloc
