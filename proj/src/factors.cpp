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

#include "radarloc/factors.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace radarloc {

namespace {

// Sign-aligned difference of two undirected lines: error (d_eta, sign) such
// that the first line re-expressed with `sign` is within pi/2 of the second.
inline void align_line_difference(double eta_pred, double eta_obs, double& d_eta, double& sign) {
  double d = wrap_angle(eta_pred - eta_obs);
  sign = 1.0;
  if (d > kPi / 2.0) {
    d -= kPi;
    sign = -1.0;
  } else if (d <= -kPi / 2.0) {
    d += kPi;
    sign = -1.0;
  }
  d_eta = d;
}

}  // namespace

Vec3 odometry_error(const Pose2& a, const Pose2& b, const Pose2& z) {
  const Pose2 rel = relative(a, b);
  const double c = std::cos(z.psi), s = std::sin(z.psi);
  const double dx = rel.x - z.x, dy = rel.y - z.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(rel.psi - z.psi)};
}

void odometry_jacobians(const Pose2& a, const Pose2& b, const Pose2& z, Mat3& ja, Mat3& jb) {
  const Pose2 rel = relative(a, b);
  const double ca = std::cos(a.psi), sa = std::sin(a.psi);
  Mat2 rz_t;
  rz_t << std::cos(z.psi), std::sin(z.psi), -std::sin(z.psi), std::cos(z.psi);

  Eigen::Matrix<double, 2, 3> da;
  da << -ca, -sa, rel.y, sa, -ca, -rel.x;
  Eigen::Matrix<double, 2, 3> db;
  db << ca, sa, 0.0, -sa, ca, 0.0;

  ja.setZero();
  ja.topRows<2>() = rz_t * da;
  ja(2, 2) = -1.0;
  jb.setZero();
  jb.topRows<2>() = rz_t * db;
  jb(2, 2) = 1.0;
}

Vec2 gnss_error(const Pose2& a, const Vec2& z) { return {a.x - z.x(), a.y - z.y()}; }

void gnss_jacobian(const Pose2& a, Mat23& ja) {
  (void)a;
  ja.setZero();
  ja(0, 0) = 1.0;
  ja(1, 1) = 1.0;
}

Vec2 point_obs_error(const Pose2& pose, const Vec2& landmark, const Vec2& z) {
  const double c = std::cos(pose.psi), s = std::sin(pose.psi);
  const double dx = landmark.x() - pose.x, dy = landmark.y() - pose.y;
  return {c * dx + s * dy - z.x(), -s * dx + c * dy - z.y()};
}

void point_obs_jacobians(const Pose2& pose, const Vec2& landmark, Mat23& jpose, Mat2& jlm) {
  const double c = std::cos(pose.psi), s = std::sin(pose.psi);
  Mat2 rt;
  rt << c, s, -s, c;
  const Vec2 d(landmark.x() - pose.x, landmark.y() - pose.y);
  Mat2 j90;
  j90 << 0.0, 1.0, -1.0, 0.0;
  jpose.leftCols<2>() = -rt;
  jpose.col(2) = rt * j90 * d;
  jlm = rt;
}

Vec2 line_obs_error(const Pose2& pose, const LineNodeState& lm, const LineCoords& z) {
  const double eta_g = lm.anchor_eta + lm.d_eta;
  const Vec2 n(std::cos(eta_g), std::sin(eta_g));
  const double rho_v = n.dot(lm.anchor_center - pose.translation()) + lm.d_lat;
  const double eta_v = eta_g - pose.psi;
  double d_eta, sign;
  align_line_difference(eta_v, z.eta, d_eta, sign);
  return {d_eta, sign * rho_v - z.rho};
}

void line_obs_jacobians(const Pose2& pose, const LineNodeState& lm, const LineCoords& z,
                        Mat23& jpose, Mat2& jlm) {
  const double eta_g = lm.anchor_eta + lm.d_eta;
  const Vec2 n(std::cos(eta_g), std::sin(eta_g));
  const Vec2 nprime(-std::sin(eta_g), std::cos(eta_g));
  const double eta_v = eta_g - pose.psi;
  double d_eta, sign;
  align_line_difference(eta_v, z.eta, d_eta, sign);

  jpose.setZero();
  jpose(0, 2) = -1.0;
  jpose(1, 0) = -sign * n.x();
  jpose(1, 1) = -sign * n.y();

  jlm.setZero();
  jlm(0, 0) = 1.0;
  jlm(1, 0) = sign * nprime.dot(lm.anchor_center - pose.translation());
  jlm(1, 1) = sign;
}

Vec2 point_map_error(const Vec2& landmark, const Vec2& map_position) {
  return landmark - map_position;
}

Vec2 line_map_error(const LineNodeState& lm, const LineCoords& map_line) {
  const LineCoords line = lm.line();
  double d_eta, sign;
  align_line_difference(line.eta, map_line.eta, d_eta, sign);
  return {d_eta, sign * line.rho - map_line.rho};
}

void line_map_jacobian(const LineNodeState& lm, const LineCoords& map_line, Mat2& jlm) {
  const double eta_g = lm.anchor_eta + lm.d_eta;
  const Vec2 nprime(-std::sin(eta_g), std::cos(eta_g));
  const LineCoords line = lm.line();
  double d_eta, sign;
  align_line_difference(line.eta, map_line.eta, d_eta, sign);
  jlm.setZero();
  jlm(0, 0) = 1.0;
  jlm(1, 0) = sign * nprime.dot(lm.anchor_center);
  jlm(1, 1) = sign;
}

Vec3 pose_prior_error(const Pose2& x, const Pose2& z) {
  return {x.x - z.x, x.y - z.y, wrap_angle(x.psi - z.psi)};
}

void line_feature_coords(const LineFeature& feature, LineCoords& coords, Mat2& information) {
  coords = LineCoords::from_segment(feature.p1, feature.p2);
  const Vec2 d = (feature.p2 - feature.p1).normalized();
  const Vec2 n(-d.y(), d.x());
  const double len = std::max(feature.length(), 0.5);

  const double var_lat1 = std::max(n.dot(feature.cov_p1 * n), 1e-8);
  const double var_lat2 = std::max(n.dot(feature.cov_p2 * n), 1e-8);
  const double var_angle = (var_lat1 + var_lat2) / (len * len);
  const Vec2 mid = 0.5 * (feature.p1 + feature.p2);
  // Distance from the segment midpoint to the foot of the perpendicular from
  // the origin; the rho uncertainty grows with it through the angle error.
  const double u_foot = -d.dot(mid);
  const double var_rho = 0.25 * (var_lat1 + var_lat2) + u_foot * u_foot * var_angle;

  information = Mat2::Zero();
  information(0, 0) = 1.0 / var_angle;
  information(1, 1) = 1.0 / std::max(var_rho, 1e-8);
}

}  // namespace radarloc
