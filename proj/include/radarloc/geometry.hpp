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
#include <cmath>

namespace radarloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Wraps an undirected-line angle difference to (-pi/2, pi/2].
inline double wrap_line_angle(double a) {
  double r = std::remainder(a, kPi);
  if (r <= -kPi / 2.0) r += kPi;
  return r;
}

inline Mat2 rot2(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// Planar rigid-body pose (x, y, heading). Heading is kept in (-pi, pi].
struct Pose2 {
  double x{0.0};
  double y{0.0};
  double psi{0.0};

  Pose2() = default;
  Pose2(double x_, double y_, double psi_) : x(x_), y(y_), psi(wrap_angle(psi_)) {}

  static Pose2 identity() { return {}; }

  Vec2 translation() const { return {x, y}; }
  Mat2 rotation() const { return rot2(psi); }

  /// Maps a point from this pose's local frame into the parent frame.
  Vec2 transform(const Vec2& p) const {
    const double c = std::cos(psi), s = std::sin(psi);
    return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
  }

  /// Maps a point from the parent frame into this pose's local frame.
  Vec2 inverse_transform(const Vec2& p) const {
    const double c = std::cos(psi), s = std::sin(psi);
    const double dx = p.x() - x, dy = p.y() - y;
    return {c * dx + s * dy, -s * dx + c * dy};
  }

  Vec3 as_vector() const { return {x, y, psi}; }
};

/// Rigid 2D motion composition: the pose of frame b expressed through frame a.
inline Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.psi), s = std::sin(a.psi);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y, wrap_angle(a.psi + b.psi)};
}

inline Pose2 invert(const Pose2& a) {
  const double c = std::cos(a.psi), s = std::sin(a.psi);
  return {-(c * a.x + s * a.y), s * a.x - c * a.y, wrap_angle(-a.psi)};
}

/// relative(a, b) = invert(a) * b, the motion that takes frame a to frame b.
inline Pose2 relative(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.psi), s = std::sin(a.psi);
  const double dx = b.x - a.x, dy = b.y - a.y;
  return {c * dx + s * dy, -s * dx + c * dy, wrap_angle(b.psi - a.psi)};
}

/// Body twist (yaw rate, longitudinal and lateral velocity).
struct Twist2 {
  double omega{0.0};
  double vx{0.0};
  double vy{0.0};

  Vec3 as_vector() const { return {omega, vx, vy}; }
};

/// Exact displacement of a constant body twist integrated over dt, expressed
/// in the start frame.
inline Pose2 integrate_twist(const Twist2& u, double dt) {
  const double th = u.omega * dt;
  double s, c;  // integral of cos/sin of the rotating frame
  if (std::abs(th) < 1e-9) {
    s = dt * (1.0 - th * th / 6.0);
    c = dt * th * 0.5 * (1.0 - th * th / 12.0);
  } else {
    s = std::sin(th) / u.omega;
    c = (1.0 - std::cos(th)) / u.omega;
  }
  return {s * u.vx - c * u.vy, c * u.vx + s * u.vy, wrap_angle(th)};
}

/// Inverse of integrate_twist for |delta.psi| < pi: the constant body twist
/// that produces `delta` over dt.
inline Twist2 twist_from_pose(const Pose2& delta, double dt) {
  if (dt <= 0.0) return {};
  const double th = delta.psi;
  const double omega = th / dt;
  double s, c;
  if (std::abs(th) < 1e-9) {
    s = dt * (1.0 - th * th / 6.0);
    c = dt * th * 0.5 * (1.0 - th * th / 12.0);
  } else {
    s = std::sin(th) / omega;
    c = (1.0 - std::cos(th)) / omega;
  }
  const double det = s * s + c * c;
  return {omega, (s * delta.x + c * delta.y) / det, (-c * delta.x + s * delta.y) / det};
}

}  // namespace radarloc
