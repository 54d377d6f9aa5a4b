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

#include "radarloc/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace radarloc {

namespace {

Pose2 interpolate(const TimedPose& a, const TimedPose& b, double t) {
  if (b.t <= a.t) return a.pose;
  const double f = std::clamp((t - a.t) / (b.t - a.t), 0.0, 1.0);
  const Pose2 rel = relative(a.pose, b.pose);
  const Twist2 u = twist_from_pose(rel, b.t - a.t);
  return compose(a.pose, integrate_twist(u, f * (b.t - a.t)));
}

}  // namespace

ErrorSeries compute_pose_errors(const std::vector<TimedPose>& estimates,
                                const std::vector<TimedPose>& truth) {
  if (estimates.empty() || truth.size() < 2) {
    throw InsufficientDataError("pose error computation needs estimates and reference");
  }
  const double est_t0 = estimates.front().t, est_t1 = estimates.back().t;
  const double ref_t0 = truth.front().t, ref_t1 = truth.back().t;
  const double overlap = std::min(est_t1, ref_t1) - std::max(est_t0, ref_t0);
  const double span = std::max(est_t1 - est_t0, 1e-9);
  if (overlap < 0.9 * span) {
    throw InsufficientDataError("time overlap with the reference is below 90%");
  }

  ErrorSeries out;
  for (const auto& est : estimates) {
    if (est.t < ref_t0 || est.t > ref_t1) continue;
    auto it = std::lower_bound(truth.begin(), truth.end(), est.t,
                               [](const TimedPose& p, double v) { return p.t < v; });
    const Pose2 ref = (it == truth.begin())
                          ? it->pose
                          : interpolate(*std::prev(it), *it, est.t);
    const double dx = est.pose.x - ref.x;
    const double dy = est.pose.y - ref.y;
    // Error component perpendicular to the reference heading.
    const double lat = -std::sin(ref.psi) * dx + std::cos(ref.psi) * dy;
    out.timestamps.push_back(est.t);
    out.lateral.push_back(lat);
    out.absolute.push_back(std::hypot(dx, dy));
  }
  if (out.timestamps.empty()) throw InsufficientDataError("no overlapping samples");
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InsufficientDataError("quantile of an empty series");
  std::sort(values.begin(), values.end());
  const double h = q * (static_cast<double>(values.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double f = h - static_cast<double>(lo);
  return values[lo] + f * (values[hi] - values[lo]);
}

QuantileSummary quantiles(const ErrorSeries& series) {
  if (series.absolute.empty()) throw InsufficientDataError("empty error series");
  std::vector<double> lat(series.lateral.size());
  for (std::size_t i = 0; i < series.lateral.size(); ++i) lat[i] = std::abs(series.lateral[i]);
  QuantileSummary s;
  s.lateral_p68 = quantile(lat, 0.682);
  s.lateral_p95 = quantile(lat, 0.954);
  s.absolute_p68 = quantile(series.absolute, 0.682);
  s.absolute_p95 = quantile(series.absolute, 0.954);
  return s;
}

ResidualStats odometry_residuals(const std::vector<EgoMotion>& estimates,
                                 const std::vector<TimedTwist>& truth) {
  ResidualStats stats;
  std::vector<double> r_vx, r_vy, r_omega;
  for (const auto& est : estimates) {
    auto it = std::lower_bound(truth.begin(), truth.end(), est.timestamp,
                               [](const TimedTwist& t, double v) { return t.t < v; });
    const TimedTwist* best = nullptr;
    if (it != truth.end()) best = &*it;
    if (it != truth.begin()) {
      const TimedTwist* prev = &*std::prev(it);
      if (!best || std::abs(prev->t - est.timestamp) < std::abs(best->t - est.timestamp)) {
        best = prev;
      }
    }
    if (!best || std::abs(best->t - est.timestamp) > 0.010) continue;
    if (est.degraded) {
      ++stats.degraded;
      continue;
    }
    r_vx.push_back(est.vx - best->twist.vx);
    r_vy.push_back(est.vy - best->twist.vy);
    r_omega.push_back(est.omega - best->twist.omega);
  }
  if (r_vx.empty()) throw InsufficientDataError("no matching timestamps for residuals");

  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    const double n = static_cast<double>(v.size());
    mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = (v.size() > 1) ? std::sqrt(ss / (n - 1.0)) : 0.0;
  };
  mean_std(r_vx, stats.mean_vx, stats.std_vx);
  mean_std(r_vy, stats.mean_vy, stats.std_vy);
  mean_std(r_omega, stats.mean_omega, stats.std_omega);
  stats.samples = r_vx.size();
  return stats;
}

std::vector<std::pair<double, double>> cdf_points(std::vector<double> errors) {
  std::sort(errors.begin(), errors.end());
  std::vector<std::pair<double, double>> out;
  out.reserve(errors.size());
  const double n = static_cast<double>(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) {
    out.emplace_back(errors[i], (static_cast<double>(i) + 1.0) / n);
  }
  return out;
}

}  // namespace radarloc
