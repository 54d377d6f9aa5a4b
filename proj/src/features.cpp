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

#include "radarloc/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace radarloc {

EgoTrajectory::EgoTrajectory(const std::vector<EgoMotion>& motions) {
  if (motions.empty()) throw ConfigError("EgoTrajectory needs at least one ego-motion sample");
  // Each sample's twist applies over half the spacing to its neighbors.
  std::vector<double> times;
  times.reserve(motions.size());
  for (const auto& m : motions) times.push_back(m.timestamp);
  const double lead =
      motions.size() > 1 ? 0.5 * (times[1] - times[0]) : 0.025;
  const double tail = motions.size() > 1
                          ? 0.5 * (times[times.size() - 1] - times[times.size() - 2])
                          : 0.025;
  t_min_ = times.front() - lead;
  t_max_ = times.back() + tail;

  knots_.push_back(t_min_);
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    knots_.push_back(0.5 * (times[i] + times[i + 1]));
  }
  knots_.push_back(t_max_);

  for (const auto& m : motions) twists_.push_back(m.twist());

  Pose2 p;
  poses_.push_back(p);
  for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
    p = compose(p, integrate_twist(twists_[i], knots_[i + 1] - knots_[i]));
    poses_.push_back(p);
  }
}

Pose2 EgoTrajectory::pose_at(double t) const {
  t = std::clamp(t, t_min_, t_max_);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t i =
      (it == knots_.begin()) ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  const std::size_t idx = std::min(i, twists_.size() - 1);
  return compose(poses_[idx], integrate_twist(twists_[idx], t - knots_[idx]));
}

Twist2 EgoTrajectory::twist_at(double t) const {
  t = std::clamp(t, t_min_, t_max_);
  auto it = std::upper_bound(knots_.begin(), knots_.end(), t);
  const std::size_t i =
      (it == knots_.begin()) ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  return twists_[std::min(i, twists_.size() - 1)];
}

Pose2 EgoTrajectory::relative_pose(double t_ref, double t) const {
  return relative(pose_at(t_ref), pose_at(t));
}

AggregatedScan aggregate_and_filter(const std::vector<RadarDetection>& detections,
                                    const std::vector<EgoMotion>& motions,
                                    const CalibrationTable& calib, double reference_time,
                                    const AggregateConfig& config) {
  AggregatedScan scan;
  scan.window = config.window;
  scan.reference_timestamp = reference_time;
  if (detections.empty()) return scan;

  const EgoTrajectory ego(motions);
  for (const auto& det : detections) {
    if (!ego.covers(det.timestamp) || !ego.covers(reference_time)) {
      std::ostringstream msg;
      msg << "ego motion does not cover [" << std::min(det.timestamp, reference_time) << ", "
          << std::max(det.timestamp, reference_time) << "], coverage is [" << ego.t_min()
          << ", " << ego.t_max() << "]";
      throw ConfigError(msg.str());
    }
  }

  for (const auto& det : detections) {
    auto it = calib.find(det.sensor_id);
    if (it == calib.end()) {
      throw ConfigError("no calibration for sensor " + std::to_string(det.sensor_id));
    }
    const SensorCalibration& c = it->second;
    const double theta = c.beta + c.alpha_azimuth * det.azimuth_sensor;

    // Static-world Doppler prediction at the measurement time.
    const Twist2 u = ego.twist_at(det.timestamp);
    const Vec3 a(c.mount_x * std::sin(theta) - c.mount_y * std::cos(theta), std::cos(theta),
                 std::sin(theta));
    const double predicted = a.dot(u.as_vector());
    const double measured = c.alpha_doppler * det.doppler;
    const double bound = 3.0 * c.alpha_doppler * c.sigma_doppler + config.doppler_margin;
    if (std::abs(measured - predicted) > bound) continue;

    const Vec2 in_vehicle(c.mount_x + det.range * std::cos(theta),
                          c.mount_y + det.range * std::sin(theta));
    const Pose2 frame = ego.relative_pose(reference_time, det.timestamp);

    AggregatedPoint pt;
    pt.position = frame.transform(in_vehicle);
    pt.doppler = measured;
    pt.sensor_id = det.sensor_id;
    pt.timestamp = det.timestamp;
    pt.range = det.range;
    scan.points.push_back(pt);
  }
  return scan;
}

namespace {

// Uniform grid for fixed-radius neighbor queries.
class PointGrid {
 public:
  PointGrid(const std::vector<AggregatedPoint>& points, double cell) : cell_(cell) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      cells_[key(points[i].position)].push_back(i);
    }
  }

  std::vector<std::size_t> neighbors(const std::vector<AggregatedPoint>& points, std::size_t i,
                                     double radius) const {
    std::vector<std::size_t> out;
    const Vec2& p = points[i].position;
    const int cx0 = static_cast<int>(std::floor((p.x() - radius) / cell_));
    const int cx1 = static_cast<int>(std::floor((p.x() + radius) / cell_));
    const int cy0 = static_cast<int>(std::floor((p.y() - radius) / cell_));
    const int cy1 = static_cast<int>(std::floor((p.y() + radius) / cell_));
    for (int cx = cx0; cx <= cx1; ++cx) {
      for (int cy = cy0; cy <= cy1; ++cy) {
        auto it = cells_.find(pack(cx, cy));
        if (it == cells_.end()) continue;
        for (std::size_t j : it->second) {
          if ((points[j].position - p).norm() <= radius) out.push_back(j);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  static std::int64_t pack(int cx, int cy) {
    return (static_cast<std::int64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy);
  }
  std::int64_t key(const Vec2& p) const {
    return pack(static_cast<int>(std::floor(p.x() / cell_)),
                static_cast<int>(std::floor(p.y() / cell_)));
  }
  double cell_;
  std::map<std::int64_t, std::vector<std::size_t>> cells_;
};

}  // namespace

ClusterResult cluster_points(const AggregatedScan& scan, const OpticsConfig& config) {
  ClusterResult result;
  const std::size_t n = scan.points.size();
  if (n == 0) return result;

  const double eps = config.max_reach_eps;
  const PointGrid grid(scan.points, eps);
  constexpr double kUndefined = std::numeric_limits<double>::infinity();

  std::vector<double> reach(n, kUndefined);
  std::vector<double> core(n, kUndefined);
  std::vector<bool> processed(n, false);
  std::vector<std::size_t> order;
  order.reserve(n);

  auto core_distance = [&](std::size_t i, const std::vector<std::size_t>& nbrs) {
    if (nbrs.size() < static_cast<std::size_t>(config.min_pts)) return kUndefined;
    std::vector<double> d;
    d.reserve(nbrs.size());
    for (std::size_t j : nbrs) d.push_back((scan.points[j].position - scan.points[i].position).norm());
    std::nth_element(d.begin(), d.begin() + (config.min_pts - 1), d.end());
    return d[config.min_pts - 1];
  };

  // seeds ordered by (reachability, index) for deterministic expansion
  std::set<std::pair<double, std::size_t>> seeds;
  auto update_seeds = [&](std::size_t i, const std::vector<std::size_t>& nbrs) {
    if (core[i] == kUndefined) return;
    for (std::size_t j : nbrs) {
      if (processed[j]) continue;
      const double dist = (scan.points[j].position - scan.points[i].position).norm();
      const double new_reach = std::max(core[i], dist);
      if (new_reach < reach[j]) {
        if (reach[j] != kUndefined) seeds.erase({reach[j], j});
        reach[j] = new_reach;
        seeds.insert({new_reach, j});
      } else if (reach[j] == kUndefined) {
        reach[j] = new_reach;
        seeds.insert({new_reach, j});
      }
    }
  };

  for (std::size_t start = 0; start < n; ++start) {
    if (processed[start]) continue;
    auto nbrs = grid.neighbors(scan.points, start, eps);
    processed[start] = true;
    core[start] = core_distance(start, nbrs);
    order.push_back(start);
    seeds.clear();
    update_seeds(start, nbrs);
    while (!seeds.empty()) {
      const std::size_t q = seeds.begin()->second;
      seeds.erase(seeds.begin());
      auto qn = grid.neighbors(scan.points, q, eps);
      processed[q] = true;
      core[q] = core_distance(q, qn);
      order.push_back(q);
      update_seeds(q, qn);
    }
  }

  // Flat extraction: walk the ordering and cut at the reachability threshold.
  const double cut = config.extraction_threshold;
  std::vector<std::vector<std::size_t>> raw;
  std::vector<std::size_t> current;
  auto flush = [&]() {
    if (!current.empty()) raw.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i : order) {
    if (reach[i] > cut) {
      flush();
      if (core[i] <= cut) current.push_back(i);
    } else {
      current.push_back(i);
    }
  }
  flush();

  std::vector<bool> clustered(n, false);
  for (auto& cluster : raw) {
    if (cluster.size() < static_cast<std::size_t>(config.min_pts)) continue;
    // Point-like gate: reject spatially extended clusters (wall returns).
    Vec2 lo = scan.points[cluster.front()].position;
    Vec2 hi = lo;
    for (std::size_t i : cluster) {
      lo = lo.cwiseMin(scan.points[i].position);
      hi = hi.cwiseMax(scan.points[i].position);
    }
    if ((hi - lo).norm() > config.point_max_extent) continue;
    for (std::size_t i : cluster) clustered[i] = true;
    std::sort(cluster.begin(), cluster.end());
    result.clusters.push_back(std::move(cluster));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!clustered[i]) result.leftover.push_back(i);
  }
  return result;
}

std::vector<FeatureObservation> extract_point_features(
    const AggregatedScan& scan, const std::vector<std::vector<std::size_t>>& clusters,
    const PointFeatureConfig& config) {
  std::vector<FeatureObservation> out;
  out.reserve(clusters.size());
  for (const auto& cluster : clusters) {
    if (cluster.empty()) continue;
    Vec2 centroid = Vec2::Zero();
    double mean_range = 0.0;
    for (std::size_t i : cluster) {
      centroid += scan.points[i].position;
      mean_range += scan.points[i].range;
    }
    const double n = static_cast<double>(cluster.size());
    centroid /= n;
    mean_range /= n;

    Mat2 scatter = Mat2::Zero();
    for (std::size_t i : cluster) {
      const Vec2 d = scan.points[i].position - centroid;
      scatter += d * d.transpose();
    }
    scatter /= n;

    // Sensor-noise floor mapped to Cartesian at the feature bearing; guards
    // against overconfident single-burst clusters.
    const double bearing = std::atan2(centroid.y(), centroid.x());
    const Mat2 r = rot2(bearing);
    Mat2 floor_cov = Mat2::Zero();
    floor_cov(0, 0) = config.sigma_range * config.sigma_range;
    floor_cov(1, 1) = std::pow(std::max(mean_range, 1.0) * config.sigma_azimuth, 2.0);
    floor_cov = r * floor_cov * r.transpose();

    PointFeature pf;
    pf.position = centroid;
    pf.covariance = scatter / n + floor_cov;

    FeatureObservation obs;
    obs.shape = pf;
    obs.support_count = static_cast<int>(cluster.size());
    obs.timestamp = scan.reference_timestamp;
    obs.source = FeatureSource::Radar;
    out.push_back(obs);
  }
  return out;
}

namespace {

struct PcaLine {
  Vec2 centroid{0.0, 0.0};
  Vec2 direction{1.0, 0.0};
  double residual_rms{0.0};
  double s_uu{0.0};  // along-track scatter
};

PcaLine fit_pca_line(const std::vector<Vec2>& pts) {
  PcaLine out;
  const double n = static_cast<double>(pts.size());
  for (const auto& p : pts) out.centroid += p;
  out.centroid /= n;
  Mat2 s = Mat2::Zero();
  for (const auto& p : pts) {
    const Vec2 d = p - out.centroid;
    s += d * d.transpose();
  }
  const double angle = 0.5 * std::atan2(2.0 * s(0, 1), s(0, 0) - s(1, 1));
  out.direction = {std::cos(angle), std::sin(angle)};
  const Vec2 nrm(-out.direction.y(), out.direction.x());
  double ss = 0.0;
  double s_uu = 0.0;
  for (const auto& p : pts) {
    const Vec2 d = p - out.centroid;
    const double r = nrm.dot(d);
    const double u = out.direction.dot(d);
    ss += r * r;
    s_uu += u * u;
  }
  out.residual_rms = std::sqrt(ss / n);
  out.s_uu = s_uu;
  return out;
}

LineSegmentCandidate clip_to_extent(const PcaLine& line, std::vector<Vec2> pts) {
  double u_min = std::numeric_limits<double>::infinity();
  double u_max = -std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    const double u = line.direction.dot(p - line.centroid);
    u_min = std::min(u_min, u);
    u_max = std::max(u_max, u);
  }
  LineSegmentCandidate seg;
  seg.p1 = line.centroid + u_min * line.direction;
  seg.p2 = line.centroid + u_max * line.direction;
  seg.points = std::move(pts);
  seg.residual_rms = line.residual_rms;
  return seg;
}

}  // namespace

std::vector<LineSegmentCandidate> fit_lines(const std::vector<Vec2>& points,
                                            const LineFitConfig& config) {
  std::vector<LineSegmentCandidate> out;
  std::vector<Vec2> remaining = points;
  std::mt19937_64 rng(config.seed);

  while (static_cast<int>(out.size()) < config.max_lines &&
         remaining.size() >= static_cast<std::size_t>(config.min_support)) {
    const std::size_t n = remaining.size();
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    const double thr2 = config.inlier_dist * config.inlier_dist;

    double best_cost = std::numeric_limits<double>::infinity();
    Vec2 best_p{0, 0}, best_n{0, 0};
    bool found = false;
    for (int it = 0; it < config.iterations_per_line; ++it) {
      const std::size_t i = pick(rng), j = pick(rng);
      if (i == j) continue;
      const Vec2 d = remaining[j] - remaining[i];
      const double len = d.norm();
      if (len < 1e-9) continue;
      const Vec2 nrm(-d.y() / len, d.x() / len);
      double cost = 0.0;
      for (const auto& p : remaining) {
        const double r = nrm.dot(p - remaining[i]);
        cost += std::min(r * r, thr2);
      }
      if (cost < best_cost) {
        best_cost = cost;
        best_p = remaining[i];
        best_n = nrm;
        found = true;
      }
    }
    if (!found) break;

    std::vector<Vec2> inliers;
    std::vector<Vec2> rest;
    for (const auto& p : remaining) {
      if (std::abs(best_n.dot(p - best_p)) <= config.inlier_dist) {
        inliers.push_back(p);
      } else {
        rest.push_back(p);
      }
    }
    if (static_cast<int>(inliers.size()) < config.min_support) break;

    // Refit on the consensus set and re-collect inliers once.
    PcaLine line = fit_pca_line(inliers);
    const Vec2 nrm(-line.direction.y(), line.direction.x());
    inliers.clear();
    rest.clear();
    for (const auto& p : remaining) {
      if (std::abs(nrm.dot(p - line.centroid)) <= config.inlier_dist) {
        inliers.push_back(p);
      } else {
        rest.push_back(p);
      }
    }
    if (static_cast<int>(inliers.size()) < config.min_support) break;
    line = fit_pca_line(inliers);
    LineSegmentCandidate seg = clip_to_extent(line, std::move(inliers));
    remaining = std::move(rest);
    if (seg.length() >= config.min_length) out.push_back(std::move(seg));
  }
  return out;
}

namespace {

bool mergeable(const LineSegmentCandidate& a, const LineSegmentCandidate& b,
               const MergeConfig& config) {
  const Vec2 da = (a.p2 - a.p1).normalized();
  const Vec2 db = (b.p2 - b.p1).normalized();
  const double angle = std::abs(wrap_line_angle(std::atan2(da.y(), da.x()) -
                                                std::atan2(db.y(), db.x())));
  if (angle > config.max_angle) return false;

  const Vec2 na(-da.y(), da.x());
  const Vec2 nb(-db.y(), db.x());
  const Vec2 mid_a = 0.5 * (a.p1 + a.p2);
  const Vec2 mid_b = 0.5 * (b.p1 + b.p2);
  const double lat_ab = std::abs(na.dot(mid_b - a.p1));
  const double lat_ba = std::abs(nb.dot(mid_a - b.p1));
  if (std::max(lat_ab, lat_ba) > config.max_lateral) return false;

  // Along-track intervals on the average direction.
  const Vec2 dir = (da.dot(db) >= 0.0 ? Vec2(da + db) : Vec2(da - db)).normalized();
  auto interval = [&](const LineSegmentCandidate& s) {
    const double u1 = dir.dot(s.p1), u2 = dir.dot(s.p2);
    return std::make_pair(std::min(u1, u2), std::max(u1, u2));
  };
  const auto [a0, a1] = interval(a);
  const auto [b0, b1] = interval(b);
  const double gap = std::max(a0, b0) - std::min(a1, b1);
  return gap <= config.max_gap;
}

}  // namespace

std::vector<LineSegmentCandidate> merge_segments(std::vector<LineSegmentCandidate> segments,
                                                 const MergeConfig& config) {
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < segments.size() && !changed; ++i) {
      for (std::size_t j = i + 1; j < segments.size() && !changed; ++j) {
        if (!mergeable(segments[i], segments[j], config)) continue;
        std::vector<Vec2> pts = segments[i].points;
        pts.insert(pts.end(), segments[j].points.begin(), segments[j].points.end());
        const PcaLine line = fit_pca_line(pts);
        LineSegmentCandidate merged = clip_to_extent(line, std::move(pts));
        segments.erase(segments.begin() + j);
        segments[i] = std::move(merged);
        changed = true;
      }
    }
  }
  return segments;
}

FeatureObservation to_line_feature(const LineSegmentCandidate& seg, double timestamp,
                                   const LineFitConfig& config) {
  const double n = static_cast<double>(std::max<std::size_t>(seg.points.size(), 2));
  const double s = std::max(seg.residual_rms, config.sigma_floor);
  const double s2 = s * s;

  PcaLine line = fit_pca_line(seg.points.empty() ? std::vector<Vec2>{seg.p1, seg.p2}
                                                 : seg.points);
  const double var_c = s2 / n;                          // lateral at the centroid
  const double var_m = s2 / std::max(line.s_uu, 1e-6);  // direction
  const double len = seg.length();
  const double along_sigma = 0.5 * len / std::max(n - 1.0, 1.0);
  const double var_along = along_sigma * along_sigma + config.sigma_floor * config.sigma_floor;

  auto endpoint_cov = [&](const Vec2& p) {
    const double d = line.direction.dot(p - line.centroid);
    const double var_lat = var_c + d * d * var_m;
    Mat2 r;
    r << line.direction.x(), -line.direction.y(), line.direction.y(), line.direction.x();
    Mat2 diag = Mat2::Zero();
    diag(0, 0) = var_along;
    diag(1, 1) = var_lat;
    return Mat2(r * diag * r.transpose());
  };

  LineFeature lf;
  lf.p1 = seg.p1;
  lf.p2 = seg.p2;
  lf.cov_p1 = endpoint_cov(seg.p1);
  lf.cov_p2 = endpoint_cov(seg.p2);

  FeatureObservation obs;
  obs.shape = lf;
  obs.support_count = static_cast<int>(seg.points.size());
  obs.timestamp = timestamp;
  obs.source = FeatureSource::Radar;
  return obs;
}

std::vector<FeatureObservation> extract_features_window(
    const std::vector<RadarDetection>& detections, const std::vector<EgoMotion>& motions,
    const CalibrationTable& calib, double reference_time, const FeatureExtractorConfig& config) {
  const AggregatedScan scan =
      aggregate_and_filter(detections, motions, calib, reference_time, config.aggregate);
  const ClusterResult clusters = cluster_points(scan, config.optics);

  std::vector<FeatureObservation> out =
      extract_point_features(scan, clusters.clusters, config.point_feature);

  std::vector<Vec2> leftover;
  leftover.reserve(clusters.leftover.size());
  for (std::size_t i : clusters.leftover) leftover.push_back(scan.points[i].position);
  auto segments = fit_lines(leftover, config.lines);
  if (config.merge_lines) segments = merge_segments(std::move(segments), config.merge);
  for (const auto& seg : segments) {
    out.push_back(to_line_feature(seg, scan.reference_timestamp, config.lines));
  }
  return out;
}

}  // namespace radarloc
