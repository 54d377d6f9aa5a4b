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

#include "radarloc/simulator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace radarloc {

Pose2 MovingObject::pose_at(double t) const {
  return compose(start, integrate_twist(twist, t - t_start));
}

LandmarkMap World::localization_map() const {
  LandmarkMap out;
  for (const auto& l : landmarks.landmarks()) {
    if (std::find(unmapped_ids.begin(), unmapped_ids.end(), l.id) == unmapped_ids.end()) {
      out.add(l);
    }
  }
  return out;
}

double TrajectorySpec::total_duration() const {
  double d = 0.0;
  for (const auto& s : segments) d += s.duration;
  return d;
}

Trajectory::Trajectory(const TrajectorySpec& spec) {
  double t = 0.0;
  Pose2 p = spec.start;
  for (const auto& seg : spec.segments) {
    starts_.push_back(t);
    poses_.push_back(p);
    twists_.push_back(seg.twist);
    p = compose(p, integrate_twist(seg.twist, seg.duration));
    t += seg.duration;
  }
  duration_ = t;
  starts_.push_back(t);
  poses_.push_back(p);
  twists_.push_back(spec.segments.empty() ? Twist2{} : spec.segments.back().twist);
}

Pose2 Trajectory::pose_at(double t) const {
  t = std::clamp(t, 0.0, duration_);
  auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  const std::size_t i = (it == starts_.begin()) ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
  const std::size_t idx = std::min(i, poses_.size() - 1);
  return compose(poses_[idx], integrate_twist(twists_[idx], t - starts_[idx]));
}

Twist2 Trajectory::twist_at(double t) const {
  if (t <= 0.0) return twists_.front();
  if (t >= duration_) return twists_.back();
  auto it = std::upper_bound(starts_.begin(), starts_.end(), t);
  const std::size_t i = (it == starts_.begin()) ? 0 : static_cast<std::size_t>(it - starts_.begin()) - 1;
  return twists_[std::min(i, twists_.size() - 1)];
}

TrajectoryBuilder::TrajectoryBuilder(const Pose2& start, double grid) : grid_(grid) {
  spec_.start = start;
}

void TrajectoryBuilder::push(const Twist2& u, double duration) {
  if (duration <= 0.0) return;
  if (!spec_.segments.empty()) {
    auto& last = spec_.segments.back();
    if (last.twist.omega == u.omega && last.twist.vx == u.vx && last.twist.vy == u.vy) {
      last.duration += duration;
      current_ = u;
      return;
    }
  }
  spec_.segments.push_back({duration, u});
  current_ = u;
}

TrajectoryBuilder& TrajectoryBuilder::hold(double duration) {
  const double d = std::round(duration / grid_) * grid_;
  push(current_, d);
  return *this;
}

TrajectoryBuilder& TrajectoryBuilder::ramp_to(const Twist2& target, double ramp_time,
                                              double hold_time) {
  const int steps = std::max(1, static_cast<int>(std::round(ramp_time / grid_)));
  const Twist2 from = current_;
  for (int i = 1; i <= steps; ++i) {
    const double f = static_cast<double>(i) / steps;
    Twist2 u;
    u.omega = from.omega + f * (target.omega - from.omega);
    u.vx = from.vx + f * (target.vx - from.vx);
    u.vy = from.vy + f * (target.vy - from.vy);
    push(u, grid_);
  }
  hold(hold_time);
  return *this;
}

TrajectoryBuilder& TrajectoryBuilder::turn(double heading_change, double speed,
                                           double omega_approx, double ramp_time) {
  // Ramp yaw rate up, hold, ramp down, with the peak rate adjusted so the
  // integrated heading change is exact despite grid-aligned durations.
  const int n = std::max(1, static_cast<int>(std::round(ramp_time / grid_)));
  const double sign = heading_change >= 0.0 ? 1.0 : -1.0;
  const double mag = std::abs(heading_change);
  const double w0 = std::abs(omega_approx);
  double hold = mag / w0 - grid_ * n;  // ramps contribute g*(n+1)/2 + g*(n-1)/2 = g*n
  hold = std::max(0.0, std::round(hold / grid_) * grid_);
  const double k = grid_ * n + hold;
  const double omega = sign * mag / k;

  ramp_to({omega, speed, 0.0}, ramp_time, hold);
  // Ramp down without counting the final zero-rate step into the turn.
  const Twist2 from = current_;
  for (int i = 1; i <= n; ++i) {
    const double f = static_cast<double>(i) / n;
    push({from.omega * (1.0 - f), speed, 0.0}, grid_);
  }
  return *this;
}

TrajectorySpec TrajectoryBuilder::build() const { return spec_; }

namespace {

// Does segment [a,b] block the ray from s to p (strictly between the two)?
bool segment_blocks(const Vec2& s, const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 r = p - s;
  const Vec2 q = b - a;
  const double denom = r.x() * q.y() - r.y() * q.x();
  if (std::abs(denom) < 1e-12) return false;
  const Vec2 d = a - s;
  const double t = (d.x() * q.y() - d.y() * q.x()) / denom;   // along the ray
  const double u = (d.x() * r.y() - d.y() * r.x()) / denom;   // along the segment
  return t > 1e-6 && t < 1.0 - 1e-6 && u >= 0.0 && u <= 1.0;
}

struct Candidate {
  Vec2 position;
  Vec2 velocity{0.0, 0.0};
  int occluder_segment{-1};  // landmark index to skip in the ray test
  int occluder_object{-1};
  DetectionSource source{DetectionSource::Static};
};

std::array<Vec2, 4> rectangle_corners(const Pose2& pose, double length, double width) {
  const double hl = 0.5 * length, hw = 0.5 * width;
  return {pose.transform({hl, hw}), pose.transform({hl, -hw}), pose.transform({-hl, -hw}),
          pose.transform({-hl, hw})};
}

}  // namespace

std::vector<RadarDetection> simulate_sensor_scan(const World& world, const Pose2& pose,
                                                 const Twist2& twist, const SensorModel& sensor,
                                                 const SimConfig& config, double t,
                                                 std::mt19937_64& rng,
                                                 std::vector<int>* source_tags) {
  const SensorCalibration& c = sensor.calibration;
  const Pose2 sensor_pose = compose(pose, Pose2(c.mount_x, c.mount_y, c.beta));
  const Vec2 s_pos = sensor_pose.translation();

  // Sensor mount velocity in the global frame.
  const Vec2 v_mount_body(twist.vx - twist.omega * c.mount_y, twist.vy + twist.omega * c.mount_x);
  const Vec2 v_sensor = pose.rotation() * v_mount_body;

  std::uniform_int_distribution<int> pole_points(1, 3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> snr_dist(5.0, 30.0);

  std::vector<Candidate> candidates;
  const auto& landmarks = world.landmarks.landmarks();
  for (std::size_t li = 0; li < landmarks.size(); ++li) {
    const Landmark& l = landmarks[li];
    if (l.kind == LandmarkKind::LaneMarking) continue;  // paint gives no radar return
    if (l.is_point()) {
      if ((l.p1 - s_pos).norm() > sensor.max_range + 1.0) continue;
      const int k = pole_points(rng);
      for (int i = 0; i < k; ++i) {
        Candidate cand;
        cand.position = l.p1;
        candidates.push_back(cand);
      }
    } else {
      const double len = (l.p2 - l.p1).norm();
      const int n = std::max(1, static_cast<int>(std::floor(len / config.segment_sample_spacing)));
      for (int i = 0; i < n; ++i) {
        const double f = (i + 0.5) / n;
        Candidate cand;
        cand.position = l.p1 + f * (l.p2 - l.p1);
        if ((cand.position - s_pos).norm() > sensor.max_range + 1.0) continue;
        cand.occluder_segment = static_cast<int>(li);
        candidates.push_back(cand);
      }
    }
  }
  if (config.moving_objects) {
    for (std::size_t oi = 0; oi < world.moving_objects.size(); ++oi) {
      const MovingObject& obj = world.moving_objects[oi];
      if (!obj.active_at(t)) continue;
      const Pose2 opose = obj.pose_at(t);
      const auto corners = rectangle_corners(opose, obj.length, obj.width);
      for (int e = 0; e < 4; ++e) {
        const Vec2 a = corners[e], b = corners[(e + 1) % 4];
        const double len = (b - a).norm();
        const int n = std::max(1, static_cast<int>(std::floor(len / config.segment_sample_spacing)));
        for (int i = 0; i < n; ++i) {
          const double f = (i + 0.5) / n;
          Candidate cand;
          cand.position = a + f * (b - a);
          if ((cand.position - s_pos).norm() > sensor.max_range + 1.0) continue;
          const Vec2 body = opose.inverse_transform(cand.position);
          const Vec2 v_body(obj.twist.vx - obj.twist.omega * body.y(),
                            obj.twist.vy + obj.twist.omega * body.x());
          cand.velocity = opose.rotation() * v_body;
          cand.occluder_object = static_cast<int>(oi);
          cand.source = DetectionSource::Moving;
          candidates.push_back(cand);
        }
      }
    }
  }

  struct Raw {
    RadarDetection det;
    double range;
    DetectionSource source;
  };
  std::vector<Raw> raws;

  for (const auto& cand : candidates) {
    const Vec2 rel = sensor_pose.inverse_transform(cand.position);
    const double range = rel.norm();
    if (range < sensor.min_range || range > sensor.max_range) continue;
    const double az_true = std::atan2(rel.y(), rel.x());
    if (std::abs(az_true) > 0.5 * sensor.fov) continue;

    bool blocked = false;
    for (std::size_t li = 0; li < landmarks.size() && !blocked; ++li) {
      const Landmark& l = landmarks[li];
      if (l.is_point() || l.kind == LandmarkKind::LaneMarking ||
          l.kind == LandmarkKind::Curb || static_cast<int>(li) == cand.occluder_segment) {
        continue;
      }
      blocked = segment_blocks(s_pos, cand.position, l.p1, l.p2);
    }
    if (config.moving_objects) {
      for (std::size_t oi = 0; oi < world.moving_objects.size() && !blocked; ++oi) {
        if (static_cast<int>(oi) == cand.occluder_object) continue;
        const MovingObject& obj = world.moving_objects[oi];
        if (!obj.active_at(t)) continue;
        const auto corners = rectangle_corners(obj.pose_at(t), obj.length, obj.width);
        for (int e = 0; e < 4 && !blocked; ++e) {
          blocked = segment_blocks(s_pos, cand.position, corners[e], corners[(e + 1) % 4]);
        }
      }
    }
    if (blocked) continue;

    const Vec2 los = (cand.position - s_pos) / range;
    const double doppler_true = los.dot(v_sensor - cand.velocity);

    Raw raw;
    raw.det.sensor_id = sensor.id;
    raw.det.timestamp = t;
    raw.det.range = range;
    raw.det.azimuth_sensor = az_true / c.alpha_azimuth;
    raw.det.doppler = doppler_true / c.alpha_doppler;
    raw.det.snr = snr_dist(rng);
    if (config.noise) {
      raw.det.range = std::max(0.0, raw.det.range + sensor.sigma_range * gauss(rng));
      raw.det.azimuth_sensor += c.sigma_azimuth * gauss(rng);
      raw.det.doppler += c.sigma_doppler * gauss(rng);
    }
    raw.range = range;
    raw.source = cand.source;
    raws.push_back(raw);
  }

  if (config.clutter && world.clutter_rate > 0.0) {
    std::poisson_distribution<int> n_clutter(world.clutter_rate);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int k = n_clutter(rng);
    for (int i = 0; i < k; ++i) {
      Raw raw;
      raw.det.sensor_id = sensor.id;
      raw.det.timestamp = t;
      raw.det.range = sensor.min_range + u01(rng) * (sensor.max_range - sensor.min_range);
      raw.det.azimuth_sensor = (u01(rng) - 0.5) * sensor.fov / c.alpha_azimuth;
      raw.det.doppler = (2.0 * u01(rng) - 1.0) * config.clutter_max_doppler;
      raw.det.snr = 10.0 * u01(rng);
      raw.range = raw.det.range;
      raw.source = DetectionSource::Clutter;
      raws.push_back(raw);
    }
  }

  // Target-count cap: keep the nearest returns, preserving generation order.
  if (static_cast<int>(raws.size()) > config.max_detections_per_scan) {
    std::vector<std::size_t> idx(raws.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return raws[a].range < raws[b].range; });
    idx.resize(config.max_detections_per_scan);
    std::sort(idx.begin(), idx.end());
    std::vector<Raw> kept;
    kept.reserve(idx.size());
    for (std::size_t i : idx) kept.push_back(raws[i]);
    raws = std::move(kept);
  }

  std::vector<RadarDetection> out;
  out.reserve(raws.size());
  for (const auto& raw : raws) {
    out.push_back(raw.det);
    if (source_tags) source_tags->push_back(static_cast<int>(raw.source));
  }
  return out;
}

std::vector<RadarDetection> simulate_scan(const World& world, const Pose2& pose,
                                          const Twist2& twist,
                                          const std::vector<SensorModel>& sensors,
                                          const SimConfig& config, double t,
                                          std::mt19937_64& rng) {
  if (sensors.empty()) throw ConfigError("simulate_scan needs at least one sensor");
  std::vector<RadarDetection> out;
  for (const auto& sensor : sensors) {
    auto dets = simulate_sensor_scan(world, pose, twist, sensor, config, t, rng);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

namespace {

bool clip_segment_to_view(const Landmark& l, const Pose2& view_pose, double max_range,
                          double half_fov, double spacing, Vec2& out_p1, Vec2& out_p2) {
  const double len = (l.p2 - l.p1).norm();
  const int n = std::max(2, static_cast<int>(std::floor(len / spacing)));
  bool any = false;
  double f_lo = 0.0, f_hi = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double f = static_cast<double>(i) / n;
    const Vec2 p = l.p1 + f * (l.p2 - l.p1);
    const Vec2 rel = view_pose.inverse_transform(p);
    const double r = rel.norm();
    if (r > max_range || r < 0.3) continue;
    if (std::abs(std::atan2(rel.y(), rel.x())) > half_fov) continue;
    if (!any) {
      f_lo = f_hi = f;
      any = true;
    } else {
      f_hi = f;
    }
  }
  if (!any || (f_hi - f_lo) * len < 1.0) return false;
  out_p1 = view_pose.inverse_transform(l.p1 + f_lo * (l.p2 - l.p1));
  out_p2 = view_pose.inverse_transform(l.p1 + f_hi * (l.p2 - l.p1));
  return true;
}

Mat2 endpoint_covariance(const Vec2& p1, const Vec2& p2, double sigma_lateral, double sigma_along) {
  const Vec2 d = (p2 - p1).normalized();
  Mat2 r;
  r << d.x(), -d.y(), d.y(), d.x();
  Mat2 diag = Mat2::Zero();
  diag(0, 0) = sigma_along * sigma_along;
  diag(1, 1) = sigma_lateral * sigma_lateral;
  return r * diag * r.transpose();
}

}  // namespace

Twist2 SimLog::truth_twist_at(double t) const {
  if (truth.empty()) return {};
  auto it = std::lower_bound(truth.begin(), truth.end(), t,
                             [](const TruthSample& s, double v) { return s.t < v; });
  if (it == truth.begin()) return it->twist;
  if (it == truth.end()) return truth.back().twist;
  const auto prev = std::prev(it);
  return (t - prev->t <= it->t - t) ? prev->twist : it->twist;
}

Pose2 SimLog::truth_pose_at(double t) const {
  if (truth.empty()) return {};
  auto it = std::lower_bound(truth.begin(), truth.end(), t,
                             [](const TruthSample& s, double v) { return s.t < v; });
  if (it == truth.begin()) return it->pose;
  if (it == truth.end()) return truth.back().pose;
  const auto prev = std::prev(it);
  const double f = (t - prev->t) / (it->t - prev->t);
  const Pose2 rel = relative(prev->pose, it->pose);
  const Twist2 u = twist_from_pose(rel, it->t - prev->t);
  return compose(prev->pose, integrate_twist(u, f * (it->t - prev->t)));
}

SimLog simulate_drive(const World& world, const TrajectorySpec& trajectory,
                      const std::vector<SensorModel>& sensors, const SimConfig& config,
                      std::uint64_t seed) {
  if (sensors.empty()) throw ConfigError("simulate_drive needs at least one sensor");
  SimLog log;
  log.map = world.localization_map();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const Trajectory traj(trajectory);
  const double period = 1.0 / config.radar_rate;
  const std::int64_t cycles = static_cast<std::int64_t>(std::floor(traj.duration() / period));

  const int gnss_every = std::max(1, static_cast<int>(std::llround(config.radar_rate / config.gnss_rate)));
  const int camera_every =
      std::max(1, static_cast<int>(std::llround(config.radar_rate / config.camera_rate)));
  const int lidar_every =
      std::max(1, static_cast<int>(std::llround(config.radar_rate / config.lidar_rate)));

  for (std::int64_t k = 0; k < cycles; ++k) {
    const double t_mid = (static_cast<double>(k) + 0.5) * period;
    const Pose2 pose_mid = traj.pose_at(t_mid);
    const Twist2 twist_mid = traj.twist_at(t_mid);
    log.truth.push_back({t_mid, pose_mid, twist_mid});

    for (const auto& sensor : sensors) {
      const double t_scan = static_cast<double>(k) * period + sensor.stagger;
      const Pose2 p = traj.pose_at(t_scan);
      const Twist2 u = traj.twist_at(t_scan + 1e-9);  // right-continuous at boundaries
      auto dets =
          simulate_sensor_scan(world, p, u, sensor, config, t_scan, rng, &log.detection_source);
      log.detections.insert(log.detections.end(), dets.begin(), dets.end());
    }

    if (config.emit_gnss && k % gnss_every == 0) {
      GnssFix fix;
      fix.timestamp = t_mid;
      fix.x = pose_mid.x + config.gnss_bias.x();
      fix.y = pose_mid.y + config.gnss_bias.y();
      if (config.noise) {
        fix.x += config.gnss_sigma * gauss(rng);
        fix.y += config.gnss_sigma * gauss(rng);
      }
      fix.covariance = Mat2::Identity() * (config.gnss_sigma * config.gnss_sigma + 1e-6);
      log.gnss.push_back(fix);
    }

    if (config.emit_camera && k % camera_every == 0) {
      // Lane markings seen by the front camera, labeled with their kind.
      for (const auto& l : world.landmarks.landmarks()) {
        if (l.kind != LandmarkKind::LaneMarking) continue;
        Vec2 p1, p2;
        if (!clip_segment_to_view(l, pose_mid, config.camera_max_range, 0.5 * config.camera_fov,
                                  0.5, p1, p2)) {
          continue;
        }
        if (config.noise) {
          const Vec2 d = (p2 - p1).normalized();
          const Vec2 nrm(-d.y(), d.x());
          const double lat = config.camera_sigma_lateral * gauss(rng);
          const double ang = config.camera_sigma_angle * gauss(rng);
          const Vec2 mid = 0.5 * (p1 + p2);
          const Mat2 r = rot2(ang);
          p1 = mid + r * (p1 - mid) + lat * nrm;
          p2 = mid + r * (p2 - mid) + lat * nrm;
        }
        FeatureObservation obs;
        LineFeature line;
        line.p1 = p1;
        line.p2 = p2;
        line.cov_p1 = line.cov_p2 =
            endpoint_covariance(p1, p2, std::max(config.camera_sigma_lateral, 0.01), 0.5);
        obs.shape = line;
        obs.support_count = 10;
        obs.timestamp = t_mid;
        obs.source = FeatureSource::Camera;
        obs.kind_hint = LandmarkKind::LaneMarking;
        log.external_features.push_back(obs);
      }
    }

    if (config.emit_lidar && k % lidar_every == 0) {
      for (const auto& l : world.landmarks.landmarks()) {
        if (l.kind != LandmarkKind::Pole) continue;
        const Vec2 rel = pose_mid.inverse_transform(l.p1);
        if (rel.norm() > config.lidar_max_range || rel.norm() < 0.5) continue;
        bool blocked = false;
        for (const auto& wall : world.landmarks.landmarks()) {
          if (wall.is_point()) continue;
          if (segment_blocks(pose_mid.translation(), l.p1, wall.p1, wall.p2)) {
            blocked = true;
            break;
          }
        }
        if (blocked) continue;
        FeatureObservation obs;
        PointFeature pf;
        pf.position = rel;
        if (config.noise) {
          pf.position.x() += config.lidar_sigma * gauss(rng);
          pf.position.y() += config.lidar_sigma * gauss(rng);
        }
        pf.covariance = Mat2::Identity() * (config.lidar_sigma * config.lidar_sigma + 1e-6);
        obs.shape = pf;
        obs.support_count = 25;
        obs.timestamp = t_mid;
        obs.source = FeatureSource::Lidar;
        obs.kind_hint = LandmarkKind::Pole;
        log.external_features.push_back(obs);
      }
    }
  }

  if (config.emit_wheel) {
    const double dt = 1.0 / config.wheel_rate;
    const std::int64_t ticks = static_cast<std::int64_t>(std::floor(traj.duration() / dt));
    const double var_xy = config.wheel_sigma_xy * config.wheel_sigma_xy;
    const double var_psi = config.wheel_sigma_psi * config.wheel_sigma_psi;
    for (std::int64_t n = 0; n + 1 <= ticks; ++n) {
      const double t0 = static_cast<double>(n) * dt;
      const double t1 = t0 + dt;
      Pose2 delta = relative(traj.pose_at(t0), traj.pose_at(t1));
      delta.x *= config.wheel_scale;
      delta.y *= config.wheel_scale;
      if (config.noise) {
        delta.x += config.wheel_sigma_xy * gauss(rng);
        delta.y += config.wheel_sigma_xy * gauss(rng);
        delta.psi = wrap_angle(delta.psi + config.wheel_sigma_psi * gauss(rng));
      }
      OdometryIncrement inc;
      inc.delta = delta;
      inc.t0 = t0;
      inc.t1 = t1;
      inc.covariance = Mat3::Zero();
      inc.covariance(0, 0) = var_xy + 1e-10;
      inc.covariance(1, 1) = var_xy + 1e-10;
      inc.covariance(2, 2) = var_psi + 1e-10;
      log.wheel_odometry.push_back(inc);
    }
  }

  return log;
}

std::vector<SensorModel> car_sensor_layout() {
  auto make = [](int id, double x, double y, double beta_deg, double stagger) {
    SensorModel s;
    s.id = id;
    s.calibration.mount_x = x;
    s.calibration.mount_y = y;
    s.calibration.beta = beta_deg * kPi / 180.0;
    s.stagger = stagger;
    return s;
  };
  return {
      make(1, 3.6, 0.75, 45.0, 0.000),   make(2, 3.6, -0.75, -45.0, 0.007),
      make(3, 2.2, 0.90, 90.0, 0.014),   make(4, 2.2, -0.90, -90.0, 0.021),
      make(5, -0.6, 0.75, 135.0, 0.028), make(6, -0.6, -0.75, -135.0, 0.035),
  };
}

std::vector<SensorModel> truck_sensor_layout() {
  auto make = [](int id, double x, double y, double beta_deg, double stagger) {
    SensorModel s;
    s.id = id;
    s.calibration.mount_x = x;
    s.calibration.mount_y = y;
    s.calibration.beta = beta_deg * kPi / 180.0;
    s.stagger = stagger;
    return s;
  };
  return {
      make(1, 6.0, 1.2, 40.0, 0.000),
      make(2, 6.0, -1.2, -40.0, 0.010),
      make(3, 2.0, 1.3, 90.0, 0.020),
      make(4, 2.0, -1.3, -90.0, 0.030),
  };
}

namespace {

// Pose and arc length samples along a trajectory, used to lay out worlds
// around the driven path.
struct PathFrame {
  double t{0.0};
  double s{0.0};
  Pose2 pose;
  double omega{0.0};
};

std::vector<PathFrame> sample_path(const Trajectory& traj, double dt = 0.05) {
  std::vector<PathFrame> frames;
  double s = 0.0;
  Pose2 prev = traj.pose_at(0.0);
  for (double t = 0.0; t <= traj.duration() + 1e-9; t += dt) {
    const Pose2 p = traj.pose_at(t);
    s += (p.translation() - prev.translation()).norm();
    frames.push_back({t, s, p, traj.twist_at(t).omega});
    prev = p;
  }
  return frames;
}

const PathFrame& frame_at_arclen(const std::vector<PathFrame>& frames, double s) {
  auto it = std::lower_bound(frames.begin(), frames.end(), s,
                             [](const PathFrame& f, double v) { return f.s < v; });
  if (it == frames.end()) return frames.back();
  return *it;
}

// Maximal arc-length runs where the path is straight.
std::vector<std::pair<double, double>> straight_runs(const std::vector<PathFrame>& frames,
                                                     double min_length = 20.0) {
  std::vector<std::pair<double, double>> runs;
  double start = -1.0;
  for (const auto& f : frames) {
    if (std::abs(f.omega) < 1e-9) {
      if (start < 0.0) start = f.s;
    } else if (start >= 0.0) {
      if (f.s - start >= min_length) runs.emplace_back(start, f.s);
      start = -1.0;
    }
  }
  if (start >= 0.0 && frames.back().s - start >= min_length) {
    runs.emplace_back(start, frames.back().s);
  }
  return runs;
}

Vec2 lateral_offset(const PathFrame& f, double lateral) { return f.pose.transform({0.0, lateral}); }

ScenarioPreset build_city() {
  ScenarioPreset p;
  p.name = "city";
  p.sensors = car_sensor_layout();
  p.world.clutter_rate = 2.0;

  // Counterclockwise city-block loop: four straights joined by 90-degree
  // corner turns, with speed dropped for the corners.
  TrajectoryBuilder tb(Pose2(0.0, 0.0, 0.0));
  tb.ramp_to({0.0, 10.0, 0.0}, 1.0, 0.0);
  for (int side = 0; side < 4; ++side) {
    tb.ramp_to({0.0, 10.0, 0.0}, 1.0, 7.0);
    tb.ramp_to({0.0, 6.0, 0.0}, 1.0, 0.4);
    tb.turn(kPi / 2.0, 6.0, 0.45, 0.8);
  }
  tb.ramp_to({0.0, 10.0, 0.0}, 1.0, 3.0);
  p.trajectory = tb.build();

  const Trajectory traj(p.trajectory);
  const auto frames = sample_path(traj);
  // The final leg re-traverses the first street; stop placement before it to
  // avoid near-duplicate landmarks.
  const double total = frames.back().s - 45.0;
  std::int64_t next_id = 1;

  // Street poles along the whole path, alternating sides.
  for (double s = 4.0; s < total; s += 8.0) {
    const PathFrame& f = frame_at_arclen(frames, s);
    const double side = (static_cast<std::int64_t>(s / 8.0) % 2 == 0) ? 1.0 : -1.0;
    const Vec2 pos = lateral_offset(f, side * 7.5);
    p.world.landmarks.add(Landmark::pole(next_id++, pos));
  }
  // A sparser second row of poles further out.
  for (double s = 10.0; s < total; s += 20.0) {
    const PathFrame& f = frame_at_arclen(frames, s);
    p.world.landmarks.add(Landmark::pole(next_id++, lateral_offset(f, 16.0)));
    p.world.landmarks.add(Landmark::pole(next_id++, lateral_offset(f, -16.0)));
  }

  // Building fronts, curbs and lane markings on the straights.
  for (auto [s0, s1] : straight_runs(frames)) {
    s1 = std::min(s1, total);
    if (s1 - s0 < 20.0) continue;
    for (double s = s0 + 2.0; s + 18.0 <= s1 - 2.0; s += 24.0) {
      for (double lat : {10.0, -10.0}) {
        const Vec2 a = lateral_offset(frame_at_arclen(frames, s), lat);
        const Vec2 b = lateral_offset(frame_at_arclen(frames, s + 18.0), lat);
        p.world.landmarks.add(Landmark::segment(next_id++, LandmarkKind::Plane, a, b));
      }
    }
    for (double s = s0 + 2.0; s + 30.0 <= s1 - 2.0; s += 34.0) {
      const Vec2 a = lateral_offset(frame_at_arclen(frames, s), -3.5);
      const Vec2 b = lateral_offset(frame_at_arclen(frames, s + 30.0), -3.5);
      p.world.landmarks.add(Landmark::segment(next_id++, LandmarkKind::Curb, a, b));
      const Vec2 m0 = lateral_offset(frame_at_arclen(frames, s), 1.75);
      const Vec2 m1 = lateral_offset(frame_at_arclen(frames, s + 30.0), 1.75);
      p.world.landmarks.add(Landmark::segment(next_id++, LandmarkKind::LaneMarking, m0, m1));
    }
  }

  // Opposing traffic: cars passing on the left lane at scripted times, timed
  // against the ego's own progress along the path.
  for (double t_meet : {6.0, 18.0, 33.0, 48.0}) {
    const Pose2 ego = traj.pose_at(t_meet);
    const Pose2 spawn = compose(ego, Pose2(60.0, 3.5, kPi));
    MovingObject car;
    car.start = spawn;
    car.twist = {0.0, 8.0, 0.0};
    car.length = 4.5;
    car.width = 1.9;
    car.t_start = t_meet - 4.0;
    car.t_end = t_meet + 8.0;
    p.world.moving_objects.push_back(car);
  }
  return p;
}

ScenarioPreset build_terminal() {
  ScenarioPreset p;
  p.name = "terminal";
  p.sensors = truck_sensor_layout();
  p.world.clutter_rate = 2.0;

  // Out along the container lane, U-turn at the far end, straight back.
  TrajectoryBuilder tb(Pose2(0.0, 0.0, 0.0));
  tb.ramp_to({0.0, 6.0, 0.0}, 1.0, 300.0 / 6.0 - 1.0);
  tb.ramp_to({0.0, 4.0, 0.0}, 1.0, 0.4);
  tb.turn(kPi, 4.0, 0.45, 0.8);
  tb.ramp_to({0.0, 6.0, 0.0}, 1.0, 260.0 / 6.0);
  p.trajectory = tb.build();

  const Trajectory traj(p.trajectory);
  const auto frames = sample_path(traj);
  std::int64_t next_id = 1;
  const auto runs = straight_runs(frames);

  // Container rows line the straights; every third section exists in the
  // world but is withheld from the localization map (parked containers).
  int section = 0;
  for (const auto& [s0, s1] : runs) {
    for (double s = s0 + 4.0; s + 12.2 <= s1 - 2.0; s += 26.0) {
      for (double lat : {10.0, -10.0}) {
        const Vec2 a = lateral_offset(frame_at_arclen(frames, s), lat);
        const Vec2 b = lateral_offset(frame_at_arclen(frames, s + 12.2), lat);
        const std::int64_t id = next_id++;
        p.world.landmarks.add(Landmark::segment(id, LandmarkKind::Plane, a, b));
        if (section % 3 == 2) p.world.unmapped_ids.push_back(id);
        ++section;
      }
    }
    for (double s = s0 + 10.0; s < s1 - 6.0; s += 36.0) {
      p.world.landmarks.add(
          Landmark::pole(next_id++, lateral_offset(frame_at_arclen(frames, s), -14.0)));
    }
  }
  // Guardrail along the second (return) straight.
  if (runs.size() >= 2) {
    const auto& [r0, r1] = runs.back();
    const Vec2 a = lateral_offset(frame_at_arclen(frames, r0 + 6.0), -8.0);
    const Vec2 b = lateral_offset(frame_at_arclen(frames, r1 - 6.0), -8.0);
    p.world.landmarks.add(Landmark::segment(next_id++, LandmarkKind::Guardrail, a, b));
  }
  // Warehouse wall past the U-turn.
  {
    const PathFrame& f = frame_at_arclen(frames, runs.front().second);
    const Vec2 a = f.pose.transform({35.0, -25.0});
    const Vec2 b = f.pose.transform({35.0, 30.0});
    p.world.landmarks.add(Landmark::segment(next_id++, LandmarkKind::Plane, a, b));
  }

  // Tractor-trailer crossing directly in front of the truck early in the
  // drive; for several seconds most reflections are non-static.
  {
    const double t_meet = 16.0;
    const Pose2 ego = traj.pose_at(t_meet);
    MovingObject crossing;
    crossing.start = compose(ego, Pose2(18.0, -24.0, kPi / 2.0));
    crossing.twist = {0.0, 4.0, 0.0};
    crossing.length = 16.0;
    crossing.width = 2.6;
    crossing.t_start = t_meet - 6.0;
    crossing.t_end = t_meet + 6.0;
    p.world.moving_objects.push_back(crossing);
  }
  return p;
}

ScenarioPreset build_figure_eight() {
  ScenarioPreset p;
  p.name = "figure-eight-calib";
  p.sensors = car_sensor_layout();
  p.world.clutter_rate = 1.0;
  std::int64_t next_id = 1;

  for (int i = 0; i < 28; ++i) {
    const double a = 2.0 * kPi * i / 28.0;
    p.world.landmarks.add(Landmark::pole(next_id++, {55.0 * std::cos(a), 55.0 * std::sin(a)}));
  }
  for (int i = 0; i < 14; ++i) {
    const double a = 2.0 * kPi * i / 14.0;
    p.world.landmarks.add(
        Landmark::pole(next_id++, {26.0 * std::cos(a), -40.0 + 26.0 * std::sin(a)}));
  }
  p.world.landmarks.add(
      Landmark::segment(next_id++, LandmarkKind::Plane, {-70.0, -30.0}, {-70.0, 30.0}));
  p.world.landmarks.add(
      Landmark::segment(next_id++, LandmarkKind::Plane, {-30.0, 70.0}, {30.0, 70.0}));

  const double v = 7.0;
  TrajectoryBuilder tb(Pose2(0.0, -20.0, 0.0));
  tb.ramp_to({0.0, v, 0.0}, 1.0, 0.5);
  for (int loop = 0; loop < 2; ++loop) {
    tb.turn(2.0 * kPi, v, 0.35, 1.0);
    tb.hold(0.5);
    tb.turn(-2.0 * kPi, v, 0.35, 1.0);
    tb.hold(0.5);
  }
  p.trajectory = tb.build();
  return p;
}

}  // namespace

std::vector<std::string> scenario_preset_names() {
  return {"city", "terminal", "figure-eight-calib"};
}

ScenarioPreset scenario_preset(const std::string& name) {
  if (name == "city") return build_city();
  if (name == "terminal") return build_terminal();
  if (name == "figure-eight-calib") return build_figure_eight();
  std::string msg = "unknown scenario '" + name + "'; available:";
  for (const auto& n : scenario_preset_names()) msg += " " + n;
  throw ConfigError(msg);
}

}  // namespace radarloc
