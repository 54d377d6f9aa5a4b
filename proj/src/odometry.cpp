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

#include "radarloc/odometry.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include "radarloc/calibration.hpp"

namespace radarloc {

namespace {

constexpr double kSigmaFloor = 1e-6;

// Design row of Eq. (omega, vx, vy) -> Doppler for a sensor mounted at
// (x, y): [x sin(theta) - y cos(theta), cos(theta), sin(theta)].
Vec3 design_row(double theta, double mount_x, double mount_y) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {mount_x * s - mount_y * c, c, s};
}

// Derivative of the design row with respect to the azimuth.
Vec3 design_row_dtheta(double theta, double mount_x, double mount_y) {
  const double c = std::cos(theta), s = std::sin(theta);
  return {mount_x * c + mount_y * s, -s, c};
}

}  // namespace

Twist2 TwistTrend::at(double t) const {
  const double dt = std::clamp(t - t_ref, -horizon, horizon);
  const Vec3 u = value + slope * dt;
  return {u[0], u[1], u[2]};
}

double TwistTrend::heading_change(double t0, double t1) const {
  const double a0 = t0 - t_ref, a1 = t1 - t_ref;
  return value[0] * (t1 - t0) + 0.5 * slope[0] * (a1 * a1 - a0 * a0);
}

TwistTrend TwistTrend::constant(const Twist2& u, double t_ref) {
  TwistTrend t;
  t.value = u.as_vector();
  t.t_ref = t_ref;
  return t;
}

void EgoMotionHistory::push(const EgoMotion& m) {
  if (!buf_.empty() && m.timestamp <= buf_.back().timestamp) {
    throw ConfigError("ego-motion history timestamps must be strictly increasing");
  }
  buf_.push_back(m);
  while (buf_.size() > capacity_) buf_.pop_front();
}

TwistTrend EgoMotionHistory::trend() const {
  TwistTrend t;
  if (buf_.empty()) return t;
  t.t_ref = buf_.back().timestamp;
  if (buf_.size() < 3) {
    const EgoMotion& m = buf_.back();
    t.value = Vec3(m.omega, m.vx, m.vy);
    return t;
  }
  const std::size_t n = buf_.size();
  double sx = 0.0, sxx = 0.0;
  for (const auto& m : buf_) {
    const double x = m.timestamp - t.t_ref;
    sx += x;
    sxx += x * x;
  }
  const double denom = static_cast<double>(n) * sxx - sx * sx;
  for (int c = 0; c < 3; ++c) {
    double sy = 0.0, sxy = 0.0;
    for (const auto& m : buf_) {
      const double x = m.timestamp - t.t_ref;
      const double y = (c == 0) ? m.omega : (c == 1 ? m.vx : m.vy);
      sy += y;
      sxy += x * y;
    }
    const double slope = (static_cast<double>(n) * sxy - sx * sy) / denom;
    t.slope[c] = slope;
    t.value[c] = (sy - slope * sx) / static_cast<double>(n);
  }
  return t;
}

DopplerEquationSystem build_doppler_system(const std::vector<RadarDetection>& detections,
                                           const CalibrationTable& calib, const TwistTrend& rates,
                                           double reference_time) {
  DopplerEquationSystem sys;
  sys.reference_timestamp = reference_time;
  sys.rows.reserve(detections.size());
  const Twist2 u_ref = rates.at(reference_time);
  const Vec3 u_ref_v = u_ref.as_vector();
  for (const auto& det : detections) {
    auto it = calib.find(det.sensor_id);
    if (it == calib.end()) {
      throw ConfigError("no calibration for sensor " + std::to_string(det.sensor_id));
    }
    const SensorCalibration& c = it->second;
    const double theta_raw = c.beta + c.alpha_azimuth * det.azimuth_sensor;
    // Eq. time sync: rotate the row into the reference-time vehicle frame and
    // subtract the Doppler shift predicted by the rate model.
    const double dpsi = rates.heading_change(reference_time, det.timestamp);
    const double theta_sync = theta_raw + dpsi;
    const Vec3 a_raw = design_row(theta_raw, c.mount_x, c.mount_y);
    const Vec3 a_sync = design_row(theta_sync, c.mount_x, c.mount_y);
    const Vec3 u_det = rates.at(det.timestamp).as_vector();
    const double dv = a_raw.dot(u_det) - a_sync.dot(u_ref_v);

    DopplerRow row;
    row.sensor_id = det.sensor_id;
    row.corrected_doppler = c.alpha_doppler * det.doppler - dv;
    row.vehicle_azimuth = theta_sync;
    row.design_row = a_sync;
    row.design_row_dtheta = design_row_dtheta(theta_sync, c.mount_x, c.mount_y);
    row.sigma_doppler = std::max(c.alpha_doppler * c.sigma_doppler, kSigmaFloor);
    row.sigma_azimuth = c.alpha_azimuth * c.sigma_azimuth;
    row.raw_azimuth = det.azimuth_sensor;
    row.raw_doppler = det.doppler;
    row.timestamp = det.timestamp;
    sys.rows.push_back(row);
  }
  return sys;
}

DopplerEquationSystem build_doppler_system(const std::vector<RadarDetection>& detections,
                                           const CalibrationTable& calib,
                                           const EgoMotionHistory& history,
                                           double reference_time) {
  return build_doppler_system(detections, calib, history.trend(), reference_time);
}

DopplerEquationSystem gate_by_vehicle_model(const DopplerEquationSystem& system,
                                            const EgoMotionHistory& history,
                                            const GateLimits& limits) {
  if (history.empty()) return system;
  // Reachability from the most recent result; a fitted trend would lag real
  // acceleration changes and reject good rows.
  const EgoMotion& last = *history.latest();
  const Vec3 u_pred = last.twist().as_vector();
  const double age = std::abs(system.reference_timestamp - last.timestamp);

  DopplerEquationSystem out;
  out.reference_timestamp = system.reference_timestamp;
  out.rows.reserve(system.rows.size());
  for (const auto& row : system.rows) {
    const double predicted = row.design_row.dot(u_pred);
    const Vec3& a = row.design_row;
    const double reachable = (std::abs(a[1]) + std::abs(a[2])) * limits.max_accel * age +
                             std::abs(a[0]) * limits.max_yaw_accel * age;
    const double bound = reachable + 3.0 * row.sigma_doppler + limits.margin;
    if (std::abs(row.corrected_doppler - predicted) <= bound) out.rows.push_back(row);
  }
  return out;
}

double msac_threshold(double sigma_doppler, double sigma_azimuth, double speed, double k,
                      double floor) {
  const double var = sigma_doppler * sigma_doppler +
                     (speed * sigma_azimuth) * (speed * sigma_azimuth);
  return std::max(k * std::sqrt(var), floor);
}

MsacResult msac_filter_static(const DopplerEquationSystem& system, const MsacConfig& config) {
  const std::size_t n = system.rows.size();
  if (n < 2) throw InsufficientDataError("MSAC needs at least 2 rows");

  // 2-parameter working system: subtract the vy prior from every row.
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    d[i] = system.rows[i].corrected_doppler - system.rows[i].design_row[2] * config.vy_prior;
  }

  const double thr = config.threshold;
  const double thr2 = thr * thr;
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);

  double best_cost = std::numeric_limits<double>::infinity();
  std::size_t best_count = 0;
  double best_omega = 0.0, best_vx = 0.0;
  bool have_model = false;

  double needed = static_cast<double>(config.max_iterations);
  for (int iter = 0; iter < config.max_iterations && iter < needed; ++iter) {
    const std::size_t i = pick(rng);
    const std::size_t j = pick(rng);
    if (i == j) continue;
    const Vec3& ai = system.rows[i].design_row;
    const Vec3& aj = system.rows[j].design_row;
    const double det = ai[0] * aj[1] - ai[1] * aj[0];
    if (std::abs(det) < 1e-9 * (ai.head<2>().norm() * aj.head<2>().norm() + 1e-12)) continue;
    const double omega = (d[i] * aj[1] - d[j] * ai[1]) / det;
    const double vx = (ai[0] * d[j] - aj[0] * d[i]) / det;

    double cost = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
      const Vec3& a = system.rows[r].design_row;
      const double res = d[r] - (a[0] * omega + a[1] * vx);
      const double res2 = res * res;
      if (res2 <= thr2) {
        cost += res2;
        ++count;
      } else {
        cost += thr2;
      }
    }
    if (!have_model || cost < best_cost ||
        (cost == best_cost && count > best_count)) {
      have_model = true;
      best_cost = cost;
      best_count = count;
      best_omega = omega;
      best_vx = vx;
      const double w = std::max(static_cast<double>(count) / static_cast<double>(n), 0.05);
      needed = std::log(1.0 - 0.99) / std::log(1.0 - std::min(w * w, 0.999));
    }
  }
  if (!have_model) throw InsufficientDataError("MSAC found no non-degenerate sample");

  MsacResult result;
  result.inliers.reference_timestamp = system.reference_timestamp;
  for (std::size_t r = 0; r < n; ++r) {
    const Vec3& a = system.rows[r].design_row;
    const double res = d[r] - (a[0] * best_omega + a[1] * best_vx);
    if (res * res <= thr2) result.inliers.rows.push_back(system.rows[r]);
  }
  result.inlier_fraction =
      static_cast<double>(result.inliers.rows.size()) / static_cast<double>(n);
  return result;
}

namespace {

struct Mounts {
  double x{0.0};
  double y{0.0};
};

EgoMotion finish_motion(const Vec3& u, const Mat3& cov, double t) {
  EgoMotion m;
  m.omega = u[0];
  m.vx = u[1];
  m.vy = u[2];
  m.timestamp = t;
  m.covariance = cov;
  return m;
}

}  // namespace

EgoMotion solve_ego_motion(const DopplerEquationSystem& inliers, const SolveConfig& config) {
  const std::size_t n = inliers.rows.size();
  if (n == 0) throw InsufficientDataError("empty Doppler system");

  Eigen::MatrixXd A(n, 3);
  Eigen::VectorXd d(n);
  for (std::size_t i = 0; i < n; ++i) {
    A.row(i) = inliers.rows[i].design_row.transpose();
    d[i] = inliers.rows[i].corrected_doppler;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
  const double smax = svd.singularValues()[0];
  const bool full_rank = n >= 3 && smax > 0.0 &&
                         svd.singularValues()[2] > config.rank_rel_threshold * smax;

  if (!full_rank) {
    // 2-DOF fallback: vy pinned to the prior, reduced observability flagged
    // through a large vy variance.
    Mat2 N = Mat2::Zero();
    Vec2 rhs = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = inliers.rows[i];
      const Vec2 a2(row.design_row[0], row.design_row[1]);
      const double w = 1.0 / (row.sigma_doppler * row.sigma_doppler);
      const double di = row.corrected_doppler - row.design_row[2] * config.vy_prior;
      N += w * a2 * a2.transpose();
      rhs += w * a2 * di;
    }
    Eigen::SelfAdjointEigenSolver<Mat2> es(N);
    if (es.eigenvalues()[0] <= 1e-12 * std::max(es.eigenvalues()[1], 1.0)) {
      throw InsufficientDataError("degenerate Doppler geometry, cannot solve (omega, vx)");
    }
    const Vec2 u2 = N.ldlt().solve(rhs);
    const Mat2 cov2 = N.inverse();
    Mat3 cov = Mat3::Zero();
    cov.topLeftCorner<2, 2>() = cov2;
    cov(2, 2) = config.fallback_vy_variance;
    return finish_motion({u2[0], u2[1], config.vy_prior}, cov, inliers.reference_timestamp);
  }

  // Initial guess: plain weighted least squares.
  Mat3 N0 = Mat3::Zero();
  Vec3 rhs0 = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& row = inliers.rows[i];
    const double w = 1.0 / (row.sigma_doppler * row.sigma_doppler);
    N0 += w * row.design_row * row.design_row.transpose();
    rhs0 += w * row.design_row * d[i];
  }
  Vec3 u = N0.ldlt().solve(rhs0);
  Mat3 information = N0;

  const int iterations = (config.mode == SolveMode::OdrC) ? config.max_iterations : 1;
  for (int it = 0; it < iterations; ++it) {
    Mat3 n_plain = Mat3::Zero();
    Mat3 n_corr = Mat3::Zero();
    Vec3 rhs = Vec3::Zero();
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = inliers.rows[i];
      const double sa = row.sigma_azimuth;
      const Vec3 a = row.design_row;
      // Orthogonal-distance weight: both Doppler and azimuth noise enter the
      // row residual, the latter scaled by the residual's azimuth slope.
      const Vec3 aprime = row.design_row_dtheta;
      const double g = aprime.dot(u);
      const double var = row.sigma_doppler * row.sigma_doppler + g * g * sa * sa;
      const double w = 1.0 / std::max(var, kSigmaFloor * kSigmaFloor);

      n_plain += w * a * a.transpose();
      if (config.mode == SolveMode::OdrC && sa > 0.0) {
        // Errors-in-variables bias compensation. With azimuth noise delta,
        // a(theta+delta) = a cos(delta) + a' sin(delta), so
        //   E[a~ a~^T] = c1 a a^T + c2 a' a'^T,   E[a~' a~'^T] = c2 a a^T + c1 a' a'^T,
        //   E[a~ d]    = c0 a a^T u,
        // which gives an unbiased estimate of a a^T and a matching rhs.
        const double s2 = sa * sa;
        const double c0 = std::exp(-0.5 * s2);
        const double c2 = 0.5 * (1.0 - std::exp(-2.0 * s2));
        const double c1 = 1.0 - c2;
        const double denom = c1 * c1 - c2 * c2;
        n_corr += (w / denom) * (c1 * a * a.transpose() - c2 * aprime * aprime.transpose());
        rhs += (w / c0) * a * d[i];
      } else {
        n_corr += w * a * a.transpose();
        rhs += w * a * d[i];
      }
    }
    Mat3 n_use = n_corr;
    Eigen::SelfAdjointEigenSolver<Mat3> es(n_corr);
    if (es.eigenvalues()[0] <= 1e-12 * std::max(std::abs(es.eigenvalues()[2]), 1.0)) {
      n_use = n_plain;  // corrected normal matrix lost definiteness; fall back
    }
    const Vec3 u_new = n_use.ldlt().solve(rhs);
    information = n_plain;
    const double step = (u_new - u).cwiseAbs().maxCoeff();
    u = u_new;
    if (step < config.tolerance) break;
  }

  return finish_motion(u, information.inverse(), inliers.reference_timestamp);
}

EgoMotion guard_and_extrapolate(const EgoMotion& candidate, const EgoMotionHistory& history,
                                const GuardLimits& limits) {
  if (history.empty()) return candidate;
  // Outlier test: is the candidate reachable from the last result under the
  // acceleration limits? The regression only provides the replacement.
  const EgoMotion& last = *history.latest();
  const Twist2 pred = last.twist();
  const double dt = std::abs(candidate.timestamp - last.timestamp);

  const double sd_omega = std::sqrt(std::max(candidate.covariance(0, 0), 0.0));
  const double sd_vx = std::sqrt(std::max(candidate.covariance(1, 1), 0.0));
  const double sd_vy = std::sqrt(std::max(candidate.covariance(2, 2), 0.0));

  const double bound_omega = limits.max_yaw_accel * dt + limits.margin_omega + 3.0 * sd_omega;
  const double bound_vx = limits.max_accel * dt + limits.margin_v + 3.0 * sd_vx;
  const double bound_vy = limits.max_accel * dt + limits.margin_v + 3.0 * sd_vy;

  const bool plausible = std::abs(candidate.omega - pred.omega) <= bound_omega &&
                         std::abs(candidate.vx - pred.vx) <= bound_vx &&
                         std::abs(candidate.vy - pred.vy) <= bound_vy;
  if (plausible) return candidate;

  const Twist2 best_guess = history.trend().at(candidate.timestamp);
  EgoMotion out;
  out.omega = best_guess.omega;
  out.vx = best_guess.vx;
  out.vy = best_guess.vy;
  out.timestamp = candidate.timestamp;
  out.covariance = candidate.covariance * limits.covariance_inflation;
  out.degraded = true;
  return out;
}

RadarOdometryEstimator::RadarOdometryEstimator(CalibrationTable calib, OdometryConfig config)
    : calib_(std::move(calib)),
      config_(config),
      history_(config.history_length),
      calibration_estimate_(std::make_unique<CalibrationEstimate>()) {}

RadarOdometryEstimator::~RadarOdometryEstimator() = default;

void RadarOdometryEstimator::set_calibration_reference(std::function<Twist2(double)> lookup) {
  calibration_reference_ = std::move(lookup);
}

CalibrationEstimate& RadarOdometryEstimator::calibration_estimate() {
  return *calibration_estimate_;
}

std::vector<EgoMotion> RadarOdometryEstimator::push(const RadarDetection& det) {
  std::vector<EgoMotion> out;
  // Nudge against float dust so boundary timestamps land in their own cycle.
  const std::int64_t w =
      static_cast<std::int64_t>(std::floor(det.timestamp / config_.cycle_period + 1e-6));
  if (window_index_ < 0) window_index_ = w;
  while (w > window_index_) {
    const double t_mid = (static_cast<double>(window_index_) + 0.5) * config_.cycle_period;
    out.push_back(process_cycle(batch_, t_mid));
    batch_.clear();
    ++window_index_;
  }
  batch_.push_back(det);
  return out;
}

std::vector<EgoMotion> RadarOdometryEstimator::finish() {
  std::vector<EgoMotion> out;
  if (window_index_ >= 0 && !batch_.empty()) {
    const double t_mid = (static_cast<double>(window_index_) + 0.5) * config_.cycle_period;
    out.push_back(process_cycle(batch_, t_mid));
    batch_.clear();
  }
  window_index_ = -1;
  return out;
}

EgoMotion RadarOdometryEstimator::degraded_output(double reference_time) const {
  EgoMotion m;
  m.timestamp = reference_time;
  m.degraded = true;
  if (history_.empty()) {
    m.covariance = Mat3::Identity() * config_.degraded_variance;
    return m;
  }
  const Twist2 u = history_.trend().at(reference_time);
  m.omega = u.omega;
  m.vx = u.vx;
  m.vy = u.vy;
  m.covariance =
      history_.latest()->covariance * config_.guard.covariance_inflation +
      Mat3::Identity() * 1e-6;
  return m;
}

EgoMotion RadarOdometryEstimator::process_cycle(const std::vector<RadarDetection>& batch,
                                                double reference_time) {
  debug_ = CycleDebug{};
  const TwistTrend history_trend = history_.trend();
  Twist2 u = history_trend.at(reference_time);
  const double vy_prior = u.vy;

  bool solved = false;
  EgoMotion candidate;
  DopplerEquationSystem inliers;

  for (int pass = 0; pass <= config_.resync_iterations; ++pass) {
    const TwistTrend rates =
        (pass == 0) ? history_trend : TwistTrend::constant(u, reference_time);
    DopplerEquationSystem sys = build_doppler_system(batch, calib_, rates, reference_time);
    debug_.raw_rows = sys.row_count();
    sys = gate_by_vehicle_model(sys, history_, config_.gate);
    debug_.gated_rows = sys.row_count();
    if (sys.row_count() < 2) break;

    double sv = 0.0, sa = 0.0;
    for (const auto& [id, c] : calib_) {
      sv += c.sigma_doppler;
      sa += c.sigma_azimuth;
    }
    sv /= static_cast<double>(calib_.size());
    sa /= static_cast<double>(calib_.size());
    const double speed = std::hypot(u.vx, u.vy);

    const double d_msac =
        msac_threshold(sv, sa, speed, config_.msac_k, config_.msac_threshold_floor);

    MsacResult msac;
    if (pass == 0) {
      MsacConfig mcfg = config_.msac;
      mcfg.threshold = d_msac;
      mcfg.vy_prior = vy_prior;
      mcfg.seed = config_.msac.seed ^ static_cast<std::uint64_t>(
                                          std::llround(reference_time * 1e6));
      try {
        msac = msac_filter_static(sys, mcfg);
      } catch (const InsufficientDataError&) {
        break;
      }
      debug_.inlier_rows = msac.inliers.row_count();
      debug_.inlier_fraction = msac.inlier_fraction;
    } else {
      // Later passes re-trim around the refined full-state solution with a
      // wide 3 d_MSAC cut: gross outliers stay out, but the near-symmetric
      // truncation no longer pulls the refit the way the minimal-sample
      // consensus does.
      msac.inliers.reference_timestamp = sys.reference_timestamp;
      const Vec3 u_vec = Vec3(u.omega, u.vx, u.vy);
      for (const auto& row : sys.rows) {
        const double res = row.corrected_doppler - row.design_row.dot(u_vec);
        if (std::abs(res) <= 3.0 * d_msac) msac.inliers.rows.push_back(row);
      }
    }
    if (msac.inliers.row_count() < static_cast<std::size_t>(config_.min_rows)) break;

    SolveConfig scfg = config_.solve;
    scfg.vy_prior = vy_prior;
    EgoMotion m;
    try {
      m = solve_ego_motion(msac.inliers, scfg);
    } catch (const InsufficientDataError&) {
      break;
    }
    solved = true;
    candidate = m;
    inliers = std::move(msac.inliers);
    const Twist2 u_new = m.twist();
    const double step = std::max({std::abs(u_new.omega - u.omega), std::abs(u_new.vx - u.vx),
                                  std::abs(u_new.vy - u.vy)});
    u = u_new;
    if (step < config_.resync_tolerance) break;
  }

  EgoMotion out;
  if (solved) {
    out = guard_and_extrapolate(candidate, history_, config_.guard);
    debug_.guard_triggered = out.degraded && !candidate.degraded;
  } else {
    out = degraded_output(reference_time);
  }
  history_.push(out);
  if (config_.collect_calibration && solved && !out.degraded) {
    collect_calibration_samples(inliers, out);
  }
  return out;
}

void RadarOdometryEstimator::collect_calibration_samples(const DopplerEquationSystem& inliers,
                                                         const EgoMotion& motion) {
  std::map<int, std::vector<RadarDetection>> by_sensor;
  for (const auto& row : inliers.rows) {
    RadarDetection det;
    det.sensor_id = row.sensor_id;
    det.azimuth_sensor = row.raw_azimuth;
    det.doppler = row.raw_doppler;
    det.timestamp = row.timestamp;
    by_sensor[row.sensor_id].push_back(det);
  }
  EgoMotion reference = motion;
  if (calibration_reference_) {
    const Twist2 u = calibration_reference_(motion.timestamp);
    reference.omega = u.omega;
    reference.vx = u.vx;
    reference.vy = u.vy;
  }
  for (const auto& [sensor_id, dets] : by_sensor) {
    if (dets.size() < config_.calibration_min_inliers) continue;
    try {
      const CalibrationSample sample =
          estimate_calibration_cycle(dets, reference, calib_.at(sensor_id), {});
      calibration_estimate_->add_sample(sensor_id, sample);
    } catch (const InsufficientDataError&) {
      continue;
    }
  }
}

}  // namespace radarloc
