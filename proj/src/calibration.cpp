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

#include "radarloc/calibration.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

namespace radarloc {

namespace {

struct CalibRow {
  double theta_s{0.0};  // measured sensor azimuth
  double doppler{0.0};  // measured Doppler
  Vec3 u{Vec3::Zero()}; // reference twist at the row's timestamp
};

// Parameters packed as (beta, x, y, alpha_v, alpha_theta); x and y are held
// fixed when estimate_positions is false.
struct FitResult {
  Eigen::VectorXd params;
  Eigen::VectorXd std_errors;
  std::size_t rows_used{0};
  double residual_rms{0.0};
};

double residual(const CalibRow& row, const Eigen::VectorXd& p) {
  const double theta = p[0] + p[4] * row.theta_s;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 a(p[1] * s - p[2] * c, c, s);
  return p[3] * row.doppler - a.dot(row.u);
}

void jacobian_row(const CalibRow& row, const Eigen::VectorXd& p, bool estimate_positions,
                  Eigen::Ref<Eigen::RowVectorXd> out) {
  const double theta = p[0] + p[4] * row.theta_s;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec3 aprime(p[1] * c + p[2] * s, -s, c);
  const double dtheta = -aprime.dot(row.u);
  if (estimate_positions) {
    out[0] = dtheta;                 // beta
    out[1] = -s * row.u[0];          // x
    out[2] = c * row.u[0];           // y
    out[3] = row.doppler;            // alpha_v
    out[4] = dtheta * row.theta_s;   // alpha_theta
  } else {
    out[0] = dtheta;
    out[1] = row.doppler;
    out[2] = dtheta * row.theta_s;
  }
}

Eigen::VectorXd pack(const Eigen::VectorXd& full, bool estimate_positions) {
  if (estimate_positions) return full;
  Eigen::VectorXd p(3);
  p << full[0], full[3], full[4];
  return p;
}

void unpack(const Eigen::VectorXd& reduced, bool estimate_positions, Eigen::VectorXd& full) {
  if (estimate_positions) {
    full = reduced;
  } else {
    full[0] = reduced[0];
    full[3] = reduced[1];
    full[4] = reduced[2];
  }
}

double robust_scale(const std::vector<double>& abs_res) {
  std::vector<double> v = abs_res;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  return 1.4826 * std::max(v[mid], 1e-12);
}

FitResult fit_sensor(std::vector<CalibRow> rows, const SensorCalibration& init,
                     bool estimate_positions, int max_iterations, double tolerance,
                     double outlier_nsigma, int trim_rounds) {
  Eigen::VectorXd full(5);
  full << init.beta, init.mount_x, init.mount_y, init.alpha_doppler, init.alpha_azimuth;

  const int k = estimate_positions ? 5 : 3;
  Eigen::MatrixXd jtj(k, k);
  FitResult result;

  // Clutter and leftover moving targets dominate a raw drive log; cut them
  // against the initial calibration on a MAD scale before the first fit.
  {
    std::vector<double> abs_res(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) abs_res[i] = std::abs(residual(rows[i], full));
    const double cut = std::max(outlier_nsigma * robust_scale(abs_res), 1.0);
    std::vector<CalibRow> kept;
    kept.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (abs_res[i] <= cut) kept.push_back(rows[i]);
    }
    rows = std::move(kept);
  }

  for (int round = 0; round <= trim_rounds; ++round) {
    const std::size_t n = rows.size();
    if (n < static_cast<std::size_t>(k)) {
      throw InsufficientDataError("too few static detections for calibration fit");
    }
    // Huber scale for this round.
    std::vector<double> abs_res(n);
    for (std::size_t i = 0; i < n; ++i) abs_res[i] = std::abs(residual(rows[i], full));
    const double delta = 2.5 * robust_scale(abs_res);

    auto robust_cost = [&](const Eigen::VectorXd& params) {
      double cost = 0.0;
      for (const auto& row : rows) {
        const double a = std::abs(residual(row, params));
        cost += a <= delta ? a * a : 2.0 * delta * a - delta * delta;
      }
      return cost;
    };

    double lambda = 1e-9;
    double cost = robust_cost(full);
    for (int it = 0; it < max_iterations; ++it) {
      jtj.setZero();
      Eigen::VectorXd jtr = Eigen::VectorXd::Zero(k);
      Eigen::RowVectorXd jrow(k);
      for (const auto& row : rows) {
        const double r = residual(row, full);
        const double w = std::abs(r) <= delta ? 1.0 : delta / std::abs(r);
        jacobian_row(row, full, estimate_positions, jrow);
        jtj.noalias() += w * jrow.transpose() * jrow;
        jtr.noalias() += w * jrow.transpose() * r;
      }
      Eigen::MatrixXd damped = jtj;
      damped.diagonal() *= (1.0 + lambda);
      const Eigen::VectorXd step = damped.ldlt().solve(-jtr);
      Eigen::VectorXd trial_full = full;
      const Eigen::VectorXd reduced = pack(full, estimate_positions) + step;
      unpack(reduced, estimate_positions, trial_full);
      const double trial_cost = robust_cost(trial_full);
      if (trial_cost <= cost) {
        full = trial_full;
        const double improvement = cost - trial_cost;
        cost = trial_cost;
        lambda = std::max(lambda * 0.3, 1e-12);
        if (improvement <= tolerance * (1.0 + cost) && step.cwiseAbs().maxCoeff() < 1e-9) break;
      } else {
        lambda *= 10.0;
        if (lambda > 1e8) break;
      }
    }

    // Trim on the refined fit and run the next round clean.
    if (round == trim_rounds) break;
    for (std::size_t i = 0; i < n; ++i) abs_res[i] = std::abs(residual(rows[i], full));
    const double cut = outlier_nsigma * robust_scale(abs_res);
    std::vector<CalibRow> kept;
    kept.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (abs_res[i] <= cut) kept.push_back(rows[i]);
    }
    if (kept.size() == rows.size()) break;
    rows = std::move(kept);
  }

  // Standard errors from the final linearization.
  const std::size_t n = rows.size();
  jtj.setZero();
  Eigen::RowVectorXd jrow(k);
  double ss = 0.0;
  for (const auto& row : rows) {
    const double r = residual(row, full);
    jacobian_row(row, full, estimate_positions, jrow);
    jtj.noalias() += jrow.transpose() * jrow;
    ss += r * r;
  }
  const double dof = std::max<double>(1.0, static_cast<double>(n) - k);
  const double s2 = ss / dof;
  Eigen::MatrixXd cov = s2 * jtj.inverse();

  result.params = full;
  result.rows_used = n;
  result.residual_rms = std::sqrt(ss / static_cast<double>(n));
  result.std_errors = Eigen::VectorXd::Zero(5);
  Eigen::VectorXd se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (estimate_positions) {
    result.std_errors = se;
  } else {
    result.std_errors[0] = se[0];
    result.std_errors[3] = se[1];
    result.std_errors[4] = se[2];
  }
  return result;
}

}  // namespace

CalibrationSample estimate_calibration_cycle(const std::vector<RadarDetection>& detections,
                                             const EgoMotion& reference_motion,
                                             const SensorCalibration& current,
                                             const CalibCycleConfig& config) {
  if (reference_motion.degraded) {
    throw InsufficientDataError("calibration cycle needs a non-degraded reference motion");
  }
  if (detections.size() < 10) {
    throw InsufficientDataError("calibration cycle needs at least 10 static detections");
  }
  const bool estimate_positions = std::abs(reference_motion.omega) >= config.min_yaw_rate;

  const Vec3 u(reference_motion.omega, reference_motion.vx, reference_motion.vy);
  std::vector<CalibRow> rows;
  rows.reserve(detections.size());
  for (const auto& det : detections) {
    rows.push_back({det.azimuth_sensor, det.doppler, u});
  }

  // A single cycle of circular motion is exactly fit by the degenerate
  // "mount at the rotation center, alpha_v = 0" solution as well; a weak
  // prior around the current calibration keeps the step in the local basin.
  // The shrinkage it causes is well below the median filter's resolution.
  Eigen::VectorXd p(5);
  p << current.beta, current.mount_x, current.mount_y, current.alpha_doppler,
      current.alpha_azimuth;
  const int k = estimate_positions ? 5 : 3;
  Eigen::VectorXd prior_info(k);
  if (estimate_positions) {
    prior_info << 1.0 / (0.035 * 0.035), 1.0 / (0.2 * 0.2), 1.0 / (0.2 * 0.2),
        1.0 / (0.05 * 0.05), 1.0 / (0.05 * 0.05);
  } else {
    prior_info << 1.0 / (0.035 * 0.035), 1.0 / (0.05 * 0.05), 1.0 / (0.05 * 0.05);
  }
  const Eigen::VectorXd p0 = pack(p, estimate_positions);
  const double sigma = std::max(current.sigma_doppler, 0.02);
  const double w_row = 1.0 / (sigma * sigma);

  for (int it = 0; it < config.max_iterations; ++it) {
    Eigen::MatrixXd jtj = prior_info.asDiagonal();
    Eigen::VectorXd jtr = prior_info.asDiagonal() * (pack(p, estimate_positions) - p0);
    Eigen::RowVectorXd jrow(k);
    for (const auto& row : rows) {
      const double r = residual(row, p);
      jacobian_row(row, p, estimate_positions, jrow);
      jtj.noalias() += w_row * jrow.transpose() * jrow;
      jtr.noalias() += w_row * jrow.transpose() * r;
    }
    const Eigen::VectorXd step = jtj.ldlt().solve(-jtr);
    Eigen::VectorXd trial = p;
    unpack(pack(p, estimate_positions) + step, estimate_positions, trial);
    p = trial;
    if (step.cwiseAbs().maxCoeff() < config.tolerance) break;
  }

  CalibrationSample sample;
  sample.beta = p[0];
  sample.alpha_doppler = p[3];
  sample.alpha_azimuth = p[4];
  if (estimate_positions) {
    sample.mount_x = p[1];
    sample.mount_y = p[2];
  }
  return sample;
}

void CalibrationEstimate::add_sample(int sensor_id, const CalibrationSample& sample) {
  Buffers& b = buffers_[sensor_id];
  b.beta.push_back(sample.beta);
  b.alpha_doppler.push_back(sample.alpha_doppler);
  b.alpha_azimuth.push_back(sample.alpha_azimuth);
  if (sample.mount_x) b.mount_x.push_back(*sample.mount_x);
  if (sample.mount_y) b.mount_y.push_back(*sample.mount_y);
}

std::size_t CalibrationEstimate::sample_count(int sensor_id) const {
  auto it = buffers_.find(sensor_id);
  return it == buffers_.end() ? 0 : it->second.beta.size();
}

namespace {
double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double m = v[n / 2];
  if (n % 2 == 0) {
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    m = 0.5 * (m + v[n / 2 - 1]);
  }
  return m;
}
}  // namespace

std::optional<SensorCalibration> CalibrationEstimate::median(
    int sensor_id, const SensorCalibration& base) const {
  auto it = buffers_.find(sensor_id);
  if (it == buffers_.end() || it->second.beta.size() < min_samples_) return std::nullopt;
  const Buffers& b = it->second;
  SensorCalibration out = base;
  out.beta = median_of(b.beta);
  out.alpha_doppler = median_of(b.alpha_doppler);
  out.alpha_azimuth = median_of(b.alpha_azimuth);
  if (b.mount_x.size() >= min_samples_) out.mount_x = median_of(b.mount_x);
  if (b.mount_y.size() >= min_samples_) out.mount_y = median_of(b.mount_y);
  return out;
}

bool CalibrationEstimate::positions_constrained(int sensor_id) const {
  auto it = buffers_.find(sensor_id);
  return it != buffers_.end() && it->second.mount_x.size() >= min_samples_;
}

std::map<int, SensorCalibrationResult> calibrate_offline_batch(
    const std::vector<RadarDetection>& detections,
    const std::function<Twist2(double)>& reference, const CalibrationTable& initial,
    const OfflineCalibConfig& config) {
  std::map<int, std::vector<CalibRow>> rows_by_sensor;
  std::set<std::int64_t> yaw_buckets;
  for (const auto& det : detections) {
    auto it = initial.find(det.sensor_id);
    if (it == initial.end()) {
      throw ConfigError("no calibration for sensor " + std::to_string(det.sensor_id));
    }
    const Twist2 u = reference(det.timestamp);
    rows_by_sensor[det.sensor_id].push_back({det.azimuth_sensor, det.doppler, u.as_vector()});
    if (std::abs(u.omega) > config.yaw_threshold) {
      yaw_buckets.insert(static_cast<std::int64_t>(std::floor(det.timestamp / config.cycle_period)));
    }
  }
  const double yaw_time = static_cast<double>(yaw_buckets.size()) * config.cycle_period;
  const bool positions = yaw_time >= config.min_yaw_time;

  std::map<int, SensorCalibrationResult> out;
  for (auto& [sensor_id, rows] : rows_by_sensor) {
    const SensorCalibration& init = initial.at(sensor_id);
    const FitResult fit =
        fit_sensor(std::move(rows), init, positions, config.max_iterations, config.tolerance,
                   config.outlier_nsigma, config.trim_rounds);
    SensorCalibrationResult r;
    r.calibration = init;
    r.calibration.beta = fit.params[0];
    r.calibration.mount_x = fit.params[1];
    r.calibration.mount_y = fit.params[2];
    r.calibration.alpha_doppler = fit.params[3];
    r.calibration.alpha_azimuth = fit.params[4];
    r.std_errors.beta = fit.std_errors[0];
    r.std_errors.mount_x = fit.std_errors[1];
    r.std_errors.mount_y = fit.std_errors[2];
    r.std_errors.alpha_doppler = fit.std_errors[3];
    r.std_errors.alpha_azimuth = fit.std_errors[4];
    r.positions_constrained = positions;
    r.rows_used = fit.rows_used;
    out.emplace(sensor_id, std::move(r));
  }
  return out;
}

}  // namespace radarloc
