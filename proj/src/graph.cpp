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

#include "radarloc/graph.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <limits>

namespace radarloc {

namespace {

constexpr double kGaugeInformation = 1e-2;

Mat2 rotate_cov(const Mat2& cov, double angle) {
  const Mat2 r = rot2(angle);
  return r * cov * r.transpose();
}

double huber_cost(double u, double k) { return u <= k ? u * u : 2.0 * k * u - k * k; }

}  // namespace

Vec2 LandmarkNode::line_endpoint(int which) const {
  const LineCoords lc = line.line();
  const Vec2 n = lc.normal();
  const Vec2 t(-n.y(), n.x());
  const Vec2 foot = line.anchor_center + line.d_lat * n;
  return foot + (which == 0 ? -anchor_half_length : anchor_half_length) * t;
}

SlamGraph::SlamGraph(SlamConfig config, LandmarkMap map)
    : config_(std::move(config)), map_(std::move(map)) {}

NodeId SlamGraph::set_initial_pose(const Pose2& pose, const Mat3& information, double timestamp) {
  if (!poses_.empty()) throw ConfigError("initial pose already set");
  const NodeId id = next_node_id_++;
  poses_[id] = {pose, timestamp};
  add_factor(PosePriorFactor{id, pose, information});
  return id;
}

NodeId SlamGraph::add_odometry(const EgoMotion& motion) {
  if (poses_.empty()) {
    const NodeId id = next_node_id_++;
    poses_[id] = {Pose2{}, motion.timestamp};
    return id;
  }
  const auto& [prev_id, prev] = *poses_.rbegin();
  if (motion.timestamp <= prev.timestamp) {
    throw ConfigError("odometry timestamp must be after the last pose");
  }
  const double dt = motion.timestamp - prev.timestamp;
  const Pose2 z = integrate_twist(motion.twist(), dt);

  // Propagate the twist covariance through the integration.
  Mat3 j;
  const double h = 1e-7;
  for (int c = 0; c < 3; ++c) {
    Twist2 up = motion.twist(), um = motion.twist();
    (c == 0 ? up.omega : c == 1 ? up.vx : up.vy) += h;
    (c == 0 ? um.omega : c == 1 ? um.vx : um.vy) -= h;
    const Pose2 zp = integrate_twist(up, dt);
    const Pose2 zm = integrate_twist(um, dt);
    j(0, c) = (zp.x - zm.x) / (2.0 * h);
    j(1, c) = (zp.y - zm.y) / (2.0 * h);
    j(2, c) = wrap_angle(zp.psi - zm.psi) / (2.0 * h);
  }
  Mat3 cov = j * motion.covariance * j.transpose();
  cov += Mat3::Identity() * config_.odometry_variance_floor;
  return add_odometry_increment(z, cov.inverse(), motion.timestamp);
}

NodeId SlamGraph::add_odometry_increment(const Pose2& z, const Mat3& information,
                                         double timestamp) {
  if (poses_.empty()) throw ConfigError("no pose to extend; set the initial pose first");
  const auto& [prev_id, prev] = *poses_.rbegin();
  if (timestamp <= prev.timestamp) {
    throw ConfigError("odometry timestamp must be after the last pose");
  }
  const NodeId id = next_node_id_++;
  poses_[id] = {compose(prev.estimate, z), timestamp};
  add_factor(OdometryFactor{prev_id, id, z, information});
  return id;
}

FactorId SlamGraph::add_relative_factor(NodeId pose_i, NodeId pose_j, const Pose2& z,
                                        const Mat3& information) {
  if (!poses_.count(pose_i) || !poses_.count(pose_j)) {
    throw ConfigError("relative factor references unknown pose");
  }
  return add_factor(OdometryFactor{pose_i, pose_j, z, information});
}

FactorId SlamGraph::add_gnss(NodeId pose, const GnssFix& fix) {
  if (!poses_.count(pose)) throw ConfigError("gnss factor references unknown pose");
  return add_factor(GnssFactor{pose, Vec2(fix.x, fix.y), Mat2(fix.covariance.inverse())});
}

FactorId SlamGraph::add_factor(Factor factor) {
  const FactorId id = next_factor_id_++;
  factors_.emplace(id, std::move(factor));
  return id;
}

void SlamGraph::remove_factor(FactorId id) { factors_.erase(id); }

NodeId SlamGraph::latest_pose_id() const {
  if (poses_.empty()) throw ConfigError("graph has no poses");
  return poses_.rbegin()->first;
}

int SlamGraph::active_observations(NodeId landmark) const {
  int n = 0;
  for (const auto& [id, f] : factors_) {
    if (const auto* p = std::get_if<PointObsFactor>(&f)) {
      if (p->landmark == landmark) ++n;
    } else if (const auto* l = std::get_if<LineObsFactor>(&f)) {
      if (l->landmark == landmark) ++n;
    }
  }
  return n;
}

NodeId SlamGraph::spawn_landmark(const FeatureObservation& feature, const Pose2& pose) {
  const NodeId id = next_node_id_++;
  LandmarkNode node;
  node.kind_hint = feature.kind_hint;
  node.source = feature.source;
  if (feature.is_point()) {
    node.shape = LandmarkNodeShape::Point;
    node.position = pose.transform(feature.point().position);
  } else {
    node.shape = LandmarkNodeShape::Line;
    const LineFeature& lf = feature.line();
    const Vec2 g1 = pose.transform(lf.p1);
    const Vec2 g2 = pose.transform(lf.p2);
    node.line.anchor_center = 0.5 * (g1 + g2);
    node.line.anchor_eta = LineCoords::from_segment(g1, g2).eta;
    node.line.d_eta = 0.0;
    node.line.d_lat = 0.0;
    node.anchor_half_length = 0.5 * (g2 - g1).norm();
  }
  landmarks_[id] = node;
  return id;
}

std::vector<LocalAssociation> SlamGraph::local_associate(
    const std::vector<FeatureObservation>& features, NodeId pose_id) {
  auto pose_it = poses_.find(pose_id);
  if (pose_it == poses_.end()) throw ConfigError("local_associate: unknown pose");
  const Pose2 pose = pose_it->second.estimate;
  const AssociationConfig& ac = config_.association;

  std::vector<LocalAssociation> out;
  out.reserve(features.size());
  for (std::size_t fi = 0; fi < features.size(); ++fi) {
    const FeatureObservation& feature = features[fi];
    NodeId best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();

    if (feature.is_point()) {
      const Vec2 global = pose.transform(feature.point().position);
      const Mat2 s = rotate_cov(feature.point().covariance, pose.psi) +
                     Mat2::Identity() * (ac.position_slack * ac.position_slack);
      const Mat2 s_inv = s.inverse();
      for (const auto& [id, node] : landmarks_) {
        if (node.shape != LandmarkNodeShape::Point) continue;
        if (node.kind_hint && feature.kind_hint && *node.kind_hint != *feature.kind_hint) continue;
        const Vec2 d = node.position - global;
        const double d2 = d.dot(s_inv * d);
        if (d2 <= ac.chi2_gate && d2 < best_d2) {
          best_d2 = d2;
          best = id;
        }
      }
    } else {
      LineCoords z;
      Mat2 info;
      line_feature_coords(feature.line(), z, info);
      // Observed line in the global frame.
      LineCoords zg;
      zg.eta = wrap_angle(z.eta + pose.psi);
      zg.rho = z.rho + Vec2(std::cos(zg.eta), std::sin(zg.eta)).dot(pose.translation());
      const double var_angle = 1.0 / info(0, 0) + ac.line_angle_slack * ac.line_angle_slack;
      const double var_rho = 1.0 / info(1, 1) + ac.line_lateral_slack * ac.line_lateral_slack;
      for (const auto& [id, node] : landmarks_) {
        if (node.shape != LandmarkNodeShape::Line) continue;
        if (node.kind_hint && feature.kind_hint && *node.kind_hint != *feature.kind_hint) continue;
        const LineCoords lc = node.line.line().aligned_to(zg);
        const double d_eta = wrap_line_angle(lc.eta - zg.eta);
        if (std::abs(d_eta) > ac.line_angle_gate) continue;
        const double d_rho = lc.rho - zg.rho;
        const double d2 = d_eta * d_eta / var_angle + d_rho * d_rho / var_rho;
        if (d2 <= ac.chi2_gate && d2 < best_d2) {
          best_d2 = d2;
          best = id;
        }
      }
    }

    LocalAssociation assoc;
    assoc.feature_index = fi;
    if (best == 0) {
      assoc.node = spawn_landmark(feature, pose);
      assoc.created = true;
    } else {
      assoc.node = best;
    }
    landmarks_[assoc.node].total_observations += 1;

    if (feature.is_point()) {
      add_factor(PointObsFactor{pose_id, assoc.node, feature.point().position,
                                Mat2(feature.point().covariance.inverse())});
    } else {
      LineCoords z;
      Mat2 info;
      line_feature_coords(feature.line(), z, info);
      add_factor(LineObsFactor{pose_id, assoc.node, z, info});
    }
    out.push_back(assoc);
  }
  return out;
}

int SlamGraph::map_associate() {
  const AssociationConfig& ac = config_.association;
  int active = 0;
  for (const auto& [id, node] : landmarks_) {
    auto existing = map_factor_of_.find(id);
    const bool eligible =
        node.total_observations >= ac.map_min_observations && active_observations(id) >= 1;
    if (!eligible || map_.empty()) {
      if (existing != map_factor_of_.end()) {
        remove_factor(existing->second);
        map_factor_of_.erase(existing);
      }
      continue;
    }

    bool matched = false;
    Factor factor;
    if (node.shape == LandmarkNodeShape::Point) {
      double best_d = std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      for (std::size_t idx : map_.points_near(node.position, ac.map_point_gate)) {
        const Landmark& m = map_.at(idx);
        // Point features associate with poles only (or the hinted kind).
        const LandmarkKind want = node.kind_hint.value_or(LandmarkKind::Pole);
        if (m.kind != want) continue;
        const double d = (m.p1 - node.position).norm();
        if (d < best_d) {
          best_d = d;
          best_idx = idx;
        }
      }
      if (best_d <= ac.map_point_gate) {
        const Landmark& m = map_.at(best_idx);
        Mat2 info = Mat2::Identity() / (ac.map_sigma_point * ac.map_sigma_point);
        factor = PointMapFactor{id, m.p1, info, m.id};
        matched = true;
      }
    } else {
      const LineCoords lc = node.line.line();
      const Vec2 n = lc.normal();
      const Vec2 tangent(-n.y(), n.x());
      const Vec2 center = node.line.anchor_center + node.line.d_lat * n;
      const double search =
          node.anchor_half_length + ac.map_line_lateral_gate + ac.map_overlap_margin;
      double best_lat = std::numeric_limits<double>::infinity();
      std::size_t best_idx = 0;
      for (std::size_t idx : map_.segments_near(center, search)) {
        const Landmark& m = map_.at(idx);
        if (node.kind_hint && m.kind != *node.kind_hint) continue;
        const LineCoords ml = LineCoords::from_segment(m.p1, m.p2).aligned_to(lc);
        const double d_eta = wrap_line_angle(ml.eta - lc.eta);
        if (std::abs(d_eta) > ac.map_line_angle_gate) continue;
        const double d_lat = std::abs(ml.rho - lc.rho);
        if (d_lat > ac.map_line_lateral_gate) continue;
        // Longitudinal overlap between the node extent and the map segment.
        const double u1 = tangent.dot(m.p1 - center);
        const double u2 = tangent.dot(m.p2 - center);
        const double lo = std::min(u1, u2), hi = std::max(u1, u2);
        const double gap = std::max(lo, -node.anchor_half_length) -
                           std::min(hi, node.anchor_half_length);
        if (gap > ac.map_overlap_margin) continue;
        if (d_lat < best_lat) {
          best_lat = d_lat;
          best_idx = idx;
        }
      }
      if (best_lat < std::numeric_limits<double>::infinity()) {
        const Landmark& m = map_.at(best_idx);
        Mat2 info = Mat2::Zero();
        info(0, 0) = 1.0 / (ac.map_sigma_angle * ac.map_sigma_angle);
        info(1, 1) = 1.0 / (ac.map_sigma_lateral * ac.map_sigma_lateral);
        factor = LineMapFactor{id, LineCoords::from_segment(m.p1, m.p2), info, m.id};
        matched = true;
      }
    }

    if (existing != map_factor_of_.end()) {
      remove_factor(existing->second);
      map_factor_of_.erase(existing);
    }
    if (matched) {
      map_factor_of_[id] = add_factor(factor);
      ++active;
    }
  }
  return active;
}

// ---------------------------------------------------------------------------
// Optimization

struct SlamGraph::Layout {
  std::map<NodeId, int> offset;  // node id -> first column
  int dim{0};
  NodeId first_pose{0};
};

namespace {

struct EvaluatedFactor {
  Eigen::VectorXd error;  // whitened, robust-scaled
  std::vector<std::pair<NodeId, Eigen::MatrixXd>> jacobians;  // same scaling
  double cost{0.0};
};

template <int N>
Eigen::Matrix<double, N, N> information_sqrt(const Eigen::Matrix<double, N, N>& info) {
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(info);
  return llt.matrixL().transpose();
}

}  // namespace

double SlamGraph::assemble_or_cost(const Layout* layout, const std::map<NodeId, PoseNode>& poses,
                                   const std::map<NodeId, LandmarkNode>& landmarks,
                                   const OptimizeConfig& config,
                                   std::vector<Eigen::Triplet<double>>* triplets,
                                   Eigen::VectorXd* rhs) const {
  double total_cost = 0.0;
  const double k = config.huber_width;

  auto accumulate = [&](Eigen::VectorXd error,
                        std::vector<std::pair<NodeId, Eigen::MatrixXd>> jacs, bool robust) {
    const double u = error.norm();
    double scale = 1.0;
    if (config.robust && robust && u > k) {
      scale = std::sqrt(k / u);
      total_cost += huber_cost(u, k);
    } else {
      total_cost += u * u;
    }
    if (!triplets) return;
    error *= scale;
    for (auto& [node, jac] : jacs) jac *= scale;
    for (const auto& [ni, ji] : jacs) {
      const int oi = layout->offset.at(ni);
      for (const auto& [nj, jj] : jacs) {
        const int oj = layout->offset.at(nj);
        const Eigen::MatrixXd h = ji.transpose() * jj;
        for (int r = 0; r < h.rows(); ++r) {
          for (int c = 0; c < h.cols(); ++c) {
            triplets->emplace_back(oi + r, oj + c, h(r, c));
          }
        }
      }
      const Eigen::VectorXd g = -ji.transpose() * error;
      rhs->segment(oi, g.size()) += g;
    }
  };

  for (const auto& [fid, factor] : factors_) {
    if (const auto* f = std::get_if<OdometryFactor>(&factor)) {
      const Pose2& a = poses.at(f->pose_i).estimate;
      const Pose2& b = poses.at(f->pose_j).estimate;
      const Mat3 w = information_sqrt<3>(f->information);
      Eigen::VectorXd e = w * odometry_error(a, b, f->z);
      Mat3 ja, jb;
      odometry_jacobians(a, b, f->z, ja, jb);
      accumulate(e, {{f->pose_i, Eigen::MatrixXd(w * ja)}, {f->pose_j, Eigen::MatrixXd(w * jb)}},
                 false);
    } else if (const auto* f = std::get_if<GnssFactor>(&factor)) {
      const Pose2& a = poses.at(f->pose).estimate;
      const Mat2 w = information_sqrt<2>(f->information);
      Eigen::VectorXd e = w * gnss_error(a, f->z);
      Mat23 j;
      gnss_jacobian(a, j);
      accumulate(e, {{f->pose, Eigen::MatrixXd(w * j)}}, false);
    } else if (const auto* f = std::get_if<PointObsFactor>(&factor)) {
      const Pose2& a = poses.at(f->pose).estimate;
      const Vec2& l = landmarks.at(f->landmark).position;
      const Mat2 w = information_sqrt<2>(f->information);
      Eigen::VectorXd e = w * point_obs_error(a, l, f->z);
      Mat23 jp;
      Mat2 jl;
      point_obs_jacobians(a, l, jp, jl);
      accumulate(e, {{f->pose, Eigen::MatrixXd(w * jp)}, {f->landmark, Eigen::MatrixXd(w * jl)}},
                 true);
    } else if (const auto* f = std::get_if<LineObsFactor>(&factor)) {
      const Pose2& a = poses.at(f->pose).estimate;
      const LineNodeState& l = landmarks.at(f->landmark).line;
      const Mat2 w = information_sqrt<2>(f->information);
      Eigen::VectorXd e = w * line_obs_error(a, l, f->z);
      Mat23 jp;
      Mat2 jl;
      line_obs_jacobians(a, l, f->z, jp, jl);
      accumulate(e, {{f->pose, Eigen::MatrixXd(w * jp)}, {f->landmark, Eigen::MatrixXd(w * jl)}},
                 true);
    } else if (const auto* f = std::get_if<PointMapFactor>(&factor)) {
      const Vec2& l = landmarks.at(f->landmark).position;
      const Mat2 w = information_sqrt<2>(f->information);
      Eigen::VectorXd e = w * point_map_error(l, f->map_position);
      accumulate(e, {{f->landmark, Eigen::MatrixXd(w * Mat2::Identity())}}, true);
    } else if (const auto* f = std::get_if<LineMapFactor>(&factor)) {
      const LineNodeState& l = landmarks.at(f->landmark).line;
      const Mat2 w = information_sqrt<2>(f->information);
      Eigen::VectorXd e = w * line_map_error(l, f->map_line);
      Mat2 jl;
      line_map_jacobian(l, f->map_line, jl);
      accumulate(e, {{f->landmark, Eigen::MatrixXd(w * jl)}}, true);
    } else if (const auto* f = std::get_if<PosePriorFactor>(&factor)) {
      const Pose2& a = poses.at(f->pose).estimate;
      const Mat3 w = information_sqrt<3>(f->information);
      Eigen::VectorXd e = w * pose_prior_error(a, f->z);
      accumulate(e, {{f->pose, Eigen::MatrixXd(w * Mat3::Identity())}}, false);
    }
  }

  // Gauge anchor: a weak information-only prior on the first pose when no
  // factor pins the global frame. It adds no error and no gradient, so the
  // cost landscape is untouched.
  if (triplets && layout && needs_gauge_prior() && layout->first_pose != 0) {
    const int o = layout->offset.at(layout->first_pose);
    for (int i = 0; i < 3; ++i) triplets->emplace_back(o + i, o + i, kGaugeInformation);
  }
  return total_cost;
}

bool SlamGraph::needs_gauge_prior() const {
  for (const auto& [id, f] : factors_) {
    if (std::holds_alternative<GnssFactor>(f) || std::holds_alternative<PointMapFactor>(f) ||
        std::holds_alternative<LineMapFactor>(f) || std::holds_alternative<PosePriorFactor>(f)) {
      return false;
    }
  }
  return true;
}

OptimizeResult SlamGraph::optimize(const OptimizeConfig& config) {
  if (poses_.empty()) throw InsufficientDataError("optimize needs at least one pose node");

  Layout layout;
  layout.first_pose = poses_.begin()->first;
  for (const auto& [id, node] : poses_) {
    layout.offset[id] = layout.dim;
    layout.dim += 3;
  }
  for (const auto& [id, node] : landmarks_) {
    layout.offset[id] = layout.dim;
    layout.dim += 2;
  }

  auto apply_delta = [&](const Eigen::VectorXd& delta, std::map<NodeId, PoseNode>& poses,
                         std::map<NodeId, LandmarkNode>& landmarks) {
    for (auto& [id, node] : poses) {
      const int o = layout.offset.at(id);
      node.estimate.x += delta[o];
      node.estimate.y += delta[o + 1];
      node.estimate.psi = wrap_angle(node.estimate.psi + delta[o + 2]);
    }
    for (auto& [id, node] : landmarks) {
      const int o = layout.offset.at(id);
      if (node.shape == LandmarkNodeShape::Point) {
        node.position.x() += delta[o];
        node.position.y() += delta[o + 1];
      } else {
        node.line.d_eta += delta[o];
        node.line.d_lat += delta[o + 1];
      }
    }
  };

  OptimizeResult result;
  double lambda =
      (config.algorithm == OptimizerAlgorithm::LevenbergMarquardt) ? config.initial_lambda : 0.0;

  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(layout.dim);
  rhs.setZero();
  double cost = assemble_or_cost(&layout, poses_, landmarks_, config, &triplets, &rhs);
  result.initial_cost = cost;

  for (int iter = 0; iter < config.max_iterations; ++iter) {
    ++result.iterations;
    Eigen::SparseMatrix<double> h(layout.dim, layout.dim);
    h.setFromTriplets(triplets.begin(), triplets.end());
    if (lambda > 0.0) {
      for (int i = 0; i < layout.dim; ++i) {
        h.coeffRef(i, i) += lambda * std::max(h.coeff(i, i), 1e-9);
      }
    }

    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver;
    solver.compute(h);
    int damping_retries = 0;
    while (solver.info() != Eigen::Success && damping_retries < 8) {
      lambda = std::max(lambda * 10.0, 1e-8);
      for (int i = 0; i < layout.dim; ++i) {
        h.coeffRef(i, i) += lambda * std::max(std::abs(h.coeff(i, i)), 1e-9);
      }
      solver.compute(h);
      ++damping_retries;
    }
    if (solver.info() != Eigen::Success) {
      throw std::runtime_error("normal matrix is not positive definite");
    }
    const Eigen::VectorXd delta = solver.solve(rhs);

    auto trial_poses = poses_;
    auto trial_landmarks = landmarks_;
    apply_delta(delta, trial_poses, trial_landmarks);
    const double trial_cost =
        assemble_or_cost(nullptr, trial_poses, trial_landmarks, config, nullptr, nullptr);

    const bool accept = (config.algorithm == OptimizerAlgorithm::GaussNewton) ||
                        trial_cost <= cost * (1.0 + 1e-14);
    if (accept) {
      poses_ = std::move(trial_poses);
      landmarks_ = std::move(trial_landmarks);
      const double improvement = cost - trial_cost;
      cost = trial_cost;
      lambda *= 0.5;
      triplets.clear();
      rhs.setZero();
      cost = assemble_or_cost(&layout, poses_, landmarks_, config, &triplets, &rhs);
      if (delta.cwiseAbs().maxCoeff() < config.abs_tol ||
          improvement <= config.rel_tol * (cost + 1e-12)) {
        result.converged = true;
        break;
      }
    } else {
      lambda = std::max(lambda * 8.0, 1e-9);
      if (lambda > 1e10) {
        result.converged = true;
        break;
      }
    }
  }
  result.final_cost = cost;
  return result;
}

double SlamGraph::current_cost() const {
  return assemble_or_cost(nullptr, poses_, landmarks_, config_.optimize, nullptr, nullptr);
}

Mat3 SlamGraph::pose_marginal_covariance(NodeId pose_id) const {
  if (!poses_.count(pose_id)) throw ConfigError("unknown pose");
  Layout layout;
  layout.first_pose = poses_.begin()->first;
  for (const auto& [id, node] : poses_) {
    layout.offset[id] = layout.dim;
    layout.dim += 3;
  }
  for (const auto& [id, node] : landmarks_) {
    layout.offset[id] = layout.dim;
    layout.dim += 2;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs(layout.dim);
  rhs.setZero();
  assemble_or_cost(&layout, poses_, landmarks_, config_.optimize, &triplets, &rhs);
  Eigen::SparseMatrix<double> h(layout.dim, layout.dim);
  h.setFromTriplets(triplets.begin(), triplets.end());
  for (int i = 0; i < layout.dim; ++i) h.coeffRef(i, i) += 1e-12;

  Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(h);
  if (solver.info() != Eigen::Success) {
    return Mat3::Identity() * 1e6;
  }
  const int o = layout.offset.at(pose_id);
  Mat3 cov;
  for (int c = 0; c < 3; ++c) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(layout.dim);
    e[o + c] = 1.0;
    const Eigen::VectorXd x = solver.solve(e);
    for (int r = 0; r < 3; ++r) cov(r, c) = x[o + r];
  }
  return 0.5 * (cov + cov.transpose());
}

// ---------------------------------------------------------------------------
// Sliding window

void SlamGraph::marginalize_oldest_pose() {
  if (poses_.size() < 2) return;
  const NodeId p0 = poses_.begin()->first;
  const NodeId p1 = std::next(poses_.begin())->first;
  const Pose2 x0 = poses_.at(p0).estimate;
  const Pose2 x1 = poses_.at(p1).estimate;

  Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
  Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
  bool any_info = false;

  std::vector<FactorId> to_remove;
  for (const auto& [fid, factor] : factors_) {
    if (const auto* f = std::get_if<PosePriorFactor>(&factor)) {
      if (f->pose != p0) continue;
      const Vec3 e = pose_prior_error(x0, f->z);
      h.topLeftCorner<3, 3>() += f->information;
      b.head<3>() -= f->information * e;
      to_remove.push_back(fid);
      any_info = true;
    } else if (const auto* f = std::get_if<GnssFactor>(&factor)) {
      if (f->pose != p0) continue;
      const Vec2 e = gnss_error(x0, f->z);
      Mat23 j;
      gnss_jacobian(x0, j);
      h.topLeftCorner<3, 3>() += j.transpose() * f->information * j;
      b.head<3>() -= j.transpose() * f->information * e;
      to_remove.push_back(fid);
      any_info = true;
    } else if (const auto* f = std::get_if<OdometryFactor>(&factor)) {
      if (f->pose_i != p0 && f->pose_j != p0) continue;
      to_remove.push_back(fid);
      if (f->pose_i == p0 && f->pose_j == p1) {
        const Vec3 e = odometry_error(x0, x1, f->z);
        Mat3 ja, jb;
        odometry_jacobians(x0, x1, f->z, ja, jb);
        Eigen::Matrix<double, 3, 6> j;
        j << ja, jb;
        h += j.transpose() * f->information * j;
        b -= j.transpose() * f->information * e;
        any_info = true;
      }
      // Odometry factors from p0 to any other pose carry information we
      // cannot summarize into a single prior; they are dropped.
    } else if (const auto* f = std::get_if<PointObsFactor>(&factor)) {
      if (f->pose == p0) to_remove.push_back(fid);
    } else if (const auto* f = std::get_if<LineObsFactor>(&factor)) {
      if (f->pose == p0) to_remove.push_back(fid);
    }
  }

  for (FactorId fid : to_remove) remove_factor(fid);
  poses_.erase(p0);

  if (!any_info) return;

  // Schur complement onto p1, then re-express as a Gaussian prior at the
  // current linearization point.
  const Mat3 h00 = h.topLeftCorner<3, 3>() + Mat3::Identity() * 1e-12;
  const Mat3 h01 = h.topRightCorner<3, 3>();
  const Mat3 h11 = h.bottomRightCorner<3, 3>();
  const Mat3 h00_inv = h00.inverse();
  Mat3 h_marg = h11 - h01.transpose() * h00_inv * h01;
  const Vec3 b_marg = b.tail<3>() - h01.transpose() * h00_inv * b.head<3>();

  Eigen::SelfAdjointEigenSolver<Mat3> es(h_marg);
  Vec3 evals = es.eigenvalues().cwiseMax(0.0);
  if (evals.maxCoeff() < 1e-10) return;
  h_marg = es.eigenvectors() * evals.asDiagonal() * es.eigenvectors().transpose();

  // Pseudo-inverse mean shift.
  Vec3 shift = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    if (evals[i] > 1e-9 * evals.maxCoeff()) {
      const Vec3 v = es.eigenvectors().col(i);
      shift += v * (v.dot(b_marg) / evals[i]);
    }
  }
  Pose2 z = x1;
  z.x += shift[0];
  z.y += shift[1];
  z.psi = wrap_angle(z.psi + shift[2]);
  add_factor(PosePriorFactor{p1, z, h_marg});
}

void SlamGraph::prune_orphan_landmarks() {
  std::map<NodeId, int> active;
  for (const auto& [fid, f] : factors_) {
    if (const auto* p = std::get_if<PointObsFactor>(&f)) {
      active[p->landmark] += 1;
    } else if (const auto* l = std::get_if<LineObsFactor>(&f)) {
      active[l->landmark] += 1;
    }
  }
  std::vector<NodeId> dead;
  for (const auto& [id, node] : landmarks_) {
    if (active.find(id) == active.end()) dead.push_back(id);
  }
  for (NodeId id : dead) {
    auto it = map_factor_of_.find(id);
    if (it != map_factor_of_.end()) {
      remove_factor(it->second);
      map_factor_of_.erase(it);
    }
    landmarks_.erase(id);
  }
}

void SlamGraph::slide_window() {
  while (poses_.size() > config_.window_capacity) marginalize_oldest_pose();
  prune_orphan_landmarks();
}

SlamGraph::CycleOutput SlamGraph::localize_cycle(const EgoMotion& motion,
                                                 const std::vector<FeatureObservation>& features,
                                                 const std::optional<GnssFix>& gnss) {
  const NodeId pose_id = add_odometry(motion);
  if (!features.empty()) local_associate(features, pose_id);
  if (gnss) add_gnss(pose_id, *gnss);
  map_associate();
  CycleOutput out;
  out.optimize = optimize();
  slide_window();
  out.pose_id = pose_id;
  out.pose = poses_.at(pose_id).estimate;
  out.covariance = pose_marginal_covariance(pose_id);
  return out;
}

}  // namespace radarloc
