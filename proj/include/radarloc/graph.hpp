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

#include <Eigen/Sparse>
#include <cstdint>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "radarloc/factors.hpp"
#include "radarloc/landmark_map.hpp"
#include "radarloc/types.hpp"

namespace radarloc {

using NodeId = std::int64_t;
using FactorId = std::int64_t;

struct PoseNode {
  Pose2 estimate;
  double timestamp{0.0};
};

enum class LandmarkNodeShape { Point, Line };

struct LandmarkNode {
  LandmarkNodeShape shape{LandmarkNodeShape::Point};
  Vec2 position{0.0, 0.0};  // point state
  LineNodeState line;       // line state
  double anchor_half_length{0.0};
  std::optional<LandmarkKind> kind_hint;
  FeatureSource source{FeatureSource::Radar};
  int total_observations{0};

  /// Current endpoints of a line node (anchor extent projected onto the
  /// current line), for association and export.
  Vec2 line_endpoint(int which) const;
};

struct OdometryFactor {
  NodeId pose_i{0}, pose_j{0};
  Pose2 z;
  Mat3 information{Mat3::Identity()};
};
struct GnssFactor {
  NodeId pose{0};
  Vec2 z{0.0, 0.0};
  Mat2 information{Mat2::Identity()};
};
struct PointObsFactor {
  NodeId pose{0}, landmark{0};
  Vec2 z{0.0, 0.0};
  Mat2 information{Mat2::Identity()};
};
struct LineObsFactor {
  NodeId pose{0}, landmark{0};
  LineCoords z;
  Mat2 information{Mat2::Identity()};
};
struct PointMapFactor {
  NodeId landmark{0};
  Vec2 map_position{0.0, 0.0};
  Mat2 information{Mat2::Identity()};
  std::int64_t map_id{0};
};
struct LineMapFactor {
  NodeId landmark{0};
  LineCoords map_line;
  Mat2 information{Mat2::Identity()};
  std::int64_t map_id{0};
};
struct PosePriorFactor {
  NodeId pose{0};
  Pose2 z;
  Mat3 information{Mat3::Identity()};
};

using Factor = std::variant<OdometryFactor, GnssFactor, PointObsFactor, LineObsFactor,
                            PointMapFactor, LineMapFactor, PosePriorFactor>;

enum class OptimizerAlgorithm { GaussNewton, LevenbergMarquardt };

struct OptimizeConfig {
  OptimizerAlgorithm algorithm{OptimizerAlgorithm::LevenbergMarquardt};
  int max_iterations{15};
  double abs_tol{1e-10};  // inf-norm of the state update
  double rel_tol{1e-9};   // relative cost decrease
  double huber_width{1.0};  // whitened units, landmark/map factors only
  bool robust{true};
  double initial_lambda{1e-6};
};

struct OptimizeResult {
  double initial_cost{0.0};
  double final_cost{0.0};
  int iterations{0};
  bool converged{false};
};

struct AssociationConfig {
  double chi2_gate{5.991};  // chi-square 0.95 with 2 dof
  double position_slack{0.3};  // m added to the feature covariance
  double line_angle_gate{0.2617993877991494};  // 15 deg, local association
  double line_angle_slack{0.02};               // rad
  double line_lateral_slack{0.2};              // m
  int map_min_observations{2};
  double map_point_gate{2.0};                    // m
  double map_line_angle_gate{0.17453292519943295};  // 10 deg
  double map_line_lateral_gate{1.5};             // m
  double map_overlap_margin{2.0};                // m along track
  double map_sigma_point{0.1};                   // m
  double map_sigma_angle{0.01};                  // rad
  double map_sigma_lateral{0.05};                // m
};

struct SlamConfig {
  std::size_t window_capacity{50};
  OptimizeConfig optimize;
  AssociationConfig association;
  double odometry_variance_floor{1e-10};
};

struct LocalAssociation {
  std::size_t feature_index{0};
  NodeId node{0};
  bool created{false};
};

/// Sliding-window landmark graph. Pose and landmark node ids are globally
/// unique and increase over time; factors reference nodes by id.
class SlamGraph {
 public:
  explicit SlamGraph(SlamConfig config = {}, LandmarkMap map = {});

  void set_map(LandmarkMap map) { map_ = std::move(map); }
  const LandmarkMap& map() const { return map_; }
  const SlamConfig& config() const { return config_; }

  /// Creates the first pose with a prior.
  NodeId set_initial_pose(const Pose2& pose, const Mat3& information, double timestamp);

  /// Appends a pose dead-reckoned from the previous one and links it with an
  /// odometry factor integrated from the ego motion.
  NodeId add_odometry(const EgoMotion& motion);
  /// Same, from an explicit relative-pose measurement.
  NodeId add_odometry_increment(const Pose2& z, const Mat3& information, double timestamp);
  /// Extra relative-pose factor between two existing poses (e.g. wheel path).
  FactorId add_relative_factor(NodeId pose_i, NodeId pose_j, const Pose2& z,
                               const Mat3& information);
  FactorId add_gnss(NodeId pose, const GnssFix& fix);
  FactorId add_factor(Factor factor);
  void remove_factor(FactorId id);

  /// Matches features against in-graph landmark nodes (nearest compatible
  /// within the Mahalanobis gate), spawning nodes for the unmatched ones,
  /// and adds one observation factor per feature.
  std::vector<LocalAssociation> local_associate(const std::vector<FeatureObservation>& features,
                                                NodeId pose_id);

  /// Re-derives the map association factor of every eligible landmark node.
  /// Returns the number of active map factors.
  int map_associate();

  OptimizeResult optimize() { return optimize(config_.optimize); }
  OptimizeResult optimize(const OptimizeConfig& config);

  /// Drops poses beyond the window capacity, summarizing their pose-chain
  /// information into a prior on the new oldest pose; orphaned landmark
  /// nodes are removed.
  void slide_window();

  struct CycleOutput {
    NodeId pose_id{0};
    Pose2 pose;
    Mat3 covariance{Mat3::Zero()};
    OptimizeResult optimize;
  };
  /// One localization cycle: odometry, associations, optimization, window.
  CycleOutput localize_cycle(const EgoMotion& motion,
                             const std::vector<FeatureObservation>& features,
                             const std::optional<GnssFix>& gnss = std::nullopt);

  const std::map<NodeId, PoseNode>& poses() const { return poses_; }
  const std::map<NodeId, LandmarkNode>& landmark_nodes() const { return landmarks_; }
  const std::map<FactorId, Factor>& factors() const { return factors_; }
  NodeId latest_pose_id() const;
  const PoseNode& pose(NodeId id) const { return poses_.at(id); }
  int active_observations(NodeId landmark) const;

  /// Total robust cost at the current estimates.
  double current_cost() const;
  /// Marginal covariance of one pose at the current linearization point.
  Mat3 pose_marginal_covariance(NodeId pose_id) const;

 private:
  struct Layout;
  double assemble_or_cost(const Layout* layout, const std::map<NodeId, PoseNode>& poses,
                          const std::map<NodeId, LandmarkNode>& landmarks,
                          const OptimizeConfig& config,
                          std::vector<Eigen::Triplet<double>>* triplets,
                          Eigen::VectorXd* rhs) const;
  bool needs_gauge_prior() const;
  void marginalize_oldest_pose();
  void prune_orphan_landmarks();
  NodeId spawn_landmark(const FeatureObservation& feature, const Pose2& pose);

  SlamConfig config_;
  LandmarkMap map_;
  std::map<NodeId, PoseNode> poses_;
  std::map<NodeId, LandmarkNode> landmarks_;
  std::map<FactorId, Factor> factors_;
  std::map<NodeId, FactorId> map_factor_of_;  // landmark -> its MapAssoc factor
  NodeId next_node_id_{1};
  FactorId next_factor_id_{1};
};

}  // namespace radarloc
