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

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "radarloc/types.hpp"

namespace radarloc {

/// Globally referenced semantic landmark map with a uniform-grid spatial
/// index. Landmark ids must be unique.
class LandmarkMap {
 public:
  LandmarkMap() = default;
  explicit LandmarkMap(std::vector<Landmark> landmarks);

  void add(const Landmark& l);

  std::size_t size() const { return landmarks_.size(); }
  bool empty() const { return landmarks_.empty(); }
  const std::vector<Landmark>& landmarks() const { return landmarks_; }
  const Landmark& at(std::size_t i) const { return landmarks_[i]; }

  /// Indices of point-geometry landmarks within `radius` of `p`, ascending
  /// by landmark index.
  std::vector<std::size_t> points_near(const Vec2& p, double radius) const;

  /// Indices of segment-geometry landmarks whose segment passes within
  /// `radius` of `p`, ascending by landmark index.
  std::vector<std::size_t> segments_near(const Vec2& p, double radius) const;

 private:
  using CellKey = std::int64_t;
  static CellKey cell_key(int cx, int cy) {
    return (static_cast<std::int64_t>(cx) << 32) ^ static_cast<std::uint32_t>(cy);
  }
  void index_landmark(std::size_t idx);
  std::vector<std::size_t> gather(const Vec2& p, double radius, bool points) const;

  static constexpr double kCellSize = 8.0;
  std::vector<Landmark> landmarks_;
  std::unordered_map<CellKey, std::vector<std::size_t>> point_cells_;
  std::unordered_map<CellKey, std::vector<std::size_t>> segment_cells_;
};

/// Distance from point `p` to the segment [a, b].
double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b);

}  // namespace radarloc
