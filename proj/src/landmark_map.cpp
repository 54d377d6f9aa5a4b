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

#include "radarloc/landmark_map.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace radarloc {

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

LandmarkMap::LandmarkMap(std::vector<Landmark> landmarks) {
  for (const auto& l : landmarks) add(l);
}

void LandmarkMap::add(const Landmark& l) {
  for (const auto& existing : landmarks_) {
    if (existing.id == l.id) throw ConfigError("duplicate landmark id " + std::to_string(l.id));
  }
  landmarks_.push_back(l);
  index_landmark(landmarks_.size() - 1);
}

void LandmarkMap::index_landmark(std::size_t idx) {
  const Landmark& l = landmarks_[idx];
  if (l.is_point()) {
    const int cx = static_cast<int>(std::floor(l.p1.x() / kCellSize));
    const int cy = static_cast<int>(std::floor(l.p1.y() / kCellSize));
    point_cells_[cell_key(cx, cy)].push_back(idx);
    return;
  }
  // Rasterize the segment into all cells it touches.
  const double len = (l.p2 - l.p1).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / (kCellSize * 0.5))));
  std::set<CellKey> seen;
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = l.p1 + (static_cast<double>(i) / steps) * (l.p2 - l.p1);
    const int cx = static_cast<int>(std::floor(p.x() / kCellSize));
    const int cy = static_cast<int>(std::floor(p.y() / kCellSize));
    if (seen.insert(cell_key(cx, cy)).second) segment_cells_[cell_key(cx, cy)].push_back(idx);
  }
}

std::vector<std::size_t> LandmarkMap::gather(const Vec2& p, double radius, bool points) const {
  const auto& cells = points ? point_cells_ : segment_cells_;
  const int cx0 = static_cast<int>(std::floor((p.x() - radius) / kCellSize));
  const int cx1 = static_cast<int>(std::floor((p.x() + radius) / kCellSize));
  const int cy0 = static_cast<int>(std::floor((p.y() - radius) / kCellSize));
  const int cy1 = static_cast<int>(std::floor((p.y() + radius) / kCellSize));
  std::set<std::size_t> out;
  for (int cx = cx0; cx <= cx1; ++cx) {
    for (int cy = cy0; cy <= cy1; ++cy) {
      auto it = cells.find(cell_key(cx, cy));
      if (it == cells.end()) continue;
      out.insert(it->second.begin(), it->second.end());
    }
  }
  return {out.begin(), out.end()};
}

std::vector<std::size_t> LandmarkMap::points_near(const Vec2& p, double radius) const {
  std::vector<std::size_t> out;
  for (std::size_t idx : gather(p, radius, true)) {
    if ((landmarks_[idx].p1 - p).norm() <= radius) out.push_back(idx);
  }
  return out;
}

std::vector<std::size_t> LandmarkMap::segments_near(const Vec2& p, double radius) const {
  std::vector<std::size_t> out;
  for (std::size_t idx : gather(p, radius, false)) {
    const Landmark& l = landmarks_[idx];
    if (point_segment_distance(p, l.p1, l.p2) <= radius) out.push_back(idx);
  }
  return out;
}

}  // namespace radarloc
