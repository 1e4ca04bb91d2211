#include "lpsurf/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace lpsurf {

void VoxelGridConfig::validate() const {
  if ((voxel_size.array() <= 0.0).any()) throw std::invalid_argument("voxel grid: voxel_size must be positive");
  if ((voxel_scale.array() <= 0.0).any()) throw std::invalid_argument("voxel grid: voxel_scale must be positive");
  for (int k : kernel_size) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("voxel grid: kernel_size entries must be odd");
  }
  if (max_points_per_voxel < 1) throw std::invalid_argument("voxel grid: max_points_per_voxel must be >= 1");
  if (max_occupied_voxels < 1) throw std::invalid_argument("voxel grid: max_occupied_voxels must be >= 1");
  if ((ranges.hi.array() <= ranges.lo.array()).any()) throw std::invalid_argument("voxel grid: empty ranges");
}

std::uint64_t VoxelGrid::key(const CellCoord& c) {
  auto part = [](int v) { return static_cast<std::uint64_t>(static_cast<std::uint32_t>(v + (1 << 20))) & 0x1fffff; };
  return part(c[0]) | (part(c[1]) << 21) | (part(c[2]) << 42);
}

VoxelGrid::VoxelGrid(std::span<const Vec3> points, const VoxelGridConfig& config)
    : config_(config), points_(points.begin(), points.end()) {
  config_.validate();
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto cell = cell_of(points_[i]);
    if (!cell) {
      ++skipped;
      continue;
    }
    auto [it, inserted] = cells_.try_emplace(key(*cell));
    if (inserted && cells_.size() > static_cast<std::size_t>(config_.max_occupied_voxels))
      throw std::runtime_error("voxel grid: more than " + std::to_string(config_.max_occupied_voxels) +
                               " occupied voxels");
    if (it->second.size() < static_cast<std::size_t>(config_.max_points_per_voxel))
      it->second.push_back(static_cast<int>(i));
  }
  if (skipped > 0) warn("voxel grid: " + std::to_string(skipped) + " points outside ranges were skipped");
}

std::optional<CellCoord> VoxelGrid::cell_of(const Vec3& x) const {
  if (!config_.ranges.contains(x)) return std::nullopt;
  const Vec3 cell = config_.cell_size();
  CellCoord c;
  for (int a = 0; a < 3; ++a) c[a] = static_cast<int>(std::floor((x[a] - config_.ranges.lo[a]) / cell[a]));
  return c;
}

std::span<const int> VoxelGrid::cell_points(const CellCoord& cell) const {
  const auto it = cells_.find(key(cell));
  if (it == cells_.end()) return {};
  return it->second;
}

std::size_t VoxelGrid::stored_points() const {
  std::size_t n = 0;
  for (const auto& [k, v] : cells_) n += v.size();
  return n;
}

std::vector<Neighbor> VoxelGrid::query(const Vec3& x, int k, double radius) const {
  std::vector<Neighbor> out;
  query(x, k, radius, out);
  return out;
}

void VoxelGrid::query(const Vec3& x, int k, double radius, std::vector<Neighbor>& out) const {
  if (k < 1) throw std::invalid_argument("voxel grid query: k must be >= 1");
  out.clear();
  const auto center = cell_of(x);
  if (!center || cells_.empty()) return;
  const double r2 = radius * radius;
  const int hx = config_.kernel_size[0] / 2;
  const int hy = config_.kernel_size[1] / 2;
  const int hz = config_.kernel_size[2] / 2;
  for (int dz = -hz; dz <= hz; ++dz) {
    for (int dy = -hy; dy <= hy; ++dy) {
      for (int dx = -hx; dx <= hx; ++dx) {
        const auto it = cells_.find(key({(*center)[0] + dx, (*center)[1] + dy, (*center)[2] + dz}));
        if (it == cells_.end()) continue;
        for (int i : it->second) {
          const double d2 = (points_[i] - x).squaredNorm();
          if (d2 <= r2) out.push_back({i, d2});
        }
      }
    }
  }
  auto closer = [](const Neighbor& a, const Neighbor& b) {
    return a.distance2 < b.distance2 || (a.distance2 == b.distance2 && a.index < b.index);
  };
  if (out.size() > static_cast<std::size_t>(k)) {
    std::partial_sort(out.begin(), out.begin() + k, out.end(), closer);
    out.resize(k);
  } else {
    std::sort(out.begin(), out.end(), closer);
  }
}

}  // namespace lpsurf
