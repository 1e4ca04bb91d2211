#pragma once

// Hashed voxel grid over a fixed point set for bounded-window K-nearest
// neighbor queries.

#include "lpsurf/common.hpp"

#include <array>
#include <span>
#include <unordered_map>
#include <vector>

namespace lpsurf {

struct VoxelGridConfig {
  Vec3 voxel_size = Vec3::Constant(0.025);
  Vec3 voxel_scale = Vec3::Constant(2.0);
  std::array<int, 3> kernel_size{3, 3, 3};
  int max_points_per_voxel = 26;
  int max_occupied_voxels = 20000;
  Aabb ranges;

  /// Throws std::invalid_argument on non-positive sizes or even kernels.
  void validate() const;
  Vec3 cell_size() const { return voxel_size.cwiseProduct(voxel_scale); }
};

using CellCoord = std::array<int, 3>;

struct Neighbor {
  int index = 0;
  double distance2 = 0.0;
};

class VoxelGrid {
 public:
  VoxelGrid() = default;
  /// Points outside `config.ranges` are skipped with a warning. Throws
  /// std::runtime_error when more than max_occupied_voxels cells are needed.
  VoxelGrid(std::span<const Vec3> points, const VoxelGridConfig& config);

  /// Up to k points from the kernel window around x's cell with squared
  /// distance <= radius^2, sorted by (distance, index). Empty outside ranges.
  std::vector<Neighbor> query(const Vec3& x, int k, double radius) const;
  /// Same as query() but reuses `out`.
  void query(const Vec3& x, int k, double radius, std::vector<Neighbor>& out) const;

  std::optional<CellCoord> cell_of(const Vec3& x) const;
  /// Indices stored in a cell (insertion order); empty span when unoccupied.
  std::span<const int> cell_points(const CellCoord& cell) const;
  std::size_t occupied_voxels() const { return cells_.size(); }
  std::size_t stored_points() const;
  const std::vector<Vec3>& points() const { return points_; }
  const VoxelGridConfig& config() const { return config_; }

 private:
  static std::uint64_t key(const CellCoord& c);

  VoxelGridConfig config_;
  std::vector<Vec3> points_;
  std::unordered_map<std::uint64_t, std::vector<int>> cells_;
};

}  // namespace lpsurf
