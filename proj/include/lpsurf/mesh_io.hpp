#pragma once

// File formats for geometry: ASCII OBJ and binary little-endian PLY meshes,
// PLY point sets, 8-bit PNG images, and raw depth grids.
//
// Depth grid layout: uint32 width, uint32 height (little endian), followed by
// width*height float32 little-endian values in row-major order. Misses
// (+infinity in memory) are stored as the largest finite float32.

#include "lpsurf/geometry.hpp"

#include <filesystem>
#include <stdexcept>

namespace lpsurf {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TriangleMesh read_obj(const std::filesystem::path& path);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

TriangleMesh read_ply(const std::filesystem::path& path);
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path);

/// Reads .obj or .ply by extension.
TriangleMesh read_mesh(const std::filesystem::path& path);

struct PointCloudData {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;  // empty or one per point
};
void write_point_ply(const PointCloudData& cloud, const std::filesystem::path& path);
PointCloudData read_point_ply(const std::filesystem::path& path);

void write_png(const Image& image, const std::filesystem::path& path);
Image read_png(const std::filesystem::path& path);

void write_depth(const DepthMap& depth, const std::filesystem::path& path);
DepthMap read_depth(const std::filesystem::path& path);

}  // namespace lpsurf
