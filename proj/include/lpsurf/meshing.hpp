#pragma once

// Mesh extraction from signed distance fields, reconstruction metrics, and
// principal-component / cluster analysis of point latents.

#include "lpsurf/field.hpp"
#include "lpsurf/geometry.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace lpsurf {

struct ExtractionConfig {
  int resolution = 128;  // cells per axis
  Aabb bounds;
  double iso = 0.0;
  std::size_t min_component_faces = 0;  // smaller connected components are dropped

  void validate() const;
};

/// Samples of a scalar field on the (resolution + 1)^3 vertices of a grid.
/// Vertices flagged unknown do not contribute: cells touching one are skipped.
struct ScalarGrid {
  int resolution = 0;
  Aabb bounds;
  std::vector<double> values;  // x fastest, then y, then z
  std::vector<char> known;     // empty means every vertex is known

  int side() const { return resolution + 1; }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * side() + j) * side() + i;
  }
  Vec3 position(int i, int j, int k) const;
};

/// Marching cubes on a sampled grid. Vertices are placed on cell edges by
/// linear interpolation; triangles wind counter-clockwise seen from the
/// positive side. No sign change gives an empty mesh.
TriangleMesh marching_cubes(const ScalarGrid& grid, double iso = 0.0);

/// Samples `sdf` at every grid vertex, then extracts the iso surface.
TriangleMesh extract_mesh(const std::function<double(const Vec3&)>& sdf, const ExtractionConfig& config);

/// Extraction from a neural point field. Only vertices within the query
/// radius of some neural point are evaluated; the rest are unknown.
TriangleMesh extract_mesh(const FieldView& field, const ExtractionConfig& config);

/// Removes connected components (sharing vertices) with fewer than `min_faces` faces.
TriangleMesh filter_components(const TriangleMesh& mesh, std::size_t min_faces);

/// Area-uniform samples on the triangles of `mesh`.
std::vector<Vec3> sample_mesh_points(const TriangleMesh& mesh, std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics

enum class NearestSearch { automatic, brute_force, grid };

/// Distance from every point of `from` to its nearest point of `to`.
/// `automatic` uses brute force when both sets have at most 5000 points.
std::vector<double> nearest_distances(std::span<const Vec3> from, std::span<const Vec3> to,
                                      NearestSearch search = NearestSearch::automatic);

/// (mean nearest distance A->B + mean nearest distance B->A) / 2. Throws
/// std::invalid_argument when either set is empty.
double chamfer_distance(std::span<const Vec3> a, std::span<const Vec3> b,
                        NearestSearch search = NearestSearch::automatic);

/// 10 log10(1 / MSE) over all channels, capped at 99 dB.
double psnr(const Image& image, const Image& reference);

/// Appends "scene,metric,value" (header written when the file is new).
void append_result(const std::filesystem::path& csv, const std::string& scene, const std::string& metric,
                   double value);

// ---------------------------------------------------------------------------
// Latent analysis

struct LatentAnalysis {
  Matrix projection;         // n_components x points
  Vector explained_variance;  // fraction of total variance per component
  std::vector<int> labels;   // k-means cluster per point
};

/// PCA of the centered columns of `latents` (dim x points), each axis signed
/// so its largest-magnitude loading is positive, plus seeded k-means++ on the
/// latents. Throws std::invalid_argument when there are fewer points than
/// components or clusters.
LatentAnalysis latent_analysis(const Matrix& latents, int n_components, int k_clusters, std::uint64_t seed);

/// k-means with k-means++ seeding; Lloyd iterations until assignments settle.
std::vector<int> kmeans(const Matrix& data, int k, std::uint64_t seed, int max_iterations = 100);

double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

/// Octant of a direction: bit 0 for x > 0, bit 1 for y > 0, bit 2 for z > 0.
int octant(const Vec3& direction);

/// First three projection rows mapped to [0, 1] per row (missing rows gray).
std::vector<Rgb> projection_colors(const Matrix& projection);

}  // namespace lpsurf
