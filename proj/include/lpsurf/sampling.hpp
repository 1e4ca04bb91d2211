#pragma once

// Point sampling for prior training and reconstruction seeding: surface
// samples, farthest point thinning, labeled near-surface query points, point
// jitter, and depth unprojection.

#include "lpsurf/geometry.hpp"

#include <span>
#include <vector>

namespace lpsurf {

struct QuerySample {
  Vec3 x = Vec3::Zero();
  double s = 0.0;  // ground-truth signed distance
};

struct SeedPointSet {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;  // empty or one per point
};

/// Approximately uniform-by-area samples on the part of the surface inside
/// `bounds`.
std::vector<Vec3> sample_surface(const Shape& shape, std::size_t count, Rng& rng,
                                 const Aabb& bounds = Aabb{});
/// Surface area inside `bounds` (planes are clipped by a fixed Monte Carlo estimate).
double surface_area(const Shape& shape, const Aabb& bounds = Aabb{});

/// Greedy max-min selection from `start`; stops once the largest remaining
/// min-distance falls below `spacing`. Ties pick the lowest index.
std::vector<std::size_t> farthest_point_indices(std::span<const Vec3> points, double spacing,
                                                std::size_t start);

/// farthest_point_indices from a start index drawn from `seed`.
SeedPointSet farthest_point_sample(std::span<const Vec3> points, double spacing, std::uint64_t seed,
                                   std::span<const Rgb> colors = {});

/// Surface samples displaced by N(0, variance) per coordinate, an equal share
/// of `count` per variance tier, labeled with the exact signed distance and
/// rebalanced so positive and negative labels differ by at most one.
std::vector<QuerySample> sample_query_points(const Shape& shape, std::size_t count,
                                             std::span<const double> variances, std::uint64_t seed,
                                             const Aabb& bounds = Aabb{});

/// Adds N(0, variance) to every coordinate.
std::vector<Vec3> jitter_points(std::span<const Vec3> points, double variance, std::uint64_t seed);

/// Back-projects every `stride`-th pixel with finite depth, then thins the set
/// to `spacing` with farthest point sampling. Throws when no pixel has depth.
SeedPointSet unproject_depth(const Image& color, const DepthMap& depth, const Camera& camera,
                             int stride, double spacing, std::uint64_t seed);

/// Concatenates the unprojections of several views before thinning.
SeedPointSet unproject_views(std::span<const View> views, int stride, double spacing,
                             std::uint64_t seed);

}  // namespace lpsurf
