#include "doctest.h"

#include "lpsurf/spatial_index.hpp"

#include <algorithm>
#include <cmath>

using namespace lpsurf;

namespace {

// Scans every stored point, keeps those in the kernel window and the radius,
// then sorts by (distance, index).
std::vector<int> brute_force(const VoxelGrid& grid, const Vec3& x, int k, double radius) {
  const auto& cfg = grid.config();
  const auto center = grid.cell_of(x);
  if (!center) return {};
  std::vector<std::pair<double, int>> found;
  for (std::size_t i = 0; i < grid.points().size(); ++i) {
    const auto cell = grid.cell_of(grid.points()[i]);
    if (!cell) continue;
    bool in_window = true;
    for (int a = 0; a < 3; ++a) in_window = in_window && std::abs((*cell)[a] - (*center)[a]) <= cfg.kernel_size[a] / 2;
    const double d2 = (grid.points()[i] - x).squaredNorm();
    if (in_window && d2 <= radius * radius) found.emplace_back(d2, static_cast<int>(i));
  }
  std::sort(found.begin(), found.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < found.size() && i < static_cast<std::size_t>(k); ++i) out.push_back(found[i].second);
  return out;
}

std::vector<int> indices(const std::vector<Neighbor>& n) {
  std::vector<int> out;
  for (const auto& x : n) out.push_back(x.index);
  return out;
}

}  // namespace

TEST_CASE("grid construction") {
  VoxelGridConfig cfg;
  const VoxelGrid empty(std::vector<Vec3>{}, cfg);
  CHECK(empty.occupied_voxels() == 0);
  CHECK(empty.query(Vec3::Zero(), 8, 0.1).empty());

  const std::vector<Vec3> same(27, Vec3(0.01, 0.02, 0.03));
  const VoxelGrid full(same, cfg);
  CHECK(full.occupied_voxels() == 1);
  const auto cell = full.cell_points(*full.cell_of(same[0]));
  CHECK(cell.size() == 26);
  CHECK(cell.front() == 0);
  CHECK(cell.back() == 25);

  const std::vector<Vec3> two{Vec3(0.01, 0.01, 0.01), Vec3(0.06, 0.01, 0.01)};
  CHECK(VoxelGrid(two, cfg).occupied_voxels() == 2);

  VoxelGridConfig tight = cfg;
  tight.max_occupied_voxels = 1;
  CHECK_THROWS_AS(VoxelGrid(two, tight), std::runtime_error);

  const auto warnings = warning_count();
  const std::vector<Vec3> outside{Vec3(2, 0, 0), Vec3::Zero()};
  const VoxelGrid partial(outside, cfg);
  CHECK(partial.stored_points() == 1);
  CHECK(warning_count() == warnings + 1);

  VoxelGridConfig even = cfg;
  even.kernel_size = {2, 3, 3};
  CHECK_THROWS_AS(even.validate(), std::invalid_argument);
}

TEST_CASE("queries") {
  VoxelGridConfig cfg;
  const std::vector<Vec3> one{Vec3(0.1, 0.1, 0.1)};
  CHECK(indices(VoxelGrid(one, cfg).query(Vec3(0.12, 0.1, 0.1), 8, 0.075)) == std::vector<int>{0});

  const std::vector<Vec3> three{Vec3(0.13, 0.1, 0.1), Vec3(0.1, 0.1, 0.1), Vec3(0.1, 0.14, 0.1)};
  const auto found = VoxelGrid(three, cfg).query(Vec3(0.1, 0.1, 0.1), 8, 0.075);
  CHECK(indices(found) == std::vector<int>{1, 0, 2});

  // Equal distances resolve by index.
  const std::vector<Vec3> tie{Vec3(0.12, 0.1, 0.1), Vec3(0.08, 0.1, 0.1)};
  CHECK(indices(VoxelGrid(tie, cfg).query(Vec3(0.1, 0.1, 0.1), 1, 0.075)) == std::vector<int>{0});

  CHECK(VoxelGrid(one, cfg).query(Vec3(1.5, 0, 0), 8, 1.0).empty());
  CHECK_THROWS_AS(VoxelGrid(one, cfg).query(Vec3::Zero(), 0, 1.0), std::invalid_argument);
}

TEST_CASE("queries equal the brute-force oracle") {
  VoxelGridConfig cfg;
  Rng rng = make_rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> local(-0.15, 0.15);
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<Vec3> pts;
    // Clustered points make the window and K limits bite.
    for (int i = 0; i < 1000; ++i) pts.emplace_back(0.3 * u(rng), 0.3 * u(rng), 0.3 * u(rng));
    const VoxelGrid grid(pts, cfg);
    for (int q = 0; q < 100; ++q) {
      const Vec3 x(0.35 * u(rng), 0.35 * u(rng), 0.35 * u(rng));
      for (int k : {4, 8}) {
        for (double radius : {0.075, 0.2}) CHECK(indices(grid.query(x, k, radius)) == brute_force(grid, x, k, radius));
      }
    }
  }
}
