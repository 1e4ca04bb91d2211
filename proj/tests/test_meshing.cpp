#include "doctest.h"

#include "lpsurf/meshing.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>

using namespace lpsurf;

namespace {

double signed_volume(const TriangleMesh& m) {
  double v = 0.0;
  for (const auto& f : m.faces) v += m.vertices[f[0]].dot(m.vertices[f[1]].cross(m.vertices[f[2]])) / 6.0;
  return v;
}

}  // namespace

TEST_CASE("marching cubes on analytic fields") {
  ExtractionConfig cfg;
  cfg.resolution = 64;
  {
    const auto mesh = extract_mesh([](const Vec3& x) { return x.norm() - 0.5; }, cfg);
    REQUIRE(!mesh.faces.empty());
    for (const auto& v : mesh.vertices) CHECK(std::abs(v.norm() - 0.5) < 0.05);
    // Vertices lie on the discrete zero set: |s| below one cell diagonal of variation.
    const double cell = 2.0 / 64;
    for (const auto& v : mesh.vertices) CHECK(std::abs(v.norm() - 0.5) < cell);
    CHECK(mesh.is_watertight());
    // Outward orientation: positive enclosed volume close to the ball's.
    const double volume = 4.0 / 3.0 * std::numbers::pi * 0.125;
    CHECK(signed_volume(mesh) == doctest::Approx(volume).epsilon(0.02));
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
      const Vec3 c = (mesh.vertices[mesh.faces[f][0]] + mesh.vertices[mesh.faces[f][1]] + mesh.vertices[mesh.faces[f][2]]) / 3.0;
      CHECK(mesh.face_normal(f).dot(c) > 0.0);
    }
    const auto again = extract_mesh([](const Vec3& x) { return x.norm() - 0.5; }, cfg);
    CHECK(again.vertices == mesh.vertices);
    CHECK(again.faces == mesh.faces);
  }
  CHECK(extract_mesh([](const Vec3& x) { return x.norm() + 0.1; }, cfg).faces.empty());
  {
    cfg.resolution = 16;
    const auto mesh = extract_mesh([](const Vec3& x) { return x.z() - 0.01; }, cfg);
    REQUIRE(!mesh.faces.empty());
    for (const auto& v : mesh.vertices) CHECK(v.z() == doctest::Approx(0.01));
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) CHECK(mesh.face_normal(f).z() == doctest::Approx(1.0));
    // One flat sheet spanning the bounds.
    CHECK(mesh.area() == doctest::Approx(4.0));
  }
  CHECK_THROWS_AS(extract_mesh([](const Vec3&) { return 1.0; }, ExtractionConfig{4}), std::invalid_argument);
  ExtractionConfig flat;
  flat.bounds.hi.x() = flat.bounds.lo.x();
  CHECK_THROWS_AS(extract_mesh([](const Vec3&) { return 1.0; }, flat), std::invalid_argument);
}

TEST_CASE("unknown vertices and component filtering") {
  ScalarGrid grid{8, Aabb{}, {}, {}};
  grid.values.resize(9 * 9 * 9);
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 9; ++j)
      for (int i = 0; i < 9; ++i) grid.values[grid.index(i, j, k)] = grid.position(i, j, k).z() - 0.1;
  const auto full = marching_cubes(grid);
  grid.known.assign(grid.values.size(), 1);
  for (int k = 0; k < 9; ++k)
    for (int j = 0; j < 9; ++j) grid.known[grid.index(0, j, k)] = 0;
  const auto cut = marching_cubes(grid);
  CHECK(cut.faces.size() * 8 == full.faces.size() * 7);
  for (const auto& v : cut.vertices) CHECK(v.x() >= -0.75);

  ExtractionConfig cfg;
  cfg.resolution = 40;
  auto two = [](const Vec3& x) { return std::min((x - Vec3(0.4, 0, 0)).norm() - 0.3, (x + Vec3(0.5, 0, 0)).norm() - 0.12); };
  const auto both = extract_mesh(two, cfg);
  cfg.min_component_faces = 400;
  const auto big = extract_mesh(two, cfg);
  CHECK(big.faces.size() < both.faces.size());
  CHECK(!big.faces.empty());
  for (const auto& v : big.vertices) CHECK(v.x() > 0.0);
  CHECK(big.is_watertight());
}

TEST_CASE("field extraction") {
  FieldConfig cfg = lpsurf::testing::small_config();
  cfg.geometry_dim = 1;
  const auto pts = lpsurf::testing::sphere_points(0.3, 400, 3);
  FieldModel m(pts, cfg, 4);
  // Linear field s = z - 0.1 (see the spatial gradient test).
  auto lat = m.params[m.points.geometry_latents].matrix();
  for (std::size_t i = 0; i < pts.size(); ++i) lat(0, static_cast<Eigen::Index>(i)) = pts[i].z() - 0.1;
  for (int l = 0; l < 4; ++l) {
    auto w = m.params["geometry_local." + std::to_string(l) + ".weight"].matrix();
    auto& b = m.params["geometry_local." + std::to_string(l) + ".bias"].value;
    w.setZero();
    b.setZero();
    w(0, 0) = 1.0;
    if (l == 0) {
      w(0, 3) = 1.0 / cfg.relative_scale;
      b[0] = 10.0;
    }
  }
  m.params["geometry_head.0.weight"].value.setZero();
  m.params["geometry_head.0.weight"].value[0] = 1.0;
  m.params["geometry_head.0.bias"].value[0] = -10.0;
  ExtractionConfig ec;
  ec.resolution = 48;
  const auto mesh = extract_mesh(m.view(), ec);
  REQUIRE(!mesh.faces.empty());
  for (const auto& v : mesh.vertices) {
    CHECK(v.z() == doctest::Approx(0.1).epsilon(1e-9));
    // Edge endpoints are within the radius, so the vertex is within half a cell more.
    CHECK(!m.points.grid.query(v, 1, cfg.radius + 0.5 * std::sqrt(3.0) * 2.0 / 48).empty());
  }
  // Only the band around the points is meshed.
  CHECK(mesh.area() < 0.35);
}

TEST_CASE("mesh sampling") {
  const auto sphere = TriangleMesh::icosphere(0.5, 3);
  const auto pts = sample_mesh_points(sphere, 2000, 1);
  CHECK(pts.size() == 2000);
  for (const auto& p : pts) CHECK(p.norm() <= 0.5 + 1e-12);
  CHECK(sample_mesh_points(sphere, 50, 1) == std::vector<Vec3>(pts.begin(), pts.begin() + 50));
  CHECK_THROWS_AS(sample_mesh_points(TriangleMesh{}, 5, 1), std::invalid_argument);
}

TEST_CASE("chamfer distance") {
  const std::vector<Vec3> a = lpsurf::testing::sphere_points(0.5, 300, 1);
  CHECK(chamfer_distance(a, a) == 0.0);
  const std::vector<Vec3> o{Vec3::Zero()}, x{Vec3(1, 0, 0)};
  CHECK(chamfer_distance(o, x) == 1.0);
  const auto b = lpsurf::testing::sphere_points(0.45, 200, 2);
  CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)).epsilon(1e-15));
  CHECK(chamfer_distance(a, b) > 0.0);
  CHECK_THROWS_AS(chamfer_distance(a, {}), std::invalid_argument);
  CHECK_THROWS_AS(chamfer_distance({}, a), std::invalid_argument);

  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Vec3> p, q;
    for (int i = 0; i < 2000; ++i) p.emplace_back(u(rng), u(rng), 0.3 * u(rng));
    for (int i = 0; i < 2000; ++i) q.emplace_back(u(rng) + trial, u(rng), u(rng));
    const auto brute = nearest_distances(p, q, NearestSearch::brute_force);
    const auto grid = nearest_distances(p, q, NearestSearch::grid);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(brute[i] - grid[i]) <= 1e-12);
    CHECK(std::abs(chamfer_distance(p, q, NearestSearch::grid) - chamfer_distance(p, q, NearestSearch::brute_force)) <= 1e-12);
  }
}

TEST_CASE("psnr and results") {
  Image a(4, 4, Rgb(0.5, 0.5, 0.5));
  CHECK(psnr(a, a) == 99.0);
  Image b(4, 4, Rgb(0.6, 0.6, 0.6));
  CHECK(psnr(b, a) == doctest::Approx(20.0));
  Image c(4, 4, Rgb(0.51, 0.49, 0.51));
  CHECK(psnr(c, a) == doctest::Approx(40.0));
  CHECK_THROWS_AS(psnr(a, Image(4, 5)), std::invalid_argument);

  const auto path = std::filesystem::temp_directory_path() / "lpsurf_results_test.csv";
  std::filesystem::remove(path);
  append_result(path, "s", "psnr", 20.5);
  append_result(path, "s", "chamfer", 0.25);
  std::ifstream in(path);
  std::string l0, l1, l2;
  std::getline(in, l0);
  std::getline(in, l1);
  std::getline(in, l2);
  CHECK(l0 == "scene,metric,value");
  CHECK(l1 == "s,psnr,20.5");
  CHECK(l2 == "s,chamfer,0.25");
  std::filesystem::remove(path);
}

TEST_CASE("latent analysis") {
  {
    const Matrix same = Vector::LinSpaced(8, 0.1, 0.8).replicate(1, 30);
    const auto r = latent_analysis(same, 3, 4, 1);
    CHECK(r.projection.cwiseAbs().maxCoeff() < 1e-12);
    for (int l : r.labels) CHECK(l == r.labels[0]);
  }
  {
    Rng rng = make_rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    Vector dir = Vector::Random(16).normalized();
    Matrix line(16, 100);
    for (int i = 0; i < 100; ++i) line.col(i) = Vector::Constant(16, 0.3) + n(rng) * dir;
    const auto r = latent_analysis(line, 3, 2, 3);
    CHECK(r.explained_variance[0] > 0.99);
    // Largest-magnitude loading positive: projection agrees with the signed direction.
    Eigen::Index at;
    dir.cwiseAbs().maxCoeff(&at);
    const double s = dir[at] > 0 ? 1.0 : -1.0;
    const Vector expected = s * (dir.transpose() * (line.colwise() - line.rowwise().mean())).transpose();
    CHECK((r.projection.row(0).transpose() - expected).norm() < 1e-9);
    CHECK_THROWS_AS(latent_analysis(line, 3, 101, 3), std::invalid_argument);
    CHECK_THROWS_AS(latent_analysis(line.leftCols(2), 3, 1, 3), std::invalid_argument);
  }
  {
    // Well separated blobs are recovered exactly.
    Rng rng = make_rng(4);
    std::normal_distribution<double> n(0.0, 0.05);
    Matrix data(4, 90);
    std::vector<int> truth;
    for (int i = 0; i < 90; ++i) {
      const int c = i % 3;
      data.col(i) = Vector::Constant(4, 2.0 * c) + Vector::NullaryExpr(4, [&] { return n(rng); });
      truth.push_back(c);
    }
    const auto labels = kmeans(data, 3, 5);
    CHECK(adjusted_rand_index(labels, truth) == doctest::Approx(1.0));
    CHECK(kmeans(data, 3, 5) == labels);
  }
  const std::vector<int> a{0, 0, 1, 1}, b{0, 0, 1, 2}, c{5, 5, 7, 7};
  CHECK(adjusted_rand_index(a, b) == doctest::Approx(0.5714285714285715));
  CHECK(adjusted_rand_index(a, c) == 1.0);
  CHECK(octant(Vec3(1, -1, 1)) == 5);
  CHECK(octant(Vec3(-1, 1, -1)) == 2);
  const auto colors = projection_colors(Matrix::Random(3, 10));
  for (const auto& col : colors) CHECK((col.array() >= 0.0).all());
}
