#include "doctest.h"

#include "lpsurf/geometry.hpp"
#include "lpsurf/mesh_io.hpp"
#include "lpsurf/sampling.hpp"

#include <cmath>
#include <filesystem>

using namespace lpsurf;

namespace {

Camera camera_at(const Vec3& position, int size = 64, double focal = 64.0) {
  Mat3 k = Mat3::Identity();
  k(0, 0) = focal;
  k(1, 1) = focal;
  k(0, 2) = size / 2.0;
  k(1, 2) = size / 2.0;
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 3) = position;
  return Camera(k, pose, size, size);
}

}  // namespace

TEST_CASE("analytic signed distances") {
  const Shape sphere = make_sphere(Vec3::Zero(), 0.5);
  CHECK(analytic_sdf(sphere, Vec3::Zero()) == doctest::Approx(-0.5));
  CHECK(analytic_sdf(sphere, Vec3(1, 0, 0)) == doctest::Approx(0.5));
  CHECK(analytic_sdf(make_plane(Vec3::UnitZ(), 0.0), Vec3(0, 0, -0.3)) == doctest::Approx(-0.3));
  CHECK(analytic_sdf(make_box(Vec3::Zero(), Vec3::Constant(0.5)), Vec3(1, 0, 0)) == doctest::Approx(0.5));
  CHECK(analytic_sdf(make_torus(Vec3::Zero(), 0.3, 0.1), Vec3(0.3, 0, 0)) == doctest::Approx(-0.1));
  CHECK(analytic_sdf(make_capsule(Vec3::Zero(), Vec3(0, 0, 1), 0.1), Vec3(0, 0, 1.5)) == doctest::Approx(0.4));
  CHECK_THROWS_AS(analytic_sdf(make_mesh_shape(TriangleMesh::icosphere(0.5, 1)), Vec3::Zero()),
                  std::invalid_argument);
}

TEST_CASE("analytic distance matches dense surface sampling") {
  const std::vector<Shape> shapes = {make_sphere(Vec3(0.1, 0, 0), 0.4), make_box(Vec3::Zero(), Vec3(0.3, 0.2, 0.4)),
                                     make_torus(Vec3::Zero(), 0.35, 0.12),
                                     make_capsule(Vec3(-0.2, 0, 0), Vec3(0.3, 0.1, 0), 0.15)};
  Rng rng = make_rng(7);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  for (const auto& shape : shapes) {
    const auto surface = sample_surface(shape, 10000, rng);
    for (int i = 0; i < 20; ++i) {
      const Vec3 x(u(rng), u(rng), u(rng));
      double best = 1e9;
      for (const auto& p : surface) best = std::min(best, (p - x).norm());
      const double d = std::abs(analytic_sdf(shape, x));
      CHECK(d <= best + 1e-9);
      CHECK(best - d < 0.03);
    }
  }
}

TEST_CASE("mesh signed distance") {
  const Shape cube = make_mesh_shape(TriangleMesh::box(Vec3::Zero(), Vec3::Constant(0.5)));
  CHECK(signed_distance(cube, Vec3::Zero()) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(signed_distance(cube, Vec3(1, 0, 0)) == doctest::Approx(0.5).epsilon(1e-12));

  const Shape ico = make_mesh_shape(TriangleMesh::icosphere(0.5, 4));
  CHECK(std::abs(signed_distance(ico, Vec3(0.6, 0, 0)) - 0.1) < 2e-3);

  // Error against the analytic sphere shrinks with subdivision.
  Rng rng = make_rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec3> probes;
  for (int i = 0; i < 200; ++i) probes.push_back(Vec3(n(rng), n(rng), n(rng)).normalized() * (0.3 + 0.5 * std::abs(n(rng)) / 3));
  double previous = 1e9;
  for (int level = 2; level <= 4; ++level) {
    const auto mesh = make_mesh_shape(TriangleMesh::icosphere(0.5, level));
    double worst = 0.0;
    for (const auto& p : probes) worst = std::max(worst, std::abs(signed_distance(mesh, p) - (p.norm() - 0.5)));
    CHECK(worst < previous);
    previous = worst;
  }

  TriangleMesh open = TriangleMesh::box(Vec3::Zero(), Vec3::Constant(0.5));
  open.faces.pop_back();
  CHECK_FALSE(open.is_watertight());
  CHECK_THROWS_AS(make_mesh_shape(open), std::invalid_argument);
}

TEST_CASE("camera rays") {
  const Camera cam = camera_at(Vec3::Zero());
  const Ray center = cam.ray_through(32.0, 32.0);
  CHECK((center.direction - Vec3::UnitZ()).norm() < 1e-12);

  const Camera moved = camera_at(Vec3(0, 0, -2));
  const Ray r = moved.ray_through(32.0, 32.0);
  CHECK((r.origin - Vec3(0, 0, -2)).norm() < 1e-12);
  CHECK((r.direction - Vec3::UnitZ()).norm() < 1e-12);

  const Ray corner = cam.generate_ray(0, 0);
  const Vec3 expected = Vec3((0.5 - 32.0) / 64.0, (0.5 - 32.0) / 64.0, 1.0).normalized();
  CHECK((corner.direction - expected).norm() < 1e-12);
  CHECK(std::abs(corner.direction.norm() - 1.0) < 1e-9);

  CHECK_THROWS_AS(cam.generate_ray(64, 0), std::out_of_range);
  CHECK_THROWS_AS(cam.generate_ray(0, -1), std::out_of_range);

  Mat3 bad = Mat3::Identity();
  bad(1, 0) = 0.5;
  CHECK_THROWS_AS(Camera(bad, Mat4::Identity(), 8, 8), std::invalid_argument);
  Mat4 skew = Mat4::Identity();
  skew(0, 1) = 0.1;
  CHECK_THROWS_AS(Camera(Mat3::Identity(), skew, 8, 8), std::invalid_argument);
}

TEST_CASE("ground truth rendering") {
  Scene scene;
  scene.objects.push_back({make_sphere(Vec3::Zero(), 0.5), ConstantAlbedo{Rgb(0.2, 0.4, 0.6)}});
  scene.background = Rgb(1, 0, 0);
  const Camera cam = camera_at(Vec3(0, 0, -2));
  const auto view = render_ground_truth(scene, cam);
  // Pixel (32, 32) centers at 32.5, slightly off axis; compare with the analytic hit.
  CHECK(view.depth.at(32, 32) == doctest::Approx(1.5).epsilon(1e-3));
  const Ray ray = cam.generate_ray(32, 32);
  const double b = ray.origin.dot(ray.direction);
  const double t = -b - std::sqrt(b * b - (ray.origin.squaredNorm() - 0.25));
  CHECK(view.depth.at(32, 32) == doctest::Approx(t).epsilon(1e-8));
  CHECK(std::isinf(view.depth.at(0, 0)));
  CHECK((view.color.at(0, 0) - scene.background).norm() == 0.0);
  for (int v = 0; v < 64; ++v) {
    for (int u = 0; u < 64; ++u) {
      if (std::isfinite(view.depth.at(u, v))) CHECK((view.color.at(u, v) - Rgb(0.2, 0.4, 0.6)).norm() == 0.0);
    }
  }
  // Reprojection of hit points.
  for (int v = 0; v < 64; v += 5) {
    for (int u = 0; u < 64; u += 5) {
      if (!std::isfinite(view.depth.at(u, v))) continue;
      const Vec3 p = cam.generate_ray(u, v).at(view.depth.at(u, v));
      const auto proj = cam.project(p);
      REQUIRE(proj);
      CHECK((proj->pixel - Vec2(u + 0.5, v + 0.5)).norm() < 1e-6);
    }
  }
}

TEST_CASE("sphere tracing agrees with mesh intersection") {
  Scene analytic;
  analytic.objects.push_back({make_sphere(Vec3::Zero(), 0.5), ConstantAlbedo{}});
  Scene tessellated;
  tessellated.objects.push_back({make_mesh_shape(TriangleMesh::icosphere(0.5, 4)), ConstantAlbedo{}});
  const Camera cam = camera_at(Vec3(0, 0, -2), 32, 32.0);
  const auto a = render_ground_truth(analytic, cam);
  const auto m = render_ground_truth(tessellated, cam);
  int compared = 0;
  for (std::size_t i = 0; i < a.depth.depth.size(); ++i) {
    if (std::isfinite(a.depth.depth[i]) && std::isfinite(m.depth.depth[i])) {
      CHECK(std::abs(a.depth.depth[i] - m.depth.depth[i]) < 5e-3);
      ++compared;
    }
  }
  CHECK(compared > 100);
}

TEST_CASE("checker albedo alternates") {
  SceneObject obj{make_plane(Vec3::UnitZ(), 0.0), CheckerAlbedo{Rgb::Ones(), Rgb::Zero(), 0.25}};
  const Rgb a = evaluate_albedo(obj, Vec3(0.0, 0.0, 0.0));
  const Rgb b = evaluate_albedo(obj, Vec3(0.25, 0.0, 0.0));
  CHECK((a - b).norm() > 0.5);
}

TEST_CASE("mesh and depth file roundtrips") {
  const auto dir = std::filesystem::temp_directory_path() / "lpsurf_geometry_test";
  std::filesystem::create_directories(dir);
  TriangleMesh mesh = TriangleMesh::icosphere(0.5, 1);
  write_obj(mesh, dir / "m.obj");
  write_ply(mesh, dir / "m.ply");
  for (const auto& path : {dir / "m.obj", dir / "m.ply"}) {
    const auto back = read_mesh(path);
    CHECK(back.faces == mesh.faces);
    REQUIRE(back.vertices.size() == mesh.vertices.size());
    for (std::size_t i = 0; i < back.vertices.size(); ++i) CHECK((back.vertices[i] - mesh.vertices[i]).norm() < 1e-6);
  }
  DepthMap depth(3, 2);
  depth.at(1, 1) = 1.25;
  write_depth(depth, dir / "d.bin");
  const auto d = read_depth(dir / "d.bin");
  CHECK(d.at(1, 1) == 1.25);
  CHECK(std::isinf(d.at(0, 0)));
  CHECK(std::filesystem::file_size(dir / "d.bin") == 8 + 6 * 4);

  Image img(4, 3, Rgb(0.5, 0.25, 1.0));
  write_png(img, dir / "i.png");
  const auto back = read_png(dir / "i.png");
  CHECK(back.width == 4);
  CHECK(std::abs(back.at(2, 1).x() - 128.0 / 255.0) < 1e-12);
  std::filesystem::remove_all(dir);
}
