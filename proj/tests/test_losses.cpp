#include "doctest.h"

#include "lpsurf/losses.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace lpsurf;
using lpsurf::testing::small_config;
using lpsurf::testing::sphere_points;

TEST_CASE("sdf loss") {
  const std::vector<double> s{0.5};
  CHECK(sdf_loss(s, Vector::Constant(1, 0.5), 0.01).value == 0.0);
  CHECK(sdf_loss(s, Vector::Constant(1, 1.0), 0.01).value == doctest::Approx(0.98039).epsilon(1e-5));
  const std::vector<double> zero{0.0};
  CHECK(sdf_loss(zero, Vector::Constant(1, 0.1), 0.01).value == doctest::Approx(10.0));
  CHECK_THROWS_AS(sdf_loss(zero, Vector::Constant(1, 0.1), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(sdf_loss(s, Vector::Zero(2), 0.01), std::invalid_argument);
  // Mean over pairs.
  const std::vector<double> two{0.5, 0.5};
  Vector pred(2);
  pred << 1.0, 0.5;
  const auto l = sdf_loss(two, pred, 0.01);
  CHECK(l.value == doctest::Approx(0.98039 / 2).epsilon(1e-5));
  CHECK(l.gradient[0] == doctest::Approx(1.0 / 0.51 / 2));
}

TEST_CASE("eikonal loss") {
  Matrix g(3, 3);
  g.col(0) = Vec3(1, 0, 0);
  g.col(1) = Vec3(0.6, 0.8, 0);
  g.col(2) = Vec3(0, 0, -1);
  CHECK(eikonal_loss(g).value == doctest::Approx(0.0));
  CHECK(eikonal_loss(Matrix::Zero(3, 4)).value == 1.0);
  Matrix two(3, 2);
  two.col(0) = Vec3(2, 0, 0);
  two.col(1) = Vec3(0, 1.2, 1.6);
  CHECK(eikonal_loss(two).value == doctest::Approx(1.0));
  CHECK(eikonal_loss(Matrix(3, 0)).value == 0.0);
  CHECK_THROWS_AS(eikonal_loss(Matrix::Zero(2, 2)), std::invalid_argument);

  const Matrix x = Matrix::Random(3, 5);
  const auto l = eikonal_loss(x);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix up = x, down = x;
    up.data()[i] += 1e-6;
    down.data()[i] -= 1e-6;
    CHECK(l.gradient[i] == doctest::Approx((eikonal_loss(up).value - eikonal_loss(down).value) / 2e-6).epsilon(1e-6));
  }
}

TEST_CASE("rendering loss") {
  const Matrix a = Matrix::Random(3, 6);
  CHECK(rendering_loss(a, a).value == 0.0);
  Matrix one = Matrix::Zero(3, 1), other = Matrix::Zero(3, 1);
  one(0, 0) = 0.1;
  CHECK(rendering_loss(one, other).value == doctest::Approx(0.1));
  const Matrix b = Matrix::Random(3, 6);
  Matrix ap = a, bp = b;
  const std::vector<int> perm{3, 1, 5, 0, 2, 4};
  for (int i = 0; i < 6; ++i) {
    ap.col(i) = a.col(perm[i]);
    bp.col(i) = b.col(perm[i]);
  }
  CHECK(rendering_loss(ap, bp).value == doctest::Approx(rendering_loss(a, b).value));
  CHECK_THROWS_AS(rendering_loss(a, Matrix::Zero(3, 5)), std::invalid_argument);
}

namespace {

// Two neural points at distance `spacing` on the x axis, cell large enough to see each other.
FieldModel pair_model(double spacing) {
  FieldConfig cfg = small_config();
  cfg.radius = 2.5 * spacing;
  cfg.grid.voxel_size = Vec3::Constant(spacing);
  cfg.grid.voxel_scale = Vec3::Ones();
  cfg.grid.ranges = Aabb{Vec3::Constant(-4), Vec3::Constant(4)};
  return FieldModel({Vec3(0, 0, 0), Vec3(spacing, 0, 0)}, cfg, 1);
}

}  // namespace

TEST_CASE("total variation") {
  {
    FieldModel m = pair_model(1.0);
    auto lat = m.params[m.points.geometry_latents].matrix();
    lat.setZero();
    CHECK(tv_loss(m.view(), LatentKind::geometry, 4, m.config.radius, 1.0, nullptr) == 0.0);
    lat(2, 1) = 1.0;
    CHECK(tv_loss(m.view(), LatentKind::geometry, 4, m.config.radius, 1.0, nullptr) == doctest::Approx(2.0));
  }
  {
    // Homogeneity: same latents, doubled distances.
    FieldModel near = pair_model(0.5);
    FieldModel far = pair_model(1.0);
    far.params[far.points.appearance_latents].value = near.params[near.points.appearance_latents].value;
    const double a = tv_loss(near.view(), LatentKind::appearance, 4, near.config.radius, 1.0, nullptr);
    const double b = tv_loss(far.view(), LatentKind::appearance, 4, far.config.radius, 1.0, nullptr);
    CHECK(b == doctest::Approx(a / 2));
  }
  {
    // Coincident points are skipped with a warning.
    FieldConfig cfg = small_config();
    const FieldModel m({Vec3(0.1, 0.1, 0.1), Vec3(0.1, 0.1, 0.1)}, cfg, 2);
    const auto before = warning_count();
    CHECK(tv_loss(m.view(), LatentKind::geometry, 4, cfg.radius, 1.0, nullptr) == 0.0);
    CHECK(warning_count() > before);
  }
  {
    // Reindexing invariance and gradient.
    FieldConfig cfg = small_config();
    auto pts = sphere_points(0.3, 120, 3);
    FieldModel m(pts, cfg, 4);
    std::vector<int> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), make_rng(5));
    std::vector<Vec3> shuffled;
    for (int i : perm) shuffled.push_back(pts[i]);
    FieldModel s(shuffled, cfg, 4);
    auto src = m.params[m.points.geometry_latents].matrix();
    auto dst = s.params[s.points.geometry_latents].matrix();
    for (std::size_t i = 0; i < perm.size(); ++i) dst.col(static_cast<Eigen::Index>(i)) = src.col(perm[i]);
    const double a = tv_loss(m.view(), LatentKind::geometry, cfg.neighbors, cfg.radius, 1.0, nullptr);
    const double b = tv_loss(s.view(), LatentKind::geometry, cfg.neighbors, cfg.radius, 1.0, nullptr);
    CHECK(a > 0.0);
    CHECK(b == doctest::Approx(a).epsilon(1e-12));

    Gradients grads(m.params);
    tv_loss(m.view(), LatentKind::geometry, cfg.neighbors, cfg.radius, 1.0, &grads);
    auto objective = [&] { return tv_loss(m.view(), LatentKind::geometry, cfg.neighbors, cfg.radius, 1.0, nullptr); };
    m.params.set_frozen("geometry_local", true);
    m.params.set_frozen("geometry_head", true);
    m.params.set_frozen("appearance", true);
    m.params.set_frozen("log_beta", true);
    const auto r = lpsurf::testing::check_store_gradients(m.params, grads, objective, 40, 6);
    INFO(r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("pseudo sdf loss") {
  FieldConfig cfg = small_config();
  FieldModel m(sphere_points(0.3, 100, 7), cfg, 8);
  CHECK(pseudo_sdf_loss(m.view(), {}, 1.0, nullptr) == 0.0);
  const auto pts = sphere_points(0.32, 20, 9);
  const Vec3 single = pts[0];
  const double s = eval_sdf(m.view(), single);
  CHECK(pseudo_sdf_loss(m.view(), {&single, 1}, 1.0, nullptr) == doctest::Approx(std::abs(s)));
  std::vector<Vec3> reversed(pts.rbegin(), pts.rend());
  CHECK(pseudo_sdf_loss(m.view(), reversed, 1.0, nullptr) ==
        doctest::Approx(pseudo_sdf_loss(m.view(), pts, 1.0, nullptr)).epsilon(1e-12));

  Gradients grads(m.params);
  pseudo_sdf_loss(m.view(), pts, 1.0, &grads);
  auto objective = [&] { return pseudo_sdf_loss(m.view(), pts, 1.0, nullptr); };
  const auto r = lpsurf::testing::check_store_gradients(m.params, grads, objective, 20, 10, 1e-6);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);
}

namespace {

View flat_view(const Camera& cam, const Rgb& c) { return View{cam, Image(cam.width(), cam.height(), c), DepthMap()}; }

}  // namespace

TEST_CASE("feature extractors") {
  Image constant(5, 4, Rgb(0.3, 0.4, 0.5));
  const BilinearRgb rgb;
  const RgbPatch patch;
  for (const Vec2 px : {Vec2(0.1, 0.2), Vec2(2.5, 2.5), Vec2(4.9, 3.9), Vec2(1.37, 0.81)}) {
    CHECK((rgb.sample(constant, px, nullptr) - Rgb(0.3, 0.4, 0.5)).norm() < 1e-15);
    const Vector f = patch.sample(constant, px, nullptr);
    CHECK(f.size() == 27);
    for (int k = 0; k < 9; ++k) CHECK((f.segment<3>(3 * k) - Rgb(0.3, 0.4, 0.5)).norm() < 1e-15);
  }
  Image ramp(6, 6);
  for (int v = 0; v < 6; ++v)
    for (int u = 0; u < 6; ++u) ramp.at(u, v) = Rgb(u * 0.1, v * 0.1, (u + v) * 0.05);
  // Pixel centers are exact; interior points interpolate linearly.
  CHECK((rgb.sample(ramp, Vec2(2.5, 3.5), nullptr) - ramp.at(2, 3)).norm() < 1e-15);
  CHECK(rgb.sample(ramp, Vec2(2.75, 3.5), nullptr)[0] == doctest::Approx(0.225));
  for (const FeatureExtractor* e : {static_cast<const FeatureExtractor*>(&rgb), static_cast<const FeatureExtractor*>(&patch)}) {
    Matrix jac;
    const Vec2 px(2.3, 3.1);
    e->sample(ramp, px, &jac);
    for (int a = 0; a < 2; ++a) {
      Vec2 d = Vec2::Zero();
      d[a] = 1e-6;
      const Vector fd = (e->sample(ramp, px + d, nullptr) - e->sample(ramp, px - d, nullptr)) / 2e-6;
      CHECK((fd - jac.col(a)).norm() < 1e-8);
    }
  }
  CHECK(make_feature_extractor("rgb")->dim() == 3);
  CHECK(make_feature_extractor("rgb_patch")->dim() == 27);
  CHECK_THROWS_AS(make_feature_extractor("vgg"), std::invalid_argument);
}

TEST_CASE("feature consistency") {
  const Camera a = Camera::look_at(Vec3(0, 0, -3), Vec3::Zero(), -Vec3::UnitY(), 40.0, 16, 16);
  const Camera b = Camera::look_at(Vec3(3, 0, 0), Vec3::Zero(), -Vec3::UnitY(), 40.0, 16, 16);
  const BilinearRgb rgb;
  const std::vector<SurfaceObservation> one{{Vec3(0.05, 0.02, 0.0), 0}};
  {
    const std::vector<View> views{flat_view(a, Rgb(0.5, 0.5, 0.5)), flat_view(b, Rgb(0.5, 0.5, 0.5))};
    const auto fc = feature_consistency_loss(one, views, rgb);
    CHECK(fc.value == 0.0);
    CHECK(fc.valid_pairs == 2);
  }
  {
    const std::vector<View> views{flat_view(a, Rgb(0.5, 0.5, 0.5)), flat_view(b, Rgb(0.8, 0.5, 0.5))};
    CHECK(feature_consistency_loss(one, views, rgb).value == doctest::Approx(0.15));
  }
  {
    // The third camera looks away from the point.
    const Camera c = Camera::look_at(Vec3(0, 0, 3), Vec3(0, 0, 6), -Vec3::UnitY(), 40.0, 16, 16);
    const std::vector<View> views{flat_view(a, Rgb(0.5, 0.5, 0.5)), flat_view(b, Rgb(0.8, 0.5, 0.5)),
                                  flat_view(c, Rgb(0.0, 0.0, 0.0))};
    const auto fc = feature_consistency_loss(one, views, rgb);
    CHECK(fc.valid_pairs == 2);
    CHECK(fc.value == doctest::Approx(0.15));
  }
  {
    // Invalid in its reference view: dropped entirely.
    const std::vector<View> views{flat_view(a, Rgb(0.5, 0.5, 0.5)), flat_view(b, Rgb(0.8, 0.5, 0.5))};
    const std::vector<SurfaceObservation> behind{{Vec3(0, 0, -4), 0}};
    const auto before = warning_count();
    const auto fc = feature_consistency_loss(behind, views, rgb);
    CHECK(fc.value == 0.0);
    CHECK(fc.valid_pairs == 0);
    CHECK(warning_count() > before);
  }
  {
    // Point gradient against finite differences on textured views.
    auto textured = [](const Camera& cam, double phase) {
      View v{cam, Image(cam.width(), cam.height()), DepthMap()};
      for (int y = 0; y < cam.height(); ++y)
        for (int x = 0; x < cam.width(); ++x)
          v.color.at(x, y) = Rgb(0.5 + 0.4 * std::sin(0.7 * x + phase), 0.5 + 0.4 * std::cos(0.5 * y), 0.3 + 0.02 * x);
      return v;
    };
    const std::vector<View> views{textured(a, 0.0), textured(b, 1.3)};
    std::vector<SurfaceObservation> obs{{Vec3(0.1, 0.05, 0.07), 0}, {Vec3(-0.12, 0.1, -0.03), 1}};
    const RgbPatch patch;
    const auto fc = feature_consistency_loss(obs, views, patch);
    for (std::size_t i = 0; i < obs.size(); ++i) {
      for (int axis = 0; axis < 3; ++axis) {
        auto shifted = obs;
        shifted[i].point[axis] += 1e-6;
        const double up = feature_consistency_loss(shifted, views, patch).value;
        shifted[i].point[axis] -= 2e-6;
        const double down = feature_consistency_loss(shifted, views, patch).value;
        CHECK(fc.point_gradients[i][axis] == doctest::Approx((up - down) / 2e-6).epsilon(1e-4));
      }
    }
  }
}

TEST_CASE("prior objective") {
  FieldConfig cfg = small_config();
  cfg.neighbors = 4;
  ParameterStore params;
  Rng rng = make_rng(11);
  const Decoders decoders = Decoders::create(cfg, params, rng);
  const auto positions = sphere_points(0.3, 150, 12);
  NeuralPoints points{positions, VoxelGrid(positions, cfg.grid),
                      add_latent_table(params, "latents", cfg.geometry_dim, positions.size(), cfg.latent_std, rng), -1};
  std::vector<Vec3> queries;
  std::vector<double> targets;
  std::normal_distribution<double> n(0.0, 0.03);
  for (const auto& p : sphere_points(0.3, 60, 13)) {
    const Vec3 q = p + Vec3(n(rng), n(rng), n(rng));
    queries.push_back(q);
    targets.push_back(q.norm() - 0.3);
  }
  queries.push_back(Vec3(0.9, 0.9, 0.9));  // no neighbors
  targets.push_back(1.0);
  const std::vector<Vec3> eik(queries.begin(), queries.begin() + 20);
  const std::vector<PriorBatchItem> batch{{&points, queries, targets, eik}};

  LossWeights w;
  const auto terms = prior_objective(params, decoders, cfg, batch, w, nullptr);
  CHECK(terms.total == doctest::Approx(terms.get("sdf") + w.prior_tv * terms.get("tv") +
                                       w.prior_eikonal * terms.get("eikonal")));
  CHECK(terms.get("tv") > 0.0);
  CHECK(terms.get("eikonal") > 0.0);

  LossWeights zero = w;
  zero.prior_tv = 0.0;
  zero.prior_eikonal = 0.0;
  CHECK(prior_objective(params, decoders, cfg, batch, zero, nullptr).total == doctest::Approx(terms.get("sdf")));

  // SDF and TV terms carry L1 kinks: small steps. The absolute floors sit at the
  // roundoff level of each central difference on an O(1) objective.
  w.prior_tv = 0.3;
  w.prior_eikonal = 0.0;
  {
    Gradients grads(params);
    prior_objective(params, decoders, cfg, batch, w, &grads);
    auto objective = [&] { return prior_objective(params, decoders, cfg, batch, w, nullptr).total; };
    const auto r = lpsurf::testing::check_store_gradients(params, grads, objective, 25, 14, 1e-6, 1e-4);
    INFO(r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
  // The Eikonal term differences the field itself; coarser steps keep the
  // nested roundoff small.
  cfg.gradient_step = 1e-3;
  w.prior_tv = 0.0;
  w.prior_eikonal = 0.5;
  {
    const std::vector<PriorBatchItem> eik_only{{&points, {}, {}, eik}};
    Gradients grads(params);
    prior_objective(params, decoders, cfg, eik_only, w, &grads);
    auto objective = [&] { return prior_objective(params, decoders, cfg, eik_only, w, nullptr).total; };
    const auto r = lpsurf::testing::check_store_gradients(params, grads, objective, 25, 15, 1e-5, 1e-4);
    INFO(r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
}

TEST_CASE("reconstruction objective") {
  FieldConfig cfg = small_config();
  cfg.initial_beta = 0.05;
  cfg.latent_std = 0.3;
  FieldModel m(sphere_points(0.3, 200, 15), cfg, 16);
  m.freeze_geometry(true);

  Scene scene;
  scene.objects.push_back({make_sphere(Vec3::Zero(), 0.3), CheckerAlbedo{}});
  scene.background = cfg.background;
  std::vector<View> views;
  for (const Vec3 eye : {Vec3(0, 0, -2), Vec3(1.6, 0, -1.2)}) {
    const Camera cam = Camera::look_at(eye, Vec3::Zero(), -Vec3::UnitY(), 40.0, 12, 12);
    auto gt = render_ground_truth(scene, cam);
    views.push_back({cam, gt.color, gt.depth});
  }
  std::vector<Ray> rays;
  std::vector<int> ray_views;
  Matrix targets(3, 8);
  for (int i = 0; i < 8; ++i) {
    const int v = i % 2;
    const int u = 3 + i % 6, y = 4 + i / 3;
    rays.push_back(views[v].camera.generate_ray(u, y));
    ray_views.push_back(v);
    targets.col(i) = views[v].color.at(u, y);
  }
  const auto pseudo = sphere_points(0.3, 30, 17);
  const ReconBatch batch{rays, targets, ray_views, views, pseudo};
  RenderConfig rc;
  rc.n_coarse = 48;
  rc.n_fine = 0;
  const RgbPatch patch;
  LossWeights w;
  w.feature_consistency = 2.0;  // FC large enough to dominate its share of the check
  const auto terms = reconstruction_objective(m.view(), batch, rc, w, patch, nullptr, nullptr);
  CHECK(terms.total == doctest::Approx(terms.get("rendering") + w.feature_consistency * terms.get("feature_consistency") +
                                       w.pseudo_sdf * terms.get("pseudo_sdf") + w.recon_tv * terms.get("tv")));
  CHECK(terms.get("feature_consistency") > 0.0);

  Gradients grads(m.params);
  reconstruction_objective(m.view(), batch, rc, w, patch, nullptr, &grads);
  for (const char* name : {"geometry_local.0.weight", "geometry_head.0.bias"}) CHECK(grads[m.params.index(name)].isZero(0.0));
  auto objective = [&] { return reconstruction_objective(m.view(), batch, rc, w, patch, nullptr, nullptr).total; };
  const auto r = lpsurf::testing::check_store_gradients(m.params, grads, objective, 25, 18, 1e-5);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);

  // Frozen entries are untouched by an optimizer step.
  const Vector before = m.params[m.params.index("geometry_local.0.weight")].value;
  adam_step(m.params, grads, 1e-2);
  CHECK(m.params[m.params.index("geometry_local.0.weight")].value == before);
}

TEST_CASE("loss trace") {
  const auto path = std::filesystem::temp_directory_path() / "lpsurf_trace_test.csv";
  {
    LossTrace trace(path);
    trace.append(0, LossTerms{1.5, {{"a", 1.0}, {"b", 0.5}}});
    trace.append(1, LossTerms{0.25, {{"a", 0.125}, {"b", 0.125}}});
  }
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "step,a,b,total");
  CHECK(first == "0,1,0.5,1.5");
  CHECK(second == "1,0.125,0.125,0.25");
  std::filesystem::remove(path);
}
