#include "doctest.h"

#include "lpsurf/io.hpp"
#include "lpsurf/training.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace lpsurf;

namespace {

FieldConfig tiny_field(int neighbors) {
  FieldConfig f = lpsurf::testing::small_config();
  f.latent_std = 0.01;
  f.neighbors = neighbors;
  return f;
}

PriorConfig tiny_prior() {
  PriorConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.queries_per_shape = 64;
  c.eikonal_queries_per_shape = 16;
  c.surface_candidates = 1000;
  c.point_spacing = 0.06;
  c.field = tiny_field(4);
  c.seed = 3;
  return c;
}

bool same_values(const ParameterStore& a, const ParameterStore& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[static_cast<int>(i)];
    const auto& y = b[static_cast<int>(i)];
    if (x.name != y.name || x.shape != y.shape || x.value != y.value) return false;
  }
  return true;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct TinyScene {
  std::vector<View> views;
  std::vector<Vec3> points;
};

TinyScene tiny_scene() {
  SceneConfig sc;
  sc.kind = "sphere";
  sc.width = 12;
  sc.height = 12;
  sc.train_views = 2;
  sc.test_views = 0;
  const Scene scene = make_scene(sc);
  TinyScene out;
  for (const auto& c : make_scene_cameras(sc)) {
    auto gt = render_ground_truth(scene, c.camera);
    out.views.push_back({c.camera, gt.color, gt.depth});
  }
  out.points = unproject_views(out.views, 1, 0.08, 1).points;
  return out;
}

ReconConfig tiny_recon() {
  ReconConfig c;
  c.iterations = 6;
  c.rays_per_step = 24;
  c.render.n_coarse = 12;
  c.render.n_fine = 8;
  c.field = tiny_field(8);
  c.pseudo_points_per_step = 16;
  c.seed = 4;
  return c;
}

}  // namespace

TEST_CASE("procedural shapes") {
  const auto shapes = procedural_shapes(10, 1);
  REQUIRE(shapes.size() == 10);
  CHECK(std::holds_alternative<Sphere>(shapes[0].value));
  CHECK(std::holds_alternative<Box>(shapes[1].value));
  CHECK(std::holds_alternative<Torus>(shapes[2].value));
  CHECK(std::holds_alternative<Capsule>(shapes[3].value));
  CHECK(std::holds_alternative<UnionShape>(shapes[4].value));
  for (const auto& s : shapes) {
    CHECK(signed_distance(s, Vec3::Constant(0.5)) > 0.0);
    Rng rng = make_rng(2);
    for (const auto& p : sample_surface(s, 200, rng)) CHECK((p.array().abs() <= 0.5 + 1e-9).all());
  }
  CHECK_THROWS_AS(procedural_shapes(-1, 0), std::invalid_argument);
}

TEST_CASE("prior training contracts") {
  const auto shapes = procedural_shapes(3, 2);
  PriorConfig cfg = tiny_prior();
  {
    PriorConfig zero = cfg;
    zero.epochs = 0;
    const auto r = train_prior(zero, shapes);
    CHECK(r.status.steps_completed == 0);
    CHECK(same_values(r.decoders, initial_prior(zero)));
  }
  const auto trace_a = std::filesystem::temp_directory_path() / "lpsurf_prior_a.csv";
  const auto trace_b = std::filesystem::temp_directory_path() / "lpsurf_prior_b.csv";
  TrainingHooks ha, hb;
  ha.loss_trace = trace_a;
  hb.loss_trace = trace_b;
  std::vector<std::int64_t> checkpoints;
  ha.checkpoint_every = 2;
  ha.on_checkpoint = [&](std::int64_t done) { checkpoints.push_back(done); };
  const auto a = train_prior(cfg, shapes, ha);
  const auto b = train_prior(cfg, shapes, hb);
  CHECK(a.status.steps_completed == 4);
  CHECK(!a.status.aborted);
  CHECK(checkpoints == std::vector<std::int64_t>{2, 4});
  CHECK(same_values(a.decoders, b.decoders));
  CHECK(read_text(trace_a) == read_text(trace_b));
  CHECK(!same_values(a.decoders, initial_prior(cfg)));
  // Only the geometry decoders are exported.
  for (const auto& p : a.decoders.entries())
    CHECK((p.name.starts_with("geometry_local.") || p.name.starts_with("geometry_head.")));
  cfg.seed = 4;
  CHECK(!same_values(train_prior(cfg, shapes).decoders, a.decoders));
  std::filesystem::remove(trace_a);
  std::filesystem::remove(trace_b);

  PriorConfig bad = tiny_prior();
  bad.batch_size = 0;
  CHECK_THROWS_AS(train_prior(bad, shapes), std::invalid_argument);
  CHECK_THROWS_AS(train_prior(tiny_prior(), {}), std::invalid_argument);
}

TEST_CASE("latent-only fitting") {
  const auto shapes = procedural_shapes(2, 5);
  const auto prior = train_prior(tiny_prior(), shapes).decoders;
  LatentFitConfig cfg;
  cfg.iterations = 0;
  cfg.queries_per_step = 256;
  cfg.eikonal_queries = 32;
  cfg.surface_candidates = 1000;
  cfg.point_spacing = 0.06;
  cfg.field = tiny_field(4);
  cfg.seed = 2;
  const Shape torus = make_torus(Vec3::Zero(), 0.28, 0.09);
  const auto base = fit_latents_only(prior, torus, cfg);
  CHECK(base.status.steps_completed == 0);
  const double base_mae = near_surface_mae(base.model.view(), torus, 2000, 0.05, 9);
  CHECK(std::isfinite(base_mae));

  cfg.iterations = 60;
  std::vector<double> totals;
  TrainingHooks hooks;
  hooks.on_step = [&](std::int64_t, const LossTerms& t) { totals.push_back(t.total); };
  const auto fit = fit_latents_only(prior, torus, cfg, hooks);
  REQUIRE(totals.size() == 60);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 10; ++i) {
    head += totals[i];
    tail += totals[59 - i];
  }
  CHECK(tail < head);
  // Decoders are bit-identical to the prior; appearance and density untouched.
  for (const auto& p : prior.entries()) CHECK(fit.model.params[p.name].value == p.value);
  for (const auto& p : fit.model.params.entries()) {
    if (p.name != "geometry_latents") CHECK(p.value == base.model.params[p.name].value);
  }
  CHECK(fit.model.params["geometry_latents"].value != base.model.params["geometry_latents"].value);

  CHECK_THROWS_AS(fit_latents_only(ParameterStore{}, torus, cfg), std::invalid_argument);
  CHECK_THROWS_AS(near_surface_mae(fit.model.view(), torus, 0, 0.05, 1), std::invalid_argument);
}

TEST_CASE("reconstruction contracts") {
  const auto scene = tiny_scene();
  REQUIRE(scene.points.size() > 20);
  PriorConfig pc = tiny_prior();
  pc.field = tiny_field(4);
  const ParameterStore prior = initial_prior(pc);
  const ReconConfig cfg = tiny_recon();

  SUBCASE("zero iterations leave the field untouched") {
    FieldModel m = make_reconstruction_model(scene.points, cfg, &prior);
    const FieldModel before = m;
    ReconConfig zero = cfg;
    zero.iterations = 0;
    CHECK(reconstruct(m, scene.views, zero).steps_completed == 0);
    CHECK(same_values(m.params, before.params));
    RenderConfig rc;
    rc.perturb = false;
    rc.n_coarse = 16;
    rc.n_fine = 8;
    const Image a = render_image(m.view(), scene.views[0].camera, rc, nullptr);
    const Image b = render_image(before.view(), scene.views[0].camera, rc, nullptr);
    CHECK(a.pixels == b.pixels);
  }

  SUBCASE("determinism, freezing and resume") {
    const auto trace_a = std::filesystem::temp_directory_path() / "lpsurf_recon_a.csv";
    const auto trace_b = std::filesystem::temp_directory_path() / "lpsurf_recon_b.csv";
    FieldModel a = make_reconstruction_model(scene.points, cfg, &prior);
    FieldModel b = make_reconstruction_model(scene.points, cfg, &prior);
    const FieldModel initial = a;
    TrainingHooks ha, hb;
    ha.loss_trace = trace_a;
    hb.loss_trace = trace_b;
    reconstruct(a, scene.views, cfg, ha);
    reconstruct(b, scene.views, cfg, hb);
    CHECK(read_text(trace_a) == read_text(trace_b));
    CHECK(same_values(a.params, b.params));
    for (const auto& p : a.params.entries()) {
      if (p.name.starts_with("geometry_local.") || p.name.starts_with("geometry_head."))
        CHECK(p.value == initial.params[p.name].value);
    }
    CHECK(a.params["geometry_latents"].value != initial.params["geometry_latents"].value);
    CHECK(a.params["appearance_latents"].value != initial.params["appearance_latents"].value);

    // Interrupted after 3 steps and resumed from there.
    FieldModel c = make_reconstruction_model(scene.points, cfg, &prior);
    ReconConfig first = cfg;
    TrainingHooks stop;
    std::optional<FieldModel> snapshot;
    stop.checkpoint_every = 3;
    stop.on_checkpoint = [&](std::int64_t done) {
      if (done == 3) snapshot = c;
    };
    reconstruct(c, scene.views, first, stop);
    REQUIRE(snapshot);
    reconstruct(*snapshot, scene.views, cfg, {}, 3);
    CHECK(same_values(snapshot->params, a.params));
    std::filesystem::remove(trace_a);
    std::filesystem::remove(trace_b);
  }

  SUBCASE("without a prior the geometry decoders train") {
    ReconConfig np = cfg;
    np.use_prior = false;
    FieldModel m = make_reconstruction_model(scene.points, np, nullptr);
    const FieldModel initial = m;
    reconstruct(m, scene.views, np);
    CHECK(m.params["geometry_head.0.weight"].value != initial.params["geometry_head.0.weight"].value);
    CHECK_THROWS_AS(make_reconstruction_model(scene.points, cfg, nullptr), std::invalid_argument);
  }

  SUBCASE("density can be frozen") {
    ReconConfig fixed = cfg;
    fixed.train_density = false;
    FieldModel m = make_reconstruction_model(scene.points, fixed, &prior);
    const double beta = m.params["log_beta"].value[0];
    reconstruct(m, scene.views, fixed);
    CHECK(m.params["log_beta"].value[0] == beta);
  }

  SUBCASE("non-finite loss stops before the update") {
    auto views = scene.views;
    for (auto& p : views[0].color.pixels) p.setConstant(std::nan(""));
    for (auto& p : views[1].color.pixels) p.setConstant(std::nan(""));
    FieldModel m = make_reconstruction_model(scene.points, cfg, &prior);
    const FieldModel before = m;
    const auto status = reconstruct(m, views, cfg);
    CHECK(status.aborted);
    CHECK(status.steps_completed == 0);
    CHECK(same_values(m.params, before.params));
  }

  SUBCASE("training reduces the image error") {
    ReconConfig longer = cfg;
    longer.iterations = 400;
    longer.rays_per_step = 48;
    // A random frozen geometry decoder gives an almost empty field; train it here.
    longer.use_prior = false;
    FieldModel m = make_reconstruction_model(scene.points, longer, nullptr);
    RenderConfig rc;
    rc.perturb = false;
    rc.n_coarse = 16;
    rc.n_fine = 8;
    auto image_error = [&] {
      double total = 0.0;
      for (const auto& v : scene.views) {
        const Image img = render_image(m.view(), v.camera, rc, nullptr);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) total += (img.pixels[i] - v.color.pixels[i]).squaredNorm();
      }
      return total;
    };
    const double before = image_error();
    reconstruct(m, scene.views, longer);
    CHECK(image_error() < 0.8 * before);
  }
}
