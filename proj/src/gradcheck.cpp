#include "lpsurf/gradcheck.hpp"

#include "lpsurf/losses.hpp"

#include <algorithm>
#include <cmath>

namespace lpsurf {

GradientCheckResult check_store_gradients(ParameterStore& store, const Gradients& grads,
                                          const std::function<double()>& objective, int per_param,
                                          std::uint64_t seed, double step, double floor) {
  Rng rng = make_rng(seed, 77);
  GradientCheckResult worst;
  for (std::size_t i = 0; i < store.size(); ++i) {
    auto& p = store[static_cast<int>(i)];
    if (p.frozen) continue;
    std::uniform_int_distribution<Eigen::Index> pick(0, p.value.size() - 1);
    const int count = static_cast<int>(std::min<Eigen::Index>(per_param, p.value.size()));
    for (int k = 0; k < count; ++k) {
      const Eigen::Index j = count == p.value.size() ? k : pick(rng);
      const double analytic = grads[static_cast<int>(i)][j];
      const auto r = finite_difference_check(objective, {p.value.data() + j, 1}, {&analytic, 1}, step,
                                             p.name + "@" + std::to_string(j), floor);
      if (r.max_relative_error > worst.max_relative_error) worst = r;
    }
  }
  return worst;
}

namespace {

FieldConfig reduced_config() {
  FieldConfig c;
  c.geometry_dim = 4;
  c.appearance_dim = 4;
  c.hidden_width = 8;
  c.appearance_feature_dim = 6;
  c.posenc_frequencies = 2;
  c.latent_std = 0.5;
  return c;
}

std::vector<Vec3> sphere_points(double radius, int count, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<Vec3> pts;
  for (int i = 0; i < count; ++i) pts.push_back(radius * Vec3(n(rng), n(rng), n(rng)).normalized());
  return pts;
}

GradientReport report(std::string name, const GradientCheckResult& r) {
  return {std::move(name), r.max_relative_error, r.worst};
}

void decoder_checks(std::uint64_t seed, std::vector<GradientReport>& out) {
  const FieldConfig cfg = reduced_config();
  ParameterStore store;
  Rng rng = make_rng(seed, 1);
  const Decoders d = Decoders::create(cfg, store, rng);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  auto random = [&](int rows, int cols) { return Matrix(Matrix::NullaryExpr(rows, cols, [&] { return u(rng); })); };
  for (const auto& [name, mlp] : {std::pair<const char*, const Mlp*>{"decoder geometry_local", &d.geometry_local},
                                  {"decoder geometry_head", &d.geometry_head},
                                  {"decoder appearance_local", &d.appearance_local},
                                  {"decoder appearance_head", &d.appearance_head}}) {
    const auto& spec = mlp->spec();
    const Matrix input = random(spec.input_dim, 4);
    const Matrix probe = random(spec.widths.back(), 4);
    out.push_back(report(name, gradient_check(*mlp, store, input, 1e-6, probe)));
  }
}

void field_checks(std::uint64_t seed, std::vector<GradientReport>& out) {
  Rng rng = make_rng(seed, 2);
  FieldModel m(sphere_points(0.25, 60, rng), reduced_config(), seed);
  std::vector<Vec3> xs, dirs;
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (int i = 0; i < 20; ++i) {
    xs.emplace_back(u(rng), u(rng), u(rng));
    dirs.push_back(Vec3(u(rng), u(rng), 1.0).normalized());
  }
  const Vector probe = Vector::Random(20);
  const Matrix rgb_probe = Matrix::Random(3, 20);
  const Matrix grad_probe = Matrix::Random(3, 20);
  {
    auto objective = [&] {
      const auto view = m.view();
      return sdf_forward(view, gather_neighbors(view, xs), false).sdf.dot(probe);
    };
    Gradients grads(m.params);
    const auto view = m.view();
    sdf_backward(view, sdf_forward(view, gather_neighbors(view, xs), true), probe, grads);
    out.push_back(report("interpolated sdf", check_store_gradients(m.params, grads, objective, 40, seed)));
  }
  {
    auto objective = [&] {
      const auto view = m.view();
      return (radiance_forward(view, gather_neighbors(view, xs), dirs, false).rgb.array() * rgb_probe.array()).sum();
    };
    Gradients grads(m.params);
    const auto view = m.view();
    radiance_backward(view, radiance_forward(view, gather_neighbors(view, xs), dirs, true), rgb_probe, grads);
    out.push_back(report("interpolated radiance", check_store_gradients(m.params, grads, objective, 40, seed)));
  }
  {
    m.config.gradient_step = 1e-3;  // nested differences: coarser inner step
    auto objective = [&] {
      const auto view = m.view();
      return (sdf_gradient_forward(view, gather_neighbors(view, xs), xs, false).gradient.array() * grad_probe.array())
          .sum();
    };
    Gradients grads(m.params);
    const auto view = m.view();
    sdf_gradient_backward(view, sdf_gradient_forward(view, gather_neighbors(view, xs), xs, true), grad_probe, grads);
    out.push_back(report("sdf spatial gradient", check_store_gradients(m.params, grads, objective, 40, seed, 1e-5, 1e-4)));
  }
}

void density_check(std::vector<GradientReport>& out) {
  GradientCheckResult worst;
  for (double s : {-0.3, -0.02, 1e-3, 0.04, 0.5}) {
    for (double log_beta : {std::log(0.02), std::log(0.1)}) {
      const auto d = density_with_gradient(s, log_beta);
      double x[2] = {s, log_beta};
      const double analytic[2] = {d.d_sdf, d.d_log_beta};
      auto f = [&] { return density_with_gradient(x[0], x[1]).sigma; };
      const auto r = finite_difference_check(f, x, analytic, 1e-7, "density", 1e-6);
      if (r.max_relative_error > worst.max_relative_error) worst = r;
    }
  }
  out.push_back(report("density", worst));
}

void prior_checks(std::uint64_t seed, std::vector<GradientReport>& out) {
  FieldConfig cfg = reduced_config();
  cfg.neighbors = 4;
  ParameterStore params;
  Rng rng = make_rng(seed, 3);
  const Decoders decoders = Decoders::create(cfg, params, rng);
  const auto positions = sphere_points(0.3, 150, rng);
  NeuralPoints points{positions, VoxelGrid(positions, cfg.grid),
                      add_latent_table(params, "latents", cfg.geometry_dim, positions.size(), cfg.latent_std, rng), -1};
  std::vector<Vec3> queries;
  std::vector<double> targets;
  std::normal_distribution<double> n(0.0, 0.03);
  for (const auto& p : sphere_points(0.3, 60, rng)) {
    const Vec3 q = p + Vec3(n(rng), n(rng), n(rng));
    queries.push_back(q);
    targets.push_back(q.norm() - 0.3);
  }
  const std::vector<Vec3> eik(queries.begin(), queries.begin() + 20);
  auto run = [&](const char* name, const std::vector<PriorBatchItem>& batch, const LossWeights& w, double step) {
    Gradients grads(params);
    prior_objective(params, decoders, cfg, batch, w, &grads);
    auto objective = [&] { return prior_objective(params, decoders, cfg, batch, w, nullptr).total; };
    out.push_back(report(name, check_store_gradients(params, grads, objective, 25, seed, step, 1e-4)));
  };
  LossWeights w;
  w.prior_tv = 0.0;
  w.prior_eikonal = 0.0;
  run("sdf loss", {{&points, queries, targets, {}}}, w, 1e-6);
  w.prior_tv = 0.3;
  run("tv loss", {{&points, {}, {}, {}}}, w, 1e-6);
  // Nested differences: coarser inner step.
  cfg.gradient_step = 1e-3;
  w.prior_tv = 0.0;
  w.prior_eikonal = 0.5;
  run("eikonal loss", {{&points, {}, {}, eik}}, w, 1e-5);
}

void reconstruction_checks(std::uint64_t seed, std::vector<GradientReport>& out) {
  FieldConfig cfg = reduced_config();
  cfg.initial_beta = 0.05;
  cfg.latent_std = 0.3;
  cfg.background = Rgb(0.1, 0.2, 0.3);
  Rng rng = make_rng(seed, 4);
  FieldModel m(sphere_points(0.3, 200, rng), cfg, seed + 1);

  Scene scene;
  scene.objects.push_back({make_sphere(Vec3::Zero(), 0.3), CheckerAlbedo{}});
  scene.background = cfg.background;
  std::vector<View> views;
  for (const Vec3& eye : {Vec3(0, 0, -2), Vec3(1.6, 0, -1.2)}) {
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
  const auto pseudo = sphere_points(0.3, 30, rng);
  const ReconBatch batch{rays, targets, ray_views, views, pseudo};
  RenderConfig rc;
  rc.n_coarse = 48;
  rc.n_fine = 0;
  const RgbPatch patch;

  {
    const Matrix probe = Matrix::Random(3, static_cast<Eigen::Index>(rays.size()));
    auto objective = [&] { return (render_rays(m.view(), rays, rc, nullptr, false).colors.array() * probe.array()).sum(); };
    Gradients grads(m.params);
    backward_rays(m.view(), render_rays(m.view(), rays, rc, nullptr, true), probe, Vector(), grads);
    out.push_back(report("pixel pipeline", check_store_gradients(m.params, grads, objective, 30, seed, 1e-5)));
  }
  auto run = [&](const char* name, const LossWeights& w) {
    Gradients grads(m.params);
    reconstruction_objective(m.view(), batch, rc, w, patch, nullptr, &grads);
    auto objective = [&] { return reconstruction_objective(m.view(), batch, rc, w, patch, nullptr, nullptr).total; };
    out.push_back(report(name, check_store_gradients(m.params, grads, objective, 25, seed, 1e-5)));
  };
  LossWeights only;
  only.feature_consistency = only.pseudo_sdf = only.recon_tv = 0.0;
  run("rendering loss", only);
  m.freeze_geometry(true);
  LossWeights fc = only;
  fc.feature_consistency = 2.0;
  run("feature consistency loss", fc);
  m.freeze_geometry(false);
  LossWeights ps = only;
  ps.pseudo_sdf = 0.5;
  run("pseudo sdf loss", ps);
  run("reconstruction objective", LossWeights{});
}

}  // namespace

std::vector<GradientReport> run_gradient_suite(std::uint64_t seed) {
  std::vector<GradientReport> out;
  decoder_checks(seed, out);
  field_checks(seed, out);
  density_check(out);
  prior_checks(seed, out);
  reconstruction_checks(seed, out);
  return out;
}

}  // namespace lpsurf
