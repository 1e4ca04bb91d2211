#include "doctest.h"

#include "lpsurf/renderer.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>

using namespace lpsurf;
using lpsurf::testing::small_config;

TEST_CASE("density") {
  const double alpha = 7.0, beta = 0.2;
  CHECK(density_from_sdf(0.0, alpha, beta) == alpha / 2);
  CHECK(density_from_sdf(-beta * std::log(2.0), alpha, beta) == doctest::Approx(0.75 * alpha));
  CHECK(density_from_sdf(beta * std::log(2.0), alpha, beta) == doctest::Approx(0.25 * alpha));
  // Branches meet at zero.
  const double eps = 1e-15;
  CHECK(std::abs(density_from_sdf(eps, alpha, beta) - density_from_sdf(-eps, alpha, beta)) < 1e-12);

  double prev = -1.0;
  for (int i = 0; i <= 10000; ++i) {
    const double s = 1.0 - 2.0 * i / 10000.0;  // sweeping from outside to inside
    const double d = density_from_sdf(s, alpha, beta);
    CHECK(d >= 0.0);
    CHECK(d >= prev);
    prev = d;
  }

  for (double s : {-0.3, -0.01, 1e-3, 0.02, 0.4}) {
    const double lb = std::log(0.1);
    const auto d = density_with_gradient(s, lb);
    CHECK(d.sigma == doctest::Approx(density_from_sdf(s, 10.0, 0.1)).epsilon(1e-14));
    const double h = 1e-6;
    const double ds = (density_with_gradient(s + h, lb).sigma - density_with_gradient(s - h, lb).sigma) / (2 * h);
    const double db = (density_with_gradient(s, lb + h).sigma - density_with_gradient(s, lb - h).sigma) / (2 * h);
    CHECK(d.d_sdf == doctest::Approx(ds).epsilon(1e-6));
    CHECK(d.d_log_beta == doctest::Approx(db).epsilon(1e-6));
  }
}

TEST_CASE("compositing") {
  const Rgb bg(0.1, 0.2, 0.3);
  {
    const std::vector<double> sigma{0, 0, 0}, delta{0.1, 0.1, 0.1};
    const auto r = composite(sigma, delta, Matrix::Random(3, 3), bg);
    CHECK(r.color == bg);
    for (double w : r.weights) CHECK(w == 0.0);
  }
  {
    const std::vector<double> sigma{1e6, 1.0}, delta{1.0, 1.0};
    Matrix rad(3, 2);
    rad << 0.9, 0.0, 0.5, 0.0, 0.1, 0.0;
    const auto r = composite(sigma, delta, rad, bg);
    CHECK(r.weights[0] == doctest::Approx(1.0));
    CHECK((r.color - rad.col(0)).norm() < 1e-12);
  }
  {
    const double ln2 = std::log(2.0);
    const std::vector<double> sigma{ln2, ln2}, delta{1.0, 1.0};
    const auto r = composite(sigma, delta, Matrix::Zero(3, 2), bg);
    CHECK(r.weights[0] == doctest::Approx(0.5));
    CHECK(r.weights[1] == doctest::Approx(0.25));
    CHECK(r.transmittance[1] == doctest::Approx(0.5));
  }
  // Reverse mode against finite differences.
  Rng rng = make_rng(1);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  std::vector<double> sigma(6), delta(6, 0.2);
  for (auto& s : sigma) s = u(rng);
  const Matrix rad = (Matrix::Random(3, 6).array() * 0.5 + 0.5).matrix();
  const Rgb g(0.3, -0.7, 1.1);
  const auto r = composite(sigma, delta, rad, bg);
  Matrix grad_rad;
  const auto grad_sigma = composite_backward(r, sigma, delta, rad, bg, g, grad_rad);
  for (int k = 0; k < 6; ++k) {
    const double h = 1e-6;
    auto s2 = sigma;
    s2[k] += h;
    const double up = composite(s2, delta, rad, bg).color.dot(g);
    s2[k] -= 2 * h;
    const double down = composite(s2, delta, rad, bg).color.dot(g);
    CHECK(grad_sigma[k] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    CHECK((grad_rad.col(k) - r.weights[k] * g).norm() < 1e-15);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < r.weights.size(); ++i) {
    CHECK(r.weights[i] >= 0.0);
    if (i > 0) CHECK(r.transmittance[i] <= r.transmittance[i - 1]);
    total += r.weights[i];
  }
  CHECK(total <= 1.0);
}

TEST_CASE("ray sampling") {
  const auto strat = stratified_samples(1.0, 3.0, 8, nullptr);
  for (int i = 0; i < 8; ++i) CHECK(strat[i] == doctest::Approx(1.0 + (i + 0.5) * 0.25));
  Rng rng = make_rng(2);
  const auto jittered = stratified_samples(1.0, 3.0, 8, &rng);
  for (int i = 0; i < 8; ++i) {
    CHECK(jittered[i] >= 1.0 + i * 0.25);
    CHECK(jittered[i] <= 1.0 + (i + 1) * 0.25);
  }

  std::vector<double> edges(11);
  for (int i = 0; i <= 10; ++i) edges[i] = i;
  {
    // Uniform weights: chi-squared over the ten bins at the 5% level (9 dof: 16.92).
    const std::vector<double> w(10, 1.0);
    const auto s = sample_pdf(edges, w, 10000, &rng);
    std::vector<int> counts(10, 0);
    for (double t : s) counts[std::min(9, static_cast<int>(t))]++;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - 1000.0) * (c - 1000.0) / 1000.0;
    CHECK(chi2 < 16.92);
  }
  {
    std::vector<double> w(10, 0.0);
    w[6] = 2.5;
    for (double t : sample_pdf(edges, w, 500, &rng)) {
      CHECK(t >= 6.0);
      CHECK(t <= 7.0);
    }
  }
  {
    const std::vector<double> zero(10, 0.0);
    const auto s = sample_pdf(edges, zero, 10, nullptr);
    for (int i = 0; i < 10; ++i) CHECK(s[i] == doctest::Approx(i + 0.5));
  }
}

TEST_CASE("surface points") {
  {
    const std::vector<double> t{1.0, 2.0}, s{0.5, -0.5};
    const auto z = surface_point_zero_crossing(t, s);
    REQUIRE(z);
    CHECK(z->t == doctest::Approx(1.5));
  }
  {
    const std::vector<double> t{1.0, 2.0, 3.0}, s{0.5, 0.2, 0.1};
    CHECK_FALSE(surface_point_zero_crossing(t, s));
  }
  {
    const std::vector<double> t{1.0, 2.0, 3.0}, s{0.5, 0.0, -0.1};
    const auto z = surface_point_zero_crossing(t, s);
    REQUIRE(z);
    CHECK(z->t == 2.0);
  }
  {
    // inside-to-outside changes are not surfaces
    const std::vector<double> t{1.0, 2.0, 3.0, 4.0}, s{-0.5, 0.5, 0.3, -0.1};
    const auto z = surface_point_zero_crossing(t, s);
    REQUIRE(z);
    CHECK(z->index == 2);
  }
  {
    // derivatives
    const std::vector<double> t{1.0, 1.5}, s{0.3, -0.2};
    const auto z = surface_point_zero_crossing(t, s);
    const double h = 1e-7;
    const std::vector<double> s0{0.3 + h, -0.2}, s1{0.3, -0.2 + h};
    CHECK(z->d_sdf0 == doctest::Approx((surface_point_zero_crossing(t, s0)->t - z->t) / h).epsilon(1e-5));
    CHECK(z->d_sdf1 == doctest::Approx((surface_point_zero_crossing(t, s1)->t - z->t) / h).epsilon(1e-5));
  }
  const std::vector<double> t{1, 2, 3};
  const std::vector<double> uniform{1, 1, 1};
  CHECK(*surface_point_weighted(t, uniform) == doctest::Approx(2.0));
  const std::vector<double> one{0, 0.4, 0};
  CHECK(*surface_point_weighted(t, one) == 2.0);
  const std::vector<double> none{0, 0, 0};
  CHECK_FALSE(surface_point_weighted(t, none));
}

TEST_CASE("zero crossing matches bisection on monotone profiles") {
  Rng rng = make_rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    // Smooth decreasing profile with a root inside [0.2, 2.8].
    const double root = 0.2 + 2.6 * u(rng);
    const double slope = 0.5 + 2.0 * u(rng);
    const double curve = 0.3 * u(rng);
    auto f = [&](double t) { return -slope * (t - root) - curve * (t - root) * std::abs(t - root); };
    std::vector<double> ts, ss;
    for (int i = 0; i <= 300; ++i) {
      ts.push_back(3.0 * i / 300.0);
      ss.push_back(f(ts.back()));
    }
    const auto z = surface_point_zero_crossing(ts, ss);
    REQUIRE(z);
    double lo = 0.0, hi = 3.0;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (f(mid) > 0.0 ? lo : hi) = mid;
    }
    CHECK(std::abs(z->t - 0.5 * (lo + hi)) < 1e-3);
  }
}

TEST_CASE("pixel rendering") {
  FieldConfig cfg = small_config();
  cfg.background = Rgb(0.2, 0.5, 0.7);
  cfg.initial_beta = 1e-3;
  RenderConfig rc;
  rc.n_coarse = 16;
  rc.n_fine = 16;
  {
    // Points far from the ray: only empty space along it.
    const FieldModel m({Vec3(0.9, 0.9, 0.9)}, cfg, 1);
    const Ray ray{Vec3(0, 0, -3), Vec3::UnitZ()};
    const auto px = render_pixel(m.view(), ray, rc, nullptr);
    CHECK((px.color - cfg.background).norm() < 1e-12);
  }
  cfg.initial_beta = 0.05;
  const FieldModel m(lpsurf::testing::sphere_points(0.4, 400, 2), cfg, 3);
  Rng rng = make_rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 30; ++i) {
    const Ray ray{Vec3(u(rng), u(rng), -3), Vec3(u(rng) * 0.2, u(rng) * 0.2, 1).normalized()};
    const auto px = render_pixel(m.view(), ray, rc, &rng);
    CHECK(px.color.minCoeff() >= 0.0);
    CHECK(px.color.maxCoeff() <= 1.0);
    CHECK(std::is_sorted(px.t.begin(), px.t.end()));
  }
}

TEST_CASE("quadrature converges with sample count") {
  FieldConfig cfg = small_config();
  cfg.initial_beta = 0.2;
  cfg.latent_std = 0.1;
  const FieldModel m(lpsurf::testing::sphere_points(0.4, 600, 5), cfg, 6);
  RenderConfig coarse;
  coarse.n_coarse = 1024;
  coarse.n_fine = 0;
  RenderConfig fine = coarse;
  fine.n_coarse = 2048;
  for (double x : {0.0, 0.2, 0.35}) {
    const Ray ray{Vec3(x, 0.05, -3), Vec3::UnitZ()};
    const Rgb a = render_pixel(m.view(), ray, coarse, nullptr).color;
    const Rgb b = render_pixel(m.view(), ray, fine, nullptr).color;
    CHECK((a - b).cwiseAbs().maxCoeff() < 0.01 * std::max(0.05, b.maxCoeff()));
  }
}

TEST_CASE("pixel pipeline gradients match finite differences") {
  FieldConfig cfg = small_config();
  cfg.initial_beta = 0.05;
  cfg.background = Rgb(0.1, 0.2, 0.3);
  FieldModel m(lpsurf::testing::sphere_points(0.3, 150, 7), cfg, 8);
  RenderConfig rc;
  rc.n_coarse = 48;
  rc.n_fine = 0;
  std::vector<Ray> rays;
  for (double x : {-0.2, 0.0, 0.15, 0.28}) rays.push_back({Vec3(x, 0.03, -2), Vec3(0.02, 0.01, 1).normalized()});
  const Matrix probe = Matrix::Random(3, static_cast<Eigen::Index>(rays.size()));
  auto objective = [&] {
    return (render_rays(m.view(), rays, rc, nullptr, false).colors.array() * probe.array()).sum();
  };
  Gradients grads(m.params);
  const auto batch = render_rays(m.view(), rays, rc, nullptr, true);
  backward_rays(m.view(), batch, probe, Vector(), grads);
  const auto r = lpsurf::testing::check_store_gradients(m.params, grads, objective, 30, 9, 1e-5);
  INFO(r.worst);
  CHECK(r.max_relative_error < 1e-4);
  CHECK(grads[m.decoders.log_beta][0] != 0.0);
}
