#include "doctest.h"

#include "lpsurf/nn.hpp"
#include "lpsurf/gradcheck.hpp"

#include <cmath>
#include <numbers>

using namespace lpsurf;

TEST_CASE("positional encoding") {
  CHECK(posenc(Vec3(1, 2, 3), 0).size() == 3);
  const Vector zero = posenc(Vec3::Zero(), 6);
  REQUIRE(zero.size() == 39);
  for (int l = 0; l < 6; ++l) {
    for (int k = 0; k < 3; ++k) {
      CHECK(zero[3 + 6 * l + k] == 0.0);
      CHECK(zero[6 + 6 * l + k] == 1.0);
    }
  }
  const Vector x = posenc(Vec3(1, 0, 0), 1);
  CHECK(std::abs(x[3]) < 1e-15);
  CHECK(x[6] == doctest::Approx(-1.0));
  const Vector y = posenc(Vec3(0.3, 0, 0), 3);
  CHECK(y[3 + 6 * 2] == doctest::Approx(std::sin(4 * std::numbers::pi * 0.3)));
}

TEST_CASE("mlp forward") {
  ParameterStore store;
  Rng rng = make_rng(1);
  const Mlp net("net", {3, {2}, OutputActivation::none, 0}, store, rng);
  store["net.0.weight"].value.setZero();
  store["net.0.bias"].value << 0.25, -0.5;
  const Matrix out = net.forward(store, Matrix::Random(3, 4));
  for (int c = 0; c < 4; ++c) {
    CHECK(out(0, c) == 0.25);
    CHECK(out(1, c) == -0.5);
  }

  ParameterStore id_store;
  const Mlp id("id", {3, {3}, OutputActivation::none, 0}, id_store, rng);
  id_store["id.0.weight"].matrix() = Mat3::Identity();
  id_store["id.0.bias"].value.setZero();
  const Matrix in = Matrix::Random(3, 5);
  CHECK(id.forward(id_store, in) == in);

  CHECK_THROWS_AS(net.forward(store, Matrix::Zero(4, 1)), std::invalid_argument);
}

TEST_CASE("mlp forward matches a straight-line implementation") {
  ParameterStore store;
  Rng rng = make_rng(5);
  const Mlp net("net", {5, {7, 4}, OutputActivation::sigmoid, 0}, store, rng);
  const Matrix in = Matrix::Random(5, 3);
  const Matrix out = net.forward(store, in);
  const auto& w0 = store["net.0.weight"];
  const auto& b0 = store["net.0.bias"];
  const auto& w1 = store["net.1.weight"];
  const auto& b1 = store["net.1.bias"];
  for (int c = 0; c < 3; ++c) {
    double hidden[7];
    for (int i = 0; i < 7; ++i) {
      double s = b0.value[i];
      for (int j = 0; j < 5; ++j) s += w0.value[i + 7 * j] * in(j, c);
      hidden[i] = s > 0 ? s : 0;
    }
    for (int i = 0; i < 4; ++i) {
      double s = b1.value[i];
      for (int j = 0; j < 7; ++j) s += w1.value[i + 4 * j] * hidden[j];
      CHECK(std::abs(out(i, c) - 1.0 / (1.0 + std::exp(-s))) < 1e-12);
    }
  }
}

TEST_CASE("mlp backward") {
  ParameterStore store;
  Rng rng = make_rng(2);
  const Mlp lin("lin", {3, {2}, OutputActivation::none, 0}, store, rng);
  const Matrix in = Matrix::Random(3, 1);
  MlpTape tape;
  lin.forward(store, in, &tape);
  Gradients grads(store);
  const Matrix g_out = (Matrix(2, 1) << 0.7, -1.3).finished();
  const Matrix g_in = lin.backward(store, tape, g_out, grads);
  CHECK((g_in - store["lin.0.weight"].matrix().transpose() * g_out).norm() < 1e-15);

  ParameterStore relu_store;
  const Mlp two("two", {1, {1, 1}, OutputActivation::none, 0}, relu_store, rng);
  relu_store["two.0.weight"].value << 1.0;
  relu_store["two.0.bias"].value << -5.0;  // negative preactivation
  MlpTape t2;
  two.forward(relu_store, Matrix::Constant(1, 1, 1.0), &t2);
  Gradients g2(relu_store);
  const Matrix gi = two.backward(relu_store, t2, Matrix::Ones(1, 1), g2);
  CHECK(gi(0, 0) == 0.0);
  CHECK(g2[relu_store.index("two.0.weight")][0] == 0.0);
}

TEST_CASE("gradient checks") {
  Rng rng = make_rng(9);
  {
    ParameterStore store;
    const Mlp lin("lin", {4, {3}, OutputActivation::none, 0}, store, rng);
    const auto r = gradient_check(lin, store, Matrix::Random(4, 3), 1e-6, Matrix::Random(3, 3));
    CHECK(r.max_relative_error < 1e-8);
  }
  {
    ParameterStore store;
    const Mlp deep("deep", {35, {32, 32, 32, 16}, OutputActivation::none, 0}, store, rng);
    const auto r = gradient_check(deep, store, Matrix::Random(35, 4), 1e-6, Matrix::Random(16, 4));
    CHECK(r.max_relative_error < 1e-4);
  }
  {
    ParameterStore store;
    const Mlp enc("enc", {8, {16, 5}, OutputActivation::sigmoid, 3}, store, rng);
    const auto r = gradient_check(enc, store, Matrix::Random(8, 3) * 0.3, 1e-6, Matrix::Random(5, 3));
    CHECK(r.max_relative_error < 1e-4);
  }
  {
    // A corrupted analytic gradient must be detected.
    ParameterStore store;
    const Mlp lin("lin", {3, {2}, OutputActivation::none, 0}, store, rng);
    Vector x = Vector::Random(6);
    auto f = [&] { return store["lin.0.weight"].value.dot(x); };
    Vector analytic = x;
    analytic[2] += 0.5;
    auto& w = store["lin.0.weight"].value;
    const auto r = finite_difference_check(f, {w.data(), 6}, {analytic.data(), 6}, 1e-6, "w");
    CHECK(r.max_relative_error > 1e-2);
    CHECK(r.worst == "w[2]");
  }
}

TEST_CASE("frozen layers get no gradient") {
  ParameterStore store;
  Rng rng = make_rng(4);
  const Mlp net("net", {3, {4, 2}, OutputActivation::none, 0}, store, rng, true);
  MlpTape tape;
  net.forward(store, Matrix::Random(3, 2), &tape);
  Gradients grads(store);
  const Matrix g_in = net.backward(store, tape, Matrix::Ones(2, 2), grads);
  for (std::size_t i = 0; i < grads.size(); ++i) CHECK(grads[static_cast<int>(i)].isZero(0.0));
  CHECK(g_in.norm() > 0.0);
}

TEST_CASE("adam") {
  ParameterStore store;
  store.add("a", {2}, Vector::Constant(2, 1.0));
  store.add("b", {2}, Vector::Constant(2, -1.0));
  Gradients grads(store);
  adam_step(store, grads, 0.1);
  CHECK(store["a"].value == Vector::Constant(2, 1.0));
  CHECK(store["a"].step == 1);

  grads[0].setConstant(1.0);
  grads[1].setConstant(1.0);
  ParameterStore fresh;
  fresh.add("a", {2}, Vector::Constant(2, 1.0));
  fresh.add("b", {2}, Vector::Constant(2, -1.0));
  adam_step(fresh, grads, 0.1);
  const double expected = -0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(fresh["a"].value[0] - 1.0 == doctest::Approx(expected).epsilon(1e-12));
  CHECK(fresh["a"].value[0] - 1.0 == fresh["b"].value[1] + 1.0);

  ParameterStore still;
  still.add("a", {2}, Vector::Constant(2, 3.0));
  Gradients ones(still);
  ones[0].setConstant(1.0);
  adam_step(still, ones, 0.0);
  CHECK(still["a"].value == Vector::Constant(2, 3.0));

  Gradients bad(fresh);
  bad[1][0] = std::nan("");
  const Vector before = fresh["a"].value;
  try {
    adam_step(fresh, bad, 0.1);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("'b'") != std::string::npos);
  }
  CHECK(fresh["a"].value == before);

  fresh["a"].frozen = true;
  const Vector frozen_before = fresh["a"].value;
  adam_step(fresh, grads, 0.1);
  CHECK(fresh["a"].value == frozen_before);
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0, 1000, 1e-2, 3e-4) == doctest::Approx(1e-2));
  CHECK(cosine_lr(1000, 1000, 1e-2, 3e-4) == doctest::Approx(3e-4));
  CHECK(cosine_lr(500, 1000, 1e-2, 3e-4) == doctest::Approx(5.15e-3));
}

TEST_CASE("parameter store") {
  ParameterStore store;
  store.add("x", {2, 3}, Vector::Zero(6));
  CHECK_THROWS_AS(store.add("x", {1}, Vector::Zero(1)), std::invalid_argument);
  CHECK_THROWS_AS(store.add("y", {2, 2}, Vector::Zero(3)), std::invalid_argument);
  CHECK_THROWS_AS(store.index("z"), std::out_of_range);
  CHECK(store.scalar_count() == 6);
}

TEST_CASE("gradient suite") {
  const auto reports = run_gradient_suite(0);
  CHECK(reports.size() >= 15);
  for (const auto& r : reports) {
    INFO(r.name << " worst " << r.worst);
    CHECK(r.max_relative_error < 1e-4);
  }
}
