#include "doctest.h"

#include "lpsurf/io.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>

using namespace lpsurf;
using nlohmann::json;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("lpsurf_test_" + name);
}

std::string read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

/// Applies `edit` to the manifest of a checkpoint file and rewrites it.
void edit_manifest(const std::filesystem::path& p, const std::function<void(json&)>& edit) {
  const std::string bytes = read_bytes(p);
  std::uint64_t size = 0;
  for (int i = 0; i < 8; ++i) size |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  json manifest = json::parse(bytes.substr(16, size));
  edit(manifest);
  const std::string text = manifest.dump();
  std::string out = bytes.substr(0, 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((text.size() >> (8 * i)) & 0xFF));
  write_bytes(p, out + text + bytes.substr(16 + size));
}

CheckpointErrc load_error(const std::filesystem::path& p) {
  try {
    load_checkpoint(p);
  } catch (const CheckpointError& e) {
    return e.code();
  }
  FAIL("load succeeded");
  return CheckpointErrc::io_error;
}

FieldModel small_model() {
  const auto cfg = lpsurf::testing::small_config();
  return FieldModel(lpsurf::testing::sphere_points(0.4, 60, 2), cfg, 5);
}

}  // namespace

TEST_CASE("checkpoint roundtrip") {
  FieldModel m = small_model();
  m.params.set_frozen("geometry_", true);
  // Give the optimizer state some content.
  Gradients g(m.params);
  for (std::size_t i = 0; i < g.size(); ++i) g[static_cast<int>(i)].setConstant(0.25 + static_cast<double>(i));
  adam_step(m.params, g, 1e-3);
  const auto path = temp_path("roundtrip.ckpt");
  save_checkpoint(make_field_checkpoint(m, {{"note", "x"}}, 42, 17), path);
  const auto ck = load_checkpoint(path);
  CHECK(ck.kind == "field");
  CHECK(ck.seed == 42);
  CHECK(ck.step == 17);
  CHECK(ck.config["note"] == "x");
  REQUIRE(ck.params.size() == m.params.size());
  auto as_float = [](const Vector& v) { return Vector(v.cast<float>().cast<double>()); };
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const auto& a = m.params[static_cast<int>(i)];
    const auto& b = ck.params[static_cast<int>(i)];
    CHECK(a.name == b.name);
    CHECK(a.shape == b.shape);
    CHECK(a.frozen == b.frozen);
    CHECK(a.step == b.step);
    CHECK(as_float(a.value) == b.value);
    CHECK(as_float(a.first_moment) == b.first_moment);
    CHECK(as_float(a.second_moment) == b.second_moment);
  }
  REQUIRE(ck.positions.size() == m.points.positions.size());
  for (std::size_t i = 0; i < ck.positions.size(); ++i)
    CHECK(ck.positions[i] == m.points.positions[i].cast<float>().cast<double>());

  // A second roundtrip is exact.
  const auto path2 = temp_path("roundtrip2.ckpt");
  save_checkpoint(ck, path2);
  CHECK(read_bytes(path) == read_bytes(path2));

  const FieldModel back = field_from_checkpoint(ck, m.config);
  const std::vector<Vec3> xs{Vec3(0.4, 0, 0), Vec3(0, 0.38, 0.05)};
  const Vector s = eval_sdf(back.view(), xs);
  CHECK(s.allFinite());

  FieldConfig other = m.config;
  other.hidden_width = 9;
  CHECK_THROWS_AS(field_from_checkpoint(ck, other), CheckpointError);
  other = m.config;
  other.geometry_dim = 5;
  try {
    field_from_checkpoint(ck, other);
    FAIL("accepted a mismatched config");
  } catch (const CheckpointError& e) {
    CHECK(e.code() == CheckpointErrc::shape_mismatch);
  }
  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("corrupted checkpoints") {
  const FieldModel m = small_model();
  const auto path = temp_path("corrupt.ckpt");
  save_checkpoint(make_field_checkpoint(m, json::object(), 1, 0), path);
  const std::string good = read_bytes(path);

  write_bytes(path, good.substr(0, good.size() - 10));
  CHECK(load_error(path) == CheckpointErrc::truncated_blob);

  write_bytes(path, good);
  edit_manifest(path, [](json& j) { j["entries"][0]["shape"][1] = j["entries"][0]["shape"][1].get<int>() + 1; });
  CHECK(load_error(path) == CheckpointErrc::shape_mismatch);

  write_bytes(path, good);
  edit_manifest(path, [](json& j) {
    auto& last = j["entries"].back();
    last["shape"][1] = last["shape"][1].get<int>() + 1;
  });
  CHECK(load_error(path) == CheckpointErrc::shape_mismatch);

  write_bytes(path, good);
  edit_manifest(path, [](json& j) { j["format_version"] = checkpoint_format_version + 1; });
  CHECK(load_error(path) == CheckpointErrc::version_mismatch);

  write_bytes(path, "PNG garbage that is long enough");
  CHECK(load_error(path) == CheckpointErrc::bad_magic);

  write_bytes(path, good.substr(0, 16) + "{not json");
  CHECK(load_error(path) == CheckpointErrc::malformed_manifest);

  std::filesystem::remove(path);
  CHECK(load_error(path) == CheckpointErrc::io_error);
}

TEST_CASE("run config") {
  const RunConfig defaults;
  const json j = to_json(defaults);
  CHECK(j["field"]["radius"] == 0.075);
  CHECK(j["prior"]["neighbors"] == 4);
  CHECK(j["reconstruction"]["neighbors"] == 8);
  CHECK(j["prior"]["decoder_lr"] == 3e-4);
  CHECK(j["prior"]["query_variances"] == json::array({0.05, 0.001}));
  CHECK(to_json(run_config_from_json(j)) == j);

  // Partial files keep the defaults for everything else.
  const auto partial = run_config_from_json(json{{"seed", 9}, {"prior", {{"epochs", 3}}}});
  CHECK(partial.seed == 9);
  CHECK(partial.prior.epochs == 3);
  CHECK(partial.prior.seed == 9);
  CHECK(partial.reconstruction.seed == 9);
  CHECK(partial.prior.field.neighbors == 4);
  CHECK(partial.reconstruction.field.neighbors == 8);

  auto message = [](const json& bad) {
    try {
      run_config_from_json(bad);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message(json{{"prior", {{"epoch", 3}}}}).find("prior.epoch") != std::string::npos);
  CHECK(message(json{{"field", {{"grid", {{"voxel", 1}}}}}}).find("field.grid.voxel") != std::string::npos);
  CHECK(message(json{{"bogus", 1}}).find("bogus") != std::string::npos);
  CHECK(!message(json{{"prior", {{"epochs", "many"}}}}).empty());
  CHECK(!message(json{{"reconstruction", {{"pseudo_source", "elsewhere"}}}}).empty());
  CHECK(!message(json{{"extraction", {{"resolution", 4}}}}).empty());

  const auto missing = temp_path("no_such_config.json");
  try {
    load_run_config(missing);
    FAIL("loaded a missing file");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
  }
}

TEST_CASE("shapes from json") {
  const auto torus = shape_from_json({{"kind", "torus"}, {"major_radius", 0.3}, {"minor_radius", 0.1}});
  CHECK(signed_distance(torus, Vec3(0.3, 0, 0)) == doctest::Approx(-0.1));
  CHECK_THROWS_AS(shape_from_json({{"kind", "cone"}}), std::invalid_argument);
  CHECK_THROWS_AS(shape_from_json({{"kind", "sphere"}, {"radius", 0.2}, {"height", 1}}), std::invalid_argument);
}

TEST_CASE("camera files") {
  std::vector<CameraEntry> cams;
  Rng rng = make_rng(8);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 5; ++i) {
    const Vec3 eye = Vec3(u(rng), u(rng), u(rng)).normalized() * (2.0 + u(rng));
    cams.push_back({"v" + std::to_string(i), i % 2 ? "test" : "train",
                    Camera::look_at(eye, Vec3(0.1 * u(rng), 0, 0), Vec3::UnitZ(), 35.0 + u(rng), 40 + i, 30)});
  }
  const auto path = temp_path("cameras.json");
  write_cameras(cams, path);
  const auto back = read_cameras(path);
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].name == cams[i].name);
    CHECK(back[i].split == cams[i].split);
    CHECK(back[i].camera.intrinsics() == cams[i].camera.intrinsics());
    CHECK(back[i].camera.pose() == cams[i].camera.pose());
    CHECK(back[i].camera.width() == cams[i].camera.width());
    CHECK(back[i].camera.height() == cams[i].camera.height());
  }
  std::filesystem::remove(path);
}

TEST_CASE("synthetic scenes") {
  SceneConfig cfg;
  cfg.width = 24;
  cfg.height = 20;
  const auto cams = make_scene_cameras(cfg);
  REQUIRE(cams.size() == 4);
  CHECK(cams[0].split == "train");
  CHECK(cams[3].split == "test");
  CHECK(cams[3].name == "test_000");
  for (const auto& c : cams) CHECK(c.camera.center().norm() == doctest::Approx(cfg.camera_distance));
  const Scene scene = make_scene(cfg);
  const auto view = render_ground_truth(scene, cams[0].camera);
  // The center pixel sees the sphere.
  CHECK(std::isfinite(view.depth.at(12, 10)));
  CHECK(view.depth.at(12, 10) == doctest::Approx(cfg.camera_distance - 0.35).epsilon(0.02));
  cfg.kind = "cube";
  CHECK_THROWS_AS(make_scene(cfg), std::invalid_argument);
}
