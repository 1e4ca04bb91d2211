#include "lpsurf/io.hpp"

#include "lpsurf/mesh_io.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

namespace lpsurf {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char checkpoint_magic[8] = {'L', 'P', 'S', 'U', 'R', 'F', 'C', 'K'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float get_f32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(v);
}

void put_values(std::string& blob, const double* values, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
}

std::size_t element_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

[[noreturn]] void fail(CheckpointErrc code, const std::filesystem::path& path, const std::string& what) {
  throw CheckpointError(code, path.string() + ": " + what);
}

}  // namespace

std::string_view to_string(CheckpointErrc code) {
  switch (code) {
    case CheckpointErrc::io_error: return "io error";
    case CheckpointErrc::bad_magic: return "bad magic";
    case CheckpointErrc::malformed_manifest: return "malformed manifest";
    case CheckpointErrc::version_mismatch: return "version mismatch";
    case CheckpointErrc::truncated_blob: return "truncated blob";
    case CheckpointErrc::shape_mismatch: return "shape mismatch";
  }
  return "unknown";
}

CheckpointError::CheckpointError(CheckpointErrc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  json entries = json::array();
  std::string blob;
  std::size_t offset = 0;
  auto add_entry = [&](const std::string& name, const std::string& role, const std::vector<int>& shape,
                       const double* values, json extra = json::object()) {
    json e = {{"name", name}, {"role", role}, {"shape", shape}, {"offset", offset}};
    e.update(extra);
    entries.push_back(std::move(e));
    const std::size_t n = element_count(shape);
    put_values(blob, values, n);
    offset += n;
  };
  for (const auto& p : checkpoint.params.entries()) {
    add_entry(p.name, "value", p.shape, p.value.data(), {{"frozen", p.frozen}, {"adam_step", p.step}});
    if (p.first_moment.size() == p.value.size() && p.second_moment.size() == p.value.size()) {
      add_entry(p.name, "first_moment", p.shape, p.first_moment.data());
      add_entry(p.name, "second_moment", p.shape, p.second_moment.data());
    }
  }
  if (!checkpoint.positions.empty()) {
    std::vector<double> flat;
    flat.reserve(checkpoint.positions.size() * 3);
    for (const auto& p : checkpoint.positions) flat.insert(flat.end(), {p.x(), p.y(), p.z()});
    add_entry("neural_points", "positions", {3, static_cast<int>(checkpoint.positions.size())}, flat.data());
  }
  const json manifest = {{"format_version", checkpoint_format_version},
                         {"kind", checkpoint.kind},
                         {"config", checkpoint.config},
                         {"rng", {{"seed", checkpoint.seed}, {"step", checkpoint.step}}},
                         {"step", checkpoint.step},
                         {"blob_values", offset},
                         {"entries", entries}};
  const std::string text = manifest.dump();

  std::string header(checkpoint_magic, sizeof checkpoint_magic);
  put_u64(header, text.size());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(CheckpointErrc::io_error, tmp, "cannot open for writing");
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) fail(CheckpointErrc::io_error, tmp, "write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(CheckpointErrc::io_error, path, "rename failed: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(CheckpointErrc::io_error, path, "cannot open");
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());

  if (bytes.size() < 16 || !std::equal(std::begin(checkpoint_magic), std::end(checkpoint_magic), bytes.begin()))
    fail(CheckpointErrc::bad_magic, path, "not a checkpoint file");
  const std::uint64_t manifest_size = get_u64(data + 8);
  if (manifest_size > bytes.size() - 16) fail(CheckpointErrc::malformed_manifest, path, "manifest extends past the file end");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(manifest_size));
  } catch (const json::exception& e) {
    fail(CheckpointErrc::malformed_manifest, path, e.what());
  }

  Checkpoint ck;
  std::vector<json> entries;
  std::size_t declared = 0;
  try {
    const int version = manifest.at("format_version").get<int>();
    if (version != checkpoint_format_version)
      fail(CheckpointErrc::version_mismatch, path,
           "format version " + std::to_string(version) + ", expected " + std::to_string(checkpoint_format_version));
    ck.kind = manifest.at("kind").get<std::string>();
    ck.config = manifest.at("config");
    ck.seed = manifest.at("rng").at("seed").get<std::uint64_t>();
    ck.step = manifest.at("rng").at("step").get<std::int64_t>();
    declared = manifest.at("blob_values").get<std::size_t>();
    entries = manifest.at("entries").get<std::vector<json>>();
  } catch (const json::exception& e) {
    fail(CheckpointErrc::malformed_manifest, path, e.what());
  }

  std::size_t offset = 0;
  for (const auto& e : entries) {
    std::vector<int> shape;
    std::size_t entry_offset = 0;
    try {
      shape = e.at("shape").get<std::vector<int>>();
      entry_offset = e.at("offset").get<std::size_t>();
    } catch (const json::exception& ex) {
      fail(CheckpointErrc::malformed_manifest, path, ex.what());
    }
    const std::string name = e.value("name", std::string("?"));
    if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](int d) { return d < 0; }))
      fail(CheckpointErrc::shape_mismatch, path, "entry '" + name + "' has an invalid shape");
    if (entry_offset != offset)
      fail(CheckpointErrc::shape_mismatch, path,
           "entry '" + name + "' starts at " + std::to_string(entry_offset) + " but the shapes before it end at " +
               std::to_string(offset));
    offset += element_count(shape);
  }
  if (offset != declared)
    fail(CheckpointErrc::shape_mismatch, path,
         "shapes cover " + std::to_string(offset) + " values, manifest declares " + std::to_string(declared));
  const std::size_t blob_bytes = bytes.size() - 16 - manifest_size;
  if (blob_bytes < declared * 4)
    fail(CheckpointErrc::truncated_blob, path,
         "blob has " + std::to_string(blob_bytes) + " bytes, expected " + std::to_string(declared * 4));
  if (blob_bytes > declared * 4)
    fail(CheckpointErrc::shape_mismatch, path,
         "blob has " + std::to_string(blob_bytes) + " bytes, shapes declare " + std::to_string(declared * 4));

  const unsigned char* blob = data + 16 + manifest_size;
  auto read_vector = [&](std::size_t at, std::size_t n) {
    Vector v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v[static_cast<Eigen::Index>(i)] = get_f32(blob + 4 * (at + i));
    return v;
  };
  try {
    for (const auto& e : entries) {
      const auto shape = e.at("shape").get<std::vector<int>>();
      const auto at = e.at("offset").get<std::size_t>();
      const auto role = e.at("role").get<std::string>();
      const auto name = e.at("name").get<std::string>();
      const std::size_t n = element_count(shape);
      if (role == "value") {
        const int i = ck.params.add(name, shape, read_vector(at, n), e.value("frozen", false));
        ck.params[i].step = e.value("adam_step", std::int64_t{0});
      } else if (role == "first_moment" || role == "second_moment") {
        if (!ck.params.contains(name) || ck.params[name].shape != shape)
          fail(CheckpointErrc::shape_mismatch, path, "optimizer state for '" + name + "' does not match its parameter");
        (role == "first_moment" ? ck.params[name].first_moment : ck.params[name].second_moment) = read_vector(at, n);
      } else if (role == "positions") {
        if (shape.size() != 2 || shape[0] != 3) fail(CheckpointErrc::shape_mismatch, path, "positions must be 3 x N");
        const Vector flat = read_vector(at, n);
        for (std::size_t i = 0; i < n; i += 3) ck.positions.emplace_back(flat[i], flat[i + 1], flat[i + 2]);
      } else {
        fail(CheckpointErrc::malformed_manifest, path, "unknown entry role '" + role + "'");
      }
    }
  } catch (const json::exception& e) {
    fail(CheckpointErrc::malformed_manifest, path, e.what());
  } catch (const std::invalid_argument& e) {
    fail(CheckpointErrc::malformed_manifest, path, e.what());
  }
  return ck;
}

Checkpoint make_field_checkpoint(const FieldModel& model, json config, std::uint64_t seed, std::int64_t step) {
  Checkpoint ck;
  ck.kind = "field";
  ck.config = std::move(config);
  ck.params = model.params;
  ck.positions = model.points.positions;
  ck.seed = seed;
  ck.step = step;
  return ck;
}

FieldModel field_from_checkpoint(const Checkpoint& checkpoint, const FieldConfig& config) {
  if (checkpoint.kind != "field")
    throw CheckpointError(CheckpointErrc::shape_mismatch, "expected a field checkpoint, got '" + checkpoint.kind + "'");
  if (checkpoint.positions.empty())
    throw CheckpointError(CheckpointErrc::shape_mismatch, "field checkpoint without neural points");
  config.validate();
  FieldModel model;
  model.config = config;
  model.params = checkpoint.params;
  try {
    model.rebind();
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrc::shape_mismatch, e.what());
  }
  const auto count = static_cast<int>(checkpoint.positions.size());
  auto check_table = [&](int index, int dim) {
    if (index < 0) return;
    const auto& shape = model.params[index].shape;
    if (shape != std::vector<int>{dim, count})
      throw CheckpointError(CheckpointErrc::shape_mismatch, "latent table '" + model.params[index].name +
                                                                "' does not match the configuration and point count");
  };
  check_table(model.points.geometry_latents, config.geometry_dim);
  check_table(model.points.appearance_latents, config.appearance_dim);
  model.points.positions = checkpoint.positions;
  model.points.grid = VoxelGrid(model.points.positions, config.grid);
  return model;
}

// ---------------------------------------------------------------------------
// Run configuration

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j, const std::string& where) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 3) throw std::invalid_argument(where + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

json box_json(const Aabb& b) { return {{"lo", vec_json(b.lo)}, {"hi", vec_json(b.hi)}}; }

/// Strict reader for one JSON object: every key must be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config section '" + label() + "' must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key_path(key) + "': " + e.what());
    }
  }

  void read_vec(const char* key, Vec3& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = vec_from(*it, key_path(key));
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + key_path(key) + "': " + e.what());
    }
  }

  void read_box(const char* key, Aabb& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    Section s(*it, key_path(key));
    s.read_vec("lo", out.lo);
    s.read_vec("hi", out.hi);
    s.finish();
  }

  /// Sub-object, or an empty one when absent.
  Section child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return Section(it == j_.end() ? empty() : *it, key_path(key));
  }

  void raw(const char* key, json& out) {
    seen_.insert(key);
    if (const auto it = j_.find(key); it != j_.end()) out = *it;
  }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw std::invalid_argument("unknown config key '" + key_path(item.key()) + "'");
    }
  }

 private:
  static const json& empty() {
    static const json e = json::object();
    return e;
  }
  std::string label() const { return path_.empty() ? "<root>" : path_; }
  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

json field_json(const FieldConfig& f) {
  const auto& g = f.grid;
  return {{"radius", f.radius},
          {"rbf_lambda", f.rbf_lambda},
          {"empty_sdf", f.empty_sdf},
          {"gradient_step", f.gradient_step},
          {"relative_scale", f.relative_scale},
          {"background", vec_json(f.background)},
          {"geometry_dim", f.geometry_dim},
          {"appearance_dim", f.appearance_dim},
          {"hidden_width", f.hidden_width},
          {"appearance_feature_dim", f.appearance_feature_dim},
          {"posenc_frequencies", f.posenc_frequencies},
          {"latent_std", f.latent_std},
          {"initial_beta", f.initial_beta},
          {"grid",
           {{"voxel_size", vec_json(g.voxel_size)},
            {"voxel_scale", vec_json(g.voxel_scale)},
            {"kernel_size", g.kernel_size},
            {"max_points_per_voxel", g.max_points_per_voxel},
            {"max_occupied_voxels", g.max_occupied_voxels},
            {"ranges", box_json(g.ranges)}}}};
}

void read_field(Section s, FieldConfig& f) {
  s.read("radius", f.radius);
  s.read("rbf_lambda", f.rbf_lambda);
  s.read("empty_sdf", f.empty_sdf);
  s.read("gradient_step", f.gradient_step);
  s.read("relative_scale", f.relative_scale);
  s.read_vec("background", f.background);
  s.read("geometry_dim", f.geometry_dim);
  s.read("appearance_dim", f.appearance_dim);
  s.read("hidden_width", f.hidden_width);
  s.read("appearance_feature_dim", f.appearance_feature_dim);
  s.read("posenc_frequencies", f.posenc_frequencies);
  s.read("latent_std", f.latent_std);
  s.read("initial_beta", f.initial_beta);
  auto g = s.child("grid");
  g.read_vec("voxel_size", f.grid.voxel_size);
  g.read_vec("voxel_scale", f.grid.voxel_scale);
  g.read("kernel_size", f.grid.kernel_size);
  g.read("max_points_per_voxel", f.grid.max_points_per_voxel);
  g.read("max_occupied_voxels", f.grid.max_occupied_voxels);
  g.read_box("ranges", f.grid.ranges);
  g.finish();
  s.finish();
}

json weights_json(const LossWeights& w) {
  return {{"sdf_epsilon", w.sdf_epsilon},
          {"prior_tv", w.prior_tv},
          {"prior_eikonal", w.prior_eikonal},
          {"feature_consistency", w.feature_consistency},
          {"pseudo_sdf", w.pseudo_sdf},
          {"recon_tv", w.recon_tv}};
}

void read_weights(Section s, LossWeights& w) {
  s.read("sdf_epsilon", w.sdf_epsilon);
  s.read("prior_tv", w.prior_tv);
  s.read("prior_eikonal", w.prior_eikonal);
  s.read("feature_consistency", w.feature_consistency);
  s.read("pseudo_sdf", w.pseudo_sdf);
  s.read("recon_tv", w.recon_tv);
  s.finish();
}

std::string pseudo_name(PseudoSource p) { return p == PseudoSource::neural_points ? "neural_points" : "ray_surface"; }

PseudoSource pseudo_from(const std::string& s) {
  if (s == "neural_points") return PseudoSource::neural_points;
  if (s == "ray_surface") return PseudoSource::ray_surface;
  throw std::invalid_argument("reconstruction.pseudo_source must be 'neural_points' or 'ray_surface'");
}

}  // namespace

void SceneConfig::validate() const {
  if (kind != "sphere_plane" && kind != "sphere" && kind != "mesh")
    throw std::invalid_argument("scene.kind must be 'sphere_plane', 'sphere' or 'mesh'");
  if (kind == "mesh" && mesh.empty()) throw std::invalid_argument("scene.mesh is required for kind 'mesh'");
  if (width < 1 || height < 1) throw std::invalid_argument("scene: image size must be positive");
  if (train_views < 1 || test_views < 0) throw std::invalid_argument("scene: need at least one training view");
  if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw std::invalid_argument("scene: fov must be in (0, 180)");
  if (!(camera_distance > 0.0)) throw std::invalid_argument("scene: camera distance must be positive");
  if (seed_stride < 1 || ground_truth_stride < 1) throw std::invalid_argument("scene: strides must be >= 1");
  if (!(seed_spacing >= 0.0)) throw std::invalid_argument("scene: seed spacing must be >= 0");
}

void EvalConfig::validate() const {
  if (mesh_samples < 1) throw std::invalid_argument("eval: mesh_samples must be positive");
  if (nearest_search != "automatic" && nearest_search != "brute_force" && nearest_search != "grid")
    throw std::invalid_argument("eval.nearest_search must be 'automatic', 'brute_force' or 'grid'");
}

void AnalysisConfig::validate() const {
  if (components < 1 || clusters < 1) throw std::invalid_argument("analysis: counts must be positive");
}

RunConfig::RunConfig() {
  // Desk-scale sample counts per ray.
  reconstruction.render.n_coarse = 32;
  reconstruction.render.n_fine = 32;
}

void RunConfig::resolve() {
  auto with_neighbors = [&](const FieldConfig& phase) {
    FieldConfig f = field;
    f.neighbors = phase.neighbors;
    return f;
  };
  prior.field = with_neighbors(prior.field);
  fit.field = with_neighbors(fit.field);
  reconstruction.field = with_neighbors(reconstruction.field);
  prior.weights = fit.weights = reconstruction.weights;
  prior.seed = fit.seed = reconstruction.seed = seed;
  field.validate();
  prior.validate();
  fit.validate();
  reconstruction.validate();
  extraction.validate();
  scene.validate();
  eval.validate();
  analysis.validate();
  if (prior_shapes < 1 && prior_meshes.empty()) throw std::invalid_argument("prior: no training shapes");
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be >= 0");
  shape_from_json(fit_shape);
}

json to_json(const RunConfig& c) {
  const auto& p = c.prior;
  const auto& f = c.fit;
  const auto& r = c.reconstruction;
  return {
      {"seed", c.seed},
      {"field", field_json(c.field)},
      {"losses", weights_json(c.reconstruction.weights)},
      {"prior",
       {{"neighbors", p.field.neighbors},
        {"shapes", c.prior_shapes},
        {"shape_seed", c.prior_shape_seed},
        {"meshes", c.prior_meshes},
        {"epochs", p.epochs},
        {"batch_size", p.batch_size},
        {"queries_per_shape", p.queries_per_shape},
        {"eikonal_queries_per_shape", p.eikonal_queries_per_shape},
        {"query_variances", p.query_variances},
        {"surface_candidates", p.surface_candidates},
        {"point_spacing", p.point_spacing},
        {"point_jitter_variance", p.point_jitter_variance},
        {"latent_lr_start", p.latent_lr_start},
        {"latent_lr_end", p.latent_lr_end},
        {"decoder_lr", p.decoder_lr}}},
      {"fit",
       {{"neighbors", f.field.neighbors},
        {"shape", c.fit_shape},
        {"iterations", f.iterations},
        {"queries_per_step", f.queries_per_step},
        {"eikonal_queries", f.eikonal_queries},
        {"query_variances", f.query_variances},
        {"surface_candidates", f.surface_candidates},
        {"point_spacing", f.point_spacing},
        {"lr_start", f.lr_start},
        {"lr_end", f.lr_end}}},
      {"reconstruction",
       {{"neighbors", r.field.neighbors},
        {"iterations", r.iterations},
        {"rays_per_step", r.rays_per_step},
        {"n_coarse", r.render.n_coarse},
        {"n_fine", r.render.n_fine},
        {"perturb", r.render.perturb},
        {"min_transmittance", r.render.min_transmittance},
        {"feature_extractor", r.feature_extractor},
        {"pseudo_source", pseudo_name(r.pseudo_source)},
        {"pseudo_points_per_step", r.pseudo_points_per_step},
        {"latent_lr_start", r.latent_lr_start},
        {"latent_lr_end", r.latent_lr_end},
        {"decoder_lr", r.decoder_lr},
        {"density_lr", r.density_lr},
        {"train_density", r.train_density},
        {"use_prior", r.use_prior},
        {"checkpoint_every", c.checkpoint_every}}},
      {"extraction",
       {{"resolution", c.extraction.resolution},
        {"bounds", box_json(c.extraction.bounds)},
        {"iso", c.extraction.iso},
        {"min_component_faces", c.extraction.min_component_faces}}},
      {"scene",
       {{"kind", c.scene.kind},
        {"mesh", c.scene.mesh},
        {"width", c.scene.width},
        {"height", c.scene.height},
        {"train_views", c.scene.train_views},
        {"test_views", c.scene.test_views},
        {"fov_degrees", c.scene.fov_degrees},
        {"camera_distance", c.scene.camera_distance},
        {"elevation_degrees", c.scene.elevation_degrees},
        {"train_arc_degrees", c.scene.train_arc_degrees},
        {"seed_stride", c.scene.seed_stride},
        {"seed_spacing", c.scene.seed_spacing},
        {"ground_truth_stride", c.scene.ground_truth_stride}}},
      {"eval", {{"mesh_samples", c.eval.mesh_samples}, {"nearest_search", c.eval.nearest_search}}},
      {"analysis", {{"components", c.analysis.components}, {"clusters", c.analysis.clusters}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Section root(j, "");
  root.read("seed", c.seed);
  read_field(root.child("field"), c.field);
  read_weights(root.child("losses"), c.reconstruction.weights);
  {
    auto s = root.child("prior");
    auto& p = c.prior;
    s.read("neighbors", p.field.neighbors);
    s.read("shapes", c.prior_shapes);
    s.read("shape_seed", c.prior_shape_seed);
    s.read("meshes", c.prior_meshes);
    s.read("epochs", p.epochs);
    s.read("batch_size", p.batch_size);
    s.read("queries_per_shape", p.queries_per_shape);
    s.read("eikonal_queries_per_shape", p.eikonal_queries_per_shape);
    s.read("query_variances", p.query_variances);
    s.read("surface_candidates", p.surface_candidates);
    s.read("point_spacing", p.point_spacing);
    s.read("point_jitter_variance", p.point_jitter_variance);
    s.read("latent_lr_start", p.latent_lr_start);
    s.read("latent_lr_end", p.latent_lr_end);
    s.read("decoder_lr", p.decoder_lr);
    s.finish();
  }
  {
    auto s = root.child("fit");
    auto& f = c.fit;
    s.read("neighbors", f.field.neighbors);
    s.raw("shape", c.fit_shape);
    s.read("iterations", f.iterations);
    s.read("queries_per_step", f.queries_per_step);
    s.read("eikonal_queries", f.eikonal_queries);
    s.read("query_variances", f.query_variances);
    s.read("surface_candidates", f.surface_candidates);
    s.read("point_spacing", f.point_spacing);
    s.read("lr_start", f.lr_start);
    s.read("lr_end", f.lr_end);
    s.finish();
  }
  {
    auto s = root.child("reconstruction");
    auto& r = c.reconstruction;
    std::string pseudo = pseudo_name(r.pseudo_source);
    s.read("neighbors", r.field.neighbors);
    s.read("iterations", r.iterations);
    s.read("rays_per_step", r.rays_per_step);
    s.read("n_coarse", r.render.n_coarse);
    s.read("n_fine", r.render.n_fine);
    s.read("perturb", r.render.perturb);
    s.read("min_transmittance", r.render.min_transmittance);
    s.read("feature_extractor", r.feature_extractor);
    s.read("pseudo_source", pseudo);
    s.read("pseudo_points_per_step", r.pseudo_points_per_step);
    s.read("latent_lr_start", r.latent_lr_start);
    s.read("latent_lr_end", r.latent_lr_end);
    s.read("decoder_lr", r.decoder_lr);
    s.read("density_lr", r.density_lr);
    s.read("train_density", r.train_density);
    s.read("use_prior", r.use_prior);
    s.read("checkpoint_every", c.checkpoint_every);
    s.finish();
    r.pseudo_source = pseudo_from(pseudo);
  }
  {
    auto s = root.child("extraction");
    s.read("resolution", c.extraction.resolution);
    s.read_box("bounds", c.extraction.bounds);
    s.read("iso", c.extraction.iso);
    s.read("min_component_faces", c.extraction.min_component_faces);
    s.finish();
  }
  {
    auto s = root.child("scene");
    auto& sc = c.scene;
    s.read("kind", sc.kind);
    s.read("mesh", sc.mesh);
    s.read("width", sc.width);
    s.read("height", sc.height);
    s.read("train_views", sc.train_views);
    s.read("test_views", sc.test_views);
    s.read("fov_degrees", sc.fov_degrees);
    s.read("camera_distance", sc.camera_distance);
    s.read("elevation_degrees", sc.elevation_degrees);
    s.read("train_arc_degrees", sc.train_arc_degrees);
    s.read("seed_stride", sc.seed_stride);
    s.read("seed_spacing", sc.seed_spacing);
    s.read("ground_truth_stride", sc.ground_truth_stride);
    s.finish();
  }
  {
    auto s = root.child("eval");
    s.read("mesh_samples", c.eval.mesh_samples);
    s.read("nearest_search", c.eval.nearest_search);
    s.finish();
  }
  {
    auto s = root.child("analysis");
    s.read("components", c.analysis.components);
    s.read("clusters", c.analysis.clusters);
    s.finish();
  }
  root.finish();
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw std::runtime_error("config file '" + path.string() + "': " + e.what());
  }
  return run_config_from_json(j);
}

Shape shape_from_json(const json& j) {
  Section s(j, "shape");
  std::string kind;
  s.read("kind", kind);
  Shape shape;
  Vec3 center = Vec3::Zero();
  if (kind == "sphere") {
    double radius = 0.5;
    s.read_vec("center", center);
    s.read("radius", radius);
    shape = make_sphere(center, radius);
  } else if (kind == "box") {
    Vec3 half = Vec3::Constant(0.25);
    s.read_vec("center", center);
    s.read_vec("half_extents", half);
    shape = make_box(center, half);
  } else if (kind == "torus") {
    double major = 0.3, minor = 0.1;
    s.read_vec("center", center);
    s.read("major_radius", major);
    s.read("minor_radius", minor);
    shape = make_torus(center, major, minor);
  } else if (kind == "capsule") {
    Vec3 a = Vec3::Zero(), b = Vec3::UnitZ();
    double radius = 0.1;
    s.read_vec("a", a);
    s.read_vec("b", b);
    s.read("radius", radius);
    shape = make_capsule(a, b, radius);
  } else if (kind == "mesh") {
    std::string path;
    bool normalize = true;
    s.read("path", path);
    s.read("normalize", normalize);
    auto mesh = read_mesh(path);
    if (normalize) mesh.normalize_to_unit_cube();
    shape = make_mesh_shape(std::move(mesh));
  } else {
    throw std::invalid_argument("shape.kind must be sphere, box, torus, capsule or mesh");
  }
  s.finish();
  return shape;
}

// ---------------------------------------------------------------------------
// Cameras and scenes

void write_cameras(std::span<const CameraEntry> cameras, const std::filesystem::path& path) {
  json views = json::array();
  for (const auto& c : cameras) {
    std::vector<double> k, pose;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) k.push_back(c.camera.intrinsics()(r, col));
    for (int r = 0; r < 4; ++r)
      for (int col = 0; col < 4; ++col) pose.push_back(c.camera.pose()(r, col));
    views.push_back({{"name", c.name},
                     {"split", c.split},
                     {"width", c.camera.width()},
                     {"height", c.camera.height()},
                     {"intrinsics", k},
                     {"camera_to_world", pose}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << json{{"views", views}}.dump(2) << "\n";
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

std::vector<CameraEntry> read_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read camera file '" + path.string() + "'");
  std::vector<CameraEntry> out;
  try {
    const json j = json::parse(in);
    for (const auto& v : j.at("views")) {
      const auto k = v.at("intrinsics").get<std::vector<double>>();
      const auto pose = v.at("camera_to_world").get<std::vector<double>>();
      if (k.size() != 9 || pose.size() != 16) throw std::invalid_argument("camera matrices have the wrong size");
      Mat3 K;
      Mat4 P;
      for (int i = 0; i < 9; ++i) K(i / 3, i % 3) = k[i];
      for (int i = 0; i < 16; ++i) P(i / 4, i % 4) = pose[i];
      out.push_back({v.at("name").get<std::string>(), v.value("split", std::string("train")),
                     Camera(K, P, v.at("width").get<int>(), v.at("height").get<int>())});
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("camera file '" + path.string() + "': " + e.what());
  }
  return out;
}

Scene make_scene(const SceneConfig& config) {
  config.validate();
  Scene scene;
  scene.background = Rgb::Zero();
  if (config.kind == "sphere") {
    scene.objects.push_back({make_sphere(Vec3::Zero(), 0.5), CheckerAlbedo{Rgb(0.9, 0.35, 0.2), Rgb(0.15, 0.3, 0.8), 0.25}});
  } else if (config.kind == "sphere_plane") {
    scene.objects.push_back({make_sphere(Vec3::Zero(), 0.35), CheckerAlbedo{Rgb(0.9, 0.35, 0.2), Rgb(0.15, 0.3, 0.8), 0.2}});
    scene.objects.push_back({make_plane(Vec3::UnitZ(), -0.35), CheckerAlbedo{Rgb(0.85, 0.85, 0.8), Rgb(0.2, 0.2, 0.25), 0.25}});
    scene.bounds = Aabb{Vec3(-0.75, -0.75, -0.75), Vec3(0.75, 0.75, 0.75)};
  } else {
    auto mesh = read_mesh(config.mesh);
    mesh.normalize_to_unit_cube();
    const bool colored = mesh.colors.size() == mesh.vertices.size();
    scene.objects.push_back({make_mesh_shape(std::move(mesh)), colored ? Albedo{VertexColorAlbedo{}} : Albedo{ConstantAlbedo{}}});
  }
  return scene;
}

std::vector<CameraEntry> make_scene_cameras(const SceneConfig& config) {
  config.validate();
  const double deg = std::numbers::pi / 180.0;
  auto orbit = [&](double azimuth_degrees) {
    const double az = azimuth_degrees * deg, el = config.elevation_degrees * deg;
    const Vec3 eye = config.camera_distance * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    return Camera::look_at(eye, Vec3::Zero(), Vec3::UnitZ(), config.fov_degrees, config.width, config.height);
  };
  auto name = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s_%03d", prefix, i);
    return std::string(buf);
  };
  const int n = config.train_views;
  const double arc = config.train_arc_degrees;
  auto train_azimuth = [&](double i) { return n == 1 ? 0.0 : -arc / 2 + arc * i / (n - 1); };
  std::vector<CameraEntry> out;
  for (int i = 0; i < n; ++i) out.push_back({name("train", i), "train", orbit(train_azimuth(i))});
  for (int j = 0; j < config.test_views; ++j) {
    // Midway between consecutive training views; beyond the arc with a single view.
    const double az = n == 1 ? arc / 2 + 15.0 * j : train_azimuth((j % (n - 1)) + 0.5);
    out.push_back({name("test", j), "test", orbit(az)});
  }
  return out;
}

std::vector<View> Dataset::split(std::string_view which) const {
  std::vector<View> out;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    if (cameras[i].split == which) out.push_back(views[i]);
  }
  return out;
}

Dataset read_dataset(const std::filesystem::path& directory) {
  Dataset d;
  d.cameras = read_cameras(directory / "cameras.json");
  for (const auto& c : d.cameras) {
    View v{c.camera, read_png(directory / (c.name + ".png")), {}};
    if (v.color.width != c.camera.width() || v.color.height != c.camera.height())
      throw std::runtime_error("image '" + c.name + ".png' does not match its camera size");
    const auto depth_path = directory / (c.name + ".depth");
    if (std::filesystem::exists(depth_path)) v.depth = read_depth(depth_path);
    d.views.push_back(std::move(v));
  }
  return d;
}

}  // namespace lpsurf
