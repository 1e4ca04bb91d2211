// Command line front end: scene generation, the three training phases,
// rendering, mesh extraction, evaluation and latent analysis.

#include "lpsurf/gradcheck.hpp"
#include "lpsurf/io.hpp"
#include "lpsurf/mesh_io.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace lpsurf;
using nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
};

void add_common(CLI::App& app, CommonOptions& opts, bool out_required = true) {
  app.add_option("--config", opts.config, "Run configuration (JSON)");
  app.add_option("--seed", opts.seed, "Overrides the configured seed");
  auto* out = app.add_option("--out", opts.out, "Output directory");
  if (out_required) out->required();
  app.add_flag("--deterministic", opts.deterministic, "Single-threaded, fixed-order reductions");
}

class Clock {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void write_json(const json& value, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << value.dump(2) << '\n';
}

/// Loads and resolves the configuration, applies global switches and writes
/// the resolved snapshot into the output directory.
RunConfig prepare(const CommonOptions& opts) {
  RunConfig config = opts.config.empty() ? RunConfig{} : load_run_config(opts.config);
  if (opts.seed) config.seed = *opts.seed;
  config.resolve();
  set_deterministic(opts.deterministic);
  if (!opts.out.empty()) {
    fs::create_directories(opts.out);
    write_json(to_json(config), fs::path(opts.out) / "resolved_config.json");
  }
  return config;
}

json checkpoint_config(const RunConfig& config, const std::string& phase) {
  return {{"run", to_json(config)}, {"phase", phase}};
}

/// A field checkpoint with the configuration it was trained under.
struct LoadedField {
  RunConfig config;
  FieldModel model;
  Checkpoint checkpoint;
};

LoadedField load_field(const fs::path& path) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.kind != "field") throw std::runtime_error(path.string() + " is not a field checkpoint");
  if (!ck.config.contains("run") || !ck.config.contains("phase"))
    throw CheckpointError(CheckpointErrc::malformed_manifest, path.string() + ": checkpoint has no run configuration");
  RunConfig config = run_config_from_json(ck.config["run"]);
  config.resolve();
  const FieldConfig& field = ck.config["phase"] == "fit" ? config.fit.field : config.reconstruction.field;
  FieldModel model = field_from_checkpoint(ck, field);
  return {std::move(config), std::move(model), std::move(ck)};
}

RenderConfig evaluation_render(const RunConfig& config) {
  RenderConfig r = config.reconstruction.render;
  r.perturb = false;
  return r;
}

std::vector<Shape> prior_shapes(const RunConfig& config) {
  if (config.prior_meshes.empty()) return procedural_shapes(config.prior_shapes, config.prior_shape_seed);
  std::vector<Shape> shapes;
  for (const auto& path : config.prior_meshes) shapes.push_back(make_mesh_shape(read_mesh(path)));
  return shapes;
}

/// Rounds values and Adam moments to what a checkpoint stores.
void quantize_to_checkpoint(ParameterStore& params) {
  auto round = [](Vector& v) { v = v.cast<float>().cast<double>(); };
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[static_cast<int>(i)];
    round(p.value);
    round(p.first_moment);
    round(p.second_moment);
  }
}

std::string padded(std::int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06lld", static_cast<long long>(step));
  return buf;
}

void log_progress(const char* phase, std::int64_t step, std::int64_t total, const LossTerms& terms, const Clock& clock) {
  const std::int64_t every = std::max<std::int64_t>(1, total / 20);
  if (step % every != 0 && step + 1 != total) return;
  std::printf("%s step %lld/%lld loss %.5f (%.0fs)\n", phase, static_cast<long long>(step),
              static_cast<long long>(total), terms.total, clock.seconds());
  std::fflush(stdout);
}

// ---------------------------------------------------------------------------
// Subcommands

int gen_scene(const CommonOptions& opts) {
  const RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  const Scene scene = make_scene(config.scene);
  const auto cameras = make_scene_cameras(config.scene);
  write_cameras(cameras, out / "cameras.json");

  std::vector<View> train;
  std::vector<Vec3> visible;
  const int stride = config.scene.ground_truth_stride;
  for (const auto& entry : cameras) {
    const auto gt = render_ground_truth(scene, entry.camera);
    write_png(gt.color, out / (entry.name + ".png"));
    write_depth(gt.depth, out / (entry.name + ".depth"));
    for (int v = 0; v < gt.depth.height; v += stride)
      for (int u = 0; u < gt.depth.width; u += stride)
        if (std::isfinite(gt.depth.at(u, v))) visible.push_back(entry.camera.generate_ray(u, v).at(gt.depth.at(u, v)));
    if (entry.split == "train") train.push_back({entry.camera, gt.color, gt.depth});
  }
  write_point_ply({visible, {}}, out / "gt_points.ply");

  const auto seeds = unproject_views(train, config.scene.seed_stride, config.scene.seed_spacing, config.seed);
  write_point_ply({round_to_float(seeds.points), seeds.colors}, out / "seed_points.ply");

  ExtractionConfig extraction = config.extraction;
  extraction.bounds = scene.bounds;
  write_ply(extract_mesh([&](const Vec3& x) { return scene.sdf(x); }, extraction), out / "gt_mesh.ply");
  std::printf("%zu views, %zu seed points, %zu ground-truth points\n", cameras.size(), seeds.points.size(),
              visible.size());
  return 0;
}

int train_prior_command(const CommonOptions& opts) {
  const RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  const auto shapes = prior_shapes(config);
  Clock clock;
  TrainingHooks hooks;
  hooks.loss_trace = out / "prior_loss.csv";
  const auto steps_per_epoch = (shapes.size() + config.prior.batch_size - 1) / config.prior.batch_size;
  const auto total = static_cast<std::int64_t>(steps_per_epoch) * config.prior.epochs;
  hooks.on_step = [&](std::int64_t step, const LossTerms& t) { log_progress("prior", step, total, t, clock); };
  const PriorResult result = train_prior(config.prior, shapes, hooks);

  Checkpoint ck;
  ck.kind = "prior";
  ck.config = checkpoint_config(config, "prior");
  ck.params = result.decoders;
  ck.seed = config.seed;
  ck.step = result.status.steps_completed;
  save_checkpoint(ck, out / "prior.ckpt");
  std::printf("prior trained on %zu shapes in %.1fs\n", shapes.size(), clock.seconds());
  if (result.status.aborted) {
    std::fprintf(stderr, "error: %s\n", result.status.message.c_str());
    return 1;
  }
  return 0;
}

int fit_latents_command(const CommonOptions& opts, const std::string& prior_path) {
  const RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  const Checkpoint prior = load_checkpoint(prior_path);
  if (prior.kind != "prior") throw std::runtime_error(prior_path + " is not a prior checkpoint");
  const Shape shape = shape_from_json(config.fit_shape);

  LatentFitConfig baseline = config.fit;
  baseline.iterations = 0;
  const auto initial = fit_latents_only(prior.params, shape, baseline);
  const double mae_initial = near_surface_mae(initial.model.view(), shape, 20000, 0.05, config.seed + 1);

  Clock clock;
  TrainingHooks hooks;
  hooks.loss_trace = out / "fit_loss.csv";
  hooks.on_step = [&](std::int64_t step, const LossTerms& t) {
    log_progress("fit", step, config.fit.iterations, t, clock);
  };
  const auto result = fit_latents_only(prior.params, shape, config.fit, hooks);
  const double mae = near_surface_mae(result.model.view(), shape, 20000, 0.05, config.seed + 1);

  save_checkpoint(make_field_checkpoint(result.model, checkpoint_config(config, "fit"), config.seed,
                                        result.status.steps_completed),
                  out / "field.ckpt");
  append_result(out / "results.csv", "fit", "near_surface_mae_initial", mae_initial);
  append_result(out / "results.csv", "fit", "near_surface_mae", mae);
  std::printf("near-surface MAE %.5f (initial %.5f)\n", mae, mae_initial);
  if (result.status.aborted) {
    std::fprintf(stderr, "error: %s\n", result.status.message.c_str());
    return 1;
  }
  return 0;
}

struct ReconstructOptions {
  std::string data;
  std::string prior;
  std::string seeds;
  std::string resume;
};

int reconstruct_command(const CommonOptions& opts, const ReconstructOptions& ro) {
  RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  const Dataset data = read_dataset(ro.data);
  const auto train = data.split("train");
  const auto test = data.split("test");
  if (train.empty()) throw std::runtime_error(ro.data + " has no training views");

  FieldModel model;
  std::int64_t first_step = 0;
  if (!ro.resume.empty()) {
    LoadedField loaded = load_field(ro.resume);
    if (loaded.checkpoint.seed != config.reconstruction.seed)
      throw std::runtime_error("resume checkpoint was trained with seed " + std::to_string(loaded.checkpoint.seed));
    model = std::move(loaded.model);
    first_step = loaded.checkpoint.step;
  } else {
    std::optional<Checkpoint> prior;
    if (config.reconstruction.use_prior) {
      if (ro.prior.empty()) throw std::runtime_error("--prior is required unless reconstruction.use_prior is false");
      prior = load_checkpoint(ro.prior);
      if (prior->kind != "prior") throw std::runtime_error(ro.prior + " is not a prior checkpoint");
    }
    const fs::path seed_path = ro.seeds.empty() ? fs::path(ro.data) / "seed_points.ply" : fs::path(ro.seeds);
    auto positions = read_point_ply(seed_path).points;
    if (positions.empty()) throw std::runtime_error(seed_path.string() + " has no points");
    model = make_reconstruction_model(std::move(positions), config.reconstruction, prior ? &prior->params : nullptr);
  }

  const json ck_config = checkpoint_config(config, "reconstruction");
  const View& preview = test.empty() ? train.front() : test.front();
  Clock clock;
  TrainingHooks hooks;
  hooks.loss_trace = out / "recon_loss.csv";
  hooks.on_step = [&](std::int64_t step, const LossTerms& t) {
    log_progress("reconstruct", step, config.reconstruction.iterations, t, clock);
  };
  hooks.checkpoint_every = config.checkpoint_every;
  hooks.on_checkpoint = [&](std::int64_t completed) {
    fs::create_directories(out / "checkpoints");
    fs::create_directories(out / "previews");
    save_checkpoint(make_field_checkpoint(model, ck_config, config.reconstruction.seed, completed),
                    out / "checkpoints" / ("step_" + padded(completed) + ".ckpt"));
    quantize_to_checkpoint(model.params);
    write_png(render_image(model.view(), preview.camera, evaluation_render(config)),
              out / "previews" / ("step_" + padded(completed) + ".png"));
  };
  const RunStatus status = reconstruct(model, train, config.reconstruction, hooks, first_step);
  save_checkpoint(make_field_checkpoint(model, ck_config, config.reconstruction.seed, status.steps_completed),
                  out / "field.ckpt");
  std::printf("reconstruction finished in %.1fs\n", clock.seconds());
  if (status.aborted) {
    std::fprintf(stderr, "error: %s\n", status.message.c_str());
    return 1;
  }
  return 0;
}

int render_command(const CommonOptions& opts, const std::string& checkpoint, const std::string& cameras_path,
                   const std::string& split) {
  prepare(opts);
  const LoadedField field = load_field(checkpoint);
  const RenderConfig render = evaluation_render(field.config);
  int count = 0;
  for (const auto& entry : read_cameras(cameras_path)) {
    if (split != "all" && entry.split != split) continue;
    DepthMap depth;
    write_png(render_image(field.model.view(), entry.camera, render, &depth), fs::path(opts.out) / (entry.name + ".png"));
    write_depth(depth, fs::path(opts.out) / (entry.name + ".depth"));
    ++count;
  }
  std::printf("rendered %d views\n", count);
  return 0;
}

int extract_mesh_command(const CommonOptions& opts, const std::string& checkpoint) {
  prepare(opts);
  const LoadedField field = load_field(checkpoint);
  const TriangleMesh mesh = extract_mesh(field.model.view(), field.config.extraction);
  write_ply(mesh, fs::path(opts.out) / "mesh.ply");
  std::printf("%zu vertices, %zu faces\n", mesh.vertices.size(), mesh.faces.size());
  return 0;
}

NearestSearch parse_search(const std::string& name) {
  if (name == "brute_force") return NearestSearch::brute_force;
  if (name == "grid") return NearestSearch::grid;
  return NearestSearch::automatic;
}

int eval_command(const CommonOptions& opts, const std::string& data_dir, const std::string& mesh_path,
                 const std::string& checkpoint, std::string scene_name) {
  const RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  if (scene_name.empty()) scene_name = fs::path(data_dir).lexically_normal().filename().string();
  if (scene_name.empty()) scene_name = "scene";
  if (mesh_path.empty() && checkpoint.empty()) throw std::runtime_error("eval needs --mesh or --checkpoint");

  std::optional<LoadedField> field;
  if (!checkpoint.empty()) field = load_field(checkpoint);
  TriangleMesh mesh;
  if (!mesh_path.empty()) {
    mesh = read_mesh(mesh_path);
  } else {
    mesh = extract_mesh(field->model.view(), field->config.extraction);
    write_ply(mesh, out / "mesh.ply");
  }
  if (mesh.faces.empty()) throw std::runtime_error("the mesh to evaluate has no faces");
  const auto ground_truth = read_point_ply(fs::path(data_dir) / "gt_points.ply").points;
  const auto samples = sample_mesh_points(mesh, config.eval.mesh_samples, config.seed);
  const double chamfer = chamfer_distance(samples, ground_truth, parse_search(config.eval.nearest_search));
  append_result(out / "results.csv", scene_name, "chamfer", chamfer);
  std::printf("chamfer %.5f\n", chamfer);

  if (field) {
    const Dataset data = read_dataset(data_dir);
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < data.cameras.size(); ++i) {
      if (data.cameras[i].split != "test") continue;
      const Image image = render_image(field->model.view(), data.views[i].camera, evaluation_render(field->config));
      write_png(image, out / (data.cameras[i].name + ".png"));
      const double value = psnr(image, data.views[i].color);
      append_result(out / "results.csv", scene_name, "psnr_" + data.cameras[i].name, value);
      std::printf("psnr %s %.2f\n", data.cameras[i].name.c_str(), value);
      sum += value;
      ++count;
    }
    if (count > 0) append_result(out / "results.csv", scene_name, "psnr_mean", sum / count);
  }
  return 0;
}

int analyze_latents_command(const CommonOptions& opts, const std::string& checkpoint) {
  const RunConfig config = prepare(opts);
  const fs::path out = opts.out;
  const LoadedField field = load_field(checkpoint);
  const FieldView view = field.model.view();
  const Matrix latents = view.params[view.points.geometry_latents].matrix();
  const auto analysis = latent_analysis(latents, config.analysis.components, config.analysis.clusters, config.seed);

  const auto& positions = view.points.positions;
  const double h = view.config.gradient_step;
  std::vector<int> octants;
  std::ofstream table(out / "latent_labels.csv");
  table << "index,x,y,z,cluster,normal_octant\n";
  for (std::size_t i = 0; i < positions.size(); ++i) {
    Vec3 normal;
    for (int a = 0; a < 3; ++a) {
      const Vec3 e = h * Vec3::Unit(a);
      normal[a] = eval_sdf(view, positions[i] + e) - eval_sdf(view, positions[i] - e);
    }
    octants.push_back(octant(normal));
    table << i << ',' << positions[i].x() << ',' << positions[i].y() << ',' << positions[i].z() << ','
          << analysis.labels[i] << ',' << octants.back() << '\n';
  }
  write_point_ply({positions, projection_colors(analysis.projection)}, out / "latent_pca.ply");
  const double ari = adjusted_rand_index(analysis.labels, octants);
  append_result(out / "results.csv", "latents", "ari_normal_octants", ari);
  for (Eigen::Index c = 0; c < analysis.explained_variance.size(); ++c)
    append_result(out / "results.csv", "latents", "explained_variance_" + std::to_string(c),
                  analysis.explained_variance[c]);
  std::printf("adjusted Rand index vs normal octants %.4f\n", ari);
  return 0;
}

int check_gradients_command(const CommonOptions& opts, double threshold) {
  const RunConfig config = prepare(opts);
  Clock clock;
  bool ok = true;
  for (const auto& r : run_gradient_suite(config.seed)) {
    const bool pass = r.max_relative_error < threshold;
    ok = ok && pass;
    std::printf("%-28s %.3e %s  %s\n", r.name.c_str(), r.max_relative_error, pass ? "ok" : "FAIL", r.worst.c_str());
  }
  std::printf("gradient suite %s in %.1fs\n", ok ? "passed" : "failed", clock.seconds());
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural point surface reconstruction with a local geometry prior"};
  app.require_subcommand(1);

  CommonOptions opts;

  auto* gen = app.add_subcommand("gen-scene", "Render a synthetic scene with depth, cameras and ground truth");
  add_common(*gen, opts);

  auto* prior = app.add_subcommand("train-prior", "Train the local geometry prior on procedural shapes");
  add_common(*prior, opts);

  std::string prior_path;
  auto* fit = app.add_subcommand("fit-latents", "Fit geometry latents of a held-out shape to a frozen prior");
  add_common(*fit, opts);
  fit->add_option("--prior", prior_path, "Prior checkpoint")->required();

  ReconstructOptions ro;
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct a scene from its training views");
  add_common(*recon, opts);
  recon->add_option("--data", ro.data, "Dataset directory")->required();
  recon->add_option("--prior", ro.prior, "Prior checkpoint");
  recon->add_option("--seeds", ro.seeds, "Seed point PLY (default: <data>/seed_points.ply)");
  recon->add_option("--resume", ro.resume, "Continue from a reconstruction checkpoint");

  std::string checkpoint, cameras, split = "test";
  auto* render = app.add_subcommand("render", "Render views of a field checkpoint");
  add_common(*render, opts);
  render->add_option("--checkpoint", checkpoint, "Field checkpoint")->required();
  render->add_option("--cameras", cameras, "cameras.json")->required();
  render->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}));

  auto* extract = app.add_subcommand("extract-mesh", "Marching cubes on a field checkpoint");
  add_common(*extract, opts);
  extract->add_option("--checkpoint", checkpoint, "Field checkpoint")->required();

  std::string data_dir, mesh_path, scene_name;
  auto* eval = app.add_subcommand("eval", "Chamfer distance and held-out PSNR, appended to results.csv");
  add_common(*eval, opts);
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--mesh", mesh_path, "Mesh to evaluate (default: extracted from --checkpoint)");
  eval->add_option("--checkpoint", checkpoint, "Field checkpoint (enables PSNR)");
  eval->add_option("--scene", scene_name, "Scene label in results.csv");

  auto* analyze = app.add_subcommand("analyze-latents", "PCA and clustering of geometry latents");
  add_common(*analyze, opts);
  analyze->add_option("--checkpoint", checkpoint, "Field checkpoint")->required();

  double threshold = 1e-4;
  auto* grads = app.add_subcommand("check-gradients", "Finite-difference check of every analytic gradient");
  add_common(*grads, opts, false);
  grads->add_option("--threshold", threshold, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*gen) return gen_scene(opts);
    if (*prior) return train_prior_command(opts);
    if (*fit) return fit_latents_command(opts, prior_path);
    if (*recon) return reconstruct_command(opts, ro);
    if (*render) return render_command(opts, checkpoint, cameras, split);
    if (*extract) return extract_mesh_command(opts, checkpoint);
    if (*eval) return eval_command(opts, data_dir, mesh_path, checkpoint, scene_name);
    if (*analyze) return analyze_latents_command(opts, checkpoint);
    if (*grads) return check_gradients_command(opts, threshold);
  } catch (const CheckpointError& e) {
    std::fprintf(stderr, "error: %s (%s)\n", e.what(), std::string(to_string(e.code())).c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
