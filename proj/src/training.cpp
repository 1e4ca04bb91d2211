#include "lpsurf/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lpsurf {

namespace {

// SplitMix64 finalizer over (seed, a, b).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t z = seed ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xD1B54A32D192ED03ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

bool is_geometry_decoder(const std::string& name) {
  return name.starts_with("geometry_local.") || name.starts_with("geometry_head.");
}

ParameterStore export_geometry_decoders(const ParameterStore& store) {
  ParameterStore out;
  for (const auto& p : store.entries()) {
    if (is_geometry_decoder(p.name)) out.add(p.name, p.shape, p.value);
  }
  return out;
}

void require_geometry_decoders(const ParameterStore& prior, const ParameterStore& target) {
  for (const auto& p : target.entries()) {
    if (!is_geometry_decoder(p.name)) continue;
    if (!prior.contains(p.name)) throw std::invalid_argument("prior has no parameter '" + p.name + "'");
    if (prior[p.name].shape != p.shape) throw std::invalid_argument("prior parameter '" + p.name + "' has another shape");
  }
}

/// Writes the trace, calls the observers and reports whether a checkpoint is due.
class StepReporter {
 public:
  explicit StepReporter(const TrainingHooks& hooks) : hooks_(hooks) {
    if (hooks.loss_trace) trace_.emplace(*hooks.loss_trace);
  }

  void report(std::int64_t step, const LossTerms& terms) {
    if (trace_) trace_->append(step, terms);
    if (hooks_.on_step) hooks_.on_step(step, terms);
    const std::int64_t completed = step + 1;
    if (hooks_.checkpoint_every > 0 && hooks_.on_checkpoint && completed % hooks_.checkpoint_every == 0)
      hooks_.on_checkpoint(completed);
  }

 private:
  const TrainingHooks& hooks_;
  std::optional<LossTrace> trace_;
};

bool all_finite(const LossTerms& terms) {
  if (!std::isfinite(terms.total)) return false;
  return std::all_of(terms.terms.begin(), terms.terms.end(), [](const auto& t) { return std::isfinite(t.second); });
}

RunStatus abort_status(std::int64_t step) {
  RunStatus s;
  s.steps_completed = step;
  s.aborted = true;
  s.message = "non-finite loss at step " + std::to_string(step);
  warn("training stopped: " + s.message);
  return s;
}

// Latent tables named "latents_<i>" for shapes outside the batch stay untouched.
void set_latents_frozen(ParameterStore& store, std::span<const int> tables, bool frozen) {
  for (int t : tables) store[t].frozen = frozen;
}

}  // namespace

std::vector<Shape> procedural_shapes(int count, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("procedural_shapes: negative count");
  std::vector<Shape> shapes;
  for (int i = 0; i < count; ++i) {
    Rng rng = make_rng(seed, 100 + static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
    auto point = [&](double extent) { return Vec3(range(-extent, extent), range(-extent, extent), range(-extent, extent)); };
    switch (i % 5) {
      case 0:
        shapes.push_back(make_sphere(point(0.05), range(0.25, 0.4)));
        break;
      case 1:
        shapes.push_back(make_box(point(0.05), Vec3(range(0.15, 0.4), range(0.15, 0.4), range(0.15, 0.4))));
        break;
      case 2: {
        const double minor = range(0.07, 0.12);
        shapes.push_back(make_torus(point(0.05), range(0.2, 0.45 - minor), minor));
        break;
      }
      case 3: {
        const double radius = range(0.08, 0.15);
        shapes.push_back(make_capsule(point(0.45 - radius), point(0.45 - radius), radius));
        break;
      }
      default: {
        std::vector<Shape> parts;
        parts.push_back(make_box(point(0.15), Vec3(range(0.1, 0.25), range(0.1, 0.25), range(0.1, 0.25))));
        parts.push_back(make_sphere(point(0.2), range(0.12, 0.25)));
        const double radius = range(0.05, 0.1);
        parts.push_back(make_capsule(point(0.45 - radius), point(0.45 - radius), radius));
        shapes.push_back(make_union(std::move(parts)));
        break;
      }
    }
  }
  return shapes;
}

// ---------------------------------------------------------------------------

void PriorConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("prior: epochs must be >= 0");
  if (batch_size < 1 || queries_per_shape < 1 || eikonal_queries_per_shape < 0 || surface_candidates < 1)
    throw std::invalid_argument("prior: counts must be positive");
  if (query_variances.empty()) throw std::invalid_argument("prior: no query variances");
  if (!(point_spacing > 0.0) || !(point_jitter_variance >= 0.0))
    throw std::invalid_argument("prior: invalid point spacing or jitter");
  if (!(latent_lr_start >= 0.0) || !(latent_lr_end >= 0.0) || !(decoder_lr >= 0.0))
    throw std::invalid_argument("prior: learning rates must be non-negative");
  weights.validate();
  field.validate();
}

std::vector<Vec3> shape_neural_points(const Shape& shape, int candidates, double spacing, std::uint64_t seed) {
  Rng rng = make_rng(seed, 1);
  const auto surface = sample_surface(shape, static_cast<std::size_t>(candidates), rng);
  return round_to_float(farthest_point_sample(surface, spacing, seed).points);
}

ParameterStore initial_prior(const PriorConfig& config) {
  config.validate();
  ParameterStore store;
  Rng rng = make_rng(config.seed, 1);
  Decoders::create(config.field, store, rng);
  return export_geometry_decoders(store);
}

PriorResult train_prior(const PriorConfig& config, std::span<const Shape> shapes, const TrainingHooks& hooks) {
  config.validate();
  if (shapes.empty()) throw std::invalid_argument("train_prior: no shapes");

  ParameterStore store;
  Rng init_rng = make_rng(config.seed, 1);
  const Decoders decoders = Decoders::create(config.field, store, init_rng);
  store.set_frozen("appearance_", true);
  store.set_frozen("log_beta", true);

  Rng latent_rng = make_rng(config.seed, 2);
  std::vector<std::vector<Vec3>> base_points;
  std::vector<int> tables;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    base_points.push_back(
        shape_neural_points(shapes[i], config.surface_candidates, config.point_spacing, derive_seed(config.seed, 1, i)));
    tables.push_back(add_latent_table(store, "latents_" + std::to_string(i), config.field.geometry_dim,
                                      base_points.back().size(), config.field.latent_std, latent_rng));
  }

  const int shape_count = static_cast<int>(shapes.size());
  const int steps_per_epoch = (shape_count + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = static_cast<std::int64_t>(config.epochs) * steps_per_epoch;
  std::vector<int> order(shapes.size());
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng = make_rng(config.seed, 3);

  StepReporter reporter(hooks);
  Gradients grads(store);
  PriorResult result;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (int first = 0; first < shape_count; first += config.batch_size, ++step) {
      const int last = std::min(shape_count, first + config.batch_size);
      std::vector<NeuralPoints> points;
      std::vector<std::vector<Vec3>> queries, eikonal;
      std::vector<std::vector<double>> targets;
      points.reserve(last - first);
      for (int b = first; b < last; ++b) {
        const int s = order[b];
        auto jittered = jitter_points(base_points[s], config.point_jitter_variance, derive_seed(config.seed, 2 + step, s));
        VoxelGrid grid(jittered, config.field.grid);
        points.push_back({std::move(jittered), std::move(grid), tables[s], -1});
        const auto samples = sample_query_points(shapes[s], static_cast<std::size_t>(config.queries_per_shape),
                                                 config.query_variances, derive_seed(config.seed, 3 + step, s));
        auto& q = queries.emplace_back();
        auto& t = targets.emplace_back();
        for (const auto& sample : samples) {
          q.push_back(sample.x);
          t.push_back(sample.s);
        }
        auto& e = eikonal.emplace_back();
        if (config.eikonal_queries_per_shape > 0) {
          for (const auto& sample :
               sample_query_points(shapes[s], static_cast<std::size_t>(config.eikonal_queries_per_shape),
                                   config.query_variances, derive_seed(config.seed, 4 + step, s)))
            e.push_back(sample.x);
        }
      }
      std::vector<PriorBatchItem> items;
      for (std::size_t k = 0; k < points.size(); ++k) items.push_back({&points[k], queries[k], targets[k], eikonal[k]});

      grads.set_zero();
      const auto terms = prior_objective(store, decoders, config.field, items, config.weights, &grads);
      if (!all_finite(terms)) {
        result.status = abort_status(step);
        result.decoders = export_geometry_decoders(store);
        return result;
      }
      std::vector<int> idle;
      for (int b = 0; b < shape_count; ++b) {
        if (b < first || b >= last) idle.push_back(tables[order[b]]);
      }
      set_latents_frozen(store, idle, true);
      const double latent_lr = cosine_lr(step, total_steps, config.latent_lr_start, config.latent_lr_end);
      adam_step(store, grads,
                [&](const Parameter& p) { return p.name.starts_with("latents_") ? latent_lr : config.decoder_lr; });
      set_latents_frozen(store, idle, false);
      reporter.report(step, terms);
    }
  }
  result.status.steps_completed = step;
  result.decoders = export_geometry_decoders(store);
  return result;
}

// ---------------------------------------------------------------------------

void LatentFitConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("latent fit: iterations must be >= 0");
  if (queries_per_step < 1 || eikonal_queries < 0 || surface_candidates < 1)
    throw std::invalid_argument("latent fit: counts must be positive");
  if (query_variances.empty()) throw std::invalid_argument("latent fit: no query variances");
  if (!(point_spacing > 0.0)) throw std::invalid_argument("latent fit: point spacing must be positive");
  weights.validate();
  field.validate();
}

LatentFitResult fit_latents_only(const ParameterStore& prior, const Shape& shape, const LatentFitConfig& config,
                                 const TrainingHooks& hooks) {
  config.validate();
  LatentFitResult result;
  auto positions = shape_neural_points(shape, config.surface_candidates, config.point_spacing, derive_seed(config.seed, 1));
  result.model = FieldModel(std::move(positions), config.field, config.seed);
  FieldModel& model = result.model;
  require_geometry_decoders(prior, model.params);
  model.copy_decoders_from(prior);
  model.freeze_geometry(true);
  model.params.set_frozen("appearance_", true);
  model.params.set_frozen("log_beta", true);

  StepReporter reporter(hooks);
  Gradients grads(model.params);
  for (int step = 0; step < config.iterations; ++step) {
    const auto samples = sample_query_points(shape, static_cast<std::size_t>(config.queries_per_step),
                                             config.query_variances, derive_seed(config.seed, 2, step));
    std::vector<Vec3> queries, eikonal;
    std::vector<double> targets;
    for (const auto& s : samples) {
      queries.push_back(s.x);
      targets.push_back(s.s);
    }
    if (config.eikonal_queries > 0) {
      for (const auto& s : sample_query_points(shape, static_cast<std::size_t>(config.eikonal_queries),
                                               config.query_variances, derive_seed(config.seed, 3, step)))
        eikonal.push_back(s.x);
    }
    const PriorBatchItem item{&model.points, queries, targets, eikonal};
    grads.set_zero();
    const auto terms =
        prior_objective(model.params, model.decoders, model.config, {&item, 1}, config.weights, &grads);
    if (!all_finite(terms)) {
      result.status = abort_status(step);
      return result;
    }
    adam_step(model.params, grads, cosine_lr(step, config.iterations, config.lr_start, config.lr_end));
    reporter.report(step, terms);
  }
  result.status.steps_completed = config.iterations;
  return result;
}

double near_surface_mae(const FieldView& field, const Shape& shape, int samples, double band, std::uint64_t seed,
                        std::span<const double> variances) {
  if (samples < 1 || !(band > 0.0)) throw std::invalid_argument("near_surface_mae: invalid sample count or band");
  std::vector<Vec3> xs;
  std::vector<double> truth;
  for (const auto& s : sample_query_points(shape, static_cast<std::size_t>(samples), variances, seed)) {
    if (std::abs(s.s) >= band) continue;
    xs.push_back(s.x);
    truth.push_back(s.s);
  }
  if (xs.empty()) throw std::runtime_error("near_surface_mae: no samples inside the band");
  const Vector predicted = eval_sdf(field, xs);
  double total = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) total += std::abs(predicted[static_cast<Eigen::Index>(i)] - truth[i]);
  return total / static_cast<double>(xs.size());
}

// ---------------------------------------------------------------------------

void ReconConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("reconstruction: iterations must be >= 0");
  if (rays_per_step < 1 || pseudo_points_per_step < 0) throw std::invalid_argument("reconstruction: invalid counts");
  if (render.n_coarse < 1 || render.n_fine < 0) throw std::invalid_argument("reconstruction: invalid sample counts");
  for (double lr : {latent_lr_start, latent_lr_end, decoder_lr, density_lr}) {
    if (!(lr >= 0.0)) throw std::invalid_argument("reconstruction: learning rates must be non-negative");
  }
  make_feature_extractor(feature_extractor);
  weights.validate();
  field.validate();
}

std::vector<Vec3> round_to_float(std::vector<Vec3> points) {
  for (auto& p : points) p = p.cast<float>().cast<double>();
  return points;
}

FieldModel make_reconstruction_model(std::vector<Vec3> positions, const ReconConfig& config,
                                     const ParameterStore* prior) {
  config.validate();
  FieldModel model(round_to_float(std::move(positions)), config.field, config.seed);
  if (config.use_prior) {
    if (!prior) throw std::invalid_argument("reconstruction with a prior needs prior decoders");
    require_geometry_decoders(*prior, model.params);
    model.copy_decoders_from(*prior);
    model.freeze_geometry(true);
  }
  model.params.set_frozen("log_beta", !config.train_density);
  return model;
}

RunStatus reconstruct(FieldModel& model, std::span<const View> views, const ReconConfig& config,
                      const TrainingHooks& hooks, std::int64_t first_step) {
  config.validate();
  if (views.empty()) throw std::invalid_argument("reconstruct: no views");
  if (first_step < 0 || first_step > config.iterations) throw std::invalid_argument("reconstruct: first step out of range");
  for (const auto& v : views) {
    if (v.color.width != v.camera.width() || v.color.height != v.camera.height())
      throw std::invalid_argument("reconstruct: image size differs from its camera");
  }
  const auto extractor = make_feature_extractor(config.feature_extractor);
  const auto& positions = model.points.positions;
  std::uniform_int_distribution<int> pick_view(0, static_cast<int>(views.size()) - 1);
  std::vector<int> pseudo_order(positions.size());
  const std::size_t pseudo_count = std::min(positions.size(), static_cast<std::size_t>(config.pseudo_points_per_step));

  StepReporter reporter(hooks);
  Gradients grads(model.params);
  RunStatus status;
  for (std::int64_t step = first_step; step < config.iterations; ++step) {
    const std::uint64_t step_seed = derive_seed(config.seed, 20, static_cast<std::uint64_t>(step));
    Rng ray_rng = make_rng(step_seed, 0);
    Rng render_rng = make_rng(step_seed, 1);
    Rng pseudo_rng = make_rng(step_seed, 2);
    std::vector<Ray> rays;
    std::vector<int> ray_views;
    Matrix targets(3, config.rays_per_step);
    for (int r = 0; r < config.rays_per_step; ++r) {
      const int v = pick_view(ray_rng);
      const auto& view = views[v];
      const int u = std::uniform_int_distribution<int>(0, view.camera.width() - 1)(ray_rng);
      const int y = std::uniform_int_distribution<int>(0, view.camera.height() - 1)(ray_rng);
      rays.push_back(view.camera.generate_ray(u, y));
      ray_views.push_back(v);
      targets.col(r) = view.color.at(u, y);
    }
    // Partial Fisher-Yates draw of the pseudo-SDF subset.
    std::vector<Vec3> pseudo;
    if (config.pseudo_source == PseudoSource::neural_points) {
      std::iota(pseudo_order.begin(), pseudo_order.end(), 0);
      for (std::size_t i = 0; i < pseudo_count; ++i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(i, pseudo_order.size() - 1)(pseudo_rng);
        std::swap(pseudo_order[i], pseudo_order[j]);
        pseudo.push_back(positions[pseudo_order[i]]);
      }
    }
    ReconBatch batch{rays, targets, ray_views, views, pseudo};
    batch.pseudo_from_rays = config.pseudo_source == PseudoSource::ray_surface;

    grads.set_zero();
    const auto terms =
        reconstruction_objective(model.view(), batch, config.render, config.weights, *extractor, &render_rng, &grads);
    if (!all_finite(terms)) return abort_status(step);
    const double latent_lr = cosine_lr(step, config.iterations, config.latent_lr_start, config.latent_lr_end);
    adam_step(model.params, grads, [&](const Parameter& p) {
      if (p.name.ends_with("_latents")) return latent_lr;
      if (p.name == "log_beta") return config.density_lr;
      return config.decoder_lr;
    });
    reporter.report(step, terms);
  }
  status.steps_completed = config.iterations;
  return status;
}

}  // namespace lpsurf
