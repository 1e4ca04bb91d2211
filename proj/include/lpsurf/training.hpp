#pragma once

// Optimization loops: local-prior pre-training over a set of shapes,
// latent-only fitting of a frozen prior to a new shape, and sparse-view
// reconstruction with frozen geometry decoders.

#include "lpsurf/losses.hpp"
#include "lpsurf/sampling.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lpsurf {

/// `count` analytic shapes (spheres, boxes, tori, capsules and unions) inside
/// [-0.5, 0.5]^3, cycling through the kinds in that order.
std::vector<Shape> procedural_shapes(int count, std::uint64_t seed);

/// Optional observers shared by the training loops.
struct TrainingHooks {
  std::optional<std::filesystem::path> loss_trace;
  std::function<void(std::int64_t step, const LossTerms& terms)> on_step;
  /// Called every `checkpoint_every` steps (0 disables) with the number of completed steps.
  int checkpoint_every = 0;
  std::function<void(std::int64_t completed)> on_checkpoint;
};

struct RunStatus {
  std::int64_t steps_completed = 0;
  bool aborted = false;
  std::string message;
};

// ---------------------------------------------------------------------------
// Local prior

struct PriorConfig {
  int epochs = 500;
  int batch_size = 5;
  int queries_per_shape = 512;
  int eikonal_queries_per_shape = 128;
  std::vector<double> query_variances{0.05, 0.001};
  int surface_candidates = 20000;  // surface samples thinned by farthest point sampling
  double point_spacing = 0.025;
  double point_jitter_variance = 0.005;
  double latent_lr_start = 1e-2;
  double latent_lr_end = 3e-4;
  double decoder_lr = 3e-4;
  LossWeights weights;
  FieldConfig field = default_field();
  std::uint64_t seed = 0;

  static FieldConfig default_field() {
    FieldConfig f;
    f.neighbors = 4;
    return f;
  }
  void validate() const;
};

/// Neural points of one training shape: surface samples thinned to `spacing`.
std::vector<Vec3> shape_neural_points(const Shape& shape, int candidates, double spacing, std::uint64_t seed);

struct PriorResult {
  /// Geometry decoders only ("geometry_local.*", "geometry_head.*").
  ParameterStore decoders;
  RunStatus status;
};

/// Trains the geometry decoders and one latent table per shape. A non-finite
/// loss stops training before the offending update; the decoders are then
/// those of the last completed step.
PriorResult train_prior(const PriorConfig& config, std::span<const Shape> shapes, const TrainingHooks& hooks = {});

/// The prior's initial decoders (what train_prior returns for zero epochs).
ParameterStore initial_prior(const PriorConfig& config);

// ---------------------------------------------------------------------------
// Latent-only fitting

struct LatentFitConfig {
  int iterations = 300;
  int queries_per_step = 2048;
  int eikonal_queries = 256;
  std::vector<double> query_variances{0.05, 0.001};
  int surface_candidates = 20000;
  double point_spacing = 0.025;
  double lr_start = 1e-2;
  double lr_end = 3e-4;
  LossWeights weights;
  FieldConfig field = PriorConfig::default_field();
  std::uint64_t seed = 0;

  void validate() const;
};

struct LatentFitResult {
  FieldModel model;
  RunStatus status;
};

/// Fresh geometry latents on the shape's neural points, optimized against the
/// frozen decoders of `prior`.
LatentFitResult fit_latents_only(const ParameterStore& prior, const Shape& shape, const LatentFitConfig& config,
                                 const TrainingHooks& hooks = {});

/// Mean |s - s_hat| over query samples with |s| < band (variance tiers as in
/// training, evaluated on the field's own points).
double near_surface_mae(const FieldView& field, const Shape& shape, int samples, double band, std::uint64_t seed,
                        std::span<const double> variances = std::vector<double>{0.05, 0.001});

// ---------------------------------------------------------------------------
// Reconstruction

enum class PseudoSource { neural_points, ray_surface };

struct ReconConfig {
  int iterations = 20000;
  int rays_per_step = 512;
  RenderConfig render;
  LossWeights weights;
  FieldConfig field;
  std::string feature_extractor = "rgb_patch";
  PseudoSource pseudo_source = PseudoSource::neural_points;
  int pseudo_points_per_step = 1024;  // neural-point subset per step
  double latent_lr_start = 1e-2;
  double latent_lr_end = 1e-3;
  double decoder_lr = 1e-3;
  double density_lr = 1e-3;
  bool train_density = true;
  /// When false the geometry decoders start from random weights and are trained.
  bool use_prior = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Neural points for reconstruction: the prior's decoders plus fresh latents.
/// Without a prior, geometry decoders keep their random initialization.
FieldModel make_reconstruction_model(std::vector<Vec3> positions, const ReconConfig& config,
                                     const ParameterStore* prior);

/// Optimizes `model` in place against the training views. Steps before
/// `first_step` are skipped; every random draw depends only on (seed, step).
RunStatus reconstruct(FieldModel& model, std::span<const View> views, const ReconConfig& config,
                      const TrainingHooks& hooks = {}, std::int64_t first_step = 0);

/// Rounds every coordinate to the nearest float.
std::vector<Vec3> round_to_float(std::vector<Vec3> points);

}  // namespace lpsurf
