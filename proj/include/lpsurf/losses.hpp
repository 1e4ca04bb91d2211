#pragma once

// Training objectives with their gradients: SDF regression, Eikonal, latent
// total variation, photometric L1, multi-view feature consistency, and the
// pseudo-SDF term on neural points.

#include "lpsurf/field.hpp"
#include "lpsurf/geometry.hpp"
#include "lpsurf/renderer.hpp"

#include <filesystem>
#include <fstream>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lpsurf {

struct LossWeights {
  double sdf_epsilon = 0.01;
  // prior phase
  double prior_tv = 1e-2;
  double prior_eikonal = 1e-3;
  // reconstruction phase
  double feature_consistency = 0.5;
  double pseudo_sdf = 0.5;
  double recon_tv = 0.01;

  void validate() const;
};

/// Value of a mean-normalized loss and its gradient w.r.t. the predictions.
struct LossValue {
  double value = 0.0;
  Vector gradient;
};

/// mean |s - s_hat| / (|s| + epsilon)
LossValue sdf_loss(std::span<const double> target, const Vector& predicted, double epsilon);
/// mean (|g| - 1)^2 over columns of a 3 x n matrix; gradient 3 x n (returned
/// flattened column-major).
LossValue eikonal_loss(const Matrix& gradients);
/// mean over rays of the L1 norm of (rendered - target); both 3 x n.
LossValue rendering_loss(const Matrix& rendered, const Matrix& target);

enum class LatentKind { geometry, appearance };

/// sum_i sum_{k in N(i)} |f_i - f_k|_1 / |p_i - p_k| over each point's
/// `neighbors` nearest points within `radius` (self excluded, directed pairs).
/// Coincident pairs are skipped with a warning. Adds scale * gradient to
/// `grads` when non-null.
double tv_loss(const FieldView& field, LatentKind which, int neighbors, double radius, double scale,
               Gradients* grads);

/// mean |s_hat| over `points`; accumulates scale * gradient when non-null.
double pseudo_sdf_loss(const FieldView& field, std::span<const Vec3> points, double scale, Gradients* grads);

// ---------------------------------------------------------------------------
// Feature extraction for multi-view consistency

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  /// Feature at continuous image coordinates (pixel centers at i + 0.5);
  /// fills d feature / d pixel (dim x 2) when `jacobian` is non-null.
  virtual Vector sample(const Image& image, const Vec2& pixel, Matrix* jacobian) const = 0;
};

/// Bilinearly interpolated RGB with edge clamping.
class BilinearRgb final : public FeatureExtractor {
 public:
  int dim() const override { return 3; }
  Vector sample(const Image& image, const Vec2& pixel, Matrix* jacobian) const override;
};

/// Bilinear RGB at the 3 x 3 pixel offsets around the point (27 values).
class RgbPatch final : public FeatureExtractor {
 public:
  int dim() const override { return 27; }
  Vector sample(const Image& image, const Vec2& pixel, Matrix* jacobian) const override;
};

std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& name);

/// One surface point seen from its reference view.
struct SurfaceObservation {
  Vec3 point;
  int reference_view = 0;
};

struct FeatureConsistency {
  double value = 0.0;
  std::size_t valid_pairs = 0;
  std::vector<Vec3> point_gradients;  // d loss / d point
};

/// Mean over valid (point, view) pairs of |f(view j) - f(reference)|_1. Every
/// view takes part, including the reference. A point that does not project
/// into its reference view is dropped; otherwise views it misses are skipped.
/// No valid pair gives 0 with a warning.
FeatureConsistency feature_consistency_loss(std::span<const SurfaceObservation> observations,
                                            std::span<const View> views, const FeatureExtractor& extractor);

// ---------------------------------------------------------------------------
// Combined objectives

struct LossTerms {
  double total = 0.0;
  std::vector<std::pair<std::string, double>> terms;

  double get(const std::string& name) const;
};

/// One prior-training instance: a field over one shape and its labeled queries.
struct PriorBatchItem {
  const NeuralPoints* points = nullptr;
  std::span<const Vec3> queries;
  std::span<const double> targets;
  std::span<const Vec3> eikonal_queries;
};

/// SDF + lambda_TV * TV / points + lambda_Eik * Eikonal, averaged over items.
/// Queries without neighbors do not enter the SDF term.
LossTerms prior_objective(const ParameterStore& params, const Decoders& decoders, const FieldConfig& config,
                          std::span<const PriorBatchItem> batch, const LossWeights& weights, Gradients* grads);

struct ReconBatch {
  std::span<const Ray> rays;
  Matrix target_colors;              // 3 x rays
  std::span<const int> ray_views;    // reference view per ray
  std::span<const View> views;       // for feature consistency
  std::span<const Vec3> pseudo_points;
  /// Use the weighted surface point of every ray instead of `pseudo_points`.
  bool pseudo_from_rays = false;
};

/// Rendering + lambda_FC * FC + lambda_Pseu * pseudo-SDF + lambda_TV * TV / points.
LossTerms reconstruction_objective(const FieldView& field, const ReconBatch& batch, const RenderConfig& render,
                                   const LossWeights& weights, const FeatureExtractor& extractor, Rng* rng,
                                   Gradients* grads);

/// CSV trace with a header of term names written on the first row.
class LossTrace {
 public:
  explicit LossTrace(const std::filesystem::path& path);
  void append(std::int64_t step, const LossTerms& terms);

 private:
  std::ofstream out_;
  bool header_written_ = false;
};

}  // namespace lpsurf
