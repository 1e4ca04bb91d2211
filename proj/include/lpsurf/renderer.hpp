#pragma once

// Volume rendering of a neural point field: Laplace-CDF density from signed
// distance, stratified plus importance ray sampling, alpha compositing with
// its reverse mode, and surface depth estimators.

#include "lpsurf/field.hpp"
#include "lpsurf/geometry.hpp"

#include <optional>
#include <span>
#include <vector>

namespace lpsurf {

/// Density for signed distance `sdf` (negative inside): the Laplace CDF form
/// evaluated at -sdf, approaching alpha deep inside and 0 far outside.
double density_from_sdf(double sdf, double alpha, double beta);

struct DensitySample {
  double sigma = 0.0;
  double d_sdf = 0.0;       // d sigma / d sdf
  double d_log_beta = 0.0;  // d sigma / d log(beta), with alpha = 1 / beta
};
DensitySample density_with_gradient(double sdf, double log_beta);

struct RenderConfig {
  int n_coarse = 64;
  int n_fine = 64;
  bool perturb = true;             // jitter stratified and inverse-CDF samples
  double min_transmittance = 0.0;  // samples behind this transmittance are skipped
};

/// Stratified depths, one per equal sub-interval of [near, far] (midpoints
/// when `rng` is null).
std::vector<double> stratified_samples(double near, double far, int count, Rng* rng);
/// Inverse-CDF draws from the piecewise-constant density with mass weights[i]
/// on [edges[i], edges[i + 1]]. Zero total weight falls back to uniform.
std::vector<double> sample_pdf(std::span<const double> edges, std::span<const double> weights, int count, Rng* rng);
/// Interval lengths: t[i + 1] - t[i], and far - t.back() for the last sample.
std::vector<double> sample_intervals(std::span<const double> t, double far);

struct CompositeResult {
  Rgb color = Rgb::Zero();
  std::vector<double> weights;
  std::vector<double> transmittance;  // before each sample
  double opacity = 0.0;
};

/// sigma, delta: per sample; radiance: 3 x samples.
CompositeResult composite(std::span<const double> sigma, std::span<const double> delta, const Matrix& radiance,
                          const Rgb& background);
/// Given d loss / d color, returns d loss / d sigma (per sample) and writes
/// d loss / d radiance into `grad_radiance` (3 x samples).
std::vector<double> composite_backward(const CompositeResult& result, std::span<const double> sigma,
                                       std::span<const double> delta, const Matrix& radiance, const Rgb& background,
                                       const Rgb& grad_color, Matrix& grad_radiance);

struct ZeroCrossing {
  double t = 0.0;
  int index = 0;        // crossing lies between samples index and index + 1
  double d_sdf0 = 0.0;  // d t / d sdf[index]
  double d_sdf1 = 0.0;  // d t / d sdf[index + 1]
};

/// First outside-to-inside sign change, linearly interpolated.
std::optional<ZeroCrossing> surface_point_zero_crossing(std::span<const double> t, std::span<const double> sdf);
/// sum(w t) / sum(w); nullopt when all weights vanish.
std::optional<double> surface_point_weighted(std::span<const double> t, std::span<const double> weights);

/// Per-ray render record for a batch; samples of all rays are concatenated.
struct RayBatch {
  std::vector<Ray> rays;
  std::vector<double> far;
  std::vector<int> begin;  // ray r owns samples [begin[r], begin[r + 1])
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<Vec3> positions;
  std::vector<DensitySample> density;
  SdfPass geometry;
  RadiancePass appearance;
  std::vector<int> radiance_column;  // per sample, -1 when skipped
  std::vector<CompositeResult> composites;
  Matrix colors;  // 3 x rays

  std::size_t ray_count() const { return rays.size(); }
  std::span<const double> ray_t(std::size_t r) const { return {t.data() + begin[r], t.data() + begin[r + 1]}; }
  std::span<const double> ray_sdf(std::size_t r) const {
    return {geometry.sdf.data() + begin[r], static_cast<std::size_t>(begin[r + 1] - begin[r])};
  }
};

/// Depth samples for one ray: stratified samples plus n_fine importance
/// samples drawn from the coarse rendering weights.
std::vector<double> sample_ray(const FieldView& field, const Ray& ray, double near, double far,
                               const RenderConfig& config, Rng* rng);

/// Renders rays through the field's bounds (grid ranges). With `record`, keeps
/// what backward_rays needs.
RayBatch render_rays(const FieldView& field, std::span<const Ray> rays, const RenderConfig& config, Rng* rng,
                     bool record);

/// Accumulates parameter gradients given d loss / d color (3 x rays) and an
/// optional extra d loss / d sdf per sample (empty to skip). Sample depths
/// are treated as constants.
void backward_rays(const FieldView& field, const RayBatch& batch, const Matrix& grad_colors,
                   const Vector& grad_sample_sdf, Gradients& grads);

struct PixelRender {
  Rgb color = Rgb::Zero();
  std::vector<double> t;
  std::vector<double> sdf;
  std::vector<double> weights;
};
PixelRender render_pixel(const FieldView& field, const Ray& ray, const RenderConfig& config, Rng* rng);

/// Renders every pixel (deterministic midpoint sampling), in row chunks.
Image render_image(const FieldView& field, const Camera& camera, const RenderConfig& config,
                   DepthMap* depth = nullptr);

}  // namespace lpsurf
