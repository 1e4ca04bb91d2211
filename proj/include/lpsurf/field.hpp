#pragma once

// Neural point field: points carrying geometry and appearance latents, local
// decoders evaluated on relative positions, and RBF-weighted blending of the
// neighbors' predictions.

#include "lpsurf/nn.hpp"
#include "lpsurf/spatial_index.hpp"

#include <numbers>
#include <span>
#include <vector>

namespace lpsurf {

struct FieldConfig {
  int neighbors = 8;
  double radius = 0.075;
  double rbf_lambda = std::numbers::ln10 / (0.075 * 0.075);  // weight 0.1 at the radius
  double empty_sdf = 0.1;                                     // value where no point is in range
  double gradient_step = 1e-4;
  double relative_scale = 1.0 / 0.075;  // x - p enters the geometry decoder in units of the radius
  Rgb background = Rgb::Zero();

  int geometry_dim = 32;
  int appearance_dim = 64;
  int hidden_width = 128;
  int appearance_feature_dim = 256;
  int posenc_frequencies = 6;
  double latent_std = 0.01;
  double initial_beta = 0.1;

  VoxelGridConfig grid;

  void validate() const;
};

double rbf_weight(const Vec3& x, const Vec3& p, double lambda);

/// The four decoders plus the density sharpness, registered in one store.
struct Decoders {
  Mlp geometry_local;    // [geometry latent, x - p] -> hidden feature
  Mlp geometry_head;     // hidden feature -> signed distance
  Mlp appearance_local;  // [appearance latent, posenc(x - p)] -> appearance feature
  Mlp appearance_head;   // [blended feature, view direction] -> rgb in [0, 1]
  int log_beta = -1;     // beta = exp(log_beta), alpha = 1 / beta

  /// Parameters are named "geometry_local.*", "geometry_head.*",
  /// "appearance_local.*", "appearance_head.*" and "log_beta".
  static Decoders create(const FieldConfig& config, ParameterStore& store, Rng& rng);
  /// Looks up the decoder parameters of an existing store (e.g. after loading).
  static Decoders bind(const FieldConfig& config, const ParameterStore& store);
};

struct NeuralPoints {
  std::vector<Vec3> positions;
  VoxelGrid grid;
  int geometry_latents = -1;    // store entry, geometry_dim x point count
  int appearance_latents = -1;  // store entry, appearance_dim x point count, or -1
};

/// Read-only bundle of everything needed to evaluate a field.
struct FieldView {
  const ParameterStore& params;
  const Decoders& decoders;
  const FieldConfig& config;
  const NeuralPoints& points;

  double beta() const { return std::exp(params[decoders.log_beta].value[0]); }
};

/// Owns one scene's field: decoders, latents, points, and their index.
class FieldModel {
 public:
  FieldModel() = default;
  /// Fresh decoders and N(0, latent_std^2) latents for `positions`.
  FieldModel(std::vector<Vec3> positions, const FieldConfig& config, std::uint64_t seed);

  /// Replaces decoder parameter values with the same-named entries of `other`
  /// (shapes must match); entries missing from `other` and latents are untouched.
  void copy_decoders_from(const ParameterStore& other);
  void freeze_geometry(bool frozen);
  bool geometry_frozen() const;

  FieldView view() const { return {params, decoders, config, points}; }
  /// Rebuilds the decoder and latent handles after `params` was replaced.
  void rebind();

  ParameterStore params;
  FieldConfig config;
  Decoders decoders;
  NeuralPoints points;
};

/// Adds a latent table named `name` with columns drawn from N(0, std^2).
int add_latent_table(ParameterStore& store, const std::string& name, int dim, std::size_t count, double std_dev,
                     Rng& rng);

// ---------------------------------------------------------------------------
// Batched evaluation with reverse mode

struct NeighborBatch {
  std::vector<int> begin;  // query q owns entries [begin[q], begin[q + 1])
  std::vector<int> point;  // neighbor point index
  Matrix relative;         // 3 x entries, query minus point
  Vector weight;           // normalized so each query's weights sum to 1

  std::size_t queries() const { return begin.empty() ? 0 : begin.size() - 1; }
  std::size_t entries() const { return point.size(); }
  bool supported(std::size_t q) const { return begin[q + 1] > begin[q]; }
};

NeighborBatch gather_neighbors(const FieldView& field, std::span<const Vec3> queries);
/// The neighbor lists of `queries` (indices into `all`), in that order.
NeighborBatch select_queries(const NeighborBatch& all, std::span<const int> queries);
/// Six neighbor lists per query for x +- step e_a (order +x, -x, +y, -y, +z,
/// -z), each reusing the neighbor set of the unshifted query.
NeighborBatch shifted_neighbors(const FieldView& field, const NeighborBatch& base, std::span<const Vec3> queries,
                                double step);

struct SdfPass {
  NeighborBatch neighbors;
  Matrix local_input;
  MlpTape local;
  MlpTape head;
  Vector sdf;  // per query; empty_sdf where unsupported
};

SdfPass sdf_forward(const FieldView& field, NeighborBatch neighbors, bool record);
void sdf_backward(const FieldView& field, const SdfPass& pass, const Vector& grad_sdf, Gradients& grads);

struct RadiancePass {
  NeighborBatch neighbors;
  MlpTape local;
  MlpTape head;
  std::vector<int> head_column;  // per query, -1 when unsupported
  Matrix rgb;                    // 3 x queries; background where unsupported
};

RadiancePass radiance_forward(const FieldView& field, NeighborBatch neighbors, std::span<const Vec3> directions,
                              bool record);
void radiance_backward(const FieldView& field, const RadiancePass& pass, const Matrix& grad_rgb, Gradients& grads);

struct GradientPass {
  SdfPass shifted;
  Matrix gradient;  // 3 x queries
};

/// Central-difference spatial gradients whose six evaluations are differentiable.
GradientPass sdf_gradient_forward(const FieldView& field, const NeighborBatch& base, std::span<const Vec3> queries,
                                  bool record);
void sdf_gradient_backward(const FieldView& field, const GradientPass& pass, const Matrix& grad_gradient,
                           Gradients& grads);

// ---------------------------------------------------------------------------
// Convenience single-point evaluation

double eval_sdf(const FieldView& field, const Vec3& x);
Vector eval_sdf(const FieldView& field, std::span<const Vec3> xs);
Rgb eval_radiance(const FieldView& field, const Vec3& x, const Vec3& direction);
Vec3 sdf_spatial_gradient(const FieldView& field, const Vec3& x, double step);

}  // namespace lpsurf
