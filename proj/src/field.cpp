#include "lpsurf/field.hpp"

#include <cmath>

namespace lpsurf {

void FieldConfig::validate() const {
  if (neighbors < 1) throw std::invalid_argument("field: neighbors must be >= 1");
  if (!(radius > 0.0)) throw std::invalid_argument("field: radius must be positive");
  if (!(rbf_lambda > 0.0)) throw std::invalid_argument("field: rbf_lambda must be positive");
  if (!(gradient_step > 0.0)) throw std::invalid_argument("field: gradient_step must be positive");
  if (geometry_dim < 1 || appearance_dim < 1 || hidden_width < 1 || appearance_feature_dim < 1)
    throw std::invalid_argument("field: layer widths must be positive");
  if (posenc_frequencies < 0) throw std::invalid_argument("field: posenc_frequencies must be >= 0");
  if (!(latent_std >= 0.0)) throw std::invalid_argument("field: latent_std must be >= 0");
  if (!(initial_beta > 0.0)) throw std::invalid_argument("field: initial_beta must be positive");
  grid.validate();
}

double rbf_weight(const Vec3& x, const Vec3& p, double lambda) { return std::exp(-lambda * (x - p).squaredNorm()); }

namespace {

MlpSpec geometry_local_spec(const FieldConfig& c) {
  const int h = c.hidden_width;
  return {c.geometry_dim + 3, {h, h, h, h}, OutputActivation::none, 0};
}
MlpSpec geometry_head_spec(const FieldConfig& c) { return {c.hidden_width, {1}, OutputActivation::none, 0}; }
MlpSpec appearance_local_spec(const FieldConfig& c) {
  const int h = c.hidden_width;
  return {c.appearance_dim + 3, {h, h, h, c.appearance_feature_dim}, OutputActivation::none, c.posenc_frequencies};
}
MlpSpec appearance_head_spec(const FieldConfig& c) {
  return {c.appearance_feature_dim + 3, {c.hidden_width, 3}, OutputActivation::sigmoid, 0};
}

}  // namespace

Decoders Decoders::create(const FieldConfig& config, ParameterStore& store, Rng& rng) {
  Decoders d;
  d.geometry_local = Mlp("geometry_local", geometry_local_spec(config), store, rng);
  d.geometry_head = Mlp("geometry_head", geometry_head_spec(config), store, rng);
  d.appearance_local = Mlp("appearance_local", appearance_local_spec(config), store, rng);
  d.appearance_head = Mlp("appearance_head", appearance_head_spec(config), store, rng);
  d.log_beta = store.add("log_beta", {1}, Vector::Constant(1, std::log(config.initial_beta)));
  return d;
}

Decoders Decoders::bind(const FieldConfig& config, const ParameterStore& store) {
  Decoders d;
  d.geometry_local = Mlp::bound("geometry_local", geometry_local_spec(config), store);
  d.geometry_head = Mlp::bound("geometry_head", geometry_head_spec(config), store);
  d.appearance_local = Mlp::bound("appearance_local", appearance_local_spec(config), store);
  d.appearance_head = Mlp::bound("appearance_head", appearance_head_spec(config), store);
  d.log_beta = store.index("log_beta");
  return d;
}

int add_latent_table(ParameterStore& store, const std::string& name, int dim, std::size_t count, double std_dev,
                     Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector values(static_cast<Eigen::Index>(dim) * static_cast<Eigen::Index>(count));
  for (auto& v : values) v = std_dev * n(rng);
  return store.add(name, {dim, static_cast<int>(count)}, std::move(values));
}

FieldModel::FieldModel(std::vector<Vec3> positions, const FieldConfig& cfg, std::uint64_t seed) : config(cfg) {
  config.validate();
  if (positions.empty()) throw std::invalid_argument("field model needs at least one point");
  Rng rng = make_rng(seed, 10);
  decoders = Decoders::create(config, params, rng);
  points.geometry_latents =
      add_latent_table(params, "geometry_latents", config.geometry_dim, positions.size(), config.latent_std, rng);
  points.appearance_latents =
      add_latent_table(params, "appearance_latents", config.appearance_dim, positions.size(), config.latent_std, rng);
  points.grid = VoxelGrid(positions, config.grid);
  points.positions = std::move(positions);
}

void FieldModel::copy_decoders_from(const ParameterStore& other) {
  for (auto& p : params.entries()) {
    if (p.name == "geometry_latents" || p.name == "appearance_latents" || !other.contains(p.name)) continue;
    const auto& src = other[p.name];
    if (src.shape != p.shape) throw std::invalid_argument("decoder '" + p.name + "' shape differs");
    p.value = src.value;
  }
}

void FieldModel::freeze_geometry(bool frozen) {
  params.set_frozen("geometry_local.", frozen);
  params.set_frozen("geometry_head.", frozen);
}

bool FieldModel::geometry_frozen() const {
  return params[decoders.geometry_local.weight_index(0)].frozen;
}

void FieldModel::rebind() {
  decoders = Decoders::bind(config, params);
  points.geometry_latents = params.index("geometry_latents");
  points.appearance_latents = params.contains("appearance_latents") ? params.index("appearance_latents") : -1;
}

// ---------------------------------------------------------------------------

NeighborBatch gather_neighbors(const FieldView& field, std::span<const Vec3> queries) {
  const auto& cfg = field.config;
  NeighborBatch batch;
  batch.begin.reserve(queries.size() + 1);
  batch.begin.push_back(0);
  std::vector<Neighbor> found;
  std::vector<Vec3> rel;
  std::vector<double> weights;
  for (const auto& x : queries) {
    field.points.grid.query(x, cfg.neighbors, cfg.radius, found);
    double total = 0.0;
    const std::size_t start = weights.size();
    for (const auto& nb : found) {
      const Vec3 r = x - field.points.positions[nb.index];
      const double w = std::exp(-cfg.rbf_lambda * r.squaredNorm());
      batch.point.push_back(nb.index);
      rel.push_back(r);
      weights.push_back(w);
      total += w;
    }
    for (std::size_t i = start; i < weights.size(); ++i) weights[i] /= total;
    batch.begin.push_back(static_cast<int>(batch.point.size()));
  }
  batch.relative.resize(3, static_cast<Eigen::Index>(rel.size()));
  for (std::size_t i = 0; i < rel.size(); ++i) batch.relative.col(static_cast<Eigen::Index>(i)) = rel[i];
  batch.weight = Eigen::Map<const Vector>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  return batch;
}

NeighborBatch select_queries(const NeighborBatch& all, std::span<const int> queries) {
  NeighborBatch out;
  out.begin.reserve(queries.size() + 1);
  out.begin.push_back(0);
  std::size_t total = 0;
  for (int q : queries) total += static_cast<std::size_t>(all.begin[q + 1] - all.begin[q]);
  out.point.reserve(total);
  out.relative.resize(3, static_cast<Eigen::Index>(total));
  out.weight.resize(static_cast<Eigen::Index>(total));
  Eigen::Index col = 0;
  for (int q : queries) {
    for (int e = all.begin[q]; e < all.begin[q + 1]; ++e) {
      out.point.push_back(all.point[e]);
      out.relative.col(col) = all.relative.col(e);
      out.weight[col] = all.weight[e];
      ++col;
    }
    out.begin.push_back(static_cast<int>(col));
  }
  return out;
}

NeighborBatch shifted_neighbors(const FieldView& field, const NeighborBatch& base, std::span<const Vec3> queries,
                                double step) {
  if (queries.size() != base.queries()) throw std::invalid_argument("shifted_neighbors: query count mismatch");
  const double lambda = field.config.rbf_lambda;
  NeighborBatch out;
  out.begin.reserve(6 * queries.size() + 1);
  out.begin.push_back(0);
  out.point.reserve(6 * base.entries());
  out.relative.resize(3, static_cast<Eigen::Index>(6 * base.entries()));
  out.weight.resize(static_cast<Eigen::Index>(6 * base.entries()));
  Eigen::Index col = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (int axis = 0; axis < 3; ++axis) {
      for (double sign : {1.0, -1.0}) {
        Vec3 shift = Vec3::Zero();
        shift[axis] = sign * step;
        const Eigen::Index start = col;
        double total = 0.0;
        for (int e = base.begin[q]; e < base.begin[q + 1]; ++e) {
          const Vec3 r = base.relative.col(e) + shift;
          const double w = std::exp(-lambda * r.squaredNorm());
          out.point.push_back(base.point[e]);
          out.relative.col(col) = r;
          out.weight[col] = w;
          total += w;
          ++col;
        }
        for (Eigen::Index i = start; i < col; ++i) out.weight[i] /= total;
        out.begin.push_back(static_cast<int>(col));
      }
    }
  }
  return out;
}

SdfPass sdf_forward(const FieldView& field, NeighborBatch neighbors, bool record) {
  const auto& cfg = field.config;
  SdfPass pass;
  pass.neighbors = std::move(neighbors);
  const auto& nb = pass.neighbors;
  const std::size_t nq = nb.queries();
  pass.sdf = Vector::Constant(static_cast<Eigen::Index>(nq), cfg.empty_sdf);
  const auto entries = static_cast<Eigen::Index>(nb.entries());
  if (entries == 0) return pass;

  const auto latents = field.params[field.points.geometry_latents].matrix();
  Matrix input(cfg.geometry_dim + 3, entries);
  for (Eigen::Index e = 0; e < entries; ++e) {
    input.col(e).head(cfg.geometry_dim) = latents.col(nb.point[e]);
    input.col(e).tail<3>() = cfg.relative_scale * nb.relative.col(e);
  }
  const Matrix feature =
      field.decoders.geometry_local.forward(field.params, input, record ? &pass.local : nullptr);
  const Matrix local_sdf =
      field.decoders.geometry_head.forward(field.params, feature, record ? &pass.head : nullptr);
  for (std::size_t q = 0; q < nq; ++q) {
    if (!nb.supported(q)) continue;
    double s = 0.0;
    for (int e = nb.begin[q]; e < nb.begin[q + 1]; ++e) s += nb.weight[e] * local_sdf(0, e);
    pass.sdf[static_cast<Eigen::Index>(q)] = s;
  }
  return pass;
}

void sdf_backward(const FieldView& field, const SdfPass& pass, const Vector& grad_sdf, Gradients& grads) {
  const auto& nb = pass.neighbors;
  const auto entries = static_cast<Eigen::Index>(nb.entries());
  if (grad_sdf.size() != static_cast<Eigen::Index>(nb.queries()))
    throw std::invalid_argument("sdf_backward: gradient size mismatch");
  if (entries == 0) return;
  if (pass.local.preactivations.empty()) throw std::logic_error("sdf_backward: pass was not recorded");
  Matrix grad_local(1, entries);
  for (std::size_t q = 0; q < nb.queries(); ++q) {
    for (int e = nb.begin[q]; e < nb.begin[q + 1]; ++e) grad_local(0, e) = grad_sdf[static_cast<Eigen::Index>(q)] * nb.weight[e];
  }
  const Matrix grad_feature = field.decoders.geometry_head.backward(field.params, pass.head, grad_local, grads, true);
  const Matrix grad_input = field.decoders.geometry_local.backward(field.params, pass.local, grad_feature, grads, true);
  const int latent_index = field.points.geometry_latents;
  if (field.params[latent_index].frozen) return;
  auto grad_latents = grads.matrix(field.params, latent_index);
  const int dim = field.config.geometry_dim;
  for (Eigen::Index e = 0; e < entries; ++e) grad_latents.col(nb.point[e]) += grad_input.col(e).head(dim);
}

RadiancePass radiance_forward(const FieldView& field, NeighborBatch neighbors, std::span<const Vec3> directions,
                              bool record) {
  const auto& cfg = field.config;
  if (field.points.appearance_latents < 0) throw std::logic_error("radiance_forward: field has no appearance latents");
  RadiancePass pass;
  pass.neighbors = std::move(neighbors);
  const auto& nb = pass.neighbors;
  const std::size_t nq = nb.queries();
  if (directions.size() != nq) throw std::invalid_argument("radiance_forward: one direction per query required");
  pass.rgb = cfg.background.replicate(1, static_cast<Eigen::Index>(nq));
  pass.head_column.assign(nq, -1);
  const auto entries = static_cast<Eigen::Index>(nb.entries());
  if (entries == 0) return pass;

  const auto latents = field.params[field.points.appearance_latents].matrix();
  Matrix input(cfg.appearance_dim + 3, entries);
  for (Eigen::Index e = 0; e < entries; ++e) {
    input.col(e).head(cfg.appearance_dim) = latents.col(nb.point[e]);
    input.col(e).tail<3>() = nb.relative.col(e);
  }
  const Matrix local =
      field.decoders.appearance_local.forward(field.params, input, record ? &pass.local : nullptr);

  int supported = 0;
  for (std::size_t q = 0; q < nq; ++q) {
    if (nb.supported(q)) pass.head_column[q] = supported++;
  }
  Matrix head_input = Matrix::Zero(cfg.appearance_feature_dim + 3, supported);
  for (std::size_t q = 0; q < nq; ++q) {
    const int c = pass.head_column[q];
    if (c < 0) continue;
    for (int e = nb.begin[q]; e < nb.begin[q + 1]; ++e)
      head_input.col(c).head(cfg.appearance_feature_dim) += nb.weight[e] * local.col(e);
    head_input.col(c).tail<3>() = directions[q];
  }
  const Matrix rgb = field.decoders.appearance_head.forward(field.params, head_input, record ? &pass.head : nullptr);
  for (std::size_t q = 0; q < nq; ++q) {
    if (pass.head_column[q] >= 0) pass.rgb.col(static_cast<Eigen::Index>(q)) = rgb.col(pass.head_column[q]);
  }
  return pass;
}

void radiance_backward(const FieldView& field, const RadiancePass& pass, const Matrix& grad_rgb, Gradients& grads) {
  const auto& cfg = field.config;
  const auto& nb = pass.neighbors;
  const std::size_t nq = nb.queries();
  if (grad_rgb.rows() != 3 || grad_rgb.cols() != static_cast<Eigen::Index>(nq))
    throw std::invalid_argument("radiance_backward: gradient shape mismatch");
  if (nb.entries() == 0) return;
  if (pass.local.preactivations.empty()) throw std::logic_error("radiance_backward: pass was not recorded");
  Matrix grad_head(3, pass.head.output.cols());
  for (std::size_t q = 0; q < nq; ++q) {
    if (pass.head_column[q] >= 0) grad_head.col(pass.head_column[q]) = grad_rgb.col(static_cast<Eigen::Index>(q));
  }
  const Matrix grad_head_input = field.decoders.appearance_head.backward(field.params, pass.head, grad_head, grads, true);
  Matrix grad_local(cfg.appearance_feature_dim, static_cast<Eigen::Index>(nb.entries()));
  for (std::size_t q = 0; q < nq; ++q) {
    const int c = pass.head_column[q];
    if (c < 0) continue;
    for (int e = nb.begin[q]; e < nb.begin[q + 1]; ++e)
      grad_local.col(e) = nb.weight[e] * grad_head_input.col(c).head(cfg.appearance_feature_dim);
  }
  const int latent_index = field.points.appearance_latents;
  const bool latents_trainable = !field.params[latent_index].frozen;
  const Matrix grad_input =
      field.decoders.appearance_local.backward(field.params, pass.local, grad_local, grads, latents_trainable);
  if (!latents_trainable) return;
  auto grad_latents = grads.matrix(field.params, latent_index);
  for (Eigen::Index e = 0; e < static_cast<Eigen::Index>(nb.entries()); ++e)
    grad_latents.col(nb.point[e]) += grad_input.col(e).head(cfg.appearance_dim);
}

GradientPass sdf_gradient_forward(const FieldView& field, const NeighborBatch& base, std::span<const Vec3> queries,
                                  bool record) {
  const double step = field.config.gradient_step;
  GradientPass pass;
  pass.shifted = sdf_forward(field, shifted_neighbors(field, base, queries, step), record);
  const auto nq = static_cast<Eigen::Index>(queries.size());
  pass.gradient.resize(3, nq);
  for (Eigen::Index q = 0; q < nq; ++q) {
    for (int a = 0; a < 3; ++a)
      pass.gradient(a, q) = (pass.shifted.sdf[6 * q + 2 * a] - pass.shifted.sdf[6 * q + 2 * a + 1]) / (2.0 * step);
  }
  return pass;
}

void sdf_gradient_backward(const FieldView& field, const GradientPass& pass, const Matrix& grad_gradient,
                           Gradients& grads) {
  const double step = field.config.gradient_step;
  const Eigen::Index nq = pass.gradient.cols();
  if (grad_gradient.rows() != 3 || grad_gradient.cols() != nq)
    throw std::invalid_argument("sdf_gradient_backward: gradient shape mismatch");
  Vector grad_sdf(6 * nq);
  for (Eigen::Index q = 0; q < nq; ++q) {
    for (int a = 0; a < 3; ++a) {
      grad_sdf[6 * q + 2 * a] = grad_gradient(a, q) / (2.0 * step);
      grad_sdf[6 * q + 2 * a + 1] = -grad_gradient(a, q) / (2.0 * step);
    }
  }
  sdf_backward(field, pass.shifted, grad_sdf, grads);
}

// ---------------------------------------------------------------------------

double eval_sdf(const FieldView& field, const Vec3& x) {
  return sdf_forward(field, gather_neighbors(field, std::span<const Vec3>(&x, 1)), false).sdf[0];
}

Vector eval_sdf(const FieldView& field, std::span<const Vec3> xs) {
  constexpr std::size_t kChunk = 4096;
  Vector out(static_cast<Eigen::Index>(xs.size()));
  const std::size_t chunks = (xs.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t n = std::min(kChunk, xs.size() - begin);
    const auto part = xs.subspan(begin, n);
    out.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(n)) =
        sdf_forward(field, gather_neighbors(field, part), false).sdf;
  });
  return out;
}

Rgb eval_radiance(const FieldView& field, const Vec3& x, const Vec3& direction) {
  return radiance_forward(field, gather_neighbors(field, std::span<const Vec3>(&x, 1)),
                          std::span<const Vec3>(&direction, 1), false)
      .rgb.col(0);
}

Vec3 sdf_spatial_gradient(const FieldView& field, const Vec3& x, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("sdf_spatial_gradient: step must be positive");
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = step;
    g[a] = (eval_sdf(field, x + e) - eval_sdf(field, x - e)) / (2.0 * step);
  }
  return g;
}

}  // namespace lpsurf
