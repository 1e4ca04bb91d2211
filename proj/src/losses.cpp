#include "lpsurf/losses.hpp"

#include <cmath>
#include <iomanip>

namespace lpsurf {

namespace {

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

void LossWeights::validate() const {
  for (double w : {sdf_epsilon, prior_tv, prior_eikonal, feature_consistency, pseudo_sdf, recon_tv}) {
    if (!(w >= 0.0)) throw std::invalid_argument("loss weights must be non-negative");
  }
  if (!(sdf_epsilon > 0.0)) throw std::invalid_argument("sdf_epsilon must be positive");
}

LossValue sdf_loss(std::span<const double> target, const Vector& predicted, double epsilon) {
  if (static_cast<Eigen::Index>(target.size()) != predicted.size())
    throw std::invalid_argument("sdf_loss: size mismatch");
  if (!(epsilon > 0.0)) throw std::invalid_argument("sdf_loss: epsilon must be positive");
  LossValue out;
  out.gradient = Vector::Zero(predicted.size());
  if (target.empty()) return out;
  const double n = static_cast<double>(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double scale = 1.0 / (std::abs(target[i]) + epsilon);
    const double diff = predicted[k] - target[i];
    out.value += std::abs(diff) * scale;
    out.gradient[k] = sign(diff) * scale / n;
  }
  out.value /= n;
  return out;
}

LossValue eikonal_loss(const Matrix& gradients) {
  if (gradients.rows() != 3) throw std::invalid_argument("eikonal_loss: expected 3 x n gradients");
  LossValue out;
  out.gradient = Vector::Zero(gradients.size());
  const Eigen::Index n = gradients.cols();
  if (n == 0) return out;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = gradients.col(i).norm();
    out.value += (norm - 1.0) * (norm - 1.0);
    if (norm > 1e-12) out.gradient.segment<3>(3 * i) = 2.0 * (norm - 1.0) / norm * gradients.col(i) / static_cast<double>(n);
  }
  out.value /= static_cast<double>(n);
  return out;
}

LossValue rendering_loss(const Matrix& rendered, const Matrix& target) {
  if (rendered.rows() != target.rows() || rendered.cols() != target.cols())
    throw std::invalid_argument("rendering_loss: shape mismatch");
  LossValue out;
  out.gradient = Vector::Zero(rendered.size());
  if (rendered.cols() == 0) return out;
  const double n = static_cast<double>(rendered.cols());
  for (Eigen::Index i = 0; i < rendered.size(); ++i) {
    const double diff = rendered.data()[i] - target.data()[i];
    out.value += std::abs(diff);
    out.gradient[i] = sign(diff) / n;
  }
  out.value /= n;
  return out;
}

double tv_loss(const FieldView& field, LatentKind which, int neighbors, double radius, double scale,
               Gradients* grads) {
  const int table = which == LatentKind::geometry ? field.points.geometry_latents : field.points.appearance_latents;
  if (table < 0) throw std::invalid_argument("tv_loss: field has no such latent table");
  if (neighbors < 1) throw std::invalid_argument("tv_loss: neighbors must be >= 1");
  const auto latents = field.params[table].matrix();
  const bool accumulate = grads && !field.params[table].frozen;
  std::optional<Eigen::Map<Matrix>> grad;
  if (accumulate) grad.emplace(grads->matrix(field.params, table));
  const auto& positions = field.points.positions;
  double total = 0.0;
  std::size_t coincident = 0;
  std::vector<Neighbor> found;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    field.points.grid.query(positions[i], neighbors + 1, radius, found);
    int used = 0;
    for (const auto& nb : found) {
      if (nb.index == static_cast<int>(i)) continue;
      if (used == neighbors) break;
      ++used;
      const double dist = std::sqrt(nb.distance2);
      if (!(dist > 0.0)) {
        ++coincident;
        continue;
      }
      const auto diff = (latents.col(static_cast<Eigen::Index>(i)) - latents.col(nb.index)).eval();
      total += diff.cwiseAbs().sum() / dist;
      if (accumulate) {
        const Vector g = diff.unaryExpr([](double v) { return sign(v); }) * (scale / dist);
        grad->col(static_cast<Eigen::Index>(i)) += g;
        grad->col(nb.index) -= g;
      }
    }
  }
  if (coincident > 0) warn("tv_loss: skipped " + std::to_string(coincident) + " coincident point pairs");
  return total;
}

double pseudo_sdf_loss(const FieldView& field, std::span<const Vec3> points, double scale, Gradients* grads) {
  if (points.empty()) return 0.0;
  const auto pass = sdf_forward(field, gather_neighbors(field, points), grads != nullptr);
  const double n = static_cast<double>(points.size());
  double value = 0.0;
  Vector grad(pass.sdf.size());
  for (Eigen::Index i = 0; i < pass.sdf.size(); ++i) {
    value += std::abs(pass.sdf[i]);
    grad[i] = scale * sign(pass.sdf[i]) / n;
  }
  if (grads) sdf_backward(field, pass, grad, *grads);
  return value / n;
}

// ---------------------------------------------------------------------------

namespace {

// Bilinear lookup of one image at index coordinates (a, b) = pixel - 0.5.
Rgb bilinear(const Image& image, const Vec2& pixel, Rgb* d_x, Rgb* d_y) {
  const double a = pixel.x() - 0.5;
  const double b = pixel.y() - 0.5;
  const double fa0 = std::floor(a);
  const double fb0 = std::floor(b);
  const double fa = a - fa0;
  const double fb = b - fb0;
  auto clamp_u = [&](double i) { return static_cast<int>(std::clamp(i, 0.0, image.width - 1.0)); };
  auto clamp_v = [&](double j) { return static_cast<int>(std::clamp(j, 0.0, image.height - 1.0)); };
  const int u0 = clamp_u(fa0), u1 = clamp_u(fa0 + 1.0);
  const int v0 = clamp_v(fb0), v1 = clamp_v(fb0 + 1.0);
  const Rgb& c00 = image.at(u0, v0);
  const Rgb& c10 = image.at(u1, v0);
  const Rgb& c01 = image.at(u0, v1);
  const Rgb& c11 = image.at(u1, v1);
  if (d_x) *d_x = (1.0 - fb) * (c10 - c00) + fb * (c11 - c01);
  if (d_y) *d_y = (1.0 - fa) * (c01 - c00) + fa * (c11 - c10);
  return (1.0 - fa) * (1.0 - fb) * c00 + fa * (1.0 - fb) * c10 + (1.0 - fa) * fb * c01 + fa * fb * c11;
}

}  // namespace

Vector BilinearRgb::sample(const Image& image, const Vec2& pixel, Matrix* jacobian) const {
  if (image.width < 1 || image.height < 1) throw std::invalid_argument("feature sample: empty image");
  Rgb dx, dy;
  const Rgb c = bilinear(image, pixel, jacobian ? &dx : nullptr, jacobian ? &dy : nullptr);
  if (jacobian) {
    jacobian->resize(3, 2);
    jacobian->col(0) = dx;
    jacobian->col(1) = dy;
  }
  return c;
}

Vector RgbPatch::sample(const Image& image, const Vec2& pixel, Matrix* jacobian) const {
  if (image.width < 1 || image.height < 1) throw std::invalid_argument("feature sample: empty image");
  Vector out(27);
  if (jacobian) jacobian->resize(27, 2);
  int k = 0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx, ++k) {
      Rgb gx, gy;
      out.segment<3>(3 * k) = bilinear(image, pixel + Vec2(dx, dy), jacobian ? &gx : nullptr, jacobian ? &gy : nullptr);
      if (jacobian) {
        jacobian->block<3, 1>(3 * k, 0) = gx;
        jacobian->block<3, 1>(3 * k, 1) = gy;
      }
    }
  }
  return out;
}

std::unique_ptr<FeatureExtractor> make_feature_extractor(const std::string& name) {
  if (name == "rgb") return std::make_unique<BilinearRgb>();
  if (name == "rgb_patch") return std::make_unique<RgbPatch>();
  throw std::invalid_argument("unknown feature extractor '" + name + "'");
}

FeatureConsistency feature_consistency_loss(std::span<const SurfaceObservation> observations,
                                            std::span<const View> views, const FeatureExtractor& extractor) {
  FeatureConsistency out;
  out.point_gradients.assign(observations.size(), Vec3::Zero());
  struct Term {
    std::size_t point;
    Vector diff;
    Eigen::Matrix<double, Eigen::Dynamic, 3> d_diff;  // d diff / d point
  };
  std::vector<Term> terms;
  Matrix jac_ref, jac_view;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& obs = observations[i];
    if (obs.reference_view < 0 || obs.reference_view >= static_cast<int>(views.size()))
      throw std::out_of_range("feature_consistency_loss: reference view index");
    const auto& ref_view = views[obs.reference_view];
    const auto ref = ref_view.camera.project(obs.point);
    if (!ref || !ref_view.camera.in_image(ref->pixel)) continue;
    const Vector ref_feature = extractor.sample(ref_view.color, ref->pixel, &jac_ref);
    const Matrix d_ref = jac_ref * ref->jacobian;
    for (const auto& view : views) {
      const auto proj = view.camera.project(obs.point);
      if (!proj || !view.camera.in_image(proj->pixel)) continue;
      const Vector feature = extractor.sample(view.color, proj->pixel, &jac_view);
      terms.push_back({i, feature - ref_feature, jac_view * proj->jacobian - d_ref});
    }
  }
  out.valid_pairs = terms.size();
  if (terms.empty()) {
    if (!observations.empty()) warn("feature_consistency_loss: no valid surface point projections");
    return out;
  }
  const double n = static_cast<double>(terms.size());
  for (const auto& term : terms) {
    out.value += term.diff.cwiseAbs().sum();
    const Vector s = term.diff.unaryExpr([](double v) { return sign(v); });
    out.point_gradients[term.point] += (term.d_diff.transpose() * s) / n;
  }
  out.value /= n;
  return out;
}

// ---------------------------------------------------------------------------

double LossTerms::get(const std::string& name) const {
  for (const auto& [k, v] : terms) {
    if (k == name) return v;
  }
  throw std::out_of_range("no loss term named '" + name + "'");
}

LossTerms prior_objective(const ParameterStore& params, const Decoders& decoders, const FieldConfig& config,
                          std::span<const PriorBatchItem> batch, const LossWeights& weights, Gradients* grads) {
  LossTerms out;
  if (batch.empty()) throw std::invalid_argument("prior_objective: empty batch");
  const double items = static_cast<double>(batch.size());
  double sdf_total = 0.0, tv_total = 0.0, eik_total = 0.0;
  for (const auto& item : batch) {
    if (!item.points) throw std::invalid_argument("prior_objective: item without points");
    if (item.queries.size() != item.targets.size()) throw std::invalid_argument("prior_objective: target count mismatch");
    const FieldView field{params, decoders, config, *item.points};

    auto neighbors = gather_neighbors(field, item.queries);
    std::vector<int> kept;
    for (std::size_t q = 0; q < item.queries.size(); ++q) {
      if (neighbors.supported(q)) kept.push_back(static_cast<int>(q));
    }
    {
      std::vector<double> ts;
      for (int q : kept) ts.push_back(item.targets[q]);
      const auto pass = sdf_forward(field, select_queries(neighbors, kept), grads != nullptr);
      const auto loss = sdf_loss(ts, pass.sdf, weights.sdf_epsilon);
      sdf_total += loss.value;
      if (grads) sdf_backward(field, pass, loss.gradient / items, *grads);
    }

    const double n_points = static_cast<double>(item.points->positions.size());
    tv_total += tv_loss(field, LatentKind::geometry, config.neighbors, config.radius,
                        weights.prior_tv / (n_points * items), grads) /
                n_points;

    if (weights.prior_eikonal > 0.0 && !item.eikonal_queries.empty()) {
      auto eik_neighbors = gather_neighbors(field, item.eikonal_queries);
      std::vector<Vec3> xs;
      std::vector<int> sel;
      for (std::size_t q = 0; q < item.eikonal_queries.size(); ++q) {
        if (!eik_neighbors.supported(q)) continue;
        xs.push_back(item.eikonal_queries[q]);
        sel.push_back(static_cast<int>(q));
      }
      if (!xs.empty()) {
        const auto base = select_queries(eik_neighbors, sel);
        const auto pass = sdf_gradient_forward(field, base, xs, grads != nullptr);
        const auto loss = eikonal_loss(pass.gradient);
        eik_total += loss.value;
        if (grads) {
          const Matrix g = Eigen::Map<const Matrix>(loss.gradient.data(), 3, pass.gradient.cols()) *
                           (weights.prior_eikonal / items);
          sdf_gradient_backward(field, pass, g, *grads);
        }
      }
    }
  }
  sdf_total /= items;
  tv_total /= items;
  eik_total /= items;
  out.total = sdf_total + weights.prior_tv * tv_total + weights.prior_eikonal * eik_total;
  out.terms = {{"sdf", sdf_total}, {"tv", tv_total}, {"eikonal", eik_total}};
  return out;
}

LossTerms reconstruction_objective(const FieldView& field, const ReconBatch& batch, const RenderConfig& render,
                                   const LossWeights& weights, const FeatureExtractor& extractor, Rng* rng,
                                   Gradients* grads) {
  if (batch.ray_views.size() != batch.rays.size()) throw std::invalid_argument("reconstruction_objective: ray view count");
  const auto rendered = render_rays(field, batch.rays, render, rng, grads != nullptr);
  const auto ren = rendering_loss(rendered.colors, batch.target_colors);

  // Feature consistency on zero-crossing surface points.
  std::vector<SurfaceObservation> observations;
  std::vector<std::pair<std::size_t, ZeroCrossing>> crossings;
  for (std::size_t r = 0; r < rendered.ray_count(); ++r) {
    const auto z = surface_point_zero_crossing(rendered.ray_t(r), rendered.ray_sdf(r));
    if (!z) continue;
    observations.push_back({batch.rays[r].at(z->t), batch.ray_views[r]});
    crossings.emplace_back(r, *z);
  }
  FeatureConsistency fc;
  if (weights.feature_consistency > 0.0 && !observations.empty())
    fc = feature_consistency_loss(observations, batch.views, extractor);

  const double n_points = static_cast<double>(field.points.positions.size());
  double pseudo = 0.0;
  double tv = 0.0;
  if (grads) {
    Vector grad_sdf = Vector::Zero(static_cast<Eigen::Index>(rendered.t.size()));
    if (fc.valid_pairs > 0) {
      for (std::size_t i = 0; i < crossings.size(); ++i) {
        const auto& [r, z] = crossings[i];
        const double d_t = weights.feature_consistency * fc.point_gradients[i].dot(batch.rays[r].direction);
        grad_sdf[rendered.begin[r] + z.index] += d_t * z.d_sdf0;
        grad_sdf[rendered.begin[r] + z.index + 1] += d_t * z.d_sdf1;
      }
    }
    const Matrix grad_colors = Eigen::Map<const Matrix>(ren.gradient.data(), 3, rendered.colors.cols());
    backward_rays(field, rendered, grad_colors, grad_sdf, *grads);
  }
  if (weights.pseudo_sdf > 0.0) {
    if (batch.pseudo_from_rays) {
      std::vector<Vec3> surface;
      for (std::size_t r = 0; r < rendered.ray_count(); ++r) {
        if (const auto t = surface_point_weighted(rendered.ray_t(r), rendered.composites[r].weights))
          surface.push_back(batch.rays[r].at(*t));
      }
      pseudo = pseudo_sdf_loss(field, surface, weights.pseudo_sdf, grads);
    } else {
      pseudo = pseudo_sdf_loss(field, batch.pseudo_points, weights.pseudo_sdf, grads);
    }
  }
  if (weights.recon_tv > 0.0) {
    const double scale = weights.recon_tv / n_points;
    tv = tv_loss(field, LatentKind::geometry, field.config.neighbors, field.config.radius, scale, grads) / n_points;
  }
  LossTerms out;
  out.total = ren.value + weights.feature_consistency * fc.value + weights.pseudo_sdf * pseudo + weights.recon_tv * tv;
  out.terms = {{"rendering", ren.value}, {"feature_consistency", fc.value}, {"pseudo_sdf", pseudo}, {"tv", tv}};
  return out;
}

LossTrace::LossTrace(const std::filesystem::path& path) : out_(path) {
  if (!out_) throw std::runtime_error("cannot open loss trace '" + path.string() + "'");
  out_ << std::setprecision(17);
}

void LossTrace::append(std::int64_t step, const LossTerms& terms) {
  if (!header_written_) {
    out_ << "step";
    for (const auto& [name, v] : terms.terms) out_ << ',' << name;
    out_ << ",total\n";
    header_written_ = true;
  }
  out_ << step;
  for (const auto& [name, v] : terms.terms) out_ << ',' << v;
  out_ << ',' << terms.total << '\n';
  out_.flush();
}

}  // namespace lpsurf
