#include "lpsurf/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lpsurf {

double density_from_sdf(double sdf, double alpha, double beta) {
  const double arg = -sdf;
  if (arg <= 0.0) return alpha * 0.5 * std::exp(arg / beta);
  return alpha * (1.0 - 0.5 * std::exp(-arg / beta));
}

DensitySample density_with_gradient(double sdf, double log_beta) {
  const double beta = std::exp(log_beta);
  DensitySample d;
  if (sdf >= 0.0) {
    const double e = std::exp(-sdf / beta);
    d.sigma = 0.5 * e / beta;
    d.d_sdf = -d.sigma / beta;
    d.d_log_beta = d.sigma * (sdf / beta - 1.0);
  } else {
    const double e = std::exp(sdf / beta);
    d.sigma = (1.0 - 0.5 * e) / beta;
    d.d_sdf = -0.5 * e / (beta * beta);
    d.d_log_beta = -d.sigma + 0.5 * e * sdf / (beta * beta);
  }
  return d;
}

std::vector<double> stratified_samples(double near, double far, int count, Rng* rng) {
  if (!(near < far)) throw std::invalid_argument("stratified_samples: near must be below far");
  if (count < 1) throw std::invalid_argument("stratified_samples: count must be >= 1");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double step = (far - near) / count;
  std::vector<double> t(count);
  for (int i = 0; i < count; ++i) t[i] = near + (i + (rng ? u(*rng) : 0.5)) * step;
  return t;
}

std::vector<double> sample_pdf(std::span<const double> edges, std::span<const double> weights, int count, Rng* rng) {
  if (edges.size() != weights.size() + 1 || weights.empty())
    throw std::invalid_argument("sample_pdf: need one more edge than weights");
  std::vector<double> cdf(edges.size(), 0.0);
  double total = 0.0;
  for (double w : weights) total += std::max(w, 0.0);
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = total > 0.0 ? std::max(weights[i], 0.0) / total : 1.0 / static_cast<double>(weights.size());
    cdf[i + 1] = cdf[i] + w;
  }
  cdf.back() = 1.0;
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<double> out(std::max(count, 0));
  std::size_t bin = 0;
  for (int j = 0; j < count; ++j) {
    const double u = (j + (rng ? dist(*rng) : 0.5)) / count;
    while (bin + 1 < weights.size() && (cdf[bin + 1] <= u || cdf[bin + 1] == cdf[bin])) ++bin;
    const double width = cdf[bin + 1] - cdf[bin];
    const double frac = width > 0.0 ? std::clamp((u - cdf[bin]) / width, 0.0, 1.0) : 0.5;
    out[j] = edges[bin] + frac * (edges[bin + 1] - edges[bin]);
  }
  return out;
}

std::vector<double> sample_intervals(std::span<const double> t, double far) {
  std::vector<double> delta(t.size());
  for (std::size_t i = 0; i + 1 < t.size(); ++i) delta[i] = t[i + 1] - t[i];
  if (!t.empty()) delta.back() = std::max(far - t.back(), 0.0);
  return delta;
}

CompositeResult composite(std::span<const double> sigma, std::span<const double> delta, const Matrix& radiance,
                          const Rgb& background) {
  const std::size_t n = sigma.size();
  if (delta.size() != n || static_cast<std::size_t>(radiance.cols()) != n || radiance.rows() != 3)
    throw std::invalid_argument("composite: inconsistent sample counts");
  CompositeResult r;
  r.weights.resize(n);
  r.transmittance.resize(n);
  double optical = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = sigma[i] * delta[i];
    r.transmittance[i] = std::exp(-optical);
    r.weights[i] = r.transmittance[i] * -std::expm1(-tau);
    optical += tau;
    r.color += r.weights[i] * radiance.col(static_cast<Eigen::Index>(i));
    r.opacity += r.weights[i];
  }
  r.color += (1.0 - r.opacity) * background;
  return r;
}

std::vector<double> composite_backward(const CompositeResult& result, std::span<const double> sigma,
                                       std::span<const double> delta, const Matrix& radiance, const Rgb& background,
                                       const Rgb& grad_color, Matrix& grad_radiance) {
  const std::size_t n = sigma.size();
  grad_radiance.resize(3, static_cast<Eigen::Index>(n));
  std::vector<double> grad_sigma(n);
  // suffix = sum over later samples of w_i (r_i - bg) . grad_color
  double suffix = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const auto col = static_cast<Eigen::Index>(k);
    grad_radiance.col(col) = result.weights[k] * grad_color;
    const double contribution = (radiance.col(col) - background).dot(grad_color);
    const double t_next = result.transmittance[k] * std::exp(-sigma[k] * delta[k]);
    grad_sigma[k] = (t_next * contribution - suffix) * delta[k];
    suffix += result.weights[k] * contribution;
  }
  return grad_sigma;
}

std::optional<ZeroCrossing> surface_point_zero_crossing(std::span<const double> t, std::span<const double> sdf) {
  if (t.size() != sdf.size()) throw std::invalid_argument("zero crossing: size mismatch");
  for (std::size_t j = 0; j + 1 < t.size(); ++j) {
    const double s0 = sdf[j];
    const double s1 = sdf[j + 1];
    if (s0 >= 0.0 && s1 <= 0.0 && s0 > s1) {
      const double d = s0 - s1;
      const double dt = t[j + 1] - t[j];
      ZeroCrossing z;
      z.index = static_cast<int>(j);
      z.t = (s0 * t[j + 1] - s1 * t[j]) / d;
      z.d_sdf0 = -s1 * dt / (d * d);
      z.d_sdf1 = s0 * dt / (d * d);
      return z;
    }
  }
  return std::nullopt;
}

std::optional<double> surface_point_weighted(std::span<const double> t, std::span<const double> weights) {
  if (t.size() != weights.size()) throw std::invalid_argument("weighted surface point: size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    num += weights[i] * t[i];
    den += weights[i];
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

namespace {

std::pair<double, double> ray_bounds(const FieldView& field, const Ray& ray) {
  const auto hit = field.points.grid.config().ranges.intersect(ray);
  if (!hit || !(hit->second - hit->first > 1e-9)) return {0.0, 0.0};
  return *hit;
}

// Coarse-to-fine depth samples for a batch of rays; coarse SDF evaluation is
// batched across rays. Rays with empty bounds get no samples.
std::vector<std::vector<double>> sample_batch(const FieldView& field, std::span<const Ray> rays,
                                              std::span<const std::pair<double, double>> bounds,
                                              const RenderConfig& config, Rng* rng) {
  std::vector<std::vector<double>> samples(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    if (bounds[r].second > bounds[r].first)
      samples[r] = stratified_samples(bounds[r].first, bounds[r].second, config.n_coarse, rng);
  }
  if (config.n_fine <= 0) return samples;

  std::vector<Vec3> positions;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    for (double t : samples[r]) positions.push_back(rays[r].at(t));
  }
  const Vector sdf = sdf_forward(field, gather_neighbors(field, positions), false).sdf;
  const double log_beta = field.params[field.decoders.log_beta].value[0];
  std::size_t offset = 0;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    auto& t = samples[r];
    if (t.empty()) continue;
    const auto [near, far] = bounds[r];
    const std::size_t n = t.size();
    std::vector<double> sigma(n);
    for (std::size_t i = 0; i < n; ++i)
      sigma[i] = density_with_gradient(sdf[static_cast<Eigen::Index>(offset + i)], log_beta).sigma;
    offset += n;
    const std::vector<double> delta(n, (far - near) / static_cast<double>(n));
    const auto coarse = composite(sigma, delta, Matrix::Zero(3, static_cast<Eigen::Index>(n)), Rgb::Zero());
    std::vector<double> edges(n + 1);
    for (std::size_t i = 0; i <= n; ++i) edges[i] = near + (far - near) * static_cast<double>(i) / static_cast<double>(n);
    const auto fine = sample_pdf(edges, coarse.weights, config.n_fine, rng);
    t.insert(t.end(), fine.begin(), fine.end());
    std::sort(t.begin(), t.end());
  }
  return samples;
}

}  // namespace

std::vector<double> sample_ray(const FieldView& field, const Ray& ray, double near, double far,
                               const RenderConfig& config, Rng* rng) {
  if (!(near < far)) throw std::invalid_argument("sample_ray: near must be below far");
  if (config.n_coarse < 1 || config.n_fine < 0) throw std::invalid_argument("sample_ray: bad sample counts");
  const std::pair<double, double> bounds{near, far};
  return sample_batch(field, std::span<const Ray>(&ray, 1), std::span(&bounds, 1), config, rng)[0];
}

RayBatch render_rays(const FieldView& field, std::span<const Ray> rays, const RenderConfig& config, Rng* rng,
                     bool record) {
  if (config.n_coarse < 1 || config.n_fine < 0) throw std::invalid_argument("render_rays: bad sample counts");
  RayBatch batch;
  batch.rays.assign(rays.begin(), rays.end());
  std::vector<std::pair<double, double>> bounds;
  for (const auto& ray : rays) bounds.push_back(ray_bounds(field, ray));
  auto samples = sample_batch(field, rays, bounds, config, rng);

  batch.begin.push_back(0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const double far = bounds[r].second;
    batch.far.push_back(far);
    const auto delta = sample_intervals(samples[r], far);
    for (std::size_t i = 0; i < samples[r].size(); ++i) {
      batch.t.push_back(samples[r][i]);
      batch.delta.push_back(delta[i]);
      batch.positions.push_back(rays[r].at(samples[r][i]));
    }
    batch.begin.push_back(static_cast<int>(batch.t.size()));
  }

  auto neighbors = gather_neighbors(field, batch.positions);
  batch.geometry = sdf_forward(field, std::move(neighbors), record);
  const double log_beta = field.params[field.decoders.log_beta].value[0];
  batch.density.resize(batch.t.size());
  for (std::size_t i = 0; i < batch.t.size(); ++i)
    batch.density[i] = density_with_gradient(batch.geometry.sdf[static_cast<Eigen::Index>(i)], log_beta);

  // Radiance only where the ray is still transmissive.
  std::vector<int> active;
  std::vector<Vec3> directions;
  batch.radiance_column.assign(batch.t.size(), -1);
  std::vector<int> active_count(rays.size(), 0);
  for (std::size_t r = 0; r < rays.size(); ++r) {
    double optical = 0.0;
    for (int i = batch.begin[r]; i < batch.begin[r + 1]; ++i) {
      if (std::exp(-optical) < config.min_transmittance) break;
      batch.radiance_column[i] = static_cast<int>(active.size());
      active.push_back(i);
      directions.push_back(rays[r].direction);
      optical += batch.density[i].sigma * batch.delta[i];
      ++active_count[r];
    }
  }
  batch.appearance = radiance_forward(field, select_queries(batch.geometry.neighbors, active), directions, record);

  batch.colors.resize(3, static_cast<Eigen::Index>(rays.size()));
  batch.composites.resize(rays.size());
  for (std::size_t r = 0; r < rays.size(); ++r) {
    const int b = batch.begin[r];
    const int n = active_count[r];
    std::vector<double> sigma(n);
    Matrix radiance(3, n);
    for (int i = 0; i < n; ++i) {
      sigma[i] = batch.density[b + i].sigma;
      radiance.col(i) = batch.appearance.rgb.col(batch.radiance_column[b + i]);
    }
    batch.composites[r] = composite(sigma, std::span<const double>(batch.delta.data() + b, n), radiance,
                                    field.config.background);
    batch.colors.col(static_cast<Eigen::Index>(r)) = batch.composites[r].color;
  }
  if (!record) {
    batch.geometry.local = {};
    batch.geometry.head = {};
  }
  return batch;
}

void backward_rays(const FieldView& field, const RayBatch& batch, const Matrix& grad_colors,
                   const Vector& grad_sample_sdf, Gradients& grads) {
  const std::size_t samples = batch.t.size();
  if (grad_colors.rows() != 3 || grad_colors.cols() != static_cast<Eigen::Index>(batch.ray_count()))
    throw std::invalid_argument("backward_rays: color gradient shape mismatch");
  if (grad_sample_sdf.size() != 0 && grad_sample_sdf.size() != static_cast<Eigen::Index>(samples))
    throw std::invalid_argument("backward_rays: sdf gradient size mismatch");
  Vector grad_sdf = grad_sample_sdf.size() ? grad_sample_sdf : Vector::Zero(static_cast<Eigen::Index>(samples));
  Matrix grad_rgb = Matrix::Zero(3, batch.appearance.rgb.cols());
  double grad_log_beta = 0.0;
  Matrix grad_radiance;
  for (std::size_t r = 0; r < batch.ray_count(); ++r) {
    const auto& comp = batch.composites[r];
    const int b = batch.begin[r];
    const int n = static_cast<int>(comp.weights.size());
    if (n == 0) continue;
    std::vector<double> sigma(n);
    Matrix radiance(3, n);
    for (int i = 0; i < n; ++i) {
      sigma[i] = batch.density[b + i].sigma;
      radiance.col(i) = batch.appearance.rgb.col(batch.radiance_column[b + i]);
    }
    const auto grad_sigma =
        composite_backward(comp, sigma, std::span<const double>(batch.delta.data() + b, n), radiance,
                           field.config.background, grad_colors.col(static_cast<Eigen::Index>(r)), grad_radiance);
    for (int i = 0; i < n; ++i) {
      grad_sdf[b + i] += grad_sigma[i] * batch.density[b + i].d_sdf;
      grad_log_beta += grad_sigma[i] * batch.density[b + i].d_log_beta;
      grad_rgb.col(batch.radiance_column[b + i]) = grad_radiance.col(i);
    }
  }
  sdf_backward(field, batch.geometry, grad_sdf, grads);
  radiance_backward(field, batch.appearance, grad_rgb, grads);
  if (!field.params[field.decoders.log_beta].frozen) grads[field.decoders.log_beta][0] += grad_log_beta;
}

PixelRender render_pixel(const FieldView& field, const Ray& ray, const RenderConfig& config, Rng* rng) {
  const auto batch = render_rays(field, std::span<const Ray>(&ray, 1), config, rng, false);
  PixelRender out;
  out.color = batch.colors.col(0);
  const auto t = batch.ray_t(0);
  const auto sdf = batch.ray_sdf(0);
  out.t.assign(t.begin(), t.end());
  out.sdf.assign(sdf.begin(), sdf.end());
  out.weights = batch.composites[0].weights;
  out.weights.resize(out.t.size(), 0.0);
  return out;
}

Image render_image(const FieldView& field, const Camera& camera, const RenderConfig& config, DepthMap* depth) {
  Image image(camera.width(), camera.height());
  if (depth) *depth = DepthMap(camera.width(), camera.height());
  parallel_for(static_cast<std::size_t>(camera.height()), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    std::vector<Ray> rays;
    for (int u = 0; u < camera.width(); ++u) rays.push_back(camera.generate_ray(u, v));
    const auto batch = render_rays(field, rays, config, nullptr, false);
    for (int u = 0; u < camera.width(); ++u) {
      image.at(u, v) = batch.colors.col(u);
      if (depth) {
        const auto z = surface_point_zero_crossing(batch.ray_t(u), batch.ray_sdf(u));
        if (z) depth->at(u, v) = z->t;
      }
    }
  });
  return image;
}

}  // namespace lpsurf
