#include "lpsurf/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace lpsurf {

namespace {

constexpr double kPi = std::numbers::pi;

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

std::pair<Vec3, Vec3> tangent_frame(const Vec3& n) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 t1 = n.cross(helper).normalized();
  return {t1, n.cross(t1)};
}

// One candidate point on the primitive's surface; may lie outside bounds.
Vec3 sample_primitive(const Shape& shape, Rng& rng, const Aabb& bounds);

Vec3 sample_box_surface(const Box& b, Rng& rng) {
  const Vec3& h = b.half_extents;
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double total = areas[0] + areas[1] + areas[2];
  double r = u(rng) * total;
  int axis = 0;
  while (axis < 2 && r > areas[axis]) r -= areas[axis++];
  Vec3 p;
  for (int a = 0; a < 3; ++a) p[a] = (2.0 * u(rng) - 1.0) * h[a];
  p[axis] = u(rng) < 0.5 ? -h[axis] : h[axis];
  return b.center + p;
}

Vec3 sample_torus_surface(const Torus& t, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (;;) {
    const double theta = 2.0 * kPi * u(rng);
    const double phi = 2.0 * kPi * u(rng);
    const double w = (t.major_radius + t.minor_radius * std::cos(phi)) / (t.major_radius + t.minor_radius);
    if (u(rng) > w) continue;
    const double ring = t.major_radius + t.minor_radius * std::cos(phi);
    return t.center + Vec3(ring * std::cos(theta), ring * std::sin(theta), t.minor_radius * std::sin(phi));
  }
}

Vec3 sample_capsule_surface(const Capsule& c, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 axis = c.b - c.a;
  const double len = axis.norm();
  const double side = 2.0 * kPi * c.radius * len;
  const double caps = 4.0 * kPi * c.radius * c.radius;
  const Vec3 dir = len > 0.0 ? Vec3(axis / len) : Vec3::UnitZ();
  if (u(rng) * (side + caps) < side) {
    const auto [t1, t2] = tangent_frame(dir);
    const double a = 2.0 * kPi * u(rng);
    return c.a + u(rng) * axis + c.radius * (std::cos(a) * t1 + std::sin(a) * t2);
  }
  const Vec3 n = random_unit(rng);
  return (n.dot(dir) >= 0.0 ? c.b : c.a) + c.radius * n;
}

Vec3 sample_plane_surface(const Plane& p, Rng& rng, const Aabb& bounds) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto [t1, t2] = tangent_frame(p.normal);
  const Vec3 mid = 0.5 * (bounds.lo + bounds.hi);
  const Vec3 origin = mid - (p.normal.dot(mid) - p.offset) * p.normal;
  const double half = 0.5 * bounds.extent().norm();
  return origin + half * (u(rng) * t1 + u(rng) * t2);
}

Vec3 sample_mesh_surface(const TriangleMesh& m, const std::vector<double>& cdf, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = u(rng) * cdf.back();
  const auto f = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
  const auto& t = m.faces[std::min(f, m.faces.size() - 1)];
  double a = u(rng);
  double b = u(rng);
  if (a + b > 1.0) {
    a = 1.0 - a;
    b = 1.0 - b;
  }
  return m.vertices[t[0]] + a * (m.vertices[t[1]] - m.vertices[t[0]]) + b * (m.vertices[t[2]] - m.vertices[t[0]]);
}

std::vector<double> mesh_cdf(const TriangleMesh& m) {
  std::vector<double> cdf(m.faces.size());
  double acc = 0.0;
  for (std::size_t f = 0; f < m.faces.size(); ++f) {
    acc += m.face_area(f);
    cdf[f] = acc;
  }
  return cdf;
}

Vec3 sample_primitive(const Shape& shape, Rng& rng, const Aabb& bounds) {
  return std::visit(
      [&](const auto& s) -> Vec3 {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return s.center + s.radius * random_unit(rng);
        } else if constexpr (std::is_same_v<T, Box>) {
          return sample_box_surface(s, rng);
        } else if constexpr (std::is_same_v<T, Torus>) {
          return sample_torus_surface(s, rng);
        } else if constexpr (std::is_same_v<T, Capsule>) {
          return sample_capsule_surface(s, rng);
        } else if constexpr (std::is_same_v<T, Plane>) {
          return sample_plane_surface(s, rng, bounds);
        } else {
          throw std::logic_error("sample_primitive: composite shape");
        }
      },
      shape.value);
}

}  // namespace

double surface_area(const Shape& shape, const Aabb& bounds) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Sphere>) {
          return 4.0 * kPi * s.radius * s.radius;
        } else if constexpr (std::is_same_v<T, Box>) {
          const Vec3& h = s.half_extents;
          return 8.0 * (h.x() * h.y() + h.y() * h.z() + h.x() * h.z());
        } else if constexpr (std::is_same_v<T, Torus>) {
          return 4.0 * kPi * kPi * s.major_radius * s.minor_radius;
        } else if constexpr (std::is_same_v<T, Capsule>) {
          return 2.0 * kPi * s.radius * (s.b - s.a).norm() + 4.0 * kPi * s.radius * s.radius;
        } else if constexpr (std::is_same_v<T, Plane>) {
          Rng rng = make_rng(0, 0x5eed);
          constexpr int kTrials = 20000;
          int inside = 0;
          for (int i = 0; i < kTrials; ++i) inside += bounds.contains(sample_plane_surface(s, rng, bounds));
          const double half = 0.5 * bounds.extent().norm();
          return 4.0 * half * half * inside / kTrials;
        } else if constexpr (std::is_same_v<T, MeshShape>) {
          return s.bvh->mesh().area();
        } else {
          double a = 0.0;
          for (const auto& c : s.children) a += surface_area(c, bounds);
          return a;
        }
      },
      shape.value);
}

std::vector<Vec3> sample_surface(const Shape& shape, std::size_t count, Rng& rng, const Aabb& bounds) {
  std::vector<Vec3> out;
  out.reserve(count);
  if (count == 0) return out;

  // Flatten unions into leaves weighted by area; reject points that another
  // leaf covers (they are not on the union's boundary).
  std::vector<const Shape*> leaves;
  auto collect = [&](auto&& self, const Shape& s) -> void {
    if (const auto* u = std::get_if<UnionShape>(&s.value)) {
      for (const auto& c : u->children) self(self, c);
    } else {
      leaves.push_back(&s);
    }
  };
  collect(collect, shape);
  std::vector<double> leaf_cdf;
  std::vector<std::vector<double>> mesh_cdfs(leaves.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    acc += surface_area(*leaves[i], bounds);
    leaf_cdf.push_back(acc);
    if (const auto* m = std::get_if<MeshShape>(&leaves[i]->value)) mesh_cdfs[i] = mesh_cdf(m->bvh->mesh());
  }
  if (!(acc > 0.0)) throw std::invalid_argument("sample_surface: shape has no area inside bounds");
  const bool is_union = leaves.size() > 1;

  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t max_tries = 1000 * count + 100000;
  for (std::size_t tries = 0; out.size() < count && tries < max_tries; ++tries) {
    const double r = u(rng) * acc;
    const auto li = std::min<std::size_t>(
        static_cast<std::size_t>(std::upper_bound(leaf_cdf.begin(), leaf_cdf.end(), r) - leaf_cdf.begin()),
        leaves.size() - 1);
    const Shape& leaf = *leaves[li];
    Vec3 p;
    if (const auto* m = std::get_if<MeshShape>(&leaf.value)) {
      p = sample_mesh_surface(m->bvh->mesh(), mesh_cdfs[li], rng);
    } else {
      p = sample_primitive(leaf, rng, bounds);
    }
    if (!bounds.contains(p)) continue;
    if (is_union) {
      bool covered = false;
      for (std::size_t j = 0; j < leaves.size() && !covered; ++j) {
        if (j != li && signed_distance(*leaves[j], p) < -1e-9) covered = true;
      }
      if (covered) continue;
    }
    out.push_back(p);
  }
  if (out.size() < count) throw std::runtime_error("sample_surface: could not place samples inside bounds");
  return out;
}

std::vector<std::size_t> farthest_point_indices(std::span<const Vec3> points, double spacing,
                                                std::size_t start) {
  if (points.empty()) throw std::invalid_argument("farthest_point_sample: no points");
  if (!(spacing > 0.0)) throw std::invalid_argument("farthest_point_sample: spacing must be positive");
  if (start >= points.size()) throw std::out_of_range("farthest_point_sample: start index");
  const double spacing2 = spacing * spacing;
  std::vector<double> min_d2(points.size(), std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked{start};
  std::size_t current = start;
  for (;;) {
    std::size_t best = points.size();
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const double d2 = (points[i] - points[current]).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    if (best == points.size() || best_d2 < spacing2) break;
    picked.push_back(best);
    current = best;
  }
  return picked;
}

SeedPointSet farthest_point_sample(std::span<const Vec3> points, double spacing, std::uint64_t seed,
                                   std::span<const Rgb> colors) {
  if (points.empty()) throw std::invalid_argument("farthest_point_sample: no points");
  Rng rng = make_rng(seed, 2);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  const auto idx = farthest_point_indices(points, spacing, pick(rng));
  SeedPointSet out;
  out.points.reserve(idx.size());
  for (auto i : idx) {
    out.points.push_back(points[i]);
    if (!colors.empty()) out.colors.push_back(colors[i]);
  }
  return out;
}

std::vector<QuerySample> sample_query_points(const Shape& shape, std::size_t count,
                                             std::span<const double> variances, std::uint64_t seed,
                                             const Aabb& bounds) {
  if (count == 0) throw std::invalid_argument("sample_query_points: count must be positive");
  if (variances.empty()) throw std::invalid_argument("sample_query_points: no variances");
  for (double v : variances) {
    if (!(v > 0.0)) throw std::invalid_argument("sample_query_points: variances must be positive");
  }
  Rng rng = make_rng(seed, 1);
  const std::size_t tiers = variances.size();

  auto draw = [&](std::size_t tier, std::size_t n, std::vector<QuerySample>& out) {
    const auto surface = sample_surface(shape, n, rng, bounds);
    std::normal_distribution<double> noise(0.0, std::sqrt(variances[tier]));
    for (const auto& p : surface) {
      QuerySample q;
      q.x = p + Vec3(noise(rng), noise(rng), noise(rng));
      q.s = signed_distance(shape, q.x);
      out.push_back(q);
    }
  };

  std::vector<QuerySample> samples;
  samples.reserve(count);
  for (std::size_t t = 0; t < tiers; ++t) draw(t, count / tiers + (t < count % tiers ? 1 : 0), samples);

  if (!has_bounded_interior(shape)) {
    warn("sample_query_points: shape has no bounded interior, skipping sign balancing");
    return samples;
  }

  auto negative = [](const QuerySample& q) { return q.s < 0.0; };
  std::ptrdiff_t neg = std::count_if(samples.begin(), samples.end(), negative);
  std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(samples.size()) - neg;
  if (std::abs(pos - neg) <= 1) return samples;

  // Replace over-represented labels, last first, by fresh draws of the
  // under-represented sign.
  const bool need_negative = pos > neg;
  std::vector<std::size_t> surplus;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (negative(samples[i]) != need_negative) surplus.push_back(i);
  }
  const std::size_t max_rounds = 1000;
  std::vector<QuerySample> fresh;
  for (std::size_t round = 0; std::abs(pos - neg) > 1 && round < max_rounds; ++round) {
    fresh.clear();
    const std::size_t batch = std::max<std::size_t>(16, static_cast<std::size_t>(std::abs(pos - neg)));
    draw(round % tiers, batch, fresh);
    for (const auto& q : fresh) {
      if (std::abs(pos - neg) <= 1) break;
      if (negative(q) != need_negative) continue;
      samples[surplus.back()] = q;
      surplus.pop_back();
      if (need_negative) {
        ++neg;
        --pos;
      } else {
        --neg;
        ++pos;
      }
    }
  }
  if (std::abs(pos - neg) > 1) warn("sample_query_points: could not balance signed-distance labels");
  return samples;
}

std::vector<Vec3> jitter_points(std::span<const Vec3> points, double variance, std::uint64_t seed) {
  if (variance < 0.0) throw std::invalid_argument("jitter_points: negative variance");
  std::vector<Vec3> out(points.begin(), points.end());
  if (variance == 0.0) return out;
  Rng rng = make_rng(seed, 3);
  std::normal_distribution<double> noise(0.0, std::sqrt(variance));
  for (auto& p : out) p += Vec3(noise(rng), noise(rng), noise(rng));
  return out;
}

namespace {

void append_unprojected(const Image& color, const DepthMap& depth, const Camera& camera, int stride,
                        std::vector<Vec3>& points, std::vector<Rgb>& colors) {
  if (stride < 1) throw std::invalid_argument("unproject_depth: stride must be >= 1");
  if (color.width != depth.width || color.height != depth.height || depth.width != camera.width() ||
      depth.height != camera.height())
    throw std::invalid_argument("unproject_depth: image, depth and camera sizes differ");
  for (int v = 0; v < depth.height; v += stride) {
    for (int u = 0; u < depth.width; u += stride) {
      const double d = depth.at(u, v);
      if (!std::isfinite(d)) continue;
      points.push_back(camera.generate_ray(u, v).at(d));
      colors.push_back(color.at(u, v));
    }
  }
}

}  // namespace

SeedPointSet unproject_depth(const Image& color, const DepthMap& depth, const Camera& camera,
                             int stride, double spacing, std::uint64_t seed) {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  append_unprojected(color, depth, camera, stride, points, colors);
  if (points.empty()) throw std::runtime_error("unproject_depth: depth map has no finite values");
  return farthest_point_sample(points, spacing, seed, colors);
}

SeedPointSet unproject_views(std::span<const View> views, int stride, double spacing, std::uint64_t seed) {
  std::vector<Vec3> points;
  std::vector<Rgb> colors;
  for (const auto& v : views) append_unprojected(v.color, v.depth, v.camera, stride, points, colors);
  if (points.empty()) throw std::runtime_error("unproject_views: depth maps have no finite values");
  return farthest_point_sample(points, spacing, seed, colors);
}

}  // namespace lpsurf
