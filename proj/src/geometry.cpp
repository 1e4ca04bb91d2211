#include "lpsurf/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>

namespace lpsurf {

// ---------------------------------------------------------------------------
// Camera

Camera::Camera(const Mat3& intrinsics, const Mat4& camera_to_world, int width, int height)
    : intrinsics_(intrinsics), pose_(camera_to_world), width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
  if (intrinsics(1, 0) != 0.0 || intrinsics(2, 0) != 0.0 || intrinsics(2, 1) != 0.0)
    throw std::invalid_argument("camera: intrinsics must be upper triangular");
  if (!(intrinsics(0, 0) > 0.0) || !(intrinsics(1, 1) > 0.0) || !(intrinsics(2, 2) > 0.0))
    throw std::invalid_argument("camera: focal entries must be positive");
  const Mat3 r = camera_to_world.block<3, 3>(0, 0);
  if (!((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9))
    throw std::invalid_argument("camera: pose rotation is not orthonormal");
  if (r.determinant() < 0.0) throw std::invalid_argument("camera: pose rotation is a reflection");
  inverse_intrinsics_ = intrinsics_.inverse();
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_degrees,
                       int width, int height) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat4 pose = Mat4::Identity();
  pose.block<3, 1>(0, 0) = x;
  pose.block<3, 1>(0, 1) = y;
  pose.block<3, 1>(0, 2) = z;
  pose.block<3, 1>(0, 3) = eye;
  const double f = 0.5 * height / std::tan(0.5 * fov_y_degrees * std::numbers::pi / 180.0);
  Mat3 k = Mat3::Identity();
  k(0, 0) = f;
  k(1, 1) = f;
  k(0, 2) = 0.5 * width;
  k(1, 2) = 0.5 * height;
  return Camera(k, pose, width, height);
}

Ray Camera::generate_ray(int u, int v) const {
  if (u < 0 || v < 0 || u >= width_ || v >= height_)
    throw std::out_of_range("camera: pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") outside the image");
  return ray_through(u + 0.5, v + 0.5);
}

Ray Camera::ray_through(double x, double y) const {
  const Vec3 dir_cam = inverse_intrinsics_ * Vec3(x, y, 1.0);
  Ray ray;
  ray.origin = center();
  ray.direction = (rotation() * dir_cam).normalized();
  return ray;
}

std::optional<Camera::Projection> Camera::project(const Vec3& world) const {
  const Mat3 rt = rotation().transpose();
  const Vec3 pc = rt * (world - center());
  if (!(pc.z() > 1e-12)) return std::nullopt;
  const Vec3 h = intrinsics_ * pc;
  Projection out;
  out.pixel = Vec2(h.x() / h.z(), h.y() / h.z());
  out.depth = pc.z();
  Eigen::Matrix<double, 2, 3> dh;
  const double inv = 1.0 / h.z();
  dh.row(0) = (intrinsics_.row(0) - out.pixel.x() * intrinsics_.row(2)) * inv;
  dh.row(1) = (intrinsics_.row(1) - out.pixel.y() * intrinsics_.row(2)) * inv;
  out.jacobian = dh * rt;
  return out;
}

// ---------------------------------------------------------------------------
// TriangleMesh

bool TriangleMesh::is_watertight() const {
  if (faces.empty()) return false;
  std::map<std::pair<int, int>, int> directed;
  for (const auto& f : faces) {
    for (int e = 0; e < 3; ++e) {
      const int a = f[e];
      const int b = f[(e + 1) % 3];
      if (a == b) return false;
      if (++directed[{a, b}] > 1) return false;
    }
  }
  for (const auto& [edge, count] : directed) {
    if (!directed.contains({edge.second, edge.first})) return false;
  }
  return true;
}

Aabb TriangleMesh::bounds() const {
  Aabb box{Vec3::Constant(std::numeric_limits<double>::infinity()),
           Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (const auto& v : vertices) {
    box.lo = box.lo.cwiseMin(v);
    box.hi = box.hi.cwiseMax(v);
  }
  return box;
}

double TriangleMesh::face_area(std::size_t f) const {
  const auto& t = faces[f];
  return 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
}

Vec3 TriangleMesh::face_normal(std::size_t f) const {
  const auto& t = faces[f];
  return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).normalized();
}

double TriangleMesh::area() const {
  double a = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
  return a;
}

void TriangleMesh::normalize_to_unit_cube() {
  const Aabb box = bounds();
  const Vec3 c = 0.5 * (box.lo + box.hi);
  const double s = box.extent().maxCoeff();
  if (!(s > 0.0)) throw std::invalid_argument("mesh: degenerate bounds");
  for (auto& v : vertices) v = (v - c) / s;
}

TriangleMesh TriangleMesh::icosphere(double radius, int subdivisions) {
  if (!(radius > 0.0) || subdivisions < 0) throw std::invalid_argument("icosphere: bad parameters");
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  TriangleMesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (auto& v : m.vertices) v.normalize();
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      const int id = static_cast<int>(m.vertices.size()) - 1;
      midpoint.emplace(key, id);
      return id;
    };
    std::vector<std::array<int, 3>> next;
    next.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const int a = mid(f[0], f[1]);
      const int b = mid(f[1], f[2]);
      const int c = mid(f[2], f[0]);
      next.push_back({f[0], a, c});
      next.push_back({f[1], b, a});
      next.push_back({f[2], c, b});
      next.push_back({a, b, c});
    }
    m.faces = std::move(next);
  }
  for (auto& v : m.vertices) v *= radius;
  return m;
}

TriangleMesh TriangleMesh::box(const Vec3& center, const Vec3& h) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back(center + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                                       (i & 4) ? h.z() : -h.z()));
  }
  // Outward counter-clockwise quads split into triangles.
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

// ---------------------------------------------------------------------------
// MeshBvh

namespace {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

double box_distance2(const Aabb& box, const Vec3& p) {
  const Vec3 d = (box.lo - p).cwiseMax(p - box.hi).cwiseMax(0.0);
  return d.squaredNorm();
}

bool ray_box(const Aabb& box, const Ray& ray, const Vec3& inv, double t_min, double t_max) {
  for (int a = 0; a < 3; ++a) {
    double t0 = (box.lo[a] - ray.origin[a]) * inv[a];
    double t1 = (box.hi[a] - ray.origin[a]) * inv[a];
    if (t0 > t1) std::swap(t0, t1);
    if (std::isnan(t0) || std::isnan(t1)) continue;
    t_min = std::max(t_min, t0);
    t_max = std::min(t_max, t1);
    if (t_min > t_max) return false;
  }
  return true;
}

}  // namespace

MeshBvh::MeshBvh(std::shared_ptr<const TriangleMesh> mesh) : mesh_(std::move(mesh)) {
  if (!mesh_ || mesh_->faces.empty()) throw std::invalid_argument("bvh: empty mesh");
  order_.resize(mesh_->faces.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<int>(i);
  nodes_.reserve(2 * order_.size());
  build(0, static_cast<int>(order_.size()));
}

int MeshBvh::build(int begin, int end) {
  const auto& m = *mesh_;
  Node node;
  node.box = Aabb{Vec3::Constant(std::numeric_limits<double>::infinity()),
                  Vec3::Constant(-std::numeric_limits<double>::infinity())};
  for (int i = begin; i < end; ++i) {
    for (int v : m.faces[order_[i]]) {
      node.box.lo = node.box.lo.cwiseMin(m.vertices[v]);
      node.box.hi = node.box.hi.cwiseMax(m.vertices[v]);
    }
  }
  node.begin = begin;
  node.end = end;
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= 4) return id;

  int axis = 0;
  node.box.extent().maxCoeff(&axis);
  auto centroid = [&](int f) {
    const auto& t = m.faces[f];
    return (m.vertices[t[0]][axis] + m.vertices[t[1]][axis] + m.vertices[t[2]][axis]) / 3.0;
  };
  const int mid = (begin + end) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) { return centroid(a) < centroid(b); });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::pair<double, Vec3> MeshBvh::closest(const Vec3& x) const {
  const auto& m = *mesh_;
  double best2 = std::numeric_limits<double>::infinity();
  Vec3 best = Vec3::Zero();
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (box_distance2(n.box, x) >= best2) continue;
    if (n.left < 0) {
      for (int i = n.begin; i < n.end; ++i) {
        const auto& t = m.faces[order_[i]];
        const Vec3 q = closest_point_on_triangle(x, m.vertices[t[0]], m.vertices[t[1]], m.vertices[t[2]]);
        const double d2 = (q - x).squaredNorm();
        if (d2 < best2) {
          best2 = d2;
          best = q;
        }
      }
      continue;
    }
    const double dl = box_distance2(nodes_[n.left].box, x);
    const double dr = box_distance2(nodes_[n.right].box, x);
    if (dl < dr) {
      stack.push_back(n.right);
      stack.push_back(n.left);
    } else {
      stack.push_back(n.left);
      stack.push_back(n.right);
    }
  }
  return {std::sqrt(best2), best};
}

std::optional<std::pair<double, std::size_t>> MeshBvh::intersect(const Ray& ray, double t_min,
                                                                 double t_max) const {
  const auto& m = *mesh_;
  const Vec3 inv = ray.direction.cwiseInverse();
  std::optional<std::pair<double, std::size_t>> hit;
  double best = t_max;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& n = nodes_[stack.back()];
    stack.pop_back();
    if (!ray_box(n.box, ray, inv, t_min, best)) continue;
    if (n.left >= 0) {
      stack.push_back(n.left);
      stack.push_back(n.right);
      continue;
    }
    for (int i = n.begin; i < n.end; ++i) {
      const auto& tri = m.faces[order_[i]];
      const Vec3& a = m.vertices[tri[0]];
      const Vec3 e1 = m.vertices[tri[1]] - a;
      const Vec3 e2 = m.vertices[tri[2]] - a;
      const Vec3 pv = ray.direction.cross(e2);
      const double det = e1.dot(pv);
      if (std::abs(det) < 1e-14) continue;
      const double inv_det = 1.0 / det;
      const Vec3 tv = ray.origin - a;
      const double u = tv.dot(pv) * inv_det;
      if (u < 0.0 || u > 1.0) continue;
      const Vec3 qv = tv.cross(e1);
      const double v = ray.direction.dot(qv) * inv_det;
      if (v < 0.0 || u + v > 1.0) continue;
      const double t = e2.dot(qv) * inv_det;
      if (t >= t_min && t <= best) {
        best = t;
        hit = std::make_pair(t, static_cast<std::size_t>(order_[i]));
      }
    }
  }
  return hit;
}

double MeshBvh::winding_number(const Vec3& x) const {
  const auto& m = *mesh_;
  double total = 0.0;
  for (const auto& f : m.faces) {
    const Vec3 a = m.vertices[f[0]] - x;
    const Vec3 b = m.vertices[f[1]] - x;
    const Vec3 c = m.vertices[f[2]] - x;
    const double la = a.norm();
    const double lb = b.norm();
    const double lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    total += 2.0 * std::atan2(num, den);
  }
  return total / (4.0 * std::numbers::pi);
}

// ---------------------------------------------------------------------------
// Shapes

Shape make_sphere(const Vec3& center, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("sphere: radius must be positive");
  return Shape{Sphere{center, radius}};
}

Shape make_box(const Vec3& center, const Vec3& half_extents) {
  if (!((half_extents.array() > 0.0).all())) throw std::invalid_argument("box: extents must be positive");
  return Shape{Box{center, half_extents}};
}

Shape make_torus(const Vec3& center, double major_radius, double minor_radius) {
  if (!(major_radius > 0.0) || !(minor_radius > 0.0))
    throw std::invalid_argument("torus: radii must be positive");
  return Shape{Torus{center, major_radius, minor_radius}};
}

Shape make_capsule(const Vec3& a, const Vec3& b, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("capsule: radius must be positive");
  return Shape{Capsule{a, b, radius}};
}

Shape make_plane(const Vec3& normal, double offset) {
  const double n = normal.norm();
  if (!(n > 0.0)) throw std::invalid_argument("plane: zero normal");
  return Shape{Plane{normal / n, offset / n}};
}

Shape make_mesh_shape(TriangleMesh mesh) {
  if (!mesh.is_watertight()) throw std::invalid_argument("mesh: not watertight");
  auto shared = std::make_shared<const TriangleMesh>(std::move(mesh));
  return Shape{MeshShape{std::make_shared<const MeshBvh>(shared)}};
}

Shape make_union(std::vector<Shape> children) {
  if (children.empty()) throw std::invalid_argument("union: no children");
  return Shape{UnionShape{std::move(children)}};
}

bool is_analytic(const Shape& shape) {
  if (std::holds_alternative<MeshShape>(shape.value)) return false;
  if (const auto* u = std::get_if<UnionShape>(&shape.value)) {
    return std::all_of(u->children.begin(), u->children.end(), [](const Shape& s) { return is_analytic(s); });
  }
  return true;
}

bool has_bounded_interior(const Shape& shape) {
  return !std::holds_alternative<Plane>(shape.value);
}

namespace {

double sdf_primitive(const Sphere& s, const Vec3& x) { return (x - s.center).norm() - s.radius; }

double sdf_primitive(const Box& b, const Vec3& x) {
  const Vec3 q = (x - b.center).cwiseAbs() - b.half_extents;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

double sdf_primitive(const Torus& t, const Vec3& x) {
  const Vec3 p = x - t.center;
  const double qx = std::hypot(p.x(), p.y()) - t.major_radius;
  return std::hypot(qx, p.z()) - t.minor_radius;
}

double sdf_primitive(const Capsule& c, const Vec3& x) {
  const Vec3 pa = x - c.a;
  const Vec3 ba = c.b - c.a;
  const double bb = ba.squaredNorm();
  const double h = bb > 0.0 ? std::clamp(pa.dot(ba) / bb, 0.0, 1.0) : 0.0;
  return (pa - h * ba).norm() - c.radius;
}

double sdf_primitive(const Plane& p, const Vec3& x) { return p.normal.dot(x) - p.offset; }

}  // namespace

double analytic_sdf(const Shape& shape, const Vec3& x) {
  return std::visit(
      [&](const auto& s) -> double {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, MeshShape>) {
          throw std::invalid_argument("analytic_sdf: mesh shapes have no analytic distance");
        } else if constexpr (std::is_same_v<T, UnionShape>) {
          double d = std::numeric_limits<double>::infinity();
          for (const auto& c : s.children) d = std::min(d, analytic_sdf(c, x));
          return d;
        } else {
          return sdf_primitive(s, x);
        }
      },
      shape.value);
}

double mesh_signed_distance(const MeshShape& mesh, const Vec3& x) {
  const double d = mesh.bvh->closest(x).first;
  return mesh.bvh->winding_number(x) > 0.5 ? -d : d;
}

double signed_distance(const Shape& shape, const Vec3& x) {
  if (const auto* m = std::get_if<MeshShape>(&shape.value)) return mesh_signed_distance(*m, x);
  if (const auto* u = std::get_if<UnionShape>(&shape.value)) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& c : u->children) d = std::min(d, signed_distance(c, x));
    return d;
  }
  return analytic_sdf(shape, x);
}

namespace {

std::optional<double> sphere_trace(const Shape& shape, const Ray& ray, double t_min, double t_max) {
  constexpr double kHitEps = 1e-10;
  constexpr int kMaxSteps = 20000;
  double t = t_min;
  double d = analytic_sdf(shape, ray.at(t));
  int steps = 0;
  // Starting inside: march out first; only entering crossings count as hits.
  while (d <= 0.0 && t <= t_max && steps++ < kMaxSteps) {
    t += std::max(-d, 1e-5);
    d = analytic_sdf(shape, ray.at(t));
  }
  while (t <= t_max && steps++ < kMaxSteps) {
    if (d < kHitEps) return t;
    t += d;
    d = analytic_sdf(shape, ray.at(t));
  }
  return std::nullopt;
}

}  // namespace

std::optional<double> intersect_shape(const Shape& shape, const Ray& ray, double t_min, double t_max) {
  if (const auto* m = std::get_if<MeshShape>(&shape.value)) {
    double t = t_min;
    const auto& mesh = m->bvh->mesh();
    for (int guard = 0; guard < 1000; ++guard) {
      auto hit = m->bvh->intersect(ray, t, t_max);
      if (!hit) return std::nullopt;
      if (mesh.face_normal(hit->second).dot(ray.direction) < 0.0) return hit->first;
      t = hit->first + 1e-9;
    }
    return std::nullopt;
  }
  if (!is_analytic(shape)) {
    const auto& u = std::get<UnionShape>(shape.value);
    std::optional<double> best;
    for (const auto& c : u.children) {
      auto t = intersect_shape(c, ray, t_min, t_max);
      if (t && (!best || *t < *best)) best = t;
    }
    return best;
  }
  return sphere_trace(shape, ray, t_min, t_max);
}

// ---------------------------------------------------------------------------
// Scene

double Scene::sdf(const Vec3& x) const {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& o : objects) d = std::min(d, signed_distance(o.shape, x));
  return d;
}

Shape Scene::as_shape() const {
  std::vector<Shape> children;
  for (const auto& o : objects) children.push_back(o.shape);
  return make_union(std::move(children));
}

Rgb evaluate_albedo(const SceneObject& object, const Vec3& x) {
  return std::visit(
      [&](const auto& a) -> Rgb {
        using T = std::decay_t<decltype(a)>;
        if constexpr (std::is_same_v<T, ConstantAlbedo>) {
          return a.color;
        } else if constexpr (std::is_same_v<T, CheckerAlbedo>) {
          // Cell faces sit at half-integer multiples of the cell size.
          const auto k = (x / a.cell).array() + 0.5;
          const long parity = static_cast<long>(std::floor(k[0])) + static_cast<long>(std::floor(k[1])) +
                              static_cast<long>(std::floor(k[2]));
          return (parity & 1L) ? a.b : a.a;
        } else {
          const auto* m = std::get_if<MeshShape>(&object.shape.value);
          if (m == nullptr || m->bvh->mesh().colors.empty()) return Rgb::Constant(0.5);
          const auto& mesh = m->bvh->mesh();
          // Closest face, then barycentric blend of its vertex colors.
          std::size_t best_face = 0;
          double best = std::numeric_limits<double>::infinity();
          for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
            const auto& t = mesh.faces[f];
            const Vec3 q = closest_point_on_triangle(x, mesh.vertices[t[0]], mesh.vertices[t[1]],
                                                     mesh.vertices[t[2]]);
            const double d = (q - x).squaredNorm();
            if (d < best) {
              best = d;
              best_face = f;
            }
          }
          const auto& t = mesh.faces[best_face];
          const Vec3 v0 = mesh.vertices[t[1]] - mesh.vertices[t[0]];
          const Vec3 v1 = mesh.vertices[t[2]] - mesh.vertices[t[0]];
          const Vec3 v2 = x - mesh.vertices[t[0]];
          const double d00 = v0.dot(v0), d01 = v0.dot(v1), d11 = v1.dot(v1);
          const double d20 = v2.dot(v0), d21 = v2.dot(v1);
          const double den = d00 * d11 - d01 * d01;
          double bv = (d11 * d20 - d01 * d21) / den;
          double bw = (d00 * d21 - d01 * d20) / den;
          bv = std::clamp(bv, 0.0, 1.0);
          bw = std::clamp(bw, 0.0, 1.0 - bv);
          const double bu = 1.0 - bv - bw;
          return (bu * mesh.colors[t[0]] + bv * mesh.colors[t[1]] + bw * mesh.colors[t[2]])
              .cwiseMax(0.0)
              .cwiseMin(1.0);
        }
      },
      object.albedo);
}

RenderedView render_ground_truth(const Scene& scene, const Camera& camera) {
  if (scene.objects.empty()) throw std::invalid_argument("render_ground_truth: empty scene");
  RenderedView out{Image(camera.width(), camera.height(), scene.background),
                   DepthMap(camera.width(), camera.height())};
  parallel_for(static_cast<std::size_t>(camera.height()), [&](std::size_t row) {
    const int v = static_cast<int>(row);
    for (int u = 0; u < camera.width(); ++u) {
      const Ray ray = camera.generate_ray(u, v);
      const auto span = scene.bounds.intersect(ray);
      if (!span) continue;
      double best = std::numeric_limits<double>::infinity();
      const SceneObject* hit = nullptr;
      for (const auto& o : scene.objects) {
        auto t = intersect_shape(o.shape, ray, span->first, std::min(span->second, best));
        if (t && *t < best) {
          best = *t;
          hit = &o;
        }
      }
      if (hit != nullptr) {
        out.color.at(u, v) = evaluate_albedo(*hit, ray.at(best));
        out.depth.at(u, v) = best;
      }
    }
  });
  return out;
}

}  // namespace lpsurf
