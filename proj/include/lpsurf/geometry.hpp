#pragma once

// Ground-truth geometry: analytic and mesh signed distances, pinhole cameras,
// and a reference renderer that produces the input views for reconstruction.
//
// Sign convention: signed distances are negative inside and positive outside.
// Camera convention: right-handed, the camera looks down +z in its own frame,
// +x is image right, +y is image down, and the image origin is the top-left
// corner. Pixel (u, v) has its center at (u + 0.5, v + 0.5).

#include "lpsurf/common.hpp"

#include <array>
#include <limits>
#include <memory>
#include <variant>
#include <vector>

namespace lpsurf {

class Camera {
 public:
  /// Throws std::invalid_argument unless intrinsics are upper triangular with
  /// positive focal entries and the pose rotation is orthonormal.
  Camera(const Mat3& intrinsics, const Mat4& camera_to_world, int width, int height);

  /// Camera at `eye` looking at `target`, image y axis aligned with -up.
  static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y_degrees,
                        int width, int height);

  /// Ray through the center of pixel (u, v). Throws std::out_of_range.
  Ray generate_ray(int u, int v) const;
  /// Ray through continuous image coordinates (pixel centers at i + 0.5).
  Ray ray_through(double x, double y) const;

  struct Projection {
    Vec2 pixel;                        // continuous image coordinates
    double depth = 0.0;                // camera-frame z
    Eigen::Matrix<double, 2, 3> jacobian;  // d pixel / d world point
  };
  /// Projects a world point; nullopt when the point is not in front of the camera.
  std::optional<Projection> project(const Vec3& world) const;

  bool in_image(const Vec2& pixel) const {
    return pixel.x() >= 0.0 && pixel.y() >= 0.0 && pixel.x() < width_ && pixel.y() < height_;
  }

  const Mat3& intrinsics() const { return intrinsics_; }
  const Mat4& pose() const { return pose_; }
  Mat3 rotation() const { return pose_.block<3, 3>(0, 0); }
  Vec3 center() const { return pose_.block<3, 1>(0, 3); }
  int width() const { return width_; }
  int height() const { return height_; }

 private:
  Mat3 intrinsics_;
  Mat3 inverse_intrinsics_;
  Mat4 pose_;
  int width_;
  int height_;
};

// ---------------------------------------------------------------------------
// Triangle meshes

class TriangleMesh {
 public:
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Rgb> colors;  // optional, one per vertex

  /// Every undirected edge is shared by exactly two faces with opposite
  /// orientation.
  bool is_watertight() const;
  Aabb bounds() const;
  double area() const;
  double face_area(std::size_t f) const;
  Vec3 face_normal(std::size_t f) const;
  /// Centers the bounding box at the origin and scales its largest side to 1.
  void normalize_to_unit_cube();

  static TriangleMesh icosphere(double radius, int subdivisions);
  static TriangleMesh box(const Vec3& center, const Vec3& half_extents);
};

/// Bounding-volume hierarchy over a mesh's triangles.
class MeshBvh {
 public:
  explicit MeshBvh(std::shared_ptr<const TriangleMesh> mesh);

  /// Unsigned distance and closest point.
  std::pair<double, Vec3> closest(const Vec3& x) const;
  /// Nearest ray hit with t in [t_min, t_max]: (t, face index).
  std::optional<std::pair<double, std::size_t>> intersect(const Ray& ray, double t_min,
                                                          double t_max) const;
  /// Generalized winding number (1 inside, 0 outside for closed meshes).
  double winding_number(const Vec3& x) const;

  const TriangleMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    Aabb box;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };
  int build(int begin, int end);

  std::shared_ptr<const TriangleMesh> mesh_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Shapes

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.5;
};
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Constant(0.25);
};
/// Torus around the z axis.
struct Torus {
  Vec3 center = Vec3::Zero();
  double major_radius = 0.3;
  double minor_radius = 0.1;
};
struct Capsule {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::UnitZ();
  double radius = 0.1;
};
/// Half-space boundary: signed distance = normal . x - offset (normal unit length).
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};
struct MeshShape {
  std::shared_ptr<const MeshBvh> bvh;
};

struct Shape;
struct UnionShape {
  std::vector<Shape> children;
};

struct Shape {
  std::variant<Sphere, Box, Torus, Capsule, Plane, MeshShape, UnionShape> value;
};

Shape make_sphere(const Vec3& center, double radius);
Shape make_box(const Vec3& center, const Vec3& half_extents);
Shape make_torus(const Vec3& center, double major_radius, double minor_radius);
Shape make_capsule(const Vec3& a, const Vec3& b, double radius);
Shape make_plane(const Vec3& normal, double offset);
/// Rejects non-watertight meshes with std::invalid_argument.
Shape make_mesh_shape(TriangleMesh mesh);
Shape make_union(std::vector<Shape> children);

bool is_analytic(const Shape& shape);
/// False only for a bare plane (its interior is unbounded).
bool has_bounded_interior(const Shape& shape);

/// Exact signed distance of an analytic shape. Throws std::invalid_argument
/// for shapes containing meshes.
double analytic_sdf(const Shape& shape, const Vec3& x);
/// Unsigned distance to the nearest triangle, negative when the winding
/// number exceeds 1/2.
double mesh_signed_distance(const MeshShape& mesh, const Vec3& x);
/// Dispatches to analytic_sdf or mesh_signed_distance (unions take the min).
double signed_distance(const Shape& shape, const Vec3& x);

/// First outside-to-inside crossing of the zero level set within [t_min, t_max].
std::optional<double> intersect_shape(const Shape& shape, const Ray& ray, double t_min,
                                      double t_max);

// ---------------------------------------------------------------------------
// Scenes and reference rendering

struct ConstantAlbedo {
  Rgb color = Rgb::Constant(0.8);
};
/// 3D checkerboard with cubic cells of size `cell`.
struct CheckerAlbedo {
  Rgb a = Rgb(0.9, 0.9, 0.9);
  Rgb b = Rgb(0.1, 0.1, 0.1);
  double cell = 0.25;
};
/// Barycentric interpolation of the mesh vertex colors.
struct VertexColorAlbedo {};

using Albedo = std::variant<ConstantAlbedo, CheckerAlbedo, VertexColorAlbedo>;

struct SceneObject {
  Shape shape;
  Albedo albedo;
};

/// Surfaces are only visible inside `bounds`.
struct Scene {
  std::vector<SceneObject> objects;
  Rgb background = Rgb::Zero();
  Aabb bounds;

  double sdf(const Vec3& x) const;
  Shape as_shape() const;
};

struct Image {
  int width = 0;
  int height = 0;
  std::vector<Rgb> pixels;

  Image() = default;
  Image(int w, int h, const Rgb& fill = Rgb::Zero()) : width(w), height(h), pixels(w * h, fill) {}
  Rgb& at(int u, int v) { return pixels[static_cast<std::size_t>(v) * width + u]; }
  const Rgb& at(int u, int v) const { return pixels[static_cast<std::size_t>(v) * width + u]; }
};

/// Depth is the distance along the unit ray direction; +infinity on a miss.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), depth(w * h, std::numeric_limits<double>::infinity()) {}
  double& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
};

struct RenderedView {
  Image color;
  DepthMap depth;
};

/// One calibrated input image with optional depth (empty when unknown).
struct View {
  Camera camera;
  Image color;
  DepthMap depth;
};

Rgb evaluate_albedo(const SceneObject& object, const Vec3& x);

/// First-hit albedo and ray distance per pixel. Analytic shapes are sphere
/// traced, meshes are intersected through their BVH.
RenderedView render_ground_truth(const Scene& scene, const Camera& camera);

}  // namespace lpsurf
