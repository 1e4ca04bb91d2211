#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace lpsurf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Rgb = Eigen::Vector3d;

/// Column-major dense matrix; batched activations are stored features x batch.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using Rng = std::mt19937_64;

/// Independent RNG stream derived from (seed, stream); same inputs, same stream.
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double t) const { return origin + t * direction; }
};

struct Aabb {
  Vec3 lo = Vec3::Constant(-1.0);
  Vec3 hi = Vec3::Constant(1.0);

  bool contains(const Vec3& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  Vec3 extent() const { return hi - lo; }
  /// Parametric [t_enter, t_exit] of the ray inside the box, clamped to t >= 0.
  std::optional<std::pair<double, double>> intersect(const Ray& ray) const;
};

/// Emits a warning line on stderr and counts it (see warning_count()).
void warn(std::string_view message);
std::size_t warning_count();

/// Worker count for embarrassingly parallel loops. Read from LPSURF_THREADS on
/// first use; forced to 1 when deterministic mode is enabled.
int thread_count();
void set_thread_count(int n);
void set_deterministic(bool on);
bool deterministic();

/// Runs body(i) for i in [0, n). Each index must write only its own outputs.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace lpsurf
