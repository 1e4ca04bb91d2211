#include "lpsurf/common.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

namespace lpsurf {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

std::optional<std::pair<double, double>> Aabb::intersect(const Ray& ray) const {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / ray.direction[a];
    double ta = (lo[a] - ray.origin[a]) * inv;
    double tb = (hi[a] - ray.origin[a]) * inv;
    if (std::isnan(ta) || std::isnan(tb)) {
      // Ray parallel to the slab and exactly on its boundary.
      if (ray.origin[a] < lo[a] || ray.origin[a] > hi[a]) return std::nullopt;
      continue;
    }
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

namespace {
std::atomic<std::size_t> g_warnings{0};
std::mutex g_warn_mutex;
std::atomic<int> g_threads{0};
std::atomic<bool> g_deterministic{false};
}  // namespace

void warn(std::string_view message) {
  ++g_warnings;
  std::lock_guard lock(g_warn_mutex);
  std::cerr << "warning: " << message << '\n';
}

std::size_t warning_count() { return g_warnings.load(); }

int thread_count() {
  if (g_deterministic.load()) return 1;
  int n = g_threads.load();
  if (n <= 0) {
    n = 1;
    if (const char* env = std::getenv("LPSURF_THREADS")) n = std::max(1, std::atoi(env));
    g_threads.store(n);
  }
  return n;
}

void set_thread_count(int n) { g_threads.store(std::max(1, n)); }
void set_deterministic(bool on) { g_deterministic.store(on); }
bool deterministic() { return g_deterministic.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const auto workers = static_cast<std::size_t>(thread_count());
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t count = std::min(workers, n);
  pool.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace lpsurf
