#pragma once

// Checkpoints, run configuration files, camera files and the synthetic scenes
// used by the command line tool.

#include "lpsurf/meshing.hpp"
#include "lpsurf/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lpsurf {

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout: the 8 bytes "LPSURFCK", the manifest length as a little-endian
// uint64, the JSON manifest, then one blob of little-endian float32 values.
// Every manifest entry names a parameter (or optimizer moment, or the point
// positions) with its shape and its offset into the blob, in blob order.

inline constexpr int checkpoint_format_version = 1;

enum class CheckpointErrc {
  io_error = 1,
  bad_magic = 2,
  malformed_manifest = 3,
  version_mismatch = 4,
  truncated_blob = 5,
  shape_mismatch = 6,
};

std::string_view to_string(CheckpointErrc code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrc code, const std::string& message);
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

struct Checkpoint {
  std::string kind;  // "prior" or "field"
  nlohmann::json config = nlohmann::json::object();
  ParameterStore params;        // values, frozen flags and Adam moments
  std::vector<Vec3> positions;  // neural points; empty for a prior
  // Complete generator state: every draw derives from (seed, step).
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

/// Writes to a temporary file next to `path`, then renames it into place.
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws CheckpointError with the matching code on any format violation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_field_checkpoint(const FieldModel& model, nlohmann::json config, std::uint64_t seed,
                                 std::int64_t step);
/// Rebuilds a field. Throws CheckpointError(shape_mismatch) when the stored
/// parameters do not match what `config` describes.
FieldModel field_from_checkpoint(const Checkpoint& checkpoint, const FieldConfig& config);

// ---------------------------------------------------------------------------
// Run configuration

/// Synthetic scene and camera rig for gen-scene.
struct SceneConfig {
  std::string kind = "sphere_plane";  // "sphere_plane", "sphere" or "mesh"
  std::string mesh;                   // OBJ/PLY path for kind "mesh"
  int width = 64;
  int height = 64;
  int train_views = 3;
  int test_views = 1;
  double fov_degrees = 40.0;
  double camera_distance = 2.0;
  double elevation_degrees = 30.0;
  double train_arc_degrees = 60.0;  // azimuth span of the training views
  int seed_stride = 1;              // pixel stride of depth unprojection
  double seed_spacing = 0.025;
  int ground_truth_stride = 1;

  void validate() const;
};

struct EvalConfig {
  int mesh_samples = 20000;
  std::string nearest_search = "automatic";  // "automatic", "brute_force" or "grid"

  void validate() const;
};

struct AnalysisConfig {
  int components = 3;
  int clusters = 8;

  void validate() const;
};

/// Everything a CLI run needs. Phase seeds are all taken from `seed`.
struct RunConfig {
  std::uint64_t seed = 0;
  FieldConfig field;  // neighbor counts come from the phase sections
  PriorConfig prior;
  int prior_shapes = 10;
  std::uint64_t prior_shape_seed = 1;
  std::vector<std::string> prior_meshes;  // used instead of procedural shapes when non-empty
  LatentFitConfig fit;
  nlohmann::json fit_shape = {{"kind", "torus"}, {"center", {0.03, -0.02, 0.01}}, {"major_radius", 0.28},
                              {"minor_radius", 0.09}};
  ReconConfig reconstruction;
  int checkpoint_every = 0;
  ExtractionConfig extraction;
  SceneConfig scene;
  EvalConfig eval;
  AnalysisConfig analysis;

  RunConfig();
  /// Copies `field` and `seed` into the phase configs and validates them.
  void resolve();
};

nlohmann::json to_json(const RunConfig& config);
/// Keys missing from `json` keep their defaults; unknown keys throw
/// std::invalid_argument naming the full key path.
RunConfig run_config_from_json(const nlohmann::json& json);
/// Throws std::runtime_error naming the path when the file cannot be read.
RunConfig load_run_config(const std::filesystem::path& path);

/// Shapes described as {"kind": "sphere" | "box" | "torus" | "capsule" | "mesh", ...}.
Shape shape_from_json(const nlohmann::json& json);

// ---------------------------------------------------------------------------
// Cameras and scenes

struct CameraEntry {
  std::string name;
  std::string split;  // "train" or "test"
  Camera camera;
};

/// {"views": [{"name", "split", "width", "height", "intrinsics" (3x3 row
/// major), "camera_to_world" (4x4 row major)}]}. Numbers are written with
/// round-trip precision.
void write_cameras(std::span<const CameraEntry> cameras, const std::filesystem::path& path);
std::vector<CameraEntry> read_cameras(const std::filesystem::path& path);

Scene make_scene(const SceneConfig& config);
/// Orbit cameras: training views first, then held-out views between them.
std::vector<CameraEntry> make_scene_cameras(const SceneConfig& config);

/// A generated dataset on disk: cameras.json plus <name>.png and <name>.depth per view.
struct Dataset {
  std::vector<CameraEntry> cameras;
  std::vector<View> views;  // same order as `cameras`

  std::vector<View> split(std::string_view which) const;
};
Dataset read_dataset(const std::filesystem::path& directory);

}  // namespace lpsurf
