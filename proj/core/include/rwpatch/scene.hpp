#pragma once

// Synthetic "toy town" scenes: a road, box buildings, box obstacles and one
// billboard, rendered flat-shaded with per-pixel class labels.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rwpatch/geometry.hpp"
#include "rwpatch/tensor.hpp"

namespace rwpatch {

enum Class : std::uint8_t { kSky = 0, kRoad = 1, kBuilding = 2, kObstacle = 3, kBillboard = 4 };
inline constexpr std::size_t kNumClasses = 5;
const char* class_name(std::size_t c);

struct Box {
  Vec3 min, max;
  Class cls = kBuilding;
  std::array<float, 3> color{0.6f, 0.5f, 0.4f};
  bool windows = false;
};

struct SceneLayout {
  std::string id;
  double road_half_width = 3.5;
  std::vector<Box> boxes;
  Billboard billboard;
};

/// Canonical scenes: "A" billboard facing oncoming traffic, "B" and "C" with
/// the billboard face at 40 and 65 degrees to the road.
SceneLayout canonical_scene(const std::string& id);
std::vector<std::string> canonical_scene_ids();

/// Throws ConfigError unless the layout has >= 1 building, >= 1 obstacle and a
/// valid billboard.
void validate_layout(const SceneLayout& layout);

/// Texture for the billboard face when rendering.
struct PatchTexture {
  const Tensor* patch = nullptr;  // [3,H~,W~] values in [0,1]; null for the stock ad
};

struct RenderOptions {
  std::size_t height = 64;
  std::size_t width = 128;
  float brightness = 1.f;  // global multiplier on all surface colors
  std::uint64_t texture_seed = 0;  // stock billboard ad
};

struct SceneSample {
  std::string scene;
  std::string split;
  std::size_t index = 0;
  Tensor image;  // [3,H,W]
  LabelMap labels;
  CameraPose camera;
  std::array<Vec3, 4> billboard_quad_world{};
  std::optional<std::array<Vec2, 4>> billboard_quad_image;  // absent if any corner is behind the camera
  float brightness = 1.f;
  std::uint64_t texture_seed = 0;
};

/// Per-pixel ray cast; each pixel takes the color and class of the front-most
/// surface hit by the ray through its center. The patch, when given, textures
/// the billboard face by nearest-texel lookup. Throws RenderError when the
/// camera sits inside a box.
SceneSample render_scene(const SceneLayout& layout, const CameraPose& camera, const RenderOptions& opts,
                         const PatchTexture& patch = {});

struct DatasetConfig {
  std::size_t train = 120;
  std::size_t val = 40;
  std::size_t test = 40;
  std::size_t height = 64;
  std::size_t width = 128;
  double fx = 80, fy = 80;
  double distance_min = 5, distance_max = 30;
  double yaw_jitter_deg = 25;
  double cam_height_min = 1.2, cam_height_max = 1.8;
  double lane_half_width = 1.8;
  float brightness_jitter = 0.1f;
  std::vector<std::string> scenes{"A", "B", "C"};

  void validate() const;
};

/// Parses a JSON object; unknown keys are a ConfigError, missing keys keep defaults.
DatasetConfig parse_dataset_config(const std::string& json_text);
std::string dataset_config_to_json(const DatasetConfig& cfg);

/// Samples the camera for sample `index` of `split`, from the stream keyed
/// by (seed, "dataset/<split>", index).
CameraPose sample_camera(const DatasetConfig& cfg, const SceneLayout& layout, std::uint64_t seed,
                         const std::string& split, std::size_t index, float* brightness, std::uint64_t* texture_seed);

struct ManifestEntry {
  std::size_t index = 0;
  std::string split;
  std::string scene;
  std::string image_path;  // relative to the manifest's directory
  std::string label_path;
  CameraPose camera;
  std::array<Vec3, 4> billboard_quad_world{};
  std::optional<std::array<Vec2, 4>> billboard_quad_image;
  float brightness = 1.f;
  std::uint64_t texture_seed = 0;
};

std::string manifest_line(const ManifestEntry& e);
ManifestEntry parse_manifest_line(const std::string& line);

struct Dataset {
  std::filesystem::path root;
  std::vector<ManifestEntry> entries;
};

/// Renders every sample and writes images/, labels/ and manifest.jsonl under
/// `out_dir`. Returns the manifest entries in write order (train, val, test).
Dataset generate_dataset(const DatasetConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir);

Dataset load_manifest(const std::filesystem::path& manifest_path);

/// Loads the images and labels of entries in `split` (all when empty), in
/// manifest order, optionally restricted to one scene.
std::vector<SceneSample> load_samples(const Dataset& ds, const std::string& split = "",
                                      const std::string& scene = "");

}  // namespace rwpatch
