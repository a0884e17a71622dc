#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rwpatch/rng.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"

namespace rwtest {

/// Small rendered samples cycling through the canonical scenes.
inline std::vector<rwpatch::SceneSample> small_samples(std::size_t n, std::size_t h = 16, std::size_t w = 32,
                                                       const std::string& split = "train", std::uint64_t seed = 3) {
  rwpatch::DatasetConfig cfg;
  cfg.height = h;
  cfg.width = w;
  cfg.fx = cfg.fy = 80.0 * static_cast<double>(w) / 128.0;
  std::vector<rwpatch::SceneSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto layout = rwpatch::canonical_scene(cfg.scenes[i % cfg.scenes.size()]);
    float b = 1;
    std::uint64_t ts = 0;
    const auto cam = rwpatch::sample_camera(cfg, layout, seed, split, i, &b, &ts);
    rwpatch::RenderOptions ro;
    ro.height = h;
    ro.width = w;
    ro.brightness = b;
    ro.texture_seed = ts;
    auto s = rwpatch::render_scene(layout, cam, ro);
    s.split = split;
    s.index = i;
    out.push_back(std::move(s));
  }
  return out;
}

inline rwpatch::SegModel tiny_model(std::uint64_t seed = 1) {
  rwpatch::ModelConfig mc;
  mc.widths = {4, 4};
  mc.seed = seed;
  return rwpatch::SegModel(mc);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("rwpatch-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline rwpatch::Tensor random_tensor(rwpatch::Shape s, std::uint64_t seed, float lo = 0, float hi = 1) {
  rwpatch::RngStream rng(seed, "test-tensor");
  rwpatch::Tensor t(std::move(s));
  for (float& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace rwtest
