#pragma once

// Segmentation quality of a model on clean, digitally patched, or
// scene-baked images, and the four-way report.

#include <optional>
#include <string>
#include <vector>

#include "rwpatch/metrics.hpp"
#include "rwpatch/patchops.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"

namespace rwpatch {

enum class Bake { digital_overlay, scene_bake };
/// Where a digital overlay goes: the image center at scale 1, or the exact
/// billboard-to-image homography of each sample.
enum class OverlayPlacement { image_center, billboard_homography };

Bake parse_bake(const std::string& s);
const char* bake_name(Bake b);

/// Patch pixels are counted like any other pixel. A null patch evaluates the
/// stored images as they are. scene_bake re-renders each sample's scene with
/// the patch on the billboard face, quantized to 8 bits like the dataset;
/// it throws ConfigError for samples without scene geometry.
MetricsReport evaluate_patch(const SegModel& model, const std::vector<SceneSample>& samples, const Tensor* patch,
                             Bake bake, OverlayPlacement placement = OverlayPlacement::image_center);

/// Patched (or re-rendered) input image for one sample, as evaluate_patch sees it.
Tensor evaluation_image(const SceneSample& sample, const Tensor* patch, Bake bake, OverlayPlacement placement);

struct ReportRow {
  std::string mode;
  std::string scene;
  MetricsReport report;
};

std::string report_csv(const std::vector<ReportRow>& rows);

struct ModePatch {
  std::string mode;
  std::optional<Tensor> patch;  // none: clean images
  std::string scene;            // restrict to one scene; empty = every scene
};

/// One row per (entry, scene present in the samples), entries in the given
/// order and scenes sorted. Random / no_eot / eot entries followed by one
/// scene_specific entry per scene give the four-way table.
std::vector<ReportRow> evaluate_modes(const SegModel& model, const std::vector<SceneSample>& samples,
                                      const std::vector<ModePatch>& entries, Bake bake,
                                      OverlayPlacement placement = OverlayPlacement::image_center);

}  // namespace rwpatch
