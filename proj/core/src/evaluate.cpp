#include "rwpatch/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rwpatch/io.hpp"

namespace rwpatch {

Bake parse_bake(const std::string& s) {
  if (s == "digital" || s == "digital_overlay") return Bake::digital_overlay;
  if (s == "scene" || s == "scene_bake") return Bake::scene_bake;
  throw ConfigError("unknown bake '" + s + "' (expected digital or scene)");
}

const char* bake_name(Bake b) { return b == Bake::digital_overlay ? "digital" : "scene"; }

Tensor evaluation_image(const SceneSample& s, const Tensor* patch, Bake bake, OverlayPlacement placement) {
  if (bake == Bake::scene_bake) {
    if (s.scene.empty()) {
      throw ConfigError("evaluate: scene_bake needs scene geometry, sample " + s.split + "/" + std::to_string(s.index) +
                        " has none");
    }
    RenderOptions ro;
    ro.height = s.image.dim(1);
    ro.width = s.image.dim(2);
    ro.brightness = s.brightness;
    ro.texture_seed = s.texture_seed;
    PatchTexture tex;
    tex.patch = patch;
    return io::quantize_u8(render_scene(canonical_scene(s.scene), s.camera, ro, tex).image);
  }
  if (!patch) return s.image;
  const std::size_t h = s.image.dim(1), w = s.image.dim(2);
  PlacementSpec pl;
  if (placement == OverlayPlacement::image_center) {
    pl = center_placement(h, w, patch->dim(1), patch->dim(2));
  } else {
    if (s.scene.empty()) throw ConfigError("evaluate: billboard overlay needs scene geometry");
    try {
      pl = scene_placement(s.camera, canonical_scene(s.scene).billboard, h, w, patch->dim(1), patch->dim(2));
    } catch (const PlacementError&) {
      return s.image;
    }
  }
  ad::Tape<float> tape;
  return apply_patch(tape.constant(s.image), tape.constant(*patch), pl).image.value();
}

MetricsReport evaluate_patch(const SegModel& model, const std::vector<SceneSample>& samples, const Tensor* patch,
                             Bake bake, OverlayPlacement placement) {
  if (samples.empty()) throw DataError("evaluate: no samples");
  if (patch && (patch->rank() != 3 || patch->dim(0) != 3)) {
    throw DimensionError("evaluate: patch must be [3,H,W], got " + shape_str(patch->shape()));
  }
  const std::size_t nc = model.config().num_classes;
  ConfusionMatrix total(nc);
  std::vector<float> per_image;
  for (const SceneSample& s : samples) {
    const LabelMap pred = model.segment(evaluation_image(s, patch, bake, placement));
    ConfusionMatrix cm(nc);
    accumulate(cm, pred, s.labels);
    per_image.push_back(miou(cm));
    total += cm;
  }
  return make_report(total, std::move(per_image));
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "mode,scene,miou,macc";
  for (std::size_t c = 0; c < kNumClasses; ++c) os << ",iou_" << class_name(c);
  os << '\n';
  char buf[32];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string("nan");
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const ReportRow& r : rows) {
    os << r.mode << ',' << r.scene << ',' << num(r.report.miou) << ',' << num(r.report.macc);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      os << ',' << (c < r.report.iou.size() ? num(r.report.iou[c]) : std::string("nan"));
    }
    os << '\n';
  }
  return os.str();
}

std::vector<ReportRow> evaluate_modes(const SegModel& model, const std::vector<SceneSample>& samples,
                                      const std::vector<ModePatch>& entries, Bake bake, OverlayPlacement placement) {
  std::vector<std::string> scenes;
  for (const SceneSample& s : samples) {
    if (std::find(scenes.begin(), scenes.end(), s.scene) == scenes.end()) scenes.push_back(s.scene);
  }
  std::sort(scenes.begin(), scenes.end());
  std::vector<ReportRow> rows;
  for (const ModePatch& e : entries) {
    for (const std::string& id : scenes) {
      if (!e.scene.empty() && e.scene != id) continue;
      std::vector<SceneSample> subset;
      for (const SceneSample& s : samples)
        if (s.scene == id) subset.push_back(s);
      rows.push_back({e.mode, id, evaluate_patch(model, subset, e.patch ? &*e.patch : nullptr, bake, placement)});
    }
  }
  return rows;
}

}  // namespace rwpatch
