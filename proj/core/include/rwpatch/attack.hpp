#pragma once

// Patch optimization: clipped stochastic gradient ascent (Adam by default)
// over a frozen segmentation model, in three placement regimes.

#include <functional>
#include <string>
#include <vector>

#include "rwpatch/advloss.hpp"
#include "rwpatch/patchops.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"

namespace rwpatch {

enum class AttackMode { no_eot, eot, scene_specific };
enum class OptimizerKind { adam, sgd_sum };
enum class AnchorMode { image_center, billboard_box };

const char* attack_mode_name(AttackMode m);
AttackMode parse_attack_mode(const std::string& s);

struct AttackConfig {
  AttackMode mode = AttackMode::eot;
  std::size_t patch_h = 12;
  std::size_t patch_w = 24;
  std::size_t epochs = 200;
  float lr = 0.5f;
  LossConfig loss;
  ScaleRange scale;
  AppearanceParams appearance{0.05f, 0.f, 0.f};
  std::uint64_t seed = 0;
  std::string scene;  // scene_specific: required; other modes: optional filter
  std::size_t max_images = 0;  // 0 = every sample given
  /// Samples whose gradients are summed per update; 0 = the whole epoch.
  std::size_t batch_size = 1;
  AnchorMode anchor = AnchorMode::image_center;
  OptimizerKind optimizer = OptimizerKind::adam;
  PrintableColorSet colors = PrintableColorSet::defaults();

  /// Defaults for a mode: scene_specific uses contrast/brightness 0.1 and
  /// noise 0.1; no_eot has no appearance change.
  static AttackConfig defaults_for(AttackMode mode);
  void validate() const;
  /// Equal in everything but the loss configuration.
  bool same_except_loss(const AttackConfig& o) const;
};

/// Missing keys keep the mode's defaults; unknown keys are a ConfigError.
AttackConfig parse_attack_config(const std::string& json_text);
std::string attack_config_to_json(const AttackConfig& cfg);

struct TraceRecord {
  std::size_t epoch = 0;
  float miou = 0;          // training images under attack, pooled over the epoch
  double l_adv = 0;        // mean pixel CE over non-patch pixels
  double upsilon_frac = 0; // mean |correct| / |N \ patch|
  double gamma = 0;        // mean blend weight used (NaN for plain CE losses)
};

using AttackTrace = std::vector<TraceRecord>;
std::string trace_csv(const AttackTrace& trace);

struct AttackResult {
  PatchState patch;
  AttackTrace trace;
  std::size_t skipped = 0;  // sample visits without a feasible placement
};

/// I.i.d. U[0,1] patch from the (seed, "patch-init") stream.
PatchState random_patch(std::uint64_t seed, std::size_t height, std::size_t width);

struct AttackHooks {
  std::function<void(const TraceRecord&)> on_epoch;
  /// Called after every update with the new patch (used by invariant tests).
  std::function<void(const Tensor&)> on_step;
  /// Counts draws from the appearance streams.
  std::uint64_t* appearance_draws = nullptr;
};

/// Samples are visited in the given order each epoch; the patch starts from
/// random_patch(config.seed) unless `init` is given.
AttackResult optimize_patch(const SegModel& model, const std::vector<SceneSample>& data, const AttackConfig& config,
                            const AttackHooks& hooks = {}, const PatchState* init = nullptr);

/// Runs optimize_patch once per config. Throws UsageError unless the configs
/// differ only in their loss settings.
std::vector<AttackResult> compare_losses(const SegModel& model, const std::vector<SceneSample>& data,
                                         const std::vector<AttackConfig>& configs,
                                         const std::function<void(std::size_t, const TraceRecord&)>& on_epoch = {});

/// The tested blend weights {0.5, 0.6, 0.7, 0.8, 0.95, 1.0} plus adaptive.
std::vector<LossConfig> gamma_grid(const LossConfig& base);

}  // namespace rwpatch
