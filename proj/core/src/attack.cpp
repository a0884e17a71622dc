#include "rwpatch/attack.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rwpatch/invariant.hpp"
#include "rwpatch/metrics.hpp"

namespace rwpatch {

using nlohmann::json;

const char* attack_mode_name(AttackMode m) {
  switch (m) {
    case AttackMode::no_eot:
      return "no_eot";
    case AttackMode::eot:
      return "eot";
    case AttackMode::scene_specific:
      return "scene_specific";
  }
  return "?";
}

AttackMode parse_attack_mode(const std::string& s) {
  if (s == "no_eot" || s == "no-eot") return AttackMode::no_eot;
  if (s == "eot") return AttackMode::eot;
  if (s == "scene_specific" || s == "scene-specific") return AttackMode::scene_specific;
  throw ConfigError("unknown attack mode '" + s + "' (expected no-eot, eot or scene-specific)");
}

AttackConfig AttackConfig::defaults_for(AttackMode mode) {
  AttackConfig c;
  c.mode = mode;
  switch (mode) {
    case AttackMode::no_eot:
      c.appearance = {};
      break;
    case AttackMode::eot:
      c.appearance = {0.05f, 0.f, 0.f};
      break;
    case AttackMode::scene_specific:
      c.appearance = {0.1f, 0.1f, 0.1f};
      break;
  }
  return c;
}

void AttackConfig::validate() const {
  if (!(lr >= 0.f) || !std::isfinite(lr)) throw ConfigError("attack: lr must be finite and >= 0");
  if (epochs == 0) throw ConfigError("attack: epochs must be >= 1");
  if (patch_h == 0 || patch_w == 0) throw ConfigError("attack: patch dims must be positive");
  if (mode == AttackMode::scene_specific && scene.empty()) throw ConfigError("attack: scene_specific needs a scene id");
  if (!scene.empty()) canonical_scene(scene);
  if (!(scale.lo >= 0.5 && scale.hi <= 1.5 && scale.lo <= scale.hi)) {
    throw ConfigError("attack: scale range must lie within [0.5, 1.5]");
  }
  appearance.validate();
  loss.validate();
  colors.validate();
}

bool AttackConfig::same_except_loss(const AttackConfig& o) const {
  auto app_eq = [](const AppearanceParams& a, const AppearanceParams& b) {
    return a.noise_std == b.noise_std && a.brightness_delta == b.brightness_delta &&
           a.contrast_delta == b.contrast_delta;
  };
  return mode == o.mode && patch_h == o.patch_h && patch_w == o.patch_w && epochs == o.epochs && lr == o.lr &&
         scale.lo == o.scale.lo && scale.hi == o.scale.hi && app_eq(appearance, o.appearance) && seed == o.seed &&
         scene == o.scene && max_images == o.max_images && batch_size == o.batch_size && anchor == o.anchor && optimizer == o.optimizer &&
         colors.colors == o.colors.colors;
}

namespace {

BaselineMode parse_baseline(const std::string& s) {
  if (s == "gamma_split") return BaselineMode::gamma_split;
  if (s == "ce_full_N" || s == "ce_full_n") return BaselineMode::ce_full_n;
  if (s == "ce_excluding_patch") return BaselineMode::ce_excluding_patch;
  throw ConfigError("loss: unknown baseline '" + s + "'");
}

const char* baseline_name(BaselineMode b) {
  switch (b) {
    case BaselineMode::gamma_split:
      return "gamma_split";
    case BaselineMode::ce_full_n:
      return "ce_full_N";
    case BaselineMode::ce_excluding_patch:
      return "ce_excluding_patch";
  }
  return "?";
}

LossConfig parse_loss(const json& j) {
  LossConfig l;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k == "baseline") {
      l.baseline = parse_baseline(it->get<std::string>());
    } else if (k == "gamma") {
      if (it->is_string()) {
        if (it->get<std::string>() != "adaptive") throw ConfigError("loss: gamma must be a number or \"adaptive\"");
        l.gamma_mode = GammaMode::adaptive;
      } else {
        l.gamma_mode = GammaMode::fixed;
        l.gamma = it->get<float>();
      }
    } else if (k == "lambda_smooth") {
      l.lambda_smooth = it->get<float>();
    } else if (k == "lambda_nps") {
      l.lambda_nps = it->get<float>();
    } else {
      throw ConfigError("loss: unknown key '" + k + "'");
    }
  }
  return l;
}

json loss_json(const LossConfig& l) {
  json j = {{"baseline", baseline_name(l.baseline)}, {"lambda_smooth", l.lambda_smooth}, {"lambda_nps", l.lambda_nps}};
  if (l.gamma_mode == GammaMode::adaptive) {
    j["gamma"] = "adaptive";
  } else {
    j["gamma"] = l.gamma;
  }
  return j;
}

}  // namespace

AttackConfig parse_attack_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("attack config: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("attack config: expected a JSON object");
  try {
    AttackConfig c = AttackConfig::defaults_for(parse_attack_mode(j.value("mode", std::string("eot"))));
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const json& v = it.value();
      if (k == "mode") {
        continue;
      } else if (k == "patch_h") {
        c.patch_h = v.get<std::size_t>();
      } else if (k == "patch_w") {
        c.patch_w = v.get<std::size_t>();
      } else if (k == "epochs") {
        c.epochs = v.get<std::size_t>();
      } else if (k == "lr") {
        c.lr = v.get<float>();
      } else if (k == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (k == "scene") {
        c.scene = v.get<std::string>();
      } else if (k == "max_images") {
        c.max_images = v.get<std::size_t>();
      } else if (k == "batch_size") {
        c.batch_size = v.get<std::size_t>();
      } else if (k == "anchor") {
        const auto a = v.get<std::string>();
        if (a == "image_center") {
          c.anchor = AnchorMode::image_center;
        } else if (a == "billboard_box") {
          c.anchor = AnchorMode::billboard_box;
        } else {
          throw ConfigError("attack config: unknown anchor '" + a + "'");
        }
      } else if (k == "optimizer") {
        const auto o = v.get<std::string>();
        if (o == "adam") {
          c.optimizer = OptimizerKind::adam;
        } else if (o == "sgd_sum") {
          c.optimizer = OptimizerKind::sgd_sum;
        } else {
          throw ConfigError("attack config: unknown optimizer '" + o + "'");
        }
      } else if (k == "scale") {
        c.scale = {v.at(0).get<double>(), v.at(1).get<double>()};
      } else if (k == "appearance") {
        AppearanceParams a;
        for (auto at = v.begin(); at != v.end(); ++at) {
          if (at.key() == "noise_std") {
            a.noise_std = at->get<float>();
          } else if (at.key() == "brightness_delta") {
            a.brightness_delta = at->get<float>();
          } else if (at.key() == "contrast_delta") {
            a.contrast_delta = at->get<float>();
          } else {
            throw ConfigError("attack config: unknown appearance key '" + at.key() + "'");
          }
        }
        c.appearance = a;
      } else if (k == "loss") {
        c.loss = parse_loss(v);
      } else if (k == "colors") {
        c.colors = parse_color_set(v.dump());
      } else {
        throw ConfigError("attack config: unknown key '" + k + "'");
      }
    }
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("attack config: ") + e.what());
  }
}

std::string attack_config_to_json(const AttackConfig& c) {
  json colors = json::array();
  for (const auto& col : c.colors.colors) colors.push_back({col[0], col[1], col[2]});
  json j = {{"mode", attack_mode_name(c.mode)},
            {"patch_h", c.patch_h},
            {"patch_w", c.patch_w},
            {"epochs", c.epochs},
            {"lr", c.lr},
            {"seed", c.seed},
            {"scene", c.scene},
            {"max_images", c.max_images},
            {"batch_size", c.batch_size},
            {"anchor", c.anchor == AnchorMode::image_center ? "image_center" : "billboard_box"},
            {"optimizer", c.optimizer == OptimizerKind::adam ? "adam" : "sgd_sum"},
            {"scale", {c.scale.lo, c.scale.hi}},
            {"appearance",
             {{"noise_std", c.appearance.noise_std},
              {"brightness_delta", c.appearance.brightness_delta},
              {"contrast_delta", c.appearance.contrast_delta}}},
            {"loss", loss_json(c.loss)},
            {"colors", colors}};
  return j.dump(2);
}

std::string trace_csv(const AttackTrace& trace) {
  std::ostringstream os;
  os << "epoch,miou,l_adv,upsilon_frac,gamma\n";
  char buf[160];
  for (const TraceRecord& r : trace) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,", r.epoch, static_cast<double>(r.miou), r.l_adv,
                  r.upsilon_frac);
    os << buf;
    if (std::isnan(r.gamma)) {
      os << "nan\n";
    } else {
      std::snprintf(buf, sizeof buf, "%.6f\n", r.gamma);
      os << buf;
    }
  }
  return os.str();
}

PatchState random_patch(std::uint64_t seed, std::size_t h, std::size_t w) {
  if (h == 0 || w == 0) throw ConfigError("random_patch: dims must be positive");
  RngStream rng(seed, "patch-init");
  PatchState p;
  p.delta = Tensor(Shape{3, h, w});
  for (float& v : p.delta.vec()) v = rng.uniform();
  p.adam = AdamState(p.delta.shape());
  return p;
}

namespace {

double ce_mean_value(const Tensor& probs, const LabelMap& labels, const Mask& pixels) {
  const std::size_t plane = labels.size();
  std::vector<double> terms;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!pixels[i]) continue;
    terms.push_back(-std::log(std::max(static_cast<double>(probs[labels.data[i] * plane + i]), kProbFloor)));
  }
  return terms.empty() ? 0.0 : pairwise_sum<double>(terms) / static_cast<double>(terms.size());
}

Tensor regularizer_grad(const Tensor& delta, const AttackConfig& c) {
  Tensor g(delta.shape());
  if (c.loss.lambda_smooth == 0 && c.loss.lambda_nps == 0) return g;
  ad::Tape<float> tape;
  auto p = tape.leaf(delta, true);
  auto reg = ad::add(ad::scale(smoothness_loss(p), c.loss.lambda_smooth), ad::scale(nps_loss(p, c.colors), c.loss.lambda_nps));
  tape.backward(reg);
  return p.grad();
}

}  // namespace

AttackResult optimize_patch(const SegModel& model, const std::vector<SceneSample>& all, const AttackConfig& cfg,
                            const AttackHooks& hooks, const PatchState* init) {
  cfg.validate();
  std::vector<const SceneSample*> data;
  for (const SceneSample& s : all) {
    if (!cfg.scene.empty() && s.scene != cfg.scene) continue;
    if (cfg.max_images && data.size() >= cfg.max_images) break;
    data.push_back(&s);
  }
  if (data.empty()) throw DataError("attack: no samples to optimize on");
  const std::size_t H = data[0]->image.dim(1), W = data[0]->image.dim(2);
  for (const SceneSample* s : data) {
    if (s->image.dim(1) != H || s->image.dim(2) != W) throw DimensionError("attack: samples differ in size");
  }
  if (cfg.patch_h >= H || cfg.patch_w >= W) throw DimensionError("attack: patch must be smaller than the images");

  AttackResult result;
  result.patch = init ? *init : random_patch(cfg.seed, cfg.patch_h, cfg.patch_w);
  PatchState& state = result.patch;
  if (state.delta.shape() != Shape{3, cfg.patch_h, cfg.patch_w}) {
    throw DimensionError("attack: initial patch shape does not match the config");
  }
  if (state.adam.m.shape() != state.delta.shape()) state.adam = AdamState(state.delta.shape());
  AdamParams hp;
  hp.lr = cfg.lr;

  const PlacementSpec center = center_placement(H, W, cfg.patch_h, cfg.patch_w);
  const std::size_t n = data.size();
  const std::size_t nc = model.config().num_classes;

  const std::size_t batch = cfg.batch_size == 0 ? n : cfg.batch_size;
  Tensor batch_grad;
  std::size_t pending = 0;
  // Regularizers are subtracted: the ascent maximizes L_adv - lS*L_S - lN*L_N.
  auto update = [&](Tensor g) {
    const Tensor gr = regularizer_grad(state.delta, cfg);
    for (std::size_t i = 0; i < g.numel(); ++i) g[i] -= gr[i];
    g.require_finite("attack gradient");
    if (cfg.optimizer == OptimizerKind::adam) {
      adam_step(state.delta, g, state.adam, hp, /*ascend=*/true);
    } else {
      for (std::size_t i = 0; i < g.numel(); ++i) state.delta[i] += cfg.lr * g[i];
    }
    for (float& v : state.delta.vec()) v = std::clamp(v, 0.f, 1.f);
    if constexpr (kCheckInvariants) {
      bool in_range = true;
      for (float v : state.delta.vec()) in_range = in_range && v >= 0.f && v <= 1.f;
      check_invariant(in_range, "patch value outside [0,1] after update");
    }
    if (hooks.on_step) hooks.on_step(state.delta);
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ConfusionMatrix cm(nc);
    std::vector<double> l_adv, ups, gammas;
    for (std::size_t k = 0; k < n; ++k) {
      const SceneSample& s = *data[k];
      const std::uint64_t key = epoch * n + k;
      try {
        PlacementSpec placed;
        if (cfg.mode == AttackMode::no_eot) {
          placed = center;
        } else if (cfg.mode == AttackMode::eot) {
          RngStream eot_rng(cfg.seed, "eot", key);
          EotAnchor anchor;
          if (cfg.anchor == AnchorMode::billboard_box) {
            if (!s.billboard_quad_image) throw PlacementError("billboard not visible");
            auto a = billboard_anchor(*s.billboard_quad_image, H, W, cfg.patch_h);
            if (!a) throw PlacementError("billboard outside the image");
            anchor = *a;
          }
          placed = sample_eot_placement(eot_rng, H, W, cfg.patch_h, cfg.patch_w, cfg.scale, anchor);
        } else {
          if (!s.billboard_quad_image || s.scene.empty()) throw PlacementError("billboard not visible");
          placed = scene_placement(s.camera, canonical_scene(s.scene).billboard, H, W, cfg.patch_h, cfg.patch_w);
        }
        if (placed.mask.count() == 0 || placed.mask.count() == placed.mask.size()) {
          throw PlacementError("patch covers no pixel or every pixel");
        }

        ad::Tape<float> tape;
        const auto patch = tape.leaf(state.delta, true);
        auto transformed = patch;
        if (cfg.mode != AttackMode::no_eot && !cfg.appearance.is_identity()) {
          RngStream app_rng(cfg.seed, "appearance", key);
          transformed = appearance_transform(patch, cfg.appearance, app_rng);
          if (hooks.appearance_draws) *hooks.appearance_draws += app_rng.draws();
        }
        const auto patched = apply_patch(tape.constant(s.image), transformed, placed);
        const auto probs = model.forward(tape, patched.image);
        const LabelMap pred = predict_labels(probs.value());
        accumulate(cm, pred, s.labels);
        const Mask& patch_mask = patched.mask;
        const Mask outside = patch_mask.complement();
        const Mask correct = correct_set(pred, s.labels, patch_mask);
        const double outside_n = static_cast<double>(outside.count());
        ups.push_back(static_cast<double>(correct.count()) / outside_n);
        l_adv.push_back(ce_mean_value(probs.value(), s.labels, outside));

        Tensor g;
        switch (cfg.loss.baseline) {
          case BaselineMode::ce_full_n:
          case BaselineMode::ce_excluding_patch: {
            const Mask set = cfg.loss.baseline == BaselineMode::ce_full_n ? Mask(H, W, true) : outside;
            tape.backward(ce_sum(probs, s.labels, set));
            g = patch.grad();
            gammas.push_back(std::numeric_limits<double>::quiet_NaN());
            break;
          }
          case BaselineMode::gamma_split: {
            const auto losses = split_losses(probs, s.labels, correct, patch_mask);
            tape.backward(losses.correct);
            const Tensor g_correct = patch.grad();
            tape.zero_grad();
            tape.backward(losses.wrong);
            const Tensor g_wrong = patch.grad();
            const float gamma = cfg.loss.gamma_mode == GammaMode::adaptive ? adaptive_gamma(correct, patch_mask)
                                                                          : cfg.loss.gamma;
            gammas.push_back(gamma);
            g = combined_gradient(g_correct, g_wrong, gamma);
            break;
          }
        }
        g.require_finite("attack gradient");
        if (pending == 0) {
          batch_grad = g;
        } else {
          for (std::size_t i = 0; i < g.numel(); ++i) batch_grad[i] += g[i];
        }
        ++pending;
      } catch (const PlacementError&) {
        ++result.skipped;
      } catch (const NumericError& e) {
        throw NumericError("attack: epoch " + std::to_string(epoch) + ", sample " + s.split + "/" +
                           std::to_string(s.index) + ": " + e.what());
      }
      if (pending > 0 && (pending == batch || k + 1 == n)) {
        update(batch_grad);
        pending = 0;
      }
    }
    TraceRecord rec;
    rec.epoch = epoch;
    rec.miou = cm.total() ? miou(cm) : std::numeric_limits<float>::quiet_NaN();
    auto mean = [](const std::vector<double>& v) {
      return v.empty() ? std::numeric_limits<double>::quiet_NaN() : pairwise_sum<double>(v) / static_cast<double>(v.size());
    };
    rec.l_adv = mean(l_adv);
    rec.upsilon_frac = mean(ups);
    rec.gamma = mean(gammas);
    result.trace.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return result;
}

std::vector<AttackResult> compare_losses(const SegModel& model, const std::vector<SceneSample>& data,
                                         const std::vector<AttackConfig>& configs,
                                         const std::function<void(std::size_t, const TraceRecord&)>& on_epoch) {
  if (configs.empty()) throw UsageError("compare_losses: no configurations");
  for (const AttackConfig& c : configs) {
    if (!c.same_except_loss(configs[0])) throw UsageError("compare_losses: configurations differ outside the loss");
  }
  std::vector<AttackResult> out;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    AttackHooks hooks;
    if (on_epoch) hooks.on_epoch = [&, i](const TraceRecord& r) { on_epoch(i, r); };
    out.push_back(optimize_patch(model, data, configs[i], hooks));
  }
  return out;
}

std::vector<LossConfig> gamma_grid(const LossConfig& base) {
  std::vector<LossConfig> out;
  for (float g : {0.5f, 0.6f, 0.7f, 0.8f, 0.95f, 1.0f}) {
    LossConfig l = base;
    l.baseline = BaselineMode::gamma_split;
    l.gamma_mode = GammaMode::fixed;
    l.gamma = g;
    out.push_back(l);
  }
  LossConfig a = base;
  a.baseline = BaselineMode::gamma_split;
  a.gamma_mode = GammaMode::adaptive;
  out.push_back(a);
  return out;
}

}  // namespace rwpatch
