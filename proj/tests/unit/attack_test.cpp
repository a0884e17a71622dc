#include <gtest/gtest.h>

#include <cmath>

#include "rwpatch/attack.hpp"
#include "support.hpp"

using namespace rwpatch;

namespace {

AttackConfig small_config(AttackMode mode) {
  AttackConfig c = AttackConfig::defaults_for(mode);
  c.patch_h = 4;
  c.patch_w = 8;
  c.epochs = 3;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Attack, ModeDefaults) {
  const auto eot = AttackConfig::defaults_for(AttackMode::eot);
  EXPECT_EQ(eot.lr, 0.5f);
  EXPECT_EQ(eot.appearance.noise_std, 0.05f);
  EXPECT_DOUBLE_EQ(eot.scale.lo, 0.8);
  EXPECT_DOUBLE_EQ(eot.scale.hi, 1.2);
  EXPECT_TRUE(AttackConfig::defaults_for(AttackMode::no_eot).appearance.is_identity());
  const auto ss = AttackConfig::defaults_for(AttackMode::scene_specific);
  EXPECT_EQ(ss.appearance.noise_std, 0.1f);
  EXPECT_EQ(ss.appearance.brightness_delta, 0.1f);
  EXPECT_EQ(ss.appearance.contrast_delta, 0.1f);
}

TEST(Attack, ConfigValidation) {
  auto c = small_config(AttackMode::eot);
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config(AttackMode::scene_specific);
  EXPECT_THROW(c.validate(), ConfigError);
  c.scene = "B";
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(parse_attack_config(R"({"mode": "eot", "lrr": 1})"), ConfigError);
  EXPECT_THROW(parse_attack_config(R"({"mode": "sideways"})"), ConfigError);
}

TEST(Attack, ConfigJsonRoundTrip) {
  auto c = small_config(AttackMode::scene_specific);
  c.scene = "C";
  c.loss.gamma_mode = GammaMode::fixed;
  c.loss.gamma = 0.7f;
  c.batch_size = 4;
  const auto back = parse_attack_config(attack_config_to_json(c));
  EXPECT_EQ(attack_config_to_json(back), attack_config_to_json(c));
  EXPECT_TRUE(back.same_except_loss(c));
  EXPECT_EQ(back.loss, c.loss);
}

TEST(Attack, ZeroStepLeavesPatchUnchanged) {
  const auto model = rwtest::tiny_model();
  const auto data = rwtest::small_samples(2);
  auto c = small_config(AttackMode::eot);
  c.lr = 0;
  c.epochs = 1;
  const auto res = optimize_patch(model, data, c);
  EXPECT_EQ(res.patch.delta, random_patch(c.seed, 4, 8).delta);
}

TEST(Attack, ModelWeightsAreUntouched) {
  const auto model = rwtest::tiny_model();
  const auto before = model.weights();
  optimize_patch(model, rwtest::small_samples(2), small_config(AttackMode::eot));
  EXPECT_EQ(model.weights(), before);
}

TEST(Attack, DeterministicForEqualSeeds) {
  const auto model = rwtest::tiny_model();
  const auto data = rwtest::small_samples(3);
  for (auto mode : {AttackMode::no_eot, AttackMode::eot}) {
    const auto a = optimize_patch(model, data, small_config(mode));
    const auto b = optimize_patch(model, data, small_config(mode));
    EXPECT_EQ(a.patch.delta, b.patch.delta);
    EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
  }
}

TEST(Attack, NoEotDrawsNoAppearanceNoise) {
  std::uint64_t draws = 0;
  AttackHooks hooks;
  hooks.appearance_draws = &draws;
  optimize_patch(rwtest::tiny_model(), rwtest::small_samples(2), small_config(AttackMode::no_eot), hooks);
  EXPECT_EQ(draws, 0u);
  optimize_patch(rwtest::tiny_model(), rwtest::small_samples(2), small_config(AttackMode::eot), hooks);
  EXPECT_GT(draws, 0u);
}

TEST(Attack, PatchStaysInUnitRangeEveryStep) {
  std::size_t steps = 0;
  AttackHooks hooks;
  hooks.on_step = [&](const Tensor& p) {
    ++steps;
    for (float v : p.vec()) ASSERT_TRUE(v >= 0.f && v <= 1.f);
  };
  auto c = small_config(AttackMode::eot);
  c.lr = 5;
  optimize_patch(rwtest::tiny_model(), rwtest::small_samples(3), c, hooks);
  EXPECT_EQ(steps, 9u);
}

TEST(Attack, BatchSizeControlsUpdateCount) {
  std::size_t steps = 0;
  AttackHooks hooks;
  hooks.on_step = [&](const Tensor&) { ++steps; };
  auto c = small_config(AttackMode::no_eot);
  c.batch_size = 0;
  optimize_patch(rwtest::tiny_model(), rwtest::small_samples(3), c, hooks);
  EXPECT_EQ(steps, 3u);
  steps = 0;
  c.batch_size = 2;
  optimize_patch(rwtest::tiny_model(), rwtest::small_samples(3), c, hooks);
  EXPECT_EQ(steps, 6u);
}

TEST(Attack, TraceHasOneRowPerEpoch) {
  const auto res = optimize_patch(rwtest::tiny_model(), rwtest::small_samples(2), small_config(AttackMode::eot));
  ASSERT_EQ(res.trace.size(), 3u);
  for (const auto& r : res.trace) {
    EXPECT_GE(r.gamma, 0.0);
    EXPECT_LE(r.gamma, 1.0);
    EXPECT_GE(r.upsilon_frac, 0.0);
    EXPECT_LE(r.upsilon_frac, 1.0);
  }
  const std::string csv = trace_csv(res.trace);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,miou,l_adv,upsilon_frac,gamma");
}

TEST(Attack, SceneSpecificUsesOnlyItsScene) {
  auto c = small_config(AttackMode::scene_specific);
  c.scene = "B";
  c.epochs = 1;
  std::size_t steps = 0;
  AttackHooks hooks;
  hooks.on_step = [&](const Tensor&) { ++steps; };
  const auto data = rwtest::small_samples(6, 32, 64);
  const auto res = optimize_patch(rwtest::tiny_model(), data, c, hooks);
  EXPECT_EQ(steps + res.skipped, 2u);
}

TEST(Attack, CompareLossesSharesEverythingButTheLoss) {
  const auto model = rwtest::tiny_model();
  const auto data = rwtest::small_samples(2);
  auto a = small_config(AttackMode::eot);
  a.batch_size = 0;
  auto b = a;
  b.loss.baseline = BaselineMode::ce_full_n;
  const auto res = compare_losses(model, data, {a, b});
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[0].trace.size(), res[1].trace.size());
  EXPECT_TRUE(std::isnan(res[1].trace[0].gamma));
  // One update per epoch, so epoch 0 sees the same initial patch and placements.
  EXPECT_EQ(res[0].trace[0].miou, res[1].trace[0].miou);
  b.seed = 9;
  EXPECT_THROW(compare_losses(model, data, {a, b}), UsageError);
}

TEST(Attack, GammaGrid) {
  const auto g = gamma_grid({});
  ASSERT_EQ(g.size(), 7u);
  EXPECT_EQ(g.back().gamma_mode, GammaMode::adaptive);
  EXPECT_FLOAT_EQ(g[0].gamma, 0.5f);
  EXPECT_FLOAT_EQ(g[5].gamma, 1.0f);
}
