// End-to-end acceptance run. Drives the CLI in-process through the default
// pipeline (gen-data, train-model, craft-patch, evaluate, gradcheck) and
// prints one PASS/FAIL line per criterion. Exit status is 0 only when every
// selected criterion passes.
//
//   rwpatch_acceptance [--work DIR] [--only 1,4,5]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rwpatch/advloss.hpp"
#include "rwpatch/attack.hpp"
#include "rwpatch/evaluate.hpp"
#include "rwpatch/invariant.hpp"
#include "rwpatch/io.hpp"
#include "rwpatch/metrics.hpp"
#include "rwpatch/rng.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"
#include "rwpatch_cli/cli.hpp"

namespace fs = std::filesystem;
using namespace rwpatch;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 7;
constexpr std::size_t kAttackImages = 24;
constexpr std::size_t kSceneEpochs = 100;
constexpr std::size_t kSceneImages = 12;
constexpr std::size_t kLossEpochs = 50;
constexpr std::size_t kLossImages = 12;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};

using Clock = std::chrono::steady_clock;
const Clock::time_point g_start = Clock::now();

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void note(const std::string& msg) {
  std::fprintf(stderr, "[%7.1f s] %s\n", elapsed(g_start), msg.c_str());
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rwpatch");
  args.push_back("--quiet");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    note("command failed (" + std::to_string(code) + "): " + joined + "\n" + err.str());
  }
  return code;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

/// Parses a two-or-more column CSV with a header into rows of strings.
std::vector<std::map<std::string, std::string>> read_csv(const fs::path& path) {
  std::istringstream in(io::read_file(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
  };
  if (std::getline(in, line)) header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size() && i < cells.size(); ++i) row[header[i]] = cells[i];
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  }
  return out;
}

class Suite {
 public:
  explicit Suite(fs::path work) : work_(std::move(work)) {}

  Outcome gradients();
  Outcome geometry();
  Outcome metric_oracle();
  Outcome clean_model();
  Outcome attack_efficacy();
  Outcome scene_robustness();
  Outcome non_robust_collapse();
  Outcome loss_comparison();
  Outcome determinism();
  Outcome invariants();

  json summary = json::object();

 private:
  fs::path data_dir() const { return work_ / "data"; }
  fs::path model_path() const { return work_ / "model" / "model.rwm"; }

  bool ensure_gradcheck();
  bool ensure_model();
  const SegModel& model();
  const Dataset& dataset();
  std::vector<SceneSample> split(const std::string& name, const std::string& scene = "");
  /// Crafts through the CLI (cached by output dir) and returns the patch.
  std::optional<Tensor> craft(const std::string& tag, const json& config, const std::vector<std::string>& extra = {});

  fs::path work_;
  std::optional<bool> gradcheck_ok_;
  double gradcheck_seconds_ = 0;
  std::optional<bool> model_ok_;
  double train_seconds_ = 0;
  std::optional<SegModel> model_;
  std::optional<Dataset> dataset_;
  std::map<std::string, std::vector<SceneSample>> samples_;
};

bool Suite::ensure_gradcheck() {
  if (!gradcheck_ok_) {
    const auto t0 = Clock::now();
    const int code = cli({"gradcheck", "--seed", std::to_string(kSeed), "--out", (work_ / "gradcheck").string()});
    gradcheck_seconds_ = elapsed(t0);
    gradcheck_ok_ = code == 0 || code == 1;
    summary["gradcheck_seconds"] = gradcheck_seconds_;
    summary["gradcheck_exit"] = code;
  }
  return *gradcheck_ok_;
}

bool Suite::ensure_model() {
  if (!model_ok_) {
    note("gen-data (default config, seed 7)");
    model_ok_ = cli({"gen-data", "--seed", std::to_string(kSeed), "--out", data_dir().string()}) == 0;
    if (*model_ok_) {
      note("train-model (30 epochs)");
      const auto t0 = Clock::now();
      model_ok_ = cli({"train-model", "--data", data_dir().string(), "--seed", std::to_string(kSeed), "--out",
                       (work_ / "model").string()}) == 0;
      train_seconds_ = elapsed(t0);
      summary["train_seconds"] = train_seconds_;
    }
  }
  return *model_ok_;
}

const SegModel& Suite::model() {
  if (!model_) model_ = load_weights(model_path());
  return *model_;
}

const Dataset& Suite::dataset() {
  if (!dataset_) dataset_ = load_manifest(data_dir() / "manifest.jsonl");
  return *dataset_;
}

std::vector<SceneSample> Suite::split(const std::string& name, const std::string& scene) {
  const std::string key = name + "/" + scene;
  if (!samples_.count(key)) samples_[key] = load_samples(dataset(), name, scene);
  return samples_[key];
}

std::optional<Tensor> Suite::craft(const std::string& tag, const json& config, const std::vector<std::string>& extra) {
  const fs::path out = work_ / "patches" / tag;
  const fs::path cfg = work_ / "configs" / (tag + ".json");
  io::write_file_atomic(cfg, config.dump(2) + "\n");
  if (!fs::exists(out / "patch.pft")) {
    note("craft-patch " + tag);
    std::vector<std::string> args{"craft-patch", "--config", cfg.string(), "--data", data_dir().string(),
                                  "--model", model_path().string(), "--out", out.string()};
    args.insert(args.end(), extra.begin(), extra.end());
    if (cli(args) != 0) return std::nullopt;
  }
  return io::load_pft(out / "patch.pft");
}

// ---------------------------------------------------------------------------

Outcome Suite::gradients() {
  if (!ensure_gradcheck()) return {false, "gradcheck did not run"};
  const auto rows = read_csv(work_ / "gradcheck" / "gradcheck.csv");
  const std::vector<std::string> required{"conv2d",         "elementwise/add",  "elementwise/sub", "elementwise/mul",
                                          "elementwise/relu", "elementwise/clamp01", "elementwise/log",
                                          "elementwise/exp", "softmax",          "bilinear_sample", "pixelwise_ce",
                                          "smoothness_loss", "nps_loss",         "composite"};
  std::set<std::string> seen;
  bool ok = true;
  double worst = 0;
  std::size_t checks = 0;
  for (const auto& r : rows) {
    const std::string& name = r.at("check");
    if (name.rfind("geometry:", 0) == 0) continue;
    ++checks;
    seen.insert(name.rfind("grad:", 0) == 0 ? name.substr(5) : name);
    worst = std::max(worst, std::stod(r.at("worst")));
    if (std::stoul(r.at("failed")) != 0 || std::stoul(r.at("instances")) < 20 || std::stod(r.at("tolerance")) > 1e-3) {
      ok = false;
    }
  }
  std::string missing;
  for (const auto& n : required)
    if (!seen.count(n)) missing += " " + n;
  ok = ok && missing.empty() && gradcheck_seconds_ < 60;
  summary["gradcheck_worst_rel"] = worst;
  return {ok, std::to_string(checks) + " ops, worst rel err " + fmt("%.2e", worst) + ", " +
                  fmt("%.1f", gradcheck_seconds_) + " s" + (missing.empty() ? "" : ", missing:" + missing)};
}

Outcome Suite::geometry() {
  if (!ensure_gradcheck()) return {false, "gradcheck did not run"};
  std::string detail;
  bool ok = true;
  std::size_t found = 0;
  for (const auto& r : read_csv(work_ / "gradcheck" / "gradcheck.csv")) {
    const std::string& name = r.at("check");
    if (name.rfind("geometry:", 0) != 0) continue;
    ++found;
    const double tol = name == "geometry:reprojection" ? 1e-6 : 1e-5;
    const bool row_ok = std::stoul(r.at("failed")) == 0 && std::stod(r.at("tolerance")) <= tol &&
                        (name != "geometry:reprojection" || std::stoul(r.at("instances")) >= 100);
    ok = ok && row_ok;
    detail += (detail.empty() ? "" : ", ") + name.substr(9) + " " + r.at("instances") + " cases worst " +
              fmt("%.2e", std::stod(r.at("worst")));
  }
  return {ok && found == 2, detail};
}

Outcome Suite::metric_oracle() {
  // Brute force: per class, count pixels in gt, in pred and in both.
  std::size_t mismatches = 0;
  for (std::uint64_t k = 0; k < 50; ++k) {
    RngStream rng(kSeed, "acceptance/metrics", k);
    LabelMap gt(8, 8), pred(8, 8);
    for (auto& v : gt.data) v = static_cast<std::uint8_t>(rng.integer(0, kNumClasses - 1));
    for (auto& v : pred.data) v = static_cast<std::uint8_t>(rng.integer(0, kNumClasses - 1));
    double iou_sum = 0, acc_sum = 0;
    int iou_n = 0, acc_n = 0;
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      std::set<std::size_t> g, p, both, any;
      for (std::size_t i = 0; i < 64; ++i) {
        if (gt.data[i] == c) g.insert(i);
        if (pred.data[i] == c) p.insert(i);
        if (gt.data[i] == c && pred.data[i] == c) both.insert(i);
        if (gt.data[i] == c || pred.data[i] == c) any.insert(i);
      }
      if (!any.empty()) {
        iou_sum += static_cast<double>(both.size()) / static_cast<double>(any.size());
        ++iou_n;
      }
      if (!g.empty()) {
        acc_sum += static_cast<double>(both.size()) / static_cast<double>(g.size());
        ++acc_n;
      }
    }
    ConfusionMatrix cm(kNumClasses);
    accumulate(cm, pred, gt);
    if (miou(cm) != static_cast<float>(iou_sum / iou_n) || macc(cm) != static_cast<float>(acc_sum / acc_n)) {
      ++mismatches;
    }
  }
  return {mismatches == 0, "50 random 8x8 pairs, " + std::to_string(mismatches) + " mismatches"};
}

Outcome Suite::clean_model() {
  if (!ensure_model()) return {false, "pipeline failed"};
  std::size_t train = 0;
  bool dims = true;
  for (const auto& e : dataset().entries) train += e.split == "train";
  const auto probe = split("val");
  for (const auto& s : probe) dims = dims && s.image.dim(1) == 64 && s.image.dim(2) == 128;
  double val = 0;
  for (const auto& r : read_csv(work_ / "model" / "val.csv"))
    if (r.at("metric") == "val_miou") val = std::stod(r.at("value"));
  summary["val_miou"] = val;
  const bool ok = train == 120 && dims && model().config().num_classes == 5 && val >= 0.85 && train_seconds_ < 900;
  return {ok, "val mIoU " + fmt("%.4f", val) + " (>= 0.85), trained in " + fmt("%.0f", train_seconds_) + " s"};
}

Outcome Suite::attack_efficacy() {
  if (!ensure_model()) return {false, "pipeline failed"};
  const json base{{"epochs", 200}, {"max_images", kAttackImages}, {"seed", kSeed}};
  json ne = base, eo = base;
  ne["mode"] = "no_eot";
  eo["mode"] = "eot";
  const auto p_ne = craft("no_eot", ne);
  const auto p_eo = craft("eot", eo);
  if (!p_ne || !p_eo) return {false, "crafting failed"};
  const auto test = split("test");
  const Tensor rnd = random_patch(kSeed, 12, 24).delta;
  const double r = evaluate_patch(model(), test, &rnd, Bake::digital_overlay).miou;
  const double n = evaluate_patch(model(), test, &*p_ne, Bake::digital_overlay).miou;
  const double e = evaluate_patch(model(), test, &*p_eo, Bake::digital_overlay).miou;
  const double clean = evaluate_patch(model(), test, nullptr, Bake::digital_overlay).miou;
  summary["digital"] = {{"clean", clean}, {"random", r}, {"no_eot", n}, {"eot", e}};
  const bool ok = n <= e - 0.03 && e <= r - 0.03 && e <= r - 0.10;
  return {ok, "test mIoU clean " + fmt("%.4f", clean) + ", random " + fmt("%.4f", r) + ", eot " + fmt("%.4f", e) +
                  ", no_eot " + fmt("%.4f", n) + " (need no_eot <= eot-0.03, eot <= random-0.10)"};
}

Outcome Suite::scene_robustness() {
  if (!ensure_model()) return {false, "pipeline failed"};
  std::map<std::string, double> ss_sum, eot_sum;
  for (std::uint64_t seed : kSeeds) {
    const json eot_cfg{{"mode", "eot"}, {"anchor", "billboard_box"}, {"epochs", kSceneEpochs},
                       {"max_images", kAttackImages}, {"seed", seed}};
    const auto p_eot = craft("scene-eot-s" + std::to_string(seed), eot_cfg);
    if (!p_eot) return {false, "crafting failed"};
    for (const std::string& scene : canonical_scene_ids()) {
      const json ss_cfg{{"mode", "scene_specific"}, {"scene", scene}, {"epochs", kSceneEpochs},
                        {"max_images", kSceneImages}, {"seed", seed}};
      const auto p_ss = craft("scene-ss" + scene + "-s" + std::to_string(seed), ss_cfg);
      if (!p_ss) return {false, "crafting failed"};
      const auto test = split("test", scene);
      ss_sum[scene] += evaluate_patch(model(), test, &*p_ss, Bake::scene_bake).miou;
      eot_sum[scene] += evaluate_patch(model(), test, &*p_eot, Bake::scene_bake).miou;
    }
  }
  bool ok = true;
  std::string detail;
  const double n = static_cast<double>(kSeeds.size());
  for (const std::string& scene : canonical_scene_ids()) {
    const double ss = ss_sum[scene] / n, eot = eot_sum[scene] / n;
    summary["scene_bake"][scene] = {{"scene_specific", ss}, {"eot", eot}};
    ok = ok && (scene == "A" ? std::abs(ss - eot) <= 0.02 : ss <= eot + 0.01);
    detail += (detail.empty() ? "" : "; ") + scene + ": ss " + fmt("%.4f", ss) + " eot " + fmt("%.4f", eot);
  }
  return {ok, detail + " (B,C: ss <= eot+0.01; A: |ss-eot| <= 0.02)"};
}

Outcome Suite::non_robust_collapse() {
  if (!ensure_model()) return {false, "pipeline failed"};
  const fs::path p = work_ / "patches" / "no_eot" / "patch.pft";
  if (!fs::exists(p)) {
    json ne{{"mode", "no_eot"}, {"epochs", 200}, {"max_images", kAttackImages}, {"seed", kSeed}};
    if (!craft("no_eot", ne)) return {false, "crafting failed"};
  }
  const Tensor ne = io::load_pft(p);
  const Tensor rnd = random_patch(kSeed, 12, 24).delta;
  const auto test = split("test");
  const double r = evaluate_patch(model(), test, &rnd, Bake::scene_bake).miou;
  const double n = evaluate_patch(model(), test, &ne, Bake::scene_bake).miou;
  summary["scene_bake"]["random"] = r;
  summary["scene_bake"]["no_eot"] = n;
  return {std::abs(n - r) < 0.02,
          "scene-baked test mIoU random " + fmt("%.4f", r) + ", no_eot " + fmt("%.4f", n) + " (|diff| < 0.02)"};
}

Outcome Suite::loss_comparison() {
  if (!ensure_model()) return {false, "pipeline failed"};
  const auto train = split("train");
  const auto test = split("test");
  double adaptive = 0, ce = 0;
  bool grid_ok = true;
  std::string grid_detail;
  for (std::uint64_t seed : kSeeds) {
    const fs::path out = work_ / "compare" / ("s" + std::to_string(seed));
    const fs::path cfg = work_ / "configs" / ("compare-s" + std::to_string(seed) + ".json");
    io::write_file_atomic(cfg, json{{"mode", "eot"}, {"epochs", kLossEpochs}, {"max_images", kLossImages},
                                    {"seed", seed}}
                                   .dump() +
                                   "\n");
    if (!fs::exists(out / "compare.csv")) {
      note("craft-patch --compare-losses seed " + std::to_string(seed));
      if (cli({"craft-patch", "--compare-losses", "--config", cfg.string(), "--data", data_dir().string(), "--model",
               model_path().string(), "--out", out.string()}) != 0) {
        return {false, "compare-losses failed"};
      }
    }
    // Every trace present, one row per epoch, same epochs everywhere.
    std::size_t traces = 0;
    for (const auto& e : fs::directory_iterator(out / "traces")) {
      const auto rows = read_csv(e.path());
      grid_ok = grid_ok && rows.size() == kLossEpochs;
      for (std::size_t i = 0; i < rows.size() && grid_ok; ++i) grid_ok = std::stoul(rows[i].at("epoch")) == i;
      ++traces;
    }
    grid_ok = grid_ok && traces == gamma_grid({}).size() + 1 && read_csv(out / "compare.csv").size() == kLossEpochs;
    const Tensor pa = io::load_pft(out / "patches" / "adaptive.pft");
    const Tensor pc = io::load_pft(out / "patches" / "ce_full_N.pft");
    const double a = evaluate_patch(model(), test, &pa, Bake::digital_overlay).miou;
    const double c = evaluate_patch(model(), test, &pc, Bake::digital_overlay).miou;
    summary["loss_compare"]["s" + std::to_string(seed)] = {{"adaptive", a}, {"ce_full_N", c}};
    adaptive += a;
    ce += c;
  }
  adaptive /= static_cast<double>(kSeeds.size());
  ce /= static_cast<double>(kSeeds.size());
  const bool ok = grid_ok && adaptive <= ce + 0.02;
  return {ok, "mean final test mIoU adaptive " + fmt("%.4f", adaptive) + ", ce_full_N " + fmt("%.4f", ce) +
                  (grid_ok ? ", grid traces aligned" : ", grid traces MISALIGNED")};
}

Outcome Suite::determinism() {
  if (!ensure_model()) return {false, "pipeline failed"};
  const fs::path det = work_ / "determinism";
  fs::remove_all(det);
  std::vector<std::string> differing;
  auto twice = [&](const std::string& stage, const std::function<std::vector<std::string>(const fs::path&)>& args) {
    const fs::path a = det / (stage + "-1"), b = det / (stage + "-2");
    if (cli(args(a)) != 0 || cli(args(b)) != 0) {
      differing.push_back(stage + " (failed)");
      return;
    }
    if (snapshot(a) != snapshot(b)) differing.push_back(stage);
  };
  const std::string seed = std::to_string(kSeed);
  twice("gen-data", [&](const fs::path& o) { return std::vector<std::string>{"gen-data", "--seed", seed, "--out", o}; });
  twice("train-model", [&](const fs::path& o) {
    return std::vector<std::string>{"train-model", "--data", data_dir(), "--epochs", "2", "--seed", seed, "--out", o};
  });
  for (const char* mode : {"no-eot", "eot"}) {
    twice(std::string("craft-patch-") + mode, [&](const fs::path& o) {
      return std::vector<std::string>{"craft-patch", "--data",  data_dir(), "--model",      model_path(), "--mode",
                                      mode,          "--epochs", "3",       "--max-images", "4",          "--out", o};
    });
  }
  twice("craft-patch-scene-specific", [&](const fs::path& o) {
    return std::vector<std::string>{"craft-patch", "--data",   data_dir(), "--model",      model_path(),
                                    "--mode",      "scene-specific", "--scene", "B", "--epochs", "3",
                                    "--max-images", "4",       "--out",    o};
  });
  const std::string patch = (det / "craft-patch-eot-1" / "patch.pft").string();
  for (const char* bake : {"digital", "scene"}) {
    twice(std::string("evaluate-") + bake, [&](const fs::path& o) {
      return std::vector<std::string>{"evaluate", "--data", data_dir(), "--model", model_path(), "--bake", bake,
                                      "--random", "--eot",  patch,      "--out",   o};
    });
  }
  twice("gradcheck", [&](const fs::path& o) {
    return std::vector<std::string>{"gradcheck", "--instances", "3", "--out", o};
  });
  std::string detail = "8 stages rerun";
  if (!differing.empty()) {
    detail += ", differing:";
    for (const auto& d : differing) detail += " " + d;
  } else {
    detail += ", all outputs byte-identical";
  }
  return {differing.empty(), detail};
}

Outcome Suite::invariants() {
  if (!kCheckInvariants) return {false, "built without RWPATCH_CHECK_INVARIANTS"};
  // The runtime assertions must actually fire.
  bool fires = false;
  try {
    check_invariant(false, "acceptance probe");
  } catch (const InvariantError&) {
    fires = true;
  }
  if (!ensure_model()) return {false, "pipeline failed"};
  const auto train = split("train");
  std::size_t steps = 0, violations = 0, checks = 0;
  AttackHooks hooks;
  hooks.on_step = [&](const Tensor& p) {
    ++steps;
    for (float v : p.vec()) violations += !(v >= 0.f && v <= 1.f);
  };
  std::string failure;
  for (AttackMode mode : {AttackMode::no_eot, AttackMode::eot, AttackMode::scene_specific}) {
    AttackConfig cfg = AttackConfig::defaults_for(mode);
    cfg.epochs = 5;
    cfg.max_images = 6;
    cfg.seed = kSeed;
    if (mode == AttackMode::scene_specific) cfg.scene = "C";
    try {
      optimize_patch(model(), train, cfg, hooks);
    } catch (const InvariantError& e) {
      failure = e.what();
    }
  }
  // Direct property checks on the pieces the attack assembles.
  for (std::uint64_t k = 0; k < 50 && failure.empty(); ++k) {
    RngStream rng(kSeed, "acceptance/invariants", k);
    const SceneSample& s = train[k % train.size()];
    const auto pl = sample_eot_placement(rng, 64, 128, 12, 24, {});
    Tensor patch(Shape{3, 12, 24});
    for (float& v : patch.vec()) v = rng.uniform();
    ad::Tape<float> tape;
    const auto x = tape.constant(s.image);
    const auto res = apply_patch(x, tape.leaf(patch, true), pl);
    const std::size_t plane = 64 * 128;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        if (!pl.mask[i] && res.image.value()[c * plane + i] != s.image[c * plane + i]) ++violations;
    const LabelMap pred = model().segment(res.image.value());
    const Mask correct = correct_set(pred, s.labels, res.mask);
    violations += (correct & res.mask).count();
    const float g = adaptive_gamma(correct, res.mask);
    violations += !(g >= 0.f && g <= 1.f);
    Tensor a(Shape{300}), b(Shape{300});
    const float scale = std::pow(10.f, rng.uniform(-6, 6));
    for (float& v : a.vec()) v = scale * rng.uniform(-1, 1);
    for (float& v : b.vec()) v = rng.uniform(-1, 1);
    const Tensor comb = combined_gradient(a, b, rng.uniform());
    double sq = 0;
    for (float v : comb.vec()) sq += static_cast<double>(v) * v;
    violations += std::sqrt(sq) > 1.0 + 1e-5;
    checks += 5;
  }
  const bool ok = fires && failure.empty() && violations == 0 && steps > 0;
  return {ok, std::to_string(steps) + " attack steps and " + std::to_string(checks) + " direct checks, " +
                  std::to_string(violations) + " violations" + (failure.empty() ? "" : ", " + failure) +
                  (fires ? "" : ", assertions disabled")};
}

}  // namespace

int main(int argc, char** argv) {
  cli::tune_allocator();
  fs::path work = "acceptance_work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::istringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: rwpatch_acceptance [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  fs::create_directories(work);
  Suite suite(work);
  struct Criterion {
    int id;
    const char* name;
    Outcome (Suite::*run)();
  };
  const std::vector<Criterion> criteria{
      {1, "gradient fidelity", &Suite::gradients},
      {2, "geometry", &Suite::geometry},
      {3, "metric oracle", &Suite::metric_oracle},
      {4, "clean model", &Suite::clean_model},
      {5, "attack efficacy (digital)", &Suite::attack_efficacy},
      {6, "scene-baked robustness", &Suite::scene_robustness},
      {7, "non-robust collapse in scene", &Suite::non_robust_collapse},
      {8, "loss comparison", &Suite::loss_comparison},
      {9, "determinism", &Suite::determinism},
      {10, "invariant suite", &Suite::invariants},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    note("criterion " + std::to_string(c.id) + ": " + c.name);
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = (suite.*c.run)();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %d %s: %s [%.0f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                elapsed(t0));
    std::fflush(stdout);
    suite.summary["criteria"][std::to_string(c.id)] = {{"pass", o.pass}, {"detail", o.detail}};
  }
  io::write_file_atomic(work / "acceptance.json", suite.summary.dump(2) + "\n");
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
