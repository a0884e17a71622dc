#include "rwpatch_cli/cli.hpp"

#include <malloc.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rwpatch/attack.hpp"
#include "rwpatch/evaluate.hpp"
#include "rwpatch/io.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/segmodel.hpp"
#include "rwpatch/verify.hpp"

namespace rwpatch::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void tune_allocator() {
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
}

namespace {

constexpr std::uint64_t kDefaultSeed = 7;
constexpr const char* kModelFile = "model.rwm";

struct Common {
  std::string config;
  std::uint64_t seed = kDefaultSeed;
  bool seed_given = false;
  std::string out;
  bool quiet = false;
};

std::string read_input(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " not found: " + path);
  return io::read_file(path);
}

void require_dir(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string(what) + " is required");
  if (!fs::is_directory(path)) throw UsageError(std::string(what) + " not found: " + path);
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw UsageError("--out is required");
  return c.out;
}

/// Outputs are written into a hidden sibling directory and moved into place
/// file by file on commit; an aborted run leaves the target untouched.
class StagedDir {
 public:
  explicit StagedDir(fs::path target) : target_(std::move(target)) {
    const fs::path parent = target_.has_parent_path() ? target_.parent_path() : fs::path(".");
    fs::create_directories(parent);
    staging_ = parent / ("." + target_.filename().string() + ".staging");
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }
  StagedDir(const StagedDir&) = delete;
  StagedDir& operator=(const StagedDir&) = delete;
  ~StagedDir() {
    std::error_code ec;
    fs::remove_all(staging_, ec);
  }

  const fs::path& path() const { return staging_; }

  void commit() {
    fs::create_directories(target_);
    for (auto it = fs::recursive_directory_iterator(staging_); it != fs::recursive_directory_iterator(); ++it) {
      const fs::path dst = target_ / fs::relative(it->path(), staging_);
      if (it->is_directory()) {
        fs::create_directories(dst);
      } else {
        fs::rename(it->path(), dst);
      }
    }
    fs::remove_all(staging_);
  }

 private:
  fs::path target_;
  fs::path staging_;
};

class Log {
 public:
  Log(std::ostream& out, bool quiet) : out_(out), quiet_(quiet) {}
  /// Progress; suppressed by --quiet.
  template <typename... A>
  void progress(const char* fmt, A... a) {
    if (!quiet_) out_ << format(fmt, a...) << std::flush;
  }
  template <typename... A>
  void result(const char* fmt, A... a) {
    out_ << format(fmt, a...) << std::flush;
  }

 private:
  template <typename... A>
  static std::string format(const char* fmt, A... a) {
    char buf[512];
    std::snprintf(buf, sizeof buf, fmt, a...);
    return buf;
  }
  std::ostream& out_;
  bool quiet_;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const Common& c, std::ostream& out) {
  Log log(out, c.quiet);
  const DatasetConfig cfg = c.config.empty() ? DatasetConfig{} : parse_dataset_config(read_input(c.config, "config file"));
  cfg.validate();
  const fs::path target = require_out(c);
  StagedDir stage(target);
  const Dataset ds = generate_dataset(cfg, c.seed, stage.path());
  io::write_file_atomic(stage.path() / "dataset.json", dataset_config_to_json(cfg) + "\n");
  stage.commit();
  std::map<std::string, std::size_t> counts;
  for (const ManifestEntry& e : ds.entries) ++counts[e.split];
  log.result("manifest: %s\n", (target / "manifest.jsonl").string().c_str());
  log.result("samples: %zu (train %zu, val %zu, test %zu)\n", ds.entries.size(), counts["train"], counts["val"],
             counts["test"]);
  return 0;
}

struct TrainArgs {
  std::string data;
  std::optional<std::size_t> epochs;
};

int cmd_train(const Common& c, const TrainArgs& a, std::ostream& out) {
  Log log(out, c.quiet);
  ModelConfig mc;
  TrainOptions opts;
  if (!c.config.empty()) {
    try {
      const json j = json::parse(read_input(c.config, "config file"));
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "epochs") {
          opts.epochs = it->get<std::size_t>();
        } else if (it.key() == "lr") {
          opts.lr = it->get<float>();
        } else if (it.key() == "num_classes") {
          mc.num_classes = it->get<std::size_t>();
        } else if (it.key() == "widths") {
          mc.widths = {it->at(0).get<std::size_t>(), it->at(1).get<std::size_t>()};
        } else if (it.key() == "mid_convs") {
          mc.mid_convs = it->get<std::size_t>();
        } else if (it.key() == "global_context") {
          mc.global_context = it->get<bool>();
        } else if (it.key() == "cosine_decay") {
          opts.cosine_decay = it->get<bool>();
        } else {
          throw ConfigError("train config: unknown key '" + it.key() + "'");
        }
      }
    } catch (const json::exception& e) {
      throw ConfigError(std::string("train config: ") + e.what());
    }
  }
  if (a.epochs) opts.epochs = *a.epochs;
  if (opts.epochs == 0) throw UsageError("--epochs must be >= 1");
  if (!(opts.lr > 0)) throw ConfigError("train config: lr must be positive");
  mc.seed = c.seed;
  opts.seed = c.seed;
  require_dir(a.data, "--data directory");
  const fs::path target = require_out(c);

  const Dataset ds = load_manifest(fs::path(a.data) / "manifest.jsonl");
  const auto train_set = load_samples(ds, "train");
  const auto val_set = load_samples(ds, "val");
  SegModel model(mc);
  const auto t0 = std::chrono::steady_clock::now();
  opts.on_epoch = [&](std::size_t e, double loss) {
    log.progress("epoch %zu/%zu loss %.5f (%.1f s)\n", e + 1, opts.epochs, loss, seconds_since(t0));
  };
  const TrainResult tr = train(model, train_set, opts);

  std::ostringstream csv;
  csv << "epoch,loss\n";
  char buf[64];
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f\n", e, tr.epoch_loss[e]);
    csv << buf;
  }
  StagedDir stage(target);
  save_weights(model, stage.path() / kModelFile);
  io::write_file_atomic(stage.path() / "loss.csv", csv.str());
  std::string summary;
  if (!val_set.empty()) {
    const MetricsReport r = evaluate_patch(model, val_set, nullptr, Bake::digital_overlay);
    std::snprintf(buf, sizeof buf, "val_miou,%.6f\nval_macc,%.6f\n", r.miou, r.macc);
    summary = buf;
    io::write_file_atomic(stage.path() / "val.csv", "metric,value\n" + summary);
    stage.commit();
    log.result("val miou %.4f macc %.4f\n", r.miou, r.macc);
  } else {
    stage.commit();
  }
  log.result("weights: %s (%.1f s)\n", (target / kModelFile).string().c_str(), seconds_since(t0));
  return 0;
}

struct CraftArgs {
  std::string data;
  std::string model;
  std::string mode;
  std::string scene;
  std::string split = "train";
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> max_images;
  bool compare_losses = false;
};

std::string loss_tag(const LossConfig& l) { return l.tag(); }

int cmd_craft(const Common& c, const CraftArgs& a, std::ostream& out) {
  Log log(out, c.quiet);
  json j = json::object();
  if (!c.config.empty()) {
    try {
      j = json::parse(read_input(c.config, "config file"));
    } catch (const json::exception& e) {
      throw ConfigError(std::string("attack config: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("attack config: expected a JSON object");
  }
  if (!a.mode.empty()) j["mode"] = attack_mode_name(parse_attack_mode(a.mode));
  if (!a.scene.empty()) j["scene"] = a.scene;
  if (a.epochs) j["epochs"] = *a.epochs;
  if (a.max_images) j["max_images"] = *a.max_images;
  if (c.seed_given || !j.contains("seed")) j["seed"] = c.seed;
  const AttackConfig cfg = parse_attack_config(j.dump());

  require_dir(a.data, "--data directory");
  const std::string model_path = a.model.empty() ? std::string() : a.model;
  if (model_path.empty()) throw UsageError("--model is required");
  read_input(model_path, "model file");
  const fs::path target = require_out(c);

  const SegModel model = load_weights(model_path);
  const Dataset ds = load_manifest(fs::path(a.data) / "manifest.jsonl");
  const auto samples = load_samples(ds, a.split, cfg.scene);
  if (samples.empty()) throw UsageError("no '" + a.split + "' samples" + (cfg.scene.empty() ? "" : " for scene " + cfg.scene));

  const auto t0 = std::chrono::steady_clock::now();
  StagedDir stage(target);
  io::write_file_atomic(stage.path() / "attack.json", attack_config_to_json(cfg) + "\n");
  if (!a.compare_losses) {
    AttackHooks hooks;
    hooks.on_epoch = [&](const TraceRecord& r) {
      log.progress("epoch %zu/%zu miou %.4f l_adv %.4f upsilon %.3f (%.1f s)\n", r.epoch + 1, cfg.epochs,
                   static_cast<double>(r.miou), r.l_adv, r.upsilon_frac, seconds_since(t0));
    };
    const AttackResult res = optimize_patch(model, samples, cfg, hooks);
    io::save_pft(stage.path() / "patch.pft", res.patch.delta);
    io::save_ppm(stage.path() / "patch_preview.ppm", res.patch.delta);
    io::write_file_atomic(stage.path() / "trace.csv", trace_csv(res.trace));
    stage.commit();
    log.result("patch: %s (final miou %.4f, %zu skipped visits, %.1f s)\n", (target / "patch.pft").string().c_str(),
               static_cast<double>(res.trace.back().miou), res.skipped, seconds_since(t0));
    return 0;
  }

  std::vector<AttackConfig> configs;
  for (const LossConfig& l : gamma_grid(cfg.loss)) {
    AttackConfig k = cfg;
    k.loss = l;
    configs.push_back(k);
  }
  AttackConfig ce = cfg;
  ce.loss.baseline = BaselineMode::ce_full_n;
  configs.push_back(ce);
  const auto results = compare_losses(model, samples, configs, [&](std::size_t i, const TraceRecord& r) {
    log.progress("[%s] epoch %zu/%zu miou %.4f (%.1f s)\n", loss_tag(configs[i].loss).c_str(), r.epoch + 1, cfg.epochs,
                 static_cast<double>(r.miou), seconds_since(t0));
  });
  fs::create_directories(stage.path() / "traces");
  fs::create_directories(stage.path() / "patches");
  std::ostringstream cmp;
  cmp << "epoch";
  for (const AttackConfig& k : configs) cmp << ",miou_" << loss_tag(k.loss);
  cmp << '\n';
  char buf[32];
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    cmp << e;
    for (const AttackResult& r : results) {
      std::snprintf(buf, sizeof buf, ",%.6f", static_cast<double>(r.trace[e].miou));
      cmp << buf;
    }
    cmp << '\n';
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const std::string tag = loss_tag(configs[i].loss);
    io::write_file_atomic(stage.path() / "traces" / (tag + ".csv"), trace_csv(results[i].trace));
    io::save_pft(stage.path() / "patches" / (tag + ".pft"), results[i].patch.delta);
  }
  io::write_file_atomic(stage.path() / "compare.csv", cmp.str());
  stage.commit();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    log.result("%-20s final miou %.4f\n", loss_tag(configs[i].loss).c_str(),
               static_cast<double>(results[i].trace.back().miou));
  }
  log.result("traces: %s\n", (target / "compare.csv").string().c_str());
  return 0;
}

struct EvalArgs {
  std::string data;
  std::string model;
  std::string split = "test";
  std::string bake = "digital";
  std::string placement = "center";
  std::string patch;
  bool random = false;
  std::string no_eot;
  std::string eot;
  std::vector<std::string> scene_specific;
  std::string random_size = "12x24";
};

Tensor load_patch(const std::string& path) {
  read_input(path, "patch file");
  Tensor p = io::load_pft(path);
  if (p.rank() != 3 || p.dim(0) != 3) throw UsageError("patch file " + path + " is not a [3,H,W] tensor");
  return p;
}

int cmd_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
  Log log(out, c.quiet);
  if (!c.config.empty()) throw UsageError("evaluate takes no --config; pass patches as flags");
  const Bake bake = parse_bake(a.bake);
  OverlayPlacement placement;
  if (a.placement == "center") {
    placement = OverlayPlacement::image_center;
  } else if (a.placement == "billboard") {
    placement = OverlayPlacement::billboard_homography;
  } else {
    throw UsageError("--placement must be center or billboard");
  }
  require_dir(a.data, "--data directory");
  if (a.model.empty()) throw UsageError("--model is required");
  read_input(a.model, "model file");

  std::vector<ModePatch> entries;
  if (a.random) {
    std::size_t h = 0, w = 0;
    if (std::sscanf(a.random_size.c_str(), "%zux%zu", &h, &w) != 2 || h == 0 || w == 0) {
      throw UsageError("--random-size must look like 12x24");
    }
    entries.push_back({"random", random_patch(c.seed, h, w).delta, ""});
  }
  if (!a.no_eot.empty()) entries.push_back({"no_eot", load_patch(a.no_eot), ""});
  if (!a.eot.empty()) entries.push_back({"eot", load_patch(a.eot), ""});
  for (const std::string& spec : a.scene_specific) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--scene-specific expects SCENE=PATH, got '" + spec + "'");
    const std::string scene = spec.substr(0, eq);
    canonical_scene(scene);
    entries.push_back({"scene_specific", load_patch(spec.substr(eq + 1)), scene});
  }
  if (!a.patch.empty()) entries.push_back({"patch", load_patch(a.patch), ""});
  if (entries.empty()) entries.push_back({"clean", std::nullopt, ""});
  const fs::path target = require_out(c);

  const SegModel model = load_weights(a.model);
  const Dataset ds = load_manifest(fs::path(a.data) / "manifest.jsonl");
  const auto samples = load_samples(ds, a.split);
  if (samples.empty()) throw UsageError("no '" + a.split + "' samples in " + a.data);
  const auto rows = evaluate_modes(model, samples, entries, bake, placement);
  StagedDir stage(target);
  io::write_file_atomic(stage.path() / "report.csv", report_csv(rows));
  stage.commit();
  log.result("%-16s %-6s %8s %8s\n", "mode", "scene", "miou", "macc");
  for (const ReportRow& r : rows) {
    log.result("%-16s %-6s %8.4f %8.4f\n", r.mode.c_str(), r.scene.c_str(), static_cast<double>(r.report.miou),
               static_cast<double>(r.report.macc));
  }
  log.result("report: %s (%s bake)\n", (target / "report.csv").string().c_str(), bake_name(bake));
  return 0;
}

struct GradcheckArgs {
  std::size_t instances = 20;
  bool inject_fault = false;
};

int cmd_gradcheck(const Common& c, const GradcheckArgs& a, std::ostream& out) {
  Log log(out, c.quiet);
  if (a.instances == 0) throw UsageError("--instances must be >= 1");
  verify::GradcheckOptions opts;
  opts.instances = a.instances;
  opts.seed = c.seed;
  struct FaultGuard {
    explicit FaultGuard(bool on) {
      if (on) ad::inject_fault(ad::Fault::conv_backward_sign_flip);
    }
    ~FaultGuard() { ad::inject_fault(ad::Fault::none); }
  } guard(a.inject_fault);
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = verify::run_all(opts, [&](const verify::CheckResult& r) {
    log.progress("%s %-28s %zu/%zu worst %.3g (tol %.0e, %.2f s)\n", r.ok() ? "PASS" : "FAIL", r.name.c_str(),
                 r.instances - r.failed, r.instances, r.worst, r.tolerance, r.seconds);
  });
  std::size_t failed = 0;
  std::ostringstream csv;
  csv << "check,instances,failed,worst,tolerance\n";
  for (const auto& r : results) {
    failed += r.ok() ? 0 : 1;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.6g,%.1e\n", r.name.c_str(), r.instances, r.failed, r.worst,
                  r.tolerance);
    csv << buf;
  }
  if (!c.out.empty()) {
    StagedDir stage(c.out);
    io::write_file_atomic(stage.path() / "gradcheck.csv", csv.str());
    stage.commit();
  }
  log.result("gradcheck: %zu/%zu checks passed in %.1f s\n", results.size() - failed, results.size(), seconds_since(t0));
  return failed == 0 ? 0 : 1;
}

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON configuration file");
  sub->add_option("--seed", c.seed, "Global 64-bit seed")->capture_default_str();
  sub->add_option("--out", c.out, "Output directory");
  sub->add_flag("--quiet", c.quiet, "Suppress progress output");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adversarial patches against a toy semantic segmentation model", "rwpatch"};
  app.require_subcommand(1);
  Common common;
  TrainArgs train_args;
  CraftArgs craft_args;
  EvalArgs eval_args;
  GradcheckArgs grad_args;

  auto* gen = app.add_subcommand("gen-data", "Render the synthetic street-scene dataset");
  add_common(gen, common);

  auto* trn = app.add_subcommand("train-model", "Train the segmentation model");
  add_common(trn, common);
  trn->add_option("--data", train_args.data, "Dataset directory (gen-data output)");
  trn->add_option("--epochs", train_args.epochs, "Override the epoch count");

  auto* craft = app.add_subcommand("craft-patch", "Optimize an adversarial patch");
  add_common(craft, common);
  craft->add_option("--data", craft_args.data, "Dataset directory");
  craft->add_option("--model", craft_args.model, "Model weights file");
  craft->add_option("--mode", craft_args.mode, "eot, no-eot or scene-specific");
  craft->add_option("--scene", craft_args.scene, "Scene id (required for scene-specific)");
  craft->add_option("--split", craft_args.split, "Dataset split to optimize on")->capture_default_str();
  craft->add_option("--epochs", craft_args.epochs, "Override the epoch count");
  craft->add_option("--max-images", craft_args.max_images, "Use at most this many images");
  craft->add_flag("--compare-losses", craft_args.compare_losses, "Run the blend-weight grid and plain CE");

  auto* ev = app.add_subcommand("evaluate", "Evaluate patches and write report.csv");
  add_common(ev, common);
  ev->add_option("--data", eval_args.data, "Dataset directory");
  ev->add_option("--model", eval_args.model, "Model weights file");
  ev->add_option("--split", eval_args.split, "Dataset split")->capture_default_str();
  ev->add_option("--bake", eval_args.bake, "digital or scene")->capture_default_str();
  ev->add_option("--placement", eval_args.placement, "Digital overlay position: center or billboard")
      ->capture_default_str();
  ev->add_option("--patch", eval_args.patch, "Evaluate a single patch");
  ev->add_flag("--random", eval_args.random, "Include a random patch row");
  ev->add_option("--random-size", eval_args.random_size, "Random patch size HxW")->capture_default_str();
  ev->add_option("--no-eot", eval_args.no_eot, "Patch crafted without EOT");
  ev->add_option("--eot", eval_args.eot, "Patch crafted with EOT");
  ev->add_option("--scene-specific", eval_args.scene_specific, "SCENE=PATH, repeatable");

  auto* grad = app.add_subcommand("gradcheck", "Run the gradient and geometry self-checks");
  add_common(grad, common);
  grad->add_option("--instances", grad_args.instances, "Random instances per check")->capture_default_str();
  grad->add_flag("--inject-fault", grad_args.inject_fault)->group("");

  std::vector<const char*> argv;
  for (const std::string& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  for (auto* sub : app.get_subcommands()) {
    common.seed_given = sub->count("--seed") > 0;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, out);
    if (trn->parsed()) return cmd_train(common, train_args, out);
    if (craft->parsed()) return cmd_craft(common, craft_args, out);
    if (ev->parsed()) return cmd_eval(common, eval_args, out);
    if (grad->parsed()) return cmd_gradcheck(common, grad_args, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return e.is_usage() ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace rwpatch::cli
