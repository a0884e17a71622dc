#include "rwpatch/verify.hpp"

#include <chrono>
#include <cmath>

#include "rwpatch/advloss.hpp"
#include "rwpatch/geometry.hpp"
#include "rwpatch/patchops.hpp"
#include "rwpatch/rng.hpp"
#include "rwpatch/segmodel.hpp"

namespace rwpatch::verify {

namespace {

struct Eval {
  double value;
  std::uint64_t kinks;
};

Eval evaluate(const Build& build, const std::vector<Tensor64>& inputs, const Tensor64& weights) {
  ad::Tape<double> tape;
  tape.set_track_kinks(true);
  std::vector<ad::Var<double>> vars;
  for (const Tensor64& t : inputs) vars.push_back(tape.constant(t));
  const auto out = build(tape, vars);
  double acc = 0;
  for (std::size_t i = 0; i < weights.numel(); ++i) acc += weights[i] * out.value()[i];
  return {acc, tape.kink_signature()};
}

Tensor64 uniform(RngStream& rng, Shape s, double lo, double hi) {
  Tensor64 t(std::move(s));
  for (double& v : t.vec()) v = rng.uniform(static_cast<float>(lo), static_cast<float>(hi));
  return t;
}

LabelMap random_labels(RngStream& rng, std::size_t h, std::size_t w, std::size_t nc) {
  LabelMap l(h, w);
  for (auto& v : l.data) v = static_cast<std::uint8_t>(rng.integer(0, nc - 1));
  return l;
}

Mask random_mask(RngStream& rng, std::size_t h, std::size_t w, float p) {
  Mask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.set(i, rng.uniform() < p);
  return m;
}

struct Case {
  std::vector<Tensor64> inputs;
  std::vector<bool> differentiable;
  Build build;
};

Case make_case(const std::string& name, RngStream& rng) {
  auto dim = [&](std::size_t lo, std::size_t hi) { return static_cast<std::size_t>(rng.integer(lo, hi)); };
  if (name == "conv2d") {
    const std::size_t cin = dim(1, 3), cout = dim(1, 3), k = rng.coin() ? 3 : 1, h = dim(3, 6), w = dim(3, 6);
    const int stride = static_cast<int>(dim(1, 2)), pad = static_cast<int>(dim(0, k / 2));
    return {{uniform(rng, {cin, h, w}, -1, 1), uniform(rng, {cout, cin, k, k}, -1, 1)},
            {true, true},
            [stride, pad](ad::Tape<double>&, const auto& v) { return ad::conv2d(v[0], v[1], stride, pad); }};
  }
  if (name == "add_channel_bias") {
    const std::size_t c = dim(1, 4);
    return {{uniform(rng, {c, dim(1, 4), dim(1, 4)}, -1, 1), uniform(rng, {c}, -1, 1)},
            {true, true},
            [](ad::Tape<double>&, const auto& v) { return ad::add_channel_bias(v[0], v[1]); }};
  }
  if (name.starts_with("elementwise")) {
    const std::string op = name.substr(name.find('/') + 1);
    const Shape s{dim(1, 3), dim(1, 4), dim(1, 4)};
    if (op == "log") {
      return {{uniform(rng, s, 0.1, 2)}, {true}, [](ad::Tape<double>&, const auto& v) { return ad::log(v[0]); }};
    }
    if (op == "exp") {
      return {{uniform(rng, s, -2, 2)}, {true}, [](ad::Tape<double>&, const auto& v) { return ad::exp(v[0]); }};
    }
    if (op == "relu") {
      return {{uniform(rng, s, -1, 1)}, {true}, [](ad::Tape<double>&, const auto& v) { return ad::relu(v[0]); }};
    }
    if (op == "clamp01") {
      return {{uniform(rng, s, -0.5, 1.5)}, {true}, [](ad::Tape<double>&, const auto& v) { return ad::clamp01(v[0]); }};
    }
    ad::ElementwiseOp e = op == "add" ? ad::ElementwiseOp::add : op == "sub" ? ad::ElementwiseOp::sub : ad::ElementwiseOp::mul;
    const bool broadcast = rng.coin();
    return {{uniform(rng, s, -1, 1), uniform(rng, broadcast ? Shape{} : s, -1, 1)},
            {true, true},
            [e](ad::Tape<double>&, const auto& v) { return ad::elementwise<double>(e, v[0], v[1]); }};
  }
  if (name == "scale_shift") {
    const double a = rng.uniform(-2, 2), b = rng.uniform(-1, 1);
    return {{uniform(rng, {dim(1, 3), dim(1, 4), dim(1, 4)}, -1, 1)},
            {true},
            [a, b](ad::Tape<double>&, const auto& v) { return ad::add_scalar(ad::scale(v[0], a), b); }};
  }
  if (name == "softmax") {
    return {{uniform(rng, {dim(2, 5), dim(1, 4), dim(1, 4)}, -3, 3)},
            {true},
            [](ad::Tape<double>&, const auto& v) { return ad::softmax_channels(v[0]); }};
  }
  if (name == "avg_pool2") {
    return {{uniform(rng, {dim(1, 3), 2 * dim(1, 3), 2 * dim(1, 3)}, -1, 1)},
            {true},
            [](ad::Tape<double>&, const auto& v) { return ad::avg_pool2(v[0]); }};
  }
  if (name == "upsample_nearest2") {
    return {{uniform(rng, {dim(1, 3), dim(1, 3), dim(1, 3)}, -1, 1)},
            {true},
            [](ad::Tape<double>&, const auto& v) { return ad::upsample_nearest2(v[0]); }};
  }
  if (name == "bilinear_sample") {
    const std::size_t hs = dim(2, 5), ws = dim(2, 5), h = dim(3, 6), w = dim(3, 6);
    ad::SampleGrid g(h, w);
    // Mostly inside the texel area, some outside.
    for (std::size_t i = 0; i < g.x.size(); ++i) {
      g.x[i] = rng.uniform(-1.f, static_cast<float>(ws));
      g.y[i] = rng.uniform(-1.f, static_cast<float>(hs));
    }
    return {{uniform(rng, {dim(1, 3), hs, ws}, 0, 1)},
            {true},
            [g](ad::Tape<double>&, const auto& v) { return ad::bilinear_sample(v[0], g).output; }};
  }
  if (name == "select") {
    const Shape s{dim(1, 3), dim(2, 4), dim(2, 4)};
    const Mask m = random_mask(rng, s[1], s[2], 0.5f);
    return {{uniform(rng, s, -1, 1), uniform(rng, s, -1, 1)},
            {true, true},
            [m](ad::Tape<double>&, const auto& v) { return ad::select(m, v[0], v[1]); }};
  }
  if (name == "pixelwise_ce") {
    const std::size_t nc = dim(2, 5), h = dim(2, 5), w = dim(2, 5);
    const LabelMap labels = random_labels(rng, h, w, nc);
    Mask m = random_mask(rng, h, w, 0.7f);
    m.set(0, true);
    return {{uniform(rng, {nc, h, w}, 0.05, 1)},
            {true},
            [labels, m](ad::Tape<double>&, const auto& v) { return pixelwise_ce(v[0], labels, m); }};
  }
  if (name == "smoothness_loss") {
    return {{uniform(rng, {3, dim(2, 6), dim(2, 6)}, 0, 1)},
            {true},
            [](ad::Tape<double>&, const auto& v) { return smoothness_loss(v[0]); }};
  }
  if (name == "nps_loss") {
    PrintableColorSet colors;
    const std::size_t k = rng.coin() ? 30 : dim(1, 6);
    if (k == 30) {
      colors = PrintableColorSet::defaults();
    } else {
      for (std::size_t i = 0; i < k; ++i) colors.colors.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    return {{uniform(rng, {3, dim(1, 4), dim(1, 4)}, 0, 1)},
            {true},
            [colors](ad::Tape<double>&, const auto& v) { return nps_loss(v[0], colors); }};
  }
  if (name == "appearance_transform") {
    const Shape s{3, dim(2, 4), dim(2, 4)};
    AppearanceDraw d;
    d.contrast = rng.uniform(-0.1f, 0.1f);
    d.brightness = rng.uniform(-0.1f, 0.1f);
    d.noise = Tensor(s);
    for (float& x : d.noise.vec()) x = rng.normal(0.f, 0.1f);
    return {{uniform(rng, s, 0, 1)},
            {true},
            [d](ad::Tape<double>&, const auto& v) { return appearance_transform(v[0], d); }};
  }
  if (name == "composite") {
    // Paste a patch into an image, run a small segmentation net, take the
    // masked cross-entropy: the full attack objective in miniature.
    ModelConfig mc;
    mc.num_classes = dim(2, 4);
    mc.widths = {dim(2, 3), dim(2, 3)};
    mc.mid_convs = dim(1, 2);
    mc.global_context = rng.coin();
    const std::size_t h = 4 * dim(1, 2), w = 4 * dim(1, 2), ph = 2, pw = dim(2, 3);
    const PlacementSpec pl = rect_placement(h, w, ph, pw, rng.uniform(0.f, static_cast<float>(h - ph) - 0.01f),
                                            rng.uniform(0.f, static_cast<float>(w - pw) - 0.01f), 1.0);
    const LabelMap labels = random_labels(rng, h, w, mc.num_classes);
    const Mask outside = pl.mask.complement();
    std::vector<Tensor64> inputs{uniform(rng, {3, ph, pw}, 0, 1), uniform(rng, {3, h, w}, 0, 1)};
    std::vector<bool> diff{true, false};
    for (const Shape& s : weight_shapes(mc)) {
      inputs.push_back(uniform(rng, s, -0.6, 0.6));
      diff.push_back(true);
    }
    return {std::move(inputs), std::move(diff), [pl, labels, outside, mc](ad::Tape<double>&, const auto& v) {
              const auto patched = apply_patch(v[1], v[0], pl);
              const std::vector<ad::Var<double>> w(v.begin() + 2, v.end());
              return pixelwise_ce(ad::softmax_channels(segnet_logits(patched.image, w, mc)), labels, outside);
            }};
  }
  throw UsageError("gradcheck: unknown check '" + name + "'");
}

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

}  // namespace

FdOutcome fd_check(const Build& build, const std::vector<Tensor64>& inputs, const std::vector<bool>& differentiable,
                   std::uint64_t seed, const FdOptions& opts) {
  if (inputs.size() != differentiable.size()) throw UsageError("fd_check: one flag per input");
  RngStream rng(seed, "fd-weights");

  ad::Tape<double> tape;
  tape.set_track_kinks(true);
  std::vector<ad::Var<double>> vars;
  for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.leaf(inputs[i], differentiable[i]));
  const auto out = build(tape, vars);
  const Tensor64 weights = uniform(rng, out.shape(), -1, 1);
  const auto loss = ad::sum(ad::mul(out, tape.constant(weights)));
  const std::uint64_t base_kinks = tape.kink_signature();
  tape.backward(loss);

  FdOutcome r;
  double diff2 = 0, a2 = 0, n2 = 0;
  std::vector<Tensor64> x = inputs;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!differentiable[k]) continue;
    const Tensor64 g = vars[k].has_grad() ? vars[k].grad() : Tensor64(inputs[k].shape());
    for (std::size_t i = 0; i < x[k].numel(); ++i) {
      const double x0 = x[k][i];
      x[k][i] = x0 + opts.step;
      const Eval plus = evaluate(build, x, weights);
      x[k][i] = x0 - opts.step;
      const Eval minus = evaluate(build, x, weights);
      x[k][i] = x0;
      if (plus.kinks != base_kinks || minus.kinks != base_kinks) {
        ++r.skipped;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2 * opts.step);
      diff2 += (g[i] - numeric) * (g[i] - numeric);
      a2 += g[i] * g[i];
      n2 += numeric * numeric;
      ++r.coords;
    }
  }
  const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-12);
  r.rel_error = (a2 == 0 && n2 == 0) ? 0.0 : std::sqrt(diff2) / denom;
  return r;
}

std::vector<std::string> gradient_check_names() {
  return {"conv2d",        "add_channel_bias",    "elementwise/add",  "elementwise/sub",     "elementwise/mul",
          "elementwise/relu", "elementwise/clamp01", "elementwise/log", "elementwise/exp",     "scale_shift",
          "softmax",       "avg_pool2",           "upsample_nearest2", "bilinear_sample",    "select",
          "pixelwise_ce",  "smoothness_loss",     "nps_loss",         "appearance_transform", "composite"};
}

CheckResult run_gradient_check(const std::string& name, const GradcheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "grad:" + name;
  res.tolerance = opts.fd.tolerance;
  for (std::size_t n = 0; n < opts.instances; ++n) {
    RngStream rng(opts.seed, "gradcheck/" + name, n);
    const Case c = make_case(name, rng);
    const FdOutcome o = fd_check(c.build, c.inputs, c.differentiable, rng.integer(0, ~0ull), opts.fd);
    ++res.instances;
    res.worst = std::max(res.worst, o.rel_error);
    // An instance whose every coordinate sat on a kink proves nothing.
    if (!(o.rel_error < opts.fd.tolerance) || o.coords == 0) ++res.failed;
  }
  res.seconds = since(t0);
  return res;
}

CheckResult check_reprojection(const GradcheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "geometry:reprojection";
  res.tolerance = opts.reprojection_tol;
  RngStream rng(opts.seed, "gradcheck/reprojection");
  while (res.instances < opts.poses) {
    Billboard bb;
    bb.center = {rng.uniform(-5, 5), rng.uniform(1, 4), rng.uniform(10, 40)};
    const double theta = rng.uniform(0.3f, 2.8f);
    bb.normal = Vec3{-std::cos(theta), 0, -std::sin(theta)};
    bb.width = rng.uniform(1, 6);
    bb.height = rng.uniform(0.5f, 3);
    const double ph = static_cast<double>(rng.integer(4, 32)), pw = static_cast<double>(rng.integer(4, 64));
    const CameraPose cam =
        CameraPose::looking({rng.uniform(-3, 3), rng.uniform(0.5f, 3), rng.uniform(-5, 5)}, rng.uniform(-0.6f, 0.6f),
                            rng.uniform(-0.2f, 0.2f), rng.uniform(50, 200), rng.uniform(50, 200), rng.uniform(20, 100),
                            rng.uniform(10, 60));
    const auto corners = bb.corners();
    bool visible = true;
    for (const Vec3& c : corners) visible = visible && project_point(cam, c).in_front;
    if (!visible) continue;
    const Homography h = billboard_homography(cam, bb, ph, pw);
    const Vec2 patch_corners[4] = {{0, 0}, {pw, 0}, {pw, ph}, {0, ph}};
    double worst = 0;
    for (int i = 0; i < 4; ++i) {
      const Vec2 a = h.apply(patch_corners[i]);
      const Projection b = project_point(cam, corners[i]);
      worst = std::max(worst, std::hypot(a.x - b.u, a.y - b.v));
    }
    ++res.instances;
    res.worst = std::max(res.worst, worst);
    if (!(worst <= opts.reprojection_tol)) ++res.failed;
  }
  res.seconds = since(t0);
  return res;
}

CheckResult check_warp_adjoint(const GradcheckOptions& opts) {
  const auto t0 = Clock::now();
  CheckResult res;
  res.name = "geometry:warp_adjoint";
  res.tolerance = opts.adjoint_tol;
  RngStream rng(opts.seed, "gradcheck/adjoint");
  while (res.instances < opts.instances) {
    const std::size_t ih = 32, iw = 64, ph = rng.integer(4, 16), pw = rng.integer(8, 24);
    PlacementSpec pl;
    try {
      if (rng.coin()) {
        pl = sample_eot_placement(rng, ih, iw, ph, pw, {0.8, 1.2}, {});
      } else {
        Billboard bb;
        bb.center = {rng.uniform(-2, 2), rng.uniform(1, 3), rng.uniform(8, 20)};
        const double theta = rng.uniform(0.6f, 2.5f);
        bb.normal = Vec3{-std::cos(theta), 0, -std::sin(theta)};
        const CameraPose cam = CameraPose::looking({0, 1.5, 0}, rng.uniform(-0.3f, 0.3f), 0, 40, 40, 32, 16);
        pl = scene_placement(cam, bb, ih, iw, ph, pw);
      }
    } catch (const PlacementError&) {
      continue;
    }
    if (pl.mask.count() == 0) continue;
    ad::Tape<float> tape;
    Tensor x(Shape{3, ph, pw}), y(Shape{3, ih, iw});
    for (float& v : x.vec()) v = rng.uniform(-1, 1);
    for (float& v : y.vec()) v = rng.uniform(-1, 1);
    const auto src = tape.leaf(x, true);
    const auto warped = ad::bilinear_sample(src, pl.coords).output;
    tape.backward(ad::sum(ad::mul(warped, tape.constant(y))));
    const Tensor& bty = src.grad();
    double lhs = 0, rhs = 0, scale = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) {
      lhs += static_cast<double>(warped.value()[i]) * y[i];
      scale += std::abs(static_cast<double>(warped.value()[i]) * y[i]);
    }
    for (std::size_t i = 0; i < x.numel(); ++i) rhs += static_cast<double>(x[i]) * bty[i];
    const double err = std::abs(lhs - rhs) / std::max(scale, 1e-12);
    ++res.instances;
    res.worst = std::max(res.worst, err);
    if (!(err < opts.adjoint_tol)) ++res.failed;
  }
  res.seconds = since(t0);
  return res;
}

std::vector<CheckResult> run_all(const GradcheckOptions& opts, const std::function<void(const CheckResult&)>& on_result) {
  std::vector<CheckResult> out;
  auto push = [&](CheckResult r) {
    if (on_result) on_result(r);
    out.push_back(std::move(r));
  };
  for (const std::string& name : gradient_check_names()) push(run_gradient_check(name, opts));
  push(check_reprojection(opts));
  push(check_warp_adjoint(opts));
  return out;
}

}  // namespace rwpatch::verify
