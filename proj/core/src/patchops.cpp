#include "rwpatch/patchops.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "rwpatch/invariant.hpp"

namespace rwpatch {

void AppearanceParams::validate() const {
  for (float v : {noise_std, brightness_delta, contrast_delta}) {
    if (!(v >= 0.f && v <= 0.5f)) throw ConfigError("appearance: ranges must lie in [0, 0.5]");
  }
}

AppearanceDraw sample_appearance(const AppearanceParams& params, const Shape& patch_shape, RngStream& rng) {
  params.validate();
  AppearanceDraw d;
  if (params.contrast_delta > 0) d.contrast = rng.uniform(-params.contrast_delta, params.contrast_delta);
  if (params.brightness_delta > 0) d.brightness = rng.uniform(-params.brightness_delta, params.brightness_delta);
  if (params.noise_std > 0) {
    d.noise = Tensor(patch_shape);
    for (float& v : d.noise.vec()) v = rng.normal(0.f, params.noise_std);
  }
  return d;
}

template <typename T>
ad::Var<T> appearance_transform(const ad::Var<T>& patch, const AppearanceDraw& d) {
  if (d.contrast == 0 && d.brightness == 0 && d.noise.empty()) return patch;
  ad::Tape<T>& tape = *patch.tape();
  auto out = ad::add_scalar(ad::scale(patch, static_cast<T>(1) + static_cast<T>(d.contrast)),
                            static_cast<T>(d.brightness) - static_cast<T>(0.5) * static_cast<T>(d.contrast));
  if (!d.noise.empty()) {
    if (d.noise.shape() != patch.shape()) throw DimensionError("appearance: noise shape differs from patch");
    out = ad::add(out, tape.constant(d.noise.template cast<T>()));
  }
  return ad::clamp01(out);
}

template ad::Var<float> appearance_transform<float>(const ad::Var<float>&, const AppearanceDraw&);
template ad::Var<double> appearance_transform<double>(const ad::Var<double>&, const AppearanceDraw&);

// ---------------------------------------------------------------------------
// Placement

namespace {

void finish(PlacementSpec& p) {
  p.coords = p.grid();
  p.mask = Mask(p.image_h, p.image_w);
  for (std::size_t i = 0; i < p.mask.size(); ++i) {
    p.mask.set(i, ad::sample_covered(p.coords.x[i], p.coords.y[i], p.patch_h, p.patch_w));
  }
}

void check_dims(std::size_t ih, std::size_t iw, std::size_t ph, std::size_t pw) {
  if (ih == 0 || iw == 0 || ph == 0 || pw == 0) throw DimensionError("placement: empty image or patch");
  if (ph >= ih || pw >= iw) throw DimensionError("placement: patch must be smaller than the image");
}

}  // namespace

ad::SampleGrid PlacementSpec::grid() const {
  ad::SampleGrid g(image_h, image_w);
  const Mat3 inv = homography.h.inverse();
  constexpr float kFar = -1e9f;
  for (std::size_t r = 0; r < image_h; ++r) {
    for (std::size_t c = 0; c < image_w; ++c) {
      const Vec3 q = inv * Vec3{static_cast<double>(c) + 0.5, static_cast<double>(r) + 0.5, 1.0};
      const std::size_t i = r * image_w + c;
      // q.z is the inverse depth of the preimage; non-positive means behind the camera.
      if (!(q.z > 1e-12)) {
        g.x[i] = g.y[i] = kFar;
        continue;
      }
      const double x = q.x / q.z - 0.5, y = q.y / q.z - 0.5;
      g.x[i] = static_cast<float>(std::clamp(x, -1e9, 1e9));
      g.y[i] = static_cast<float>(std::clamp(y, -1e9, 1e9));
    }
  }
  return g;
}

std::string PlacementSpec::to_json() const {
  nlohmann::json j;
  j["mode"] = mode == PlacementMode::eot_rect ? "eot_rect" : "scene_homography";
  j["image"] = {image_h, image_w};
  j["patch"] = {patch_h, patch_w};
  if (mode == PlacementMode::eot_rect) {
    j["top"] = top;
    j["left"] = left;
    j["scale"] = scale;
  } else {
    j["homography"] = homography.h.m;
  }
  return j.dump();
}

PlacementSpec PlacementSpec::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string mode = j.at("mode").get<std::string>();
    const std::size_t ih = j.at("image").at(0).get<std::size_t>(), iw = j.at("image").at(1).get<std::size_t>();
    const std::size_t ph = j.at("patch").at(0).get<std::size_t>(), pw = j.at("patch").at(1).get<std::size_t>();
    if (mode == "eot_rect") {
      return rect_placement(ih, iw, ph, pw, j.at("top").get<double>(), j.at("left").get<double>(),
                            j.at("scale").get<double>());
    }
    if (mode != "scene_homography") throw ConfigError("placement: unknown mode '" + mode + "'");
    check_dims(ih, iw, ph, pw);
    PlacementSpec p;
    p.mode = PlacementMode::scene_homography;
    p.image_h = ih;
    p.image_w = iw;
    p.patch_h = ph;
    p.patch_w = pw;
    p.homography.h.m = j.at("homography").get<std::array<double, 9>>();
    finish(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("placement: ") + e.what());
  }
}

PlacementSpec rect_placement(std::size_t ih, std::size_t iw, std::size_t ph, std::size_t pw, double top, double left,
                             double scale) {
  check_dims(ih, iw, ph, pw);
  if (!(scale > 0)) throw PlacementError("placement: scale must be positive");
  constexpr double kSlack = 1e-9;
  if (top < -kSlack || left < -kSlack || top + scale * static_cast<double>(ph) > static_cast<double>(ih) + kSlack ||
      left + scale * static_cast<double>(pw) > static_cast<double>(iw) + kSlack) {
    throw PlacementError("placement: scaled patch exceeds the image bounds");
  }
  PlacementSpec p;
  p.mode = PlacementMode::eot_rect;
  p.image_h = ih;
  p.image_w = iw;
  p.patch_h = ph;
  p.patch_w = pw;
  p.top = top;
  p.left = left;
  p.scale = scale;
  p.homography.h.m = {scale, 0, left, 0, scale, top, 0, 0, 1};
  finish(p);
  return p;
}

PlacementSpec center_placement(std::size_t ih, std::size_t iw, std::size_t ph, std::size_t pw) {
  return rect_placement(ih, iw, ph, pw, std::floor((static_cast<double>(ih) - static_cast<double>(ph)) / 2),
                        std::floor((static_cast<double>(iw) - static_cast<double>(pw)) / 2), 1.0);
}

PlacementSpec sample_eot_placement(RngStream& rng, std::size_t ih, std::size_t iw, std::size_t ph, std::size_t pw,
                                   ScaleRange range, const EotAnchor& anchor) {
  check_dims(ih, iw, ph, pw);
  if (!(range.lo >= 0.5 && range.hi <= 1.5 && range.lo <= range.hi)) {
    throw ConfigError("placement: scale range must lie within [0.5, 1.5]");
  }
  const double base = anchor.base_scale;
  if (!(base > 0)) throw ConfigError("placement: anchor base scale must be positive");
  const double s = base * static_cast<double>(rng.uniform(static_cast<float>(range.lo), static_cast<float>(range.hi)));
  const double rx = rng.uniform(), sx = rng.coin() ? 1.0 : -1.0;
  const double ry = rng.uniform(), sy = rng.coin() ? 1.0 : -1.0;
  const double cx = anchor.center_x.value_or(static_cast<double>(iw) / 2) + sx * rx * base * static_cast<double>(pw) / 2;
  const double cy = anchor.center_y.value_or(static_cast<double>(ih) / 2) + sy * ry * base * static_cast<double>(ph) / 2;
  const double w = s * static_cast<double>(pw), h = s * static_cast<double>(ph);
  double left = cx - w / 2, top = cy - h / 2;
  if (anchor.clamp_inside) {
    if (w > static_cast<double>(iw) || h > static_cast<double>(ih)) {
      throw PlacementError("placement: scaled patch is larger than the image");
    }
    left = std::clamp(left, 0.0, static_cast<double>(iw) - w);
    top = std::clamp(top, 0.0, static_cast<double>(ih) - h);
  }
  return rect_placement(ih, iw, ph, pw, top, left, s);
}

std::optional<EotAnchor> billboard_anchor(const std::array<Vec2, 4>& quad, std::size_t ih, std::size_t iw,
                                          std::size_t ph) {
  double x0 = quad[0].x, x1 = quad[0].x, y0 = quad[0].y, y1 = quad[0].y;
  for (const Vec2& p : quad) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  x0 = std::max(x0, 0.0);
  y0 = std::max(y0, 0.0);
  x1 = std::min(x1, static_cast<double>(iw));
  y1 = std::min(y1, static_cast<double>(ih));
  if (!(x1 > x0) || !(y1 > y0)) return std::nullopt;
  EotAnchor a;
  a.center_x = (x0 + x1) / 2;
  a.center_y = (y0 + y1) / 2;
  a.base_scale = (y1 - y0) / static_cast<double>(ph);
  a.clamp_inside = true;
  return a;
}

PlacementSpec scene_placement(const CameraPose& camera, const Billboard& bb, std::size_t ih, std::size_t iw,
                              std::size_t ph, std::size_t pw) {
  check_dims(ih, iw, ph, pw);
  PlacementSpec p;
  p.mode = PlacementMode::scene_homography;
  p.image_h = ih;
  p.image_w = iw;
  p.patch_h = ph;
  p.patch_w = pw;
  p.homography = billboard_homography(camera, bb, static_cast<double>(ph), static_cast<double>(pw));
  finish(p);
  return p;
}

// ---------------------------------------------------------------------------
// Pasting

template <typename T>
Patched<T> apply_patch(const ad::Var<T>& image, const ad::Var<T>& patch, const PlacementSpec& pl) {
  const Shape& is = image.shape();
  const Shape& ps = patch.shape();
  if (is.size() != 3 || is[0] != 3 || is[1] != pl.image_h || is[2] != pl.image_w) {
    throw DimensionError("apply_patch: image shape " + shape_str(is) + " does not match the placement");
  }
  if (ps.size() != 3 || ps[0] != 3 || ps[1] != pl.patch_h || ps[2] != pl.patch_w) {
    throw DimensionError("apply_patch: patch shape " + shape_str(ps) + " does not match the placement");
  }
  if (image.requires_grad()) throw UsageError("apply_patch: the image must not require gradients");
  auto warped = ad::bilinear_sample(patch, pl.coords);
  auto out = ad::select(pl.mask, warped.output, image);
  if constexpr (kCheckInvariants) {
    check_invariant(warped.coverage == pl.mask, "patch mask differs from warp coverage");
    const auto& x = image.value();
    const auto& y = out.value();
    const std::size_t plane = pl.image_h * pl.image_w;
    bool same = true;
    for (std::size_t c = 0; c < 3 && same; ++c)
      for (std::size_t i = 0; i < plane; ++i)
        if (!pl.mask[i] && y[c * plane + i] != x[c * plane + i]) {
          same = false;
          break;
        }
    check_invariant(same, "patched image differs from the input outside the patch mask");
  }
  return {out, pl.mask};
}

template Patched<float> apply_patch<float>(const ad::Var<float>&, const ad::Var<float>&, const PlacementSpec&);
template Patched<double> apply_patch<double>(const ad::Var<double>&, const ad::Var<double>&, const PlacementSpec&);

}  // namespace rwpatch
