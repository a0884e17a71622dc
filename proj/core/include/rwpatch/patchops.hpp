#pragma once

// Patch pipeline: appearance transform of the patch, placement into the image
// (randomized rectangle or billboard homography) and differentiable pasting.

#include <optional>
#include <string>

#include "rwpatch/autodiff.hpp"
#include "rwpatch/geometry.hpp"
#include "rwpatch/optim.hpp"
#include "rwpatch/rng.hpp"
#include "rwpatch/tensor.hpp"

namespace rwpatch {

struct PatchState {
  Tensor delta;  // [3,H~,W~], values in [0,1]
  AdamState adam;

  std::size_t height() const { return delta.dim(1); }
  std::size_t width() const { return delta.dim(2); }
};

struct AppearanceParams {
  float noise_std = 0;
  float brightness_delta = 0;
  float contrast_delta = 0;

  /// Throws ConfigError unless every fraction lies in [0, 0.5].
  void validate() const;
  bool is_identity() const { return noise_std == 0 && brightness_delta == 0 && contrast_delta == 0; }
};

/// A sampled appearance change: clamp01(p * (1 + contrast) - 0.5 * contrast + brightness + noise).
struct AppearanceDraw {
  float contrast = 0;
  float brightness = 0;
  Tensor noise;  // empty for none, else patch-shaped
};

/// Draws contrast, brightness and noise in that order, skipping every
/// component whose range is zero (an identity transform draws nothing).
AppearanceDraw sample_appearance(const AppearanceParams& params, const Shape& patch_shape, RngStream& rng);

template <typename T>
ad::Var<T> appearance_transform(const ad::Var<T>& patch, const AppearanceDraw& draw);

template <typename T>
ad::Var<T> appearance_transform(const ad::Var<T>& patch, const AppearanceParams& params, RngStream& rng) {
  return appearance_transform(patch, sample_appearance(params, patch.shape(), rng));
}

enum class PlacementMode { eot_rect, scene_homography };

struct PlacementSpec {
  PlacementMode mode = PlacementMode::eot_rect;
  std::size_t image_h = 0, image_w = 0;
  std::size_t patch_h = 0, patch_w = 0;
  double top = 0, left = 0, scale = 1;  // eot_rect
  Homography homography;  // patch coordinates -> image coordinates (both modes)
  Mask mask;  // pixels whose pixel-center preimage falls inside the patch rectangle
  ad::SampleGrid coords;  // per-pixel source coordinates in patch texel index space

  /// Recomputes `coords` from the homography.
  ad::SampleGrid grid() const;
  std::string to_json() const;
  static PlacementSpec from_json(const std::string& text);
};

/// Axis-aligned placement: patch pixel (px, py) lands at (left + s*px, top + s*py).
/// Throws PlacementError unless the scaled patch lies inside the image.
PlacementSpec rect_placement(std::size_t image_h, std::size_t image_w, std::size_t patch_h, std::size_t patch_w,
                             double top, double left, double scale);

/// Centered rectangle at scale 1.
PlacementSpec center_placement(std::size_t image_h, std::size_t image_w, std::size_t patch_h, std::size_t patch_w);

struct ScaleRange {
  double lo = 0.8, hi = 1.2;
};

/// Where randomized rectangles are anchored. The default anchors at the image
/// center with the patch at its native size; a billboard anchor uses the
/// billboard's image bounding box.
struct EotAnchor {
  std::optional<double> center_x, center_y;
  double base_scale = 1.0;
  bool clamp_inside = false;  // shift into the image instead of failing
};

/// scale = base * U(range); center = anchor + (+-r_x * w/2, +-r_y * h/2) with
/// r_x, r_y ~ U[0,1], independent random signs and (w, h) the patch size at
/// base scale.
PlacementSpec sample_eot_placement(RngStream& rng, std::size_t image_h, std::size_t image_w, std::size_t patch_h,
                                   std::size_t patch_w, ScaleRange range, const EotAnchor& anchor = {});

/// Anchor from the axis-aligned bounding box of a projected billboard quad,
/// clipped to the image; base scale matches the box height. Nullopt when the
/// clipped box is empty.
std::optional<EotAnchor> billboard_anchor(const std::array<Vec2, 4>& quad, std::size_t image_h, std::size_t image_w,
                                          std::size_t patch_h);

/// Projective placement onto the billboard. Throws PlacementError when a
/// billboard corner is behind the camera.
PlacementSpec scene_placement(const CameraPose& camera, const Billboard& bb, std::size_t image_h,
                              std::size_t image_w, std::size_t patch_h, std::size_t patch_w);

template <typename T>
struct Patched {
  ad::Var<T> image;  // [3,H,W]
  Mask mask;
};

/// Pastes the bilinearly warped patch over `image` inside the placement mask.
/// `image` must not require gradients; outside the mask the result is the
/// input bit for bit.
template <typename T>
Patched<T> apply_patch(const ad::Var<T>& image, const ad::Var<T>& patch, const PlacementSpec& placement);

}  // namespace rwpatch
