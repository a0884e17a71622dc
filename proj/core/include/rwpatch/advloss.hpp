#pragma once

// Attack losses: pixel-wise cross-entropy, the split of non-patch pixels into
// still-correct and already-wrong sets, gradient blending, and the patch
// regularizers (total variation and non-printability).

#include <array>
#include <string>
#include <vector>

#include "rwpatch/autodiff.hpp"
#include "rwpatch/tensor.hpp"

namespace rwpatch {

inline constexpr double kProbFloor = 1e-12;

/// Sum over `pixels` of -log(max(probs[label_i, i], 1e-12)). probs is
/// [N_c,H,W]. An empty set yields 0 with zero gradient.
template <typename T>
ad::Var<T> ce_sum(const ad::Var<T>& probs, const LabelMap& labels, const Mask& pixels);

/// Mean of the same terms. Throws SetEmptyError for an empty set.
template <typename T>
ad::Var<T> pixelwise_ce(const ad::Var<T>& probs, const LabelMap& labels, const Mask& pixels);

/// Non-patch pixels whose prediction still matches the ground truth.
Mask correct_set(const LabelMap& pred, const LabelMap& gt, const Mask& patch_mask);

template <typename T>
struct SplitLosses {
  ad::Var<T> correct;  // summed CE over the correct set
  ad::Var<T> wrong;    // summed CE over the remaining non-patch pixels
};

template <typename T>
SplitLosses<T> split_losses(const ad::Var<T>& probs, const LabelMap& labels, const Mask& correct,
                            const Mask& patch_mask);

/// gamma * gc/|gc| + (1-gamma) * gw/|gw|, norms over the flattened tensors,
/// each guarded below by 1e-12.
Tensor combined_gradient(const Tensor& g_correct, const Tensor& g_wrong, float gamma);

/// |correct| / |N \ patch|. Throws ConfigError when the patch covers the image.
float adaptive_gamma(const Mask& correct, const Mask& patch_mask);

/// Squared differences between vertical and horizontal neighbours, summed over
/// channels and divided by the number of patch pixels H~*W~.
template <typename T>
ad::Var<T> smoothness_loss(const ad::Var<T>& patch);

struct PrintableColorSet {
  std::vector<std::array<float, 3>> colors;

  /// 27-color lattice over {0.1, 0.45, 0.8} plus black, white and mid-gray.
  static PrintableColorSet defaults();
  /// Throws ConfigError unless non-empty with components in [0,1].
  void validate() const;
};

/// JSON array of [r,g,b] triplets.
PrintableColorSet parse_color_set(const std::string& json_text);

/// Mean over patch pixels of the product over colors of ||pixel - color||^2.
template <typename T>
ad::Var<T> nps_loss(const ad::Var<T>& patch, const PrintableColorSet& colors);

enum class BaselineMode { gamma_split, ce_full_n, ce_excluding_patch };
enum class GammaMode { fixed, adaptive };

struct LossConfig {
  BaselineMode baseline = BaselineMode::gamma_split;
  GammaMode gamma_mode = GammaMode::adaptive;
  float gamma = 0.8f;  // used when gamma_mode == fixed
  float lambda_smooth = 0.01f;
  float lambda_nps = 0.01f;

  void validate() const;
  /// Short tag for file names and tables, e.g. "adaptive", "gamma0.8", "ce_full_N".
  std::string tag() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

}  // namespace rwpatch
