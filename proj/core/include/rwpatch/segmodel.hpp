#pragma once

// Small encoder-decoder segmentation network:
//   e1 conv3x3 3->w0 relu | pool | e2 conv3x3 w0->w1 relu | pool |
//   m conv3x3 w1->w1 relu | up + e2 | d2 conv3x3 w1->w0 relu | up + e1 |
//   d1 conv3x3 w0->w0 relu | head conv1x1 w0->N_c | softmax

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "rwpatch/autodiff.hpp"
#include "rwpatch/optim.hpp"
#include "rwpatch/scene.hpp"
#include "rwpatch/tensor.hpp"

namespace rwpatch {

struct ModelConfig {
  std::size_t num_classes = kNumClasses;
  std::array<std::size_t, 2> widths{16, 32};
  /// 3x3 conv layers at quarter resolution.
  std::size_t mid_convs = 3;
  /// Adds a global-average-pool context vector to the quarter-resolution features.
  bool global_context = false;
  std::uint64_t seed = 0;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Weight shapes in architecture order (kernel, bias per layer).
std::vector<Shape> weight_shapes(const ModelConfig& cfg);

/// Logits [N_c,H,W] for image [3,H,W] with the given weight vars.
template <typename T>
ad::Var<T> segnet_logits(const ad::Var<T>& image, const std::vector<ad::Var<T>>& weights, const ModelConfig& cfg);

class SegModel {
 public:
  /// He-normal kernels from the (seed, "init") stream, zero biases.
  explicit SegModel(const ModelConfig& cfg);
  SegModel(const ModelConfig& cfg, std::vector<Tensor> weights);

  const ModelConfig& config() const { return cfg_; }
  const std::vector<Tensor>& weights() const { return weights_; }
  std::vector<Tensor>& weights() { return weights_; }

  /// Records the forward pass on `tape`; weights enter as constants unless
  /// `weight_vars` is given, in which case they are tracked leaves returned there.
  ad::Var<float> forward(ad::Tape<float>& tape, const ad::Var<float>& image,
                         std::vector<ad::Var<float>>* weight_vars = nullptr) const;

  /// Class probabilities [N_c,H,W].
  Tensor predict(const Tensor& image) const;
  LabelMap segment(const Tensor& image) const;

 private:
  ModelConfig cfg_;
  std::vector<Tensor> weights_;
};

/// Per-pixel argmax; ties go to the lowest class index.
LabelMap predict_labels(const Tensor& probs);

struct TrainOptions {
  std::size_t epochs = 30;
  float lr = 0.01f;
  /// Cosine decay of the per-epoch step size from lr toward 0; off keeps lr fixed.
  bool cosine_decay = true;
  std::uint64_t seed = 0;  // shuffling stream
  std::function<void(std::size_t epoch, double mean_ce)> on_epoch;
};

struct TrainResult {
  std::vector<double> epoch_loss;  // mean pixel CE per epoch
};

/// Per-image Adam steps on mean pixel-wise CE, visiting samples in a fresh
/// seeded permutation each epoch.
TrainResult train(SegModel& model, const std::vector<SceneSample>& data, const TrainOptions& opts);

/// JSON header line, then PFT1 tensors in architecture order.
void save_weights(const SegModel& model, const std::filesystem::path& path);
std::string serialize_weights(const SegModel& model);
/// Throws FormatError on a malformed or truncated file and DimensionError when
/// the stored architecture differs from `expected` (if given).
SegModel load_weights(const std::filesystem::path& path, const ModelConfig* expected = nullptr);

}  // namespace rwpatch
