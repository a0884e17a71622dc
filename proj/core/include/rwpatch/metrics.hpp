#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwpatch/tensor.hpp"

namespace rwpatch {

/// Rows are ground truth, columns are predictions.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return n_; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * n_ + pred]; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  std::uint64_t total() const;
  ConfusionMatrix& operator+=(const ConfusionMatrix& o);
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_;
  std::vector<std::uint64_t> counts_;
};

/// Counts every pixel not in `exclude`. Throws DataError for labels >= N_c.
void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt, const Mask* exclude = nullptr);

/// Per-class IoU TP/(TP+FP+FN); NaN for classes absent from both gt and pred.
std::vector<double> class_iou(const ConfusionMatrix& cm);
/// Per-class accuracy TP/(TP+FN); NaN for classes absent from gt.
std::vector<double> class_accuracy(const ConfusionMatrix& cm);
/// Means over non-NaN classes. Throw UsageError on an empty matrix.
float miou(const ConfusionMatrix& cm);
float macc(const ConfusionMatrix& cm);

inline constexpr const char* kAbsentClassPolicy = "absent-classes-excluded";

struct MetricsReport {
  std::vector<double> iou;
  float miou = 0;
  float macc = 0;
  std::vector<float> per_image_miou;
  std::string policy = kAbsentClassPolicy;
  std::uint64_t pixels = 0;
};

MetricsReport make_report(const ConfusionMatrix& cm, std::vector<float> per_image_miou = {});

}  // namespace rwpatch
