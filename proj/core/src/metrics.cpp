#include "rwpatch/metrics.hpp"

#include <cmath>
#include <limits>

namespace rwpatch {

ConfusionMatrix::ConfusionMatrix(std::size_t n) : n_(n), counts_(n * n, 0) {
  if (n == 0) throw ConfigError("confusion matrix: need at least one class");
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (auto c : counts_) t += c;
  return t;
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& o) {
  if (o.n_ != n_) throw DimensionError("confusion matrix: class counts differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  return *this;
}

void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt, const Mask* exclude) {
  if (pred.height != gt.height || pred.width != gt.width) throw DimensionError("accumulate: label map dims differ");
  if (exclude && (exclude->height != gt.height || exclude->width != gt.width)) {
    throw DimensionError("accumulate: exclude mask dims differ");
  }
  const std::size_t n = cm.num_classes();
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (exclude && (*exclude)[i]) continue;
    const std::size_t g = gt.data[i], p = pred.data[i];
    if (g >= n || p >= n) throw DataError("accumulate: label out of range");
    ++cm.at(g, p);
  }
}

std::vector<double> class_iou(const ConfusionMatrix& cm) {
  const std::size_t n = cm.num_classes();
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t tp = cm.at(c, c), fp = 0, fn = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (k == c) continue;
      fp += cm.at(k, c);
      fn += cm.at(c, k);
    }
    const std::uint64_t den = tp + fp + fn;
    out[c] = den == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(tp) / static_cast<double>(den);
  }
  return out;
}

std::vector<double> class_accuracy(const ConfusionMatrix& cm) {
  const std::size_t n = cm.num_classes();
  std::vector<double> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row = 0;
    for (std::size_t k = 0; k < n; ++k) row += cm.at(c, k);
    out[c] = row == 0 ? std::numeric_limits<double>::quiet_NaN()
                      : static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
  }
  return out;
}

namespace {

float nan_mean(const std::vector<double>& v) {
  double s = 0;
  std::size_t k = 0;
  for (double x : v) {
    if (std::isnan(x)) continue;
    s += x;
    ++k;
  }
  return k == 0 ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(s / static_cast<double>(k));
}

}  // namespace

float miou(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("miou: empty confusion matrix");
  return nan_mean(class_iou(cm));
}

float macc(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw UsageError("macc: empty confusion matrix");
  return nan_mean(class_accuracy(cm));
}

MetricsReport make_report(const ConfusionMatrix& cm, std::vector<float> per_image_miou) {
  MetricsReport r;
  r.iou = class_iou(cm);
  r.miou = miou(cm);
  r.macc = macc(cm);
  r.per_image_miou = std::move(per_image_miou);
  r.pixels = cm.total();
  return r;
}

}  // namespace rwpatch
