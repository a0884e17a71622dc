#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rwpatch/error.hpp"

namespace rwpatch {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major n-dimensional array. Value semantics; no gradient slot
/// (gradients live on the tape, see autodiff.hpp).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> data);

  static BasicTensor scalar(T v) { return BasicTensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors.
  T& at(std::size_t c, std::size_t y, std::size_t x) {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  /// Throws NumericError naming `where` if any element is NaN or Inf.
  void require_finite(const std::string& where) const;
  bool all_finite() const;

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

/// Pairwise (cascade) summation; deterministic and bounded rounding drift.
template <typename T>
T pairwise_sum(std::span<const T> values);

/// Per-pixel class ids, row-major [H,W].
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w, fill) {}
  std::size_t size() const { return data.size(); }
  std::uint8_t& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
  std::uint8_t operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// Boolean pixel set over an [H,W] grid.
struct Mask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(std::size_t h, std::size_t w, bool fill = false) : height(h), width(w), data(h * w, fill ? 1 : 0) {}
  std::size_t size() const { return data.size(); }
  bool operator[](std::size_t i) const { return data[i] != 0; }
  bool operator()(std::size_t y, std::size_t x) const { return data[y * width + x] != 0; }
  void set(std::size_t i, bool v) { data[i] = v ? 1 : 0; }
  void set(std::size_t y, std::size_t x, bool v) { data[y * width + x] = v ? 1 : 0; }
  std::size_t count() const;
  Mask complement() const;
  Mask operator&(const Mask& o) const;
  Mask operator|(const Mask& o) const;
  /// this \ o
  Mask minus(const Mask& o) const;
  friend bool operator==(const Mask&, const Mask&) = default;
};

}  // namespace rwpatch
