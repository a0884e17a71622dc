#include "rwpatch/tensor.hpp"

#include <cmath>
#include <sstream>

namespace rwpatch {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor: shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " elements");
  }
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  // x * 0 is NaN exactly when x is NaN or infinite; the loop vectorizes.
  T acc = T(0);
  for (T v : data_) acc += v * T(0);
  return acc == T(0);
}

template <typename T>
void BasicTensor<T>::require_finite(const std::string& where) const {
  if (all_finite()) return;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError(where + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

template <typename T>
T pairwise_sum(std::span<const T> v) {
  constexpr std::size_t kBlock = 32;
  if (v.size() <= kBlock) {
    T acc = T(0);
    for (T x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template float pairwise_sum<float>(std::span<const float>);
template double pairwise_sum<double>(std::span<const double>);

std::size_t Mask::count() const {
  std::size_t n = 0;
  for (auto v : data) n += v ? 1 : 0;
  return n;
}

Mask Mask::complement() const {
  Mask out(height, width);
  for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = data[i] ? 0 : 1;
  return out;
}

namespace {
void require_same(const Mask& a, const Mask& b) {
  if (a.height != b.height || a.width != b.width) throw DimensionError("mask: shape mismatch");
}
}  // namespace

Mask Mask::operator&(const Mask& o) const {
  require_same(*this, o);
  Mask out(height, width);
  for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = (data[i] && o.data[i]) ? 1 : 0;
  return out;
}

Mask Mask::operator|(const Mask& o) const {
  require_same(*this, o);
  Mask out(height, width);
  for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = (data[i] || o.data[i]) ? 1 : 0;
  return out;
}

Mask Mask::minus(const Mask& o) const {
  require_same(*this, o);
  Mask out(height, width);
  for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = (data[i] && !o.data[i]) ? 1 : 0;
  return out;
}

}  // namespace rwpatch
