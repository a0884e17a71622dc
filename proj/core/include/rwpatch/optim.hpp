#pragma once

#include <cstdint>

#include "rwpatch/tensor.hpp"

namespace rwpatch {

struct AdamParams {
  float lr = 0.01f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// First/second moment buffers and step counter for one parameter tensor.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t t = 0;

  AdamState() = default;
  explicit AdamState(const Shape& shape) : m(shape), v(shape) {}
};

/// One bias-corrected Adam step on `param`. `ascend` flips the update
/// direction, for maximizing an objective.
void adam_step(Tensor& param, const Tensor& grad, AdamState& state, const AdamParams& hp, bool ascend = false);

}  // namespace rwpatch
