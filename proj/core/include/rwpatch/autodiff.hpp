#pragma once

// Minimal reverse-mode automatic differentiation over BasicTensor<T>.
//
// A Tape records every operation in creation order, so node ids are already a
// topological order; backward() walks them once in reverse. Ops that have no
// input requiring a gradient record no backward rule at all, which is what
// keeps attack-time backward passes from touching frozen model weights.
//
// Everything is templated on the scalar type. The production path is float;
// the double instantiation exists so finite-difference checks can run without
// 32-bit rounding noise swamping the comparison.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rwpatch/tensor.hpp"

namespace rwpatch::ad {

template <typename T>
class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const BasicTensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Gradient after backward(); throws UsageError when none was produced.
  const BasicTensor<T>& grad() const;
  bool has_grad() const;
  bool requires_grad() const;

  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t node)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(BasicTensor<T> value, bool requires_grad);
  Var<T> constant(BasicTensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op node. `value` is checked for NaN/Inf. `fn` is dropped when
  /// no input requires a gradient.
  Var<T> record(std::string op, BasicTensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn);

  /// Populates gradients of every requires_grad node reachable from `loss`.
  /// A second call without zero_grad() is a UsageError.
  void backward(const Var<T>& loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }
  const BasicTensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.has_value(); }
  const BasicTensor<T>& grad(std::size_t id) const;
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  /// Zero-initialised on first access. Backward rules accumulate into this.
  BasicTensor<T>& grad_slot(std::size_t id);

  /// When enabled, piecewise ops (relu, clamp01) fold which side of each kink
  /// their inputs sit on into kink_signature(). The finite-difference harness
  /// uses it to detect perturbations that cross a kink.
  void set_track_kinks(bool on) { track_kinks_ = on; }
  bool track_kinks() const { return track_kinks_; }
  void fold_kink(std::uint64_t v);
  std::uint64_t kink_signature() const { return kink_sig_; }

 private:
  struct Node {
    std::string op;
    BasicTensor<T> value;
    std::optional<BasicTensor<T>> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
  bool track_kinks_ = false;
  std::uint64_t kink_sig_ = 1469598103934665603ull;
};

// ---------------------------------------------------------------------------
// Fault injection for mutation-testing the gradient checker.

enum class Fault { none, conv_backward_sign_flip };
void inject_fault(Fault f);
Fault active_fault();

// ---------------------------------------------------------------------------
// Operations.

/// input [C_in,H,W], kernel [C_out,C_in,kH,kW] -> [C_out,H',W'].
template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, int stride = 1, int padding = 0);

/// x [C,H,W] + bias [C] broadcast over pixels.
template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias);

enum class ElementwiseOp { add, sub, mul, relu, clamp01, log, exp };

/// Binary ops need equal shapes, or one operand with a single element
/// (scalar broadcast). Unary ops ignore `b`.
template <typename T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a, const std::optional<Var<T>>& b = std::nullopt);

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b) { return elementwise<T>(ElementwiseOp::add, a, b); }
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b) { return elementwise<T>(ElementwiseOp::sub, a, b); }
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b) { return elementwise<T>(ElementwiseOp::mul, a, b); }
template <typename T> Var<T> relu(const Var<T>& a) { return elementwise<T>(ElementwiseOp::relu, a); }
template <typename T> Var<T> clamp01(const Var<T>& a) { return elementwise<T>(ElementwiseOp::clamp01, a); }
template <typename T> Var<T> log(const Var<T>& a) { return elementwise<T>(ElementwiseOp::log, a); }
template <typename T> Var<T> exp(const Var<T>& a) { return elementwise<T>(ElementwiseOp::exp, a); }

/// a * s for a constant s.
template <typename T>
Var<T> scale(const Var<T>& a, T s);
/// a + s for a constant s.
template <typename T>
Var<T> add_scalar(const Var<T>& a, T s);

/// Per-pixel softmax over the channel axis of [N_c,H,W] logits.
template <typename T>
Var<T> softmax_channels(const Var<T>& logits);

/// 2x2 average pooling, [C,H,W] -> [C,H/2,W/2]. H and W must be even.
template <typename T>
Var<T> avg_pool2(const Var<T>& x);

/// Nearest-neighbour 2x upsampling, [C,H,W] -> [C,2H,2W].
template <typename T>
Var<T> upsample_nearest2(const Var<T>& x);

/// Per-channel mean over all pixels: [C,H,W] -> [C,1,1].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// Same elements, new shape.
template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape);

/// Sum of all elements (pairwise), rank-0 result.
template <typename T>
Var<T> sum(const Var<T>& x);
template <typename T>
Var<T> mean(const Var<T>& x);

/// Per-output-pixel source coordinates in src texel index space: texel (i,j)
/// has its center at (x=j, y=i).
struct SampleGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> x;
  std::vector<float> y;

  SampleGrid() = default;
  SampleGrid(std::size_t h, std::size_t w) : height(h), width(w), x(h * w, 0.f), y(h * w, 0.f) {}
  static SampleGrid identity(std::size_t h, std::size_t w);
};

/// Coverage rule shared by bilinear_sample and placement masks: the
/// coordinate lies in [-0.5, ws-0.5) x [-0.5, hs-0.5).
inline bool sample_covered(float x, float y, std::size_t hs, std::size_t ws) {
  return x >= -0.5f && x < static_cast<float>(ws) - 0.5f && y >= -0.5f && y < static_cast<float>(hs) - 0.5f;
}

template <typename T>
struct SampleResult {
  Var<T> output;  // [C,H,W]; zero where uncovered
  Mask coverage;  // [H,W]
};

/// Bilinear interpolation of src [C,Hs,Ws] at the grid's coordinates. A sample
/// is covered when its coordinate lies in the texel-area rectangle
/// [-0.5, Ws-0.5) x [-0.5, Hs-0.5); neighbours are clamped to the edge there.
template <typename T>
SampleResult<T> bilinear_sample(const Var<T>& src, const SampleGrid& grid);

/// Per pixel, channels of `a` where mask is set, else channels of `b`.
/// Shapes [C,H,W] with mask [H,W].
template <typename T>
Var<T> select(const Mask& mask, const Var<T>& a, const Var<T>& b);

}  // namespace rwpatch::ad
