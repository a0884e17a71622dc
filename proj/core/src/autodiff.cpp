#include "rwpatch/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <memory>

#include <Eigen/Core>

namespace rwpatch::ad {

namespace {

std::atomic<Fault> g_fault{Fault::none};

template <typename T>
Tape<T>& tape_of(const Var<T>& a) {
  if (!a.valid()) throw UsageError("autodiff: use of an empty Var");
  return *a.tape();
}

template <typename T>
Tape<T>& same_tape(const Var<T>& a, const Var<T>& b) {
  if (a.tape() != b.tape()) throw UsageError("autodiff: operands recorded on different tapes");
  return tape_of(a);
}

void require_rank(const Shape& s, std::size_t rank, const char* op) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(s));
  }
}

}  // namespace

void inject_fault(Fault f) { g_fault.store(f); }
Fault active_fault() { return g_fault.load(); }

// ---------------------------------------------------------------------------
// Var / Tape

template <typename T>
const BasicTensor<T>& Var<T>::value() const {
  return tape_of(*this).value(id_);
}

template <typename T>
const BasicTensor<T>& Var<T>::grad() const {
  return tape_of(*this).grad(id_);
}

template <typename T>
bool Var<T>::has_grad() const {
  return tape_of(*this).has_grad(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_of(*this).requires_grad(id_);
}

template <typename T>
Var<T> Tape<T>::leaf(BasicTensor<T> value, bool requires_grad) {
  value.require_finite("leaf tensor");
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(std::string op, BasicTensor<T> value, std::vector<std::size_t> inputs, BackwardFn fn) {
  const std::size_t id = nodes_.size();
  value.require_finite("op '" + op + "' (node " + std::to_string(id) + ")");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (std::size_t in : inputs) {
    if (in >= id) throw UsageError("autodiff: op input does not precede the op");
    n.requires_grad = n.requires_grad || nodes_[in].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var<T>(this, id);
}

template <typename T>
const BasicTensor<T>& Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (!n.grad) throw UsageError("autodiff: node " + std::to_string(id) + " ('" + n.op + "') has no gradient");
  return *n.grad;
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_slot(std::size_t id) {
  Node& n = nodes_.at(id);
  if (!n.grad) n.grad = BasicTensor<T>(n.value.shape(), T(0));
  return *n.grad;
}

template <typename T>
void Tape<T>::fold_kink(std::uint64_t v) {
  kink_sig_ ^= v;
  kink_sig_ *= 1099511628211ull;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw UsageError("backward: loss belongs to another tape");
  if (backward_done_) throw UsageError("backward: already run on this tape; call zero_grad() first");
  const std::size_t root = loss.id();
  if (nodes_.at(root).value.numel() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " + shape_str(nodes_[root].value.shape()));
  }
  if (!nodes_[root].requires_grad) throw UsageError("backward: loss does not depend on any tracked input");
  backward_done_ = true;
  grad_slot(root).vec()[0] = T(1);
  for (std::size_t k = root + 1; k-- > 0;) {
    Node& n = nodes_[k];
    if (!n.grad) continue;
    n.grad->require_finite("gradient at op '" + n.op + "' (node " + std::to_string(k) + ")");
    if (n.backward) n.backward(*this, k);
  }
  for (Node& n : nodes_) {
    if (n.requires_grad && !n.grad && n.inputs.empty()) n.grad = BasicTensor<T>(n.value.shape(), T(0));
  }
}

template <typename T>
void Tape<T>::zero_grad() {
  for (Node& n : nodes_) n.grad.reset();
  backward_done_ = false;
}

// ---------------------------------------------------------------------------
// conv2d

namespace {

template <typename T>
struct ConvGeom {
  std::size_t cin, h, w, cout, kh, kw, oh, ow;
  int stride, pad;
};

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool is_pointwise(const ConvGeom<T>& g) {
  return g.kh == 1 && g.kw == 1 && g.stride == 1 && g.pad == 0;
}

// Column matrix [C_in*kH*kW, oH*oW]; out-of-image taps are zero.
template <typename T>
void im2col(const ConvGeom<T>& g, const T* in, T* col) {
  const auto H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const auto OH = static_cast<long>(g.oh), OW = static_cast<long>(g.ow);
  const long s = g.stride, p = g.pad;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const T* ip = in + ci * g.h * g.w;
    for (long ky = 0; ky < static_cast<long>(g.kh); ++ky) {
      for (long kx = 0; kx < static_cast<long>(g.kw); ++kx) {
        T* __restrict row = col + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        for (long oy = 0; oy < OH; ++oy) {
          T* __restrict dst = row + oy * OW;
          const long iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) {
            std::fill(dst, dst + OW, T(0));
            continue;
          }
          const T* __restrict irow = ip + iy * W;
          if (s == 1) {
            const long lo = std::clamp(p - kx, 0L, OW);
            const long hi = std::clamp(W + p - kx, lo, OW);
            std::fill(dst, dst + lo, T(0));
            for (long ox = lo; ox < hi; ++ox) dst[ox] = irow[ox + kx - p];
            std::fill(dst + hi, dst + OW, T(0));
          } else {
            for (long ox = 0; ox < OW; ++ox) {
              const long ix = ox * s + kx - p;
              dst[ox] = (ix >= 0 && ix < W) ? irow[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const ConvGeom<T>& g, const T* col, T* gin) {
  const auto H = static_cast<long>(g.h), W = static_cast<long>(g.w);
  const auto OH = static_cast<long>(g.oh), OW = static_cast<long>(g.ow);
  const long s = g.stride, p = g.pad;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    T* gp = gin + ci * g.h * g.w;
    for (long ky = 0; ky < static_cast<long>(g.kh); ++ky) {
      for (long kx = 0; kx < static_cast<long>(g.kw); ++kx) {
        const T* __restrict row = col + ((ci * g.kh + ky) * g.kw + kx) * g.oh * g.ow;
        for (long oy = 0; oy < OH; ++oy) {
          const long iy = oy * s + ky - p;
          if (iy < 0 || iy >= H) continue;
          const T* __restrict src = row + oy * OW;
          T* __restrict grow = gp + iy * W;
          if (s == 1) {
            const long lo = std::clamp(p - kx, 0L, OW);
            const long hi = std::clamp(W + p - kx, lo, OW);
            for (long ox = lo; ox < hi; ++ox) grow[ox + kx - p] += src[ox];
          } else {
            for (long ox = 0; ox < OW; ++ox) {
              const long ix = ox * s + kx - p;
              if (ix >= 0 && ix < W) grow[ix] += src[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& input, const Var<T>& kernel, int stride, int padding) {
  Tape<T>& t = same_tape(input, kernel);
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  require_rank(is, 3, "conv2d input");
  require_rank(ks, 4, "conv2d kernel");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  if (padding < 0) throw DimensionError("conv2d: padding must be >= 0");
  if (ks[1] != is[0]) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(ks[1]) + " input channels, input has " +
                         std::to_string(is[0]));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0) throw DimensionError("conv2d: kernel extent must be odd");
  const long eh = static_cast<long>(is[1]) + 2L * padding - static_cast<long>(ks[2]);
  const long ew = static_cast<long>(is[2]) + 2L * padding - static_cast<long>(ks[3]);
  if (eh < 0 || ew < 0) throw DimensionError("conv2d: kernel larger than padded input");
  ConvGeom<T> g{is[0], is[1], is[2], ks[0], ks[2], ks[3],
                static_cast<std::size_t>(eh / stride + 1), static_cast<std::size_t>(ew / stride + 1), stride, padding};

  const std::size_t K = g.cin * g.kh * g.kw, P = g.oh * g.ow;
  const T* in = input.value().data().data();
  std::shared_ptr<std::vector<T>> col;
  if (!is_pointwise(g)) {
    col = std::make_shared<std::vector<T>>(K * P);
    im2col(g, in, col->data());
  }
  const T* colp = col ? col->data() : in;
  BasicTensor<T> out(Shape{g.cout, g.oh, g.ow}, T(0));
  MatMap<T>(out.data().data(), g.cout, P).noalias() =
      ConstMatMap<T>(kernel.value().data().data(), g.cout, K) * ConstMatMap<T>(colp, K, P);

  const std::size_t xi = input.id(), ki = kernel.id();
  if (!kernel.requires_grad()) col.reset();
  return t.record("conv2d", std::move(out), {xi, ki}, [g, xi, ki, col, K, P](Tape<T>& tp, std::size_t self) {
    const T sign = active_fault() == Fault::conv_backward_sign_flip ? T(-1) : T(1);
    const ConstMatMap<T> go(tp.grad(self).data().data(), g.cout, P);
    if (tp.requires_grad(xi)) {
      const ConstMatMap<T> w(tp.value(ki).data().data(), g.cout, K);
      T* gin = tp.grad_slot(xi).data().data();
      if (is_pointwise(g)) {
        MatMap<T>(gin, K, P).noalias() += sign * (w.transpose() * go);
      } else {
        RowMat<T> gcol = sign * (w.transpose() * go);
        col2im_add(g, gcol.data(), gin);
      }
    }
    if (tp.requires_grad(ki)) {
      const T* cp = col ? col->data() : tp.value(xi).data().data();
      MatMap<T>(tp.grad_slot(ki).data().data(), g.cout, K).noalias() += sign * (go * ConstMatMap<T>(cp, K, P).transpose());
    }
  });
}

template <typename T>
Var<T> add_channel_bias(const Var<T>& x, const Var<T>& bias) {
  Tape<T>& t = same_tape(x, bias);
  const Shape& xs = x.shape();
  require_rank(xs, 3, "add_channel_bias");
  if (bias.value().numel() != xs[0]) throw DimensionError("add_channel_bias: bias size != channel count");
  const std::size_t plane = xs[1] * xs[2];
  BasicTensor<T> out = x.value();
  for (std::size_t c = 0; c < xs[0]; ++c) {
    const T b = bias.value()[c];
    T* o = out.data().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) o[i] += b;
  }
  const std::size_t xi = x.id(), bi = bias.id();
  const std::size_t channels = xs[0];
  return t.record("add_channel_bias", std::move(out), {xi, bi},
                  [xi, bi, plane, channels](Tape<T>& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    if (tp.requires_grad(xi)) {
                      auto& gx = tp.grad_slot(xi);
                      for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
                    }
                    if (tp.requires_grad(bi)) {
                      auto& gb = tp.grad_slot(bi);
                      for (std::size_t c = 0; c < channels; ++c) {
                        gb[c] += pairwise_sum<T>(g.data().subspan(c * plane, plane));
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// elementwise

namespace {

const char* op_label(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::add: return "add";
    case ElementwiseOp::sub: return "sub";
    case ElementwiseOp::mul: return "mul";
    case ElementwiseOp::relu: return "relu";
    case ElementwiseOp::clamp01: return "clamp01";
    case ElementwiseOp::log: return "log";
    case ElementwiseOp::exp: return "exp";
  }
  return "?";
}

// Reduces a full-size gradient onto a possibly single-element operand.
template <typename T>
void accumulate_broadcast(BasicTensor<T>& dst, const std::vector<T>& g) {
  if (dst.numel() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  } else {
    dst[0] += pairwise_sum<T>(std::span<const T>(g));
  }
}

template <typename T>
Var<T> binary(ElementwiseOp op, const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const bool a_scalar = av.numel() == 1 && bv.numel() != 1;
  const bool b_scalar = !a_scalar && bv.numel() == 1 && av.shape() != bv.shape();
  if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
    throw DimensionError(std::string(op_label(op)) + ": shape mismatch " + shape_str(av.shape()) + " vs " +
                         shape_str(bv.shape()));
  }
  const Shape& out_shape = a_scalar ? bv.shape() : av.shape();
  const std::size_t n = shape_numel(out_shape);
  BasicTensor<T> out(out_shape, T(0));
  auto A = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
  auto B = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
  for (std::size_t i = 0; i < n; ++i) {
    switch (op) {
      case ElementwiseOp::add: out[i] = A(i) + B(i); break;
      case ElementwiseOp::sub: out[i] = A(i) - B(i); break;
      default: out[i] = A(i) * B(i); break;
    }
  }
  const std::size_t ai = a.id(), bi = b.id();
  return t.record(op_label(op), std::move(out), {ai, bi},
                  [op, ai, bi, a_scalar, b_scalar, n](Tape<T>& tp, std::size_t self) {
                    const auto& g = tp.grad(self);
                    const auto& av = tp.value(ai);
                    const auto& bv = tp.value(bi);
                    std::vector<T> tmp(n);
                    if (tp.requires_grad(ai)) {
                      for (std::size_t i = 0; i < n; ++i) {
                        tmp[i] = op == ElementwiseOp::mul ? g[i] * (b_scalar ? bv[0] : bv[i]) : g[i];
                      }
                      accumulate_broadcast(tp.grad_slot(ai), tmp);
                    }
                    if (tp.requires_grad(bi)) {
                      for (std::size_t i = 0; i < n; ++i) {
                        switch (op) {
                          case ElementwiseOp::add: tmp[i] = g[i]; break;
                          case ElementwiseOp::sub: tmp[i] = -g[i]; break;
                          default: tmp[i] = g[i] * (a_scalar ? av[0] : av[i]); break;
                        }
                      }
                      accumulate_broadcast(tp.grad_slot(bi), tmp);
                    }
                  });
}

template <typename T>
void fold_kinks(Tape<T>& t, const BasicTensor<T>& x, bool two_sided) {
  std::uint64_t h = 1469598103934665603ull;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    std::uint64_t side = x[i] > T(0) ? 1u : 0u;
    if (two_sided) side += x[i] >= T(1) ? 1u : 0u;
    h = (h ^ (side + 1)) * 1099511628211ull;
  }
  t.fold_kink(h);
}

template <typename T>
Var<T> unary(ElementwiseOp op, const Var<T>& a) {
  Tape<T>& t = tape_of(a);
  const auto& av = a.value();
  BasicTensor<T> out(av.shape(), T(0));
  const std::size_t n = av.numel();
  switch (op) {
    case ElementwiseOp::relu:
      for (std::size_t i = 0; i < n; ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
      if (t.track_kinks()) fold_kinks(t, av, false);
      break;
    case ElementwiseOp::clamp01:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::clamp(av[i], T(0), T(1));
      if (t.track_kinks()) fold_kinks(t, av, true);
      break;
    case ElementwiseOp::log:
      for (std::size_t i = 0; i < n; ++i) {
        if (!(av[i] > T(0))) throw DomainError("log: non-positive input at flat index " + std::to_string(i));
        out[i] = std::log(av[i]);
      }
      break;
    case ElementwiseOp::exp:
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
    default:
      throw UsageError("elementwise: binary op used without second operand");
  }
  const std::size_t ai = a.id();
  return t.record(op_label(op), std::move(out), {ai}, [op, ai](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& x = tp.value(ai);
    const auto& y = tp.value(self);
    auto& gx = tp.grad_slot(ai);
    const std::size_t n = g.numel();
    switch (op) {
      case ElementwiseOp::relu:
        for (std::size_t i = 0; i < n; ++i) gx[i] += x[i] > T(0) ? g[i] : T(0);
        break;
      case ElementwiseOp::clamp01:
        for (std::size_t i = 0; i < n; ++i) gx[i] += (x[i] > T(0) && x[i] < T(1)) ? g[i] : T(0);
        break;
      case ElementwiseOp::log:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x[i];
        break;
      case ElementwiseOp::exp:
        for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * y[i];
        break;
      default:
        break;
    }
  });
}

}  // namespace

template <typename T>
Var<T> elementwise(ElementwiseOp op, const Var<T>& a, const std::optional<Var<T>>& b) {
  switch (op) {
    case ElementwiseOp::add:
    case ElementwiseOp::sub:
    case ElementwiseOp::mul:
      if (!b) throw UsageError(std::string("elementwise: '") + op_label(op) + "' needs two operands");
      return binary(op, a, *b);
    default:
      return unary(op, a);
  }
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  Tape<T>& t = tape_of(a);
  BasicTensor<T> out = a.value();
  for (auto& v : out.vec()) v *= s;
  const std::size_t ai = a.id();
  return t.record("scale", std::move(out), {ai}, [ai, s](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += s * g[i];
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T s) {
  Tape<T>& t = tape_of(a);
  BasicTensor<T> out = a.value();
  for (auto& v : out.vec()) v += s;
  const std::size_t ai = a.id();
  return t.record("add_scalar", std::move(out), {ai}, [ai](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(ai);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// softmax, pooling, reductions

template <typename T>
Var<T> softmax_channels(const Var<T>& logits) {
  Tape<T>& t = tape_of(logits);
  const Shape& s = logits.shape();
  require_rank(s, 3, "softmax_channels");
  if (s[0] < 2) throw ConfigError("softmax_channels: need at least 2 classes");
  const std::size_t nc = s[0], plane = s[1] * s[2];
  const auto& z = logits.value();
  BasicTensor<T> p(s, T(0));
  for (std::size_t i = 0; i < plane; ++i) {
    T mx = z[i];
    for (std::size_t c = 1; c < nc; ++c) mx = std::max(mx, z[c * plane + i]);
    T total = T(0);
    for (std::size_t c = 0; c < nc; ++c) {
      const T e = std::exp(z[c * plane + i] - mx);
      p[c * plane + i] = e;
      total += e;
    }
    for (std::size_t c = 0; c < nc; ++c) p[c * plane + i] /= total;
  }
  const std::size_t zi = logits.id();
  return t.record("softmax_channels", std::move(p), {zi}, [zi, nc, plane](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    const auto& p = tp.value(self);
    auto& gz = tp.grad_slot(zi);
    for (std::size_t i = 0; i < plane; ++i) {
      T dot = T(0);
      for (std::size_t c = 0; c < nc; ++c) dot += p[c * plane + i] * g[c * plane + i];
      for (std::size_t c = 0; c < nc; ++c) gz[c * plane + i] += p[c * plane + i] * (g[c * plane + i] - dot);
    }
  });
}

template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  const Shape& s = x.shape();
  require_rank(s, 3, "avg_pool2");
  if (s[1] % 2 || s[2] % 2) throw DimensionError("avg_pool2: spatial dims must be even, got " + shape_str(s));
  const std::size_t C = s[0], H = s[1], W = s[2], OH = H / 2, OW = W / 2;
  const auto& xv = x.value();
  BasicTensor<T> out(Shape{C, OH, OW}, T(0));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < OH; ++y)
      for (std::size_t xx = 0; xx < OW; ++xx) {
        out.at(c, y, xx) = T(0.25) * (xv.at(c, 2 * y, 2 * xx) + xv.at(c, 2 * y, 2 * xx + 1) +
                                      xv.at(c, 2 * y + 1, 2 * xx) + xv.at(c, 2 * y + 1, 2 * xx + 1));
      }
  const std::size_t xi = x.id();
  return t.record("avg_pool2", std::move(out), {xi}, [xi, C, OH, OW](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(xi);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < OH; ++y)
        for (std::size_t xx = 0; xx < OW; ++xx) {
          const T v = T(0.25) * g.at(c, y, xx);
          gx.at(c, 2 * y, 2 * xx) += v;
          gx.at(c, 2 * y, 2 * xx + 1) += v;
          gx.at(c, 2 * y + 1, 2 * xx) += v;
          gx.at(c, 2 * y + 1, 2 * xx + 1) += v;
        }
  });
}

template <typename T>
Var<T> upsample_nearest2(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  const Shape& s = x.shape();
  require_rank(s, 3, "upsample_nearest2");
  const std::size_t C = s[0], H = s[1], W = s[2];
  const auto& xv = x.value();
  BasicTensor<T> out(Shape{C, 2 * H, 2 * W}, T(0));
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < 2 * H; ++y)
      for (std::size_t xx = 0; xx < 2 * W; ++xx) out.at(c, y, xx) = xv.at(c, y / 2, xx / 2);
  const std::size_t xi = x.id();
  return t.record("upsample_nearest2", std::move(out), {xi}, [xi, C, H, W](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(xi);
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) gx.at(c, y / 2, xx / 2) += g.at(c, y, xx);
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  const Shape& s = x.shape();
  require_rank(s, 3, "global_avg_pool");
  const std::size_t C = s[0], plane = s[1] * s[2];
  if (plane == 0) throw DimensionError("global_avg_pool: empty input");
  const auto& xv = x.value();
  BasicTensor<T> out(Shape{C, 1, 1}, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    out[c] = pairwise_sum<T>(xv.data().subspan(c * plane, plane)) / static_cast<T>(plane);
  }
  const std::size_t xi = x.id();
  return t.record("global_avg_pool", std::move(out), {xi}, [xi, C, plane](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(xi);
    for (std::size_t c = 0; c < C; ++c) {
      const T v = g[c] / static_cast<T>(plane);
      for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += v;
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  Tape<T>& t = tape_of(x);
  if (shape_numel(shape) != x.value().numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) + " changes the element count");
  }
  const std::size_t xi = x.id();
  return t.record("reshape", BasicTensor<T>(shape, x.value().vec()), {xi}, [xi](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gx = tp.grad_slot(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  Tape<T>& t = tape_of(x);
  const T total = pairwise_sum<T>(x.value().data());
  const std::size_t xi = x.id();
  return t.record("sum", BasicTensor<T>::scalar(total), {xi}, [xi](Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)[0];
    auto& gx = tp.grad_slot(xi);
    for (auto& v : gx.vec()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().numel();
  if (n == 0) throw DimensionError("mean: empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

// ---------------------------------------------------------------------------
// bilinear sampling

SampleGrid SampleGrid::identity(std::size_t h, std::size_t w) {
  SampleGrid g(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      g.x[y * w + x] = static_cast<float>(x);
      g.y[y * w + x] = static_cast<float>(y);
    }
  return g;
}

namespace {

struct Tap {
  std::size_t pixel;
  std::size_t idx[4];
  float w[4];
};

std::vector<Tap> build_taps(const SampleGrid& grid, std::size_t hs, std::size_t ws, Mask& coverage) {
  std::vector<Tap> taps;
  for (std::size_t i = 0; i < grid.x.size(); ++i) {
    const float x = grid.x[i], y = grid.y[i];
    if (!sample_covered(x, y, hs, ws)) continue;
    coverage.data[i] = 1;
    const float fx0 = std::floor(x), fy0 = std::floor(y);
    const float ax = x - fx0, ay = y - fy0;
    const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
    auto cx = [&](long v) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(ws) - 1)); };
    auto cy = [&](long v) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(hs) - 1)); };
    Tap tap;
    tap.pixel = i;
    tap.idx[0] = cy(y0) * ws + cx(x0);
    tap.idx[1] = cy(y0) * ws + cx(x0 + 1);
    tap.idx[2] = cy(y0 + 1) * ws + cx(x0);
    tap.idx[3] = cy(y0 + 1) * ws + cx(x0 + 1);
    tap.w[0] = (1.f - ax) * (1.f - ay);
    tap.w[1] = ax * (1.f - ay);
    tap.w[2] = (1.f - ax) * ay;
    tap.w[3] = ax * ay;
    taps.push_back(tap);
  }
  return taps;
}

}  // namespace

template <typename T>
SampleResult<T> bilinear_sample(const Var<T>& src, const SampleGrid& grid) {
  Tape<T>& t = tape_of(src);
  const Shape& s = src.shape();
  require_rank(s, 3, "bilinear_sample");
  if (grid.x.size() != grid.height * grid.width || grid.y.size() != grid.x.size()) {
    throw DimensionError("bilinear_sample: malformed grid");
  }
  const std::size_t C = s[0], hs = s[1], ws = s[2];
  const std::size_t splane = hs * ws, dplane = grid.height * grid.width;
  Mask coverage(grid.height, grid.width);
  auto taps = std::make_shared<const std::vector<Tap>>(build_taps(grid, hs, ws, coverage));
  const auto& sv = src.value();
  BasicTensor<T> out(Shape{C, grid.height, grid.width}, T(0));
  for (std::size_t c = 0; c < C; ++c) {
    const T* sp = sv.data().data() + c * splane;
    T* op = out.data().data() + c * dplane;
    for (const Tap& tap : *taps) {
      T v = T(0);
      for (int k = 0; k < 4; ++k) v += static_cast<T>(tap.w[k]) * sp[tap.idx[k]];
      op[tap.pixel] = v;
    }
  }
  const std::size_t si = src.id();
  Var<T> o = t.record("bilinear_sample", std::move(out), {si}, [si, taps, C, splane, dplane](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    auto& gs = tp.grad_slot(si);
    for (std::size_t c = 0; c < C; ++c) {
      const T* gp = g.data().data() + c * dplane;
      T* sp = gs.data().data() + c * splane;
      for (const Tap& tap : *taps) {
        const T gv = gp[tap.pixel];
        for (int k = 0; k < 4; ++k) sp[tap.idx[k]] += static_cast<T>(tap.w[k]) * gv;
      }
    }
  });
  return SampleResult<T>{o, std::move(coverage)};
}

template <typename T>
Var<T> select(const Mask& mask, const Var<T>& a, const Var<T>& b) {
  Tape<T>& t = same_tape(a, b);
  const Shape& s = a.shape();
  require_rank(s, 3, "select");
  if (b.shape() != s) throw DimensionError("select: operand shapes differ");
  if (mask.height != s[1] || mask.width != s[2]) throw DimensionError("select: mask does not match spatial dims");
  const std::size_t C = s[0], plane = s[1] * s[2];
  BasicTensor<T> out = b.value();
  const auto& av = a.value();
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < plane; ++i)
      if (mask.data[i]) out[c * plane + i] = av[c * plane + i];
  const std::size_t ai = a.id(), bi = b.id();
  auto m = std::make_shared<const Mask>(mask);
  return t.record("select", std::move(out), {ai, bi}, [ai, bi, m, C, plane](Tape<T>& tp, std::size_t self) {
    const auto& g = tp.grad(self);
    if (tp.requires_grad(ai)) {
      auto& ga = tp.grad_slot(ai);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i)
          if (m->data[i]) ga[c * plane + i] += g[c * plane + i];
    }
    if (tp.requires_grad(bi)) {
      auto& gb = tp.grad_slot(bi);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < plane; ++i)
          if (!m->data[i]) gb[c * plane + i] += g[c * plane + i];
    }
  });
}

// ---------------------------------------------------------------------------
// instantiations

#define RWPATCH_INSTANTIATE_AD(T)                                                          \
  template class Var<T>;                                                                   \
  template class Tape<T>;                                                                  \
  template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, int, int);                       \
  template Var<T> add_channel_bias<T>(const Var<T>&, const Var<T>&);                       \
  template Var<T> elementwise<T>(ElementwiseOp, const Var<T>&, const std::optional<Var<T>>&); \
  template Var<T> scale<T>(const Var<T>&, T);                                              \
  template Var<T> add_scalar<T>(const Var<T>&, T);                                         \
  template Var<T> softmax_channels<T>(const Var<T>&);                                      \
  template Var<T> avg_pool2<T>(const Var<T>&);                                             \
  template Var<T> upsample_nearest2<T>(const Var<T>&);                                     \
  template Var<T> global_avg_pool<T>(const Var<T>&);                                       \
  template Var<T> reshape<T>(const Var<T>&, const Shape&);                                 \
  template Var<T> sum<T>(const Var<T>&);                                                   \
  template Var<T> mean<T>(const Var<T>&);                                                  \
  template SampleResult<T> bilinear_sample<T>(const Var<T>&, const SampleGrid&);           \
  template Var<T> select<T>(const Mask&, const Var<T>&, const Var<T>&);

RWPATCH_INSTANTIATE_AD(float)
RWPATCH_INSTANTIATE_AD(double)

}  // namespace rwpatch::ad
