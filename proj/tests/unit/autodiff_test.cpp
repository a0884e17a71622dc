#include <gtest/gtest.h>

#include <chrono>
#include <cmath>

#include "rwpatch/autodiff.hpp"
#include "rwpatch/error.hpp"
#include "rwpatch/verify.hpp"
#include "support.hpp"

using namespace rwpatch;
using T64 = BasicTensor<double>;

namespace {

T64 random64(Shape s, std::uint64_t seed, double lo = -1, double hi = 1) {
  RngStream rng(seed, "ad-test");
  T64 t(std::move(s));
  for (double& v : t.vec()) v = lo + (hi - lo) * static_cast<double>(rng.uniform());
  return t;
}

// Direct six-loop convolution with zero padding.
T64 naive_conv(const T64& x, const T64& k, int stride, int pad) {
  const long ci = static_cast<long>(x.dim(0)), h = static_cast<long>(x.dim(1)), w = static_cast<long>(x.dim(2));
  const long co = static_cast<long>(k.dim(0)), kh = static_cast<long>(k.dim(2)), kw = static_cast<long>(k.dim(3));
  const long oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  T64 out(Shape{static_cast<std::size_t>(co), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (long o = 0; o < co; ++o)
    for (long i = 0; i < oh; ++i)
      for (long j = 0; j < ow; ++j) {
        double s = 0;
        for (long c = 0; c < ci; ++c)
          for (long a = 0; a < kh; ++a)
            for (long b = 0; b < kw; ++b) {
              const long y = i * stride + a - pad, xx = j * stride + b - pad;
              if (y < 0 || xx < 0 || y >= h || xx >= w) continue;
              s += x[static_cast<std::size_t>((c * h + y) * w + xx)] *
                   k[static_cast<std::size_t>(((o * ci + c) * kh + a) * kw + b)];
            }
        out[static_cast<std::size_t>((o * oh + i) * ow + j)] = s;
      }
  return out;
}

// Central differences of f at x, one coordinate at a time.
template <typename F>
T64 numeric_grad(F f, T64 x, double h = 1e-6) {
  T64 g(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double v = x[i];
    x[i] = v + h;
    const double up = f(x);
    x[i] = v - h;
    const double dn = f(x);
    x[i] = v;
    g[i] = (up - dn) / (2 * h);
  }
  return g;
}

double rel_err(const T64& a, const T64& b) {
  double d = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    d += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(d) / std::max({std::sqrt(na), std::sqrt(nb), 1e-30});
}

struct FaultGuard {
  explicit FaultGuard(ad::Fault f) { ad::inject_fault(f); }
  ~FaultGuard() { ad::inject_fault(ad::Fault::none); }
};

}  // namespace

TEST(Autodiff, ConvForwardMatchesNaive) {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const int stride = 1 + static_cast<int>(k % 2), pad = static_cast<int>(k % 3);
    const T64 x = random64({2, 7, 9}, k), w = random64({3, 2, 3, 3}, k + 50);
    ad::Tape<double> t;
    const auto y = ad::conv2d(t.constant(x), t.constant(w), stride, pad);
    const T64 want = naive_conv(x, w, stride, pad);
    ASSERT_EQ(y.shape(), want.shape());
    for (std::size_t i = 0; i < want.numel(); ++i) EXPECT_NEAR(y.value()[i], want[i], 1e-12);
  }
}

TEST(Autodiff, ConvGradientMatchesNaiveDifferences) {
  const T64 x = random64({2, 5, 6}, 1), w = random64({2, 2, 3, 3}, 2), proj = random64({2, 5, 6}, 3);
  auto loss = [&](const T64& xx, const T64& ww) {
    const T64 y = naive_conv(xx, ww, 1, 1);
    double s = 0;
    for (std::size_t i = 0; i < y.numel(); ++i) s += y[i] * proj[i];
    return s;
  };
  ad::Tape<double> t;
  const auto xv = t.leaf(x, true), wv = t.leaf(w, true);
  t.backward(ad::sum(ad::mul(ad::conv2d(xv, wv, 1, 1), t.constant(proj))));
  EXPECT_LT(rel_err(xv.grad(), numeric_grad([&](const T64& v) { return loss(v, w); }, x)), 1e-6);
  EXPECT_LT(rel_err(wv.grad(), numeric_grad([&](const T64& v) { return loss(x, v); }, w)), 1e-6);
}

TEST(Autodiff, InjectedFaultBreaksConvGradient) {
  const T64 x = random64({1, 4, 4}, 4), w = random64({1, 1, 3, 3}, 5);
  FaultGuard guard(ad::Fault::conv_backward_sign_flip);
  ad::Tape<double> t;
  const auto xv = t.leaf(x, true), wv = t.leaf(w, true);
  t.backward(ad::sum(ad::conv2d(xv, wv, 1, 1)));
  const T64 gw = numeric_grad(
      [&](const T64& v) {
        double s = 0;
        for (double e : naive_conv(x, v, 1, 1).vec()) s += e;
        return s;
      },
      w);
  EXPECT_GT(rel_err(wv.grad(), gw), 0.5);
}

TEST(Autodiff, SoftmaxSumsToOneAndIsStable) {
  T64 logits = random64({5, 3, 4}, 6, -3, 3);
  logits[0] = 800;
  ad::Tape<double> t;
  const auto p = ad::softmax_channels(t.constant(logits)).value();
  for (std::size_t i = 0; i < 12; ++i) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += p[c * 12 + i];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(p[0], 1.0, 1e-12);
}

TEST(Autodiff, ElementwiseGradientsAgainstFormulas) {
  const T64 a = random64({10}, 7, 0.1, 2), b = random64({10}, 8, -1, 1);
  ad::Tape<double> t;
  const auto av = t.leaf(a, true), bv = t.leaf(b, true);
  t.backward(ad::sum(ad::add(ad::mul(av, bv), ad::log(av))));
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_NEAR(av.grad()[i], b[i] + 1 / a[i], 1e-12);
    EXPECT_NEAR(bv.grad()[i], a[i], 1e-12);
  }
}

TEST(Autodiff, ScalarBroadcast) {
  ad::Tape<double> t;
  const auto a = t.leaf(random64({6}, 9), true);
  const auto s = t.leaf(T64::scalar(2.5), true);
  t.backward(ad::sum(ad::mul(a, s)));
  double sa = 0;
  for (double v : a.value().vec()) sa += v;
  EXPECT_NEAR(s.grad()[0], sa, 1e-12);
  for (double g : a.grad().vec()) EXPECT_DOUBLE_EQ(g, 2.5);
}

TEST(Autodiff, PoolUpsampleAdjoint) {
  // <pool(x), y> = <x, pool^T(y)> and upsample^T = 4 * pool.
  const T64 x = random64({2, 4, 6}, 10), y = random64({2, 2, 3}, 11);
  ad::Tape<double> t;
  const auto xv = t.leaf(x, true);
  t.backward(ad::sum(ad::mul(ad::avg_pool2(xv), t.constant(y))));
  ad::Tape<double> t2;
  const auto yv = t2.leaf(y, true);
  const auto up = ad::upsample_nearest2(yv);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(xv.grad()[i], up.value()[i] / 4, 1e-12);
}

TEST(Autodiff, BackwardTwiceIsUsageError) {
  ad::Tape<float> t;
  const auto a = t.leaf(Tensor(Shape{2}, 1.f), true);
  const auto l = ad::sum(a);
  t.backward(l);
  EXPECT_THROW(t.backward(l), UsageError);
  t.zero_grad();
  EXPECT_NO_THROW(t.backward(l));
}

TEST(Autodiff, FrozenInputsGetNoGradient) {
  ad::Tape<float> t;
  const auto a = t.constant(Tensor(Shape{2}, 1.f));
  const auto b = t.leaf(Tensor(Shape{2}, 2.f), true);
  t.backward(ad::sum(ad::mul(a, b)));
  EXPECT_FALSE(a.has_grad());
  EXPECT_THROW(a.grad(), UsageError);
}

TEST(Autodiff, DomainAndClassCountErrors) {
  ad::Tape<float> t;
  EXPECT_THROW(ad::log(t.constant(Tensor(Shape{1}, -1.f))), DomainError);
  EXPECT_THROW(ad::log(t.constant(Tensor(Shape{1}, 0.f))), DomainError);
  EXPECT_THROW(ad::softmax_channels(t.constant(Tensor(Shape{1, 2, 2}))), ConfigError);
}

TEST(Autodiff, SmallCases) {
  ad::Tape<float> t;
  const auto c1 = ad::conv2d(t.constant(Tensor(Shape{1, 3, 3}, 1.f)), t.constant(Tensor(Shape{1, 1, 1, 1}, 2.f)));
  EXPECT_EQ(c1.value(), Tensor(Shape{1, 3, 3}, 2.f));
  const auto c2 = ad::conv2d(t.constant(Tensor(Shape{1, 1, 1}, 5.f)), t.constant(Tensor(Shape{1, 1, 3, 3}, 1.f)), 1, 1);
  EXPECT_EQ(c2.value(), Tensor(Shape{1, 1, 1}, 5.f));
  const Tensor v(Shape{3}, {-0.5f, 0.3f, 1.7f});
  EXPECT_EQ(ad::clamp01(t.constant(v)).value(), Tensor(Shape{3}, {0.f, 0.3f, 1.f}));
  EXPECT_EQ(ad::relu(t.constant(Tensor(Shape{3}, {-1.f, 0.f, 2.f}))).value(), Tensor(Shape{3}, {0.f, 0.f, 2.f}));
  for (float p : ad::softmax_channels(t.constant(Tensor(Shape{4, 2, 2}, 3.f))).value().vec()) EXPECT_FLOAT_EQ(p, 0.25f);
  const auto s2 = ad::softmax_channels(t.constant(Tensor(Shape{2, 1, 1}, {1000.f, 0.f}))).value();
  EXPECT_FLOAT_EQ(s2[0], 1.f);
  EXPECT_FLOAT_EQ(s2[1], 0.f);
}

TEST(Autodiff, QuadraticGradientIsInput) {
  ad::Tape<double> t;
  const T64 x = random64({2, 3}, 20);
  const auto xv = t.leaf(x, true);
  t.backward(ad::scale(ad::sum(ad::mul(xv, xv)), 0.5));
  EXPECT_EQ(xv.grad(), x);
  ad::Tape<double> t2;
  const auto y = t2.leaf(x, true);
  t2.backward(ad::sum(y));
  for (double g : y.grad().vec()) EXPECT_EQ(g, 1.0);
}

TEST(Autodiff, NonScalarLossIsUsageError) {
  ad::Tape<float> t;
  const auto a = t.leaf(Tensor(Shape{2}, 1.f), true);
  EXPECT_THROW(t.backward(a), UsageError);
}

TEST(Autodiff, BilinearTexelCenters) {
  const T64 src(Shape{1, 2, 2}, {1, 2, 3, 4});
  ad::SampleGrid g(2, 2);
  g.x = {0, 1, 0, 1};
  g.y = {0, 0, 1, 1};
  ad::Tape<double> t;
  EXPECT_EQ(ad::bilinear_sample(t.constant(src), g).output.value(), src);
}

TEST(Autodiff, CompositePipelineMatchesDifferences) {
  const T64 img = random64({2, 8, 8}, 30), k = random64({3, 2, 3, 3}, 31);
  LabelMap labels(8, 8);
  for (std::size_t i = 0; i < 64; ++i) labels.data[i] = static_cast<std::uint8_t>((i * 7) % 3);
  auto loss = [&](ad::Tape<double>& t, const ad::Var<double>& kv) {
    const auto p = ad::softmax_channels(ad::relu(ad::conv2d(t.constant(img), kv, 1, 1)));
    // Mean of -log p[label] written out with primitives.
    T64 onehot(Shape{3, 8, 8});
    for (std::size_t i = 0; i < 64; ++i) onehot[labels.data[i] * 64 + i] = 1;
    return ad::scale(ad::sum(ad::mul(ad::log(p), t.constant(onehot))), -1.0 / 64);
  };
  ad::Tape<double> t;
  const auto kv = t.leaf(k, true);
  t.backward(loss(t, kv));
  const T64 num = numeric_grad(
      [&](const T64& kk) {
        ad::Tape<double> tt;
        return loss(tt, tt.constant(kk)).value()[0];
      },
      k);
  EXPECT_LT(rel_err(kv.grad(), num), 1e-3);
}

TEST(Autodiff, ShapeMismatchRaises) {
  ad::Tape<float> t;
  EXPECT_THROW(ad::add(t.constant(Tensor(Shape{2})), t.constant(Tensor(Shape{3}))), DimensionError);
  EXPECT_THROW(ad::conv2d(t.constant(Tensor(Shape{2, 4, 4})), t.constant(Tensor(Shape{1, 3, 3, 3}))),
               DimensionError);
}

TEST(Autodiff, BilinearIdentityGridCopies) {
  const T64 src = random64({2, 3, 5}, 12);
  ad::Tape<double> t;
  const auto r = ad::bilinear_sample(t.constant(src), ad::SampleGrid::identity(3, 5));
  EXPECT_EQ(r.output.value(), src);
  EXPECT_EQ(r.coverage.count(), 15u);
}

TEST(Autodiff, BilinearCoverageRule) {
  ad::SampleGrid g(1, 4);
  g.x = {-0.5f, -0.51f, 4.49f, 4.5f};
  g.y = {0, 0, 0, 0};
  ad::Tape<double> t;
  const auto r = ad::bilinear_sample(t.constant(random64({1, 2, 5}, 13)), g);
  EXPECT_TRUE(r.coverage[0]);
  EXPECT_FALSE(r.coverage[1]);
  EXPECT_TRUE(r.coverage[2]);
  EXPECT_FALSE(r.coverage[3]);
  EXPECT_EQ(r.output.value()[1], 0.0);
}

TEST(Gradcheck, EveryCheckPassesWithinBudget) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto results = verify::run_all({});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& r : results) {
    EXPECT_TRUE(r.ok()) << r.name << " worst " << r.worst;
    if (r.name.rfind("geometry:", 0) != 0) EXPECT_GE(r.instances, 20u) << r.name;
  }
  EXPECT_LT(secs, 60.0);
}

TEST(Gradcheck, InjectedFaultIsCaught) {
  FaultGuard guard(ad::Fault::conv_backward_sign_flip);
  EXPECT_FALSE(verify::run_gradient_check("conv2d", {}).ok());
}
