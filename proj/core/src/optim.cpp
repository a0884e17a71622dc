#include "rwpatch/optim.hpp"

#include <cmath>

namespace rwpatch {

void adam_step(Tensor& param, const Tensor& grad, AdamState& st, const AdamParams& hp, bool ascend) {
  if (grad.shape() != param.shape()) throw DimensionError("adam_step: gradient shape != parameter shape");
  if (st.m.shape() != param.shape()) st = AdamState(param.shape());
  grad.require_finite("adam_step gradient");
  ++st.t;
  const double t = static_cast<double>(st.t);
  const float c1 = static_cast<float>(1.0 - std::pow(static_cast<double>(hp.beta1), t));
  const float c2 = static_cast<float>(1.0 - std::pow(static_cast<double>(hp.beta2), t));
  const float dir = ascend ? 1.f : -1.f;
  float* p = param.data().data();
  float* m = st.m.data().data();
  float* v = st.v.data().data();
  const float* g = grad.data().data();
  for (std::size_t i = 0, n = param.numel(); i < n; ++i) {
    m[i] = hp.beta1 * m[i] + (1.f - hp.beta1) * g[i];
    v[i] = hp.beta2 * v[i] + (1.f - hp.beta2) * g[i] * g[i];
    const float mh = m[i] / c1;
    const float vh = v[i] / c2;
    p[i] += dir * hp.lr * mh / (std::sqrt(vh) + hp.eps);
  }
}

}  // namespace rwpatch
