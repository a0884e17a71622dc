#include "rwpatch/advloss.hpp"

#include <cmath>
#include <cstdio>
#include <memory>

#include <nlohmann/json.hpp>

#include "rwpatch/invariant.hpp"

namespace rwpatch {

namespace {

void require_same_grid(const Shape& ps, const LabelMap& labels, const Mask& pixels, const char* op) {
  if (ps.size() != 3) throw DimensionError(std::string(op) + ": probs must be [N_c,H,W], got " + shape_str(ps));
  if (labels.height != ps[1] || labels.width != ps[2] || pixels.height != ps[1] || pixels.width != ps[2]) {
    throw DimensionError(std::string(op) + ": labels/mask dims differ from probs " + shape_str(ps));
  }
}

}  // namespace

template <typename T>
ad::Var<T> ce_sum(const ad::Var<T>& probs, const LabelMap& labels, const Mask& pixels) {
  const Shape& ps = probs.shape();
  require_same_grid(ps, labels, pixels, "ce_sum");
  const std::size_t nc = ps[0], plane = ps[1] * ps[2];
  const T* p = probs.value().data().data();

  auto idx = std::make_shared<std::vector<std::size_t>>();  // flat index into probs, per set pixel
  std::vector<T> terms;
  for (std::size_t i = 0; i < plane; ++i) {
    if (!pixels[i]) continue;
    const std::size_t y = labels.data[i];
    if (y >= nc) throw DataError("ce: label " + std::to_string(y) + " out of range for " + std::to_string(nc) + " classes");
    const std::size_t k = y * plane + i;
    idx->push_back(k);
    terms.push_back(-std::log(std::max(p[k], static_cast<T>(kProbFloor))));
  }
  const T total = pairwise_sum<T>(terms);
  ad::Tape<T>& tape = *probs.tape();
  const std::size_t pi = probs.id();
  return tape.record("ce_sum", BasicTensor<T>::scalar(total), {pi}, [pi, idx](ad::Tape<T>& tp, std::size_t self) {
    const T g = tp.grad(self)[0];
    const T* pv = tp.value(pi).data().data();
    T* gp = tp.grad_slot(pi).data().data();
    for (std::size_t k : *idx) {
      if (pv[k] > static_cast<T>(kProbFloor)) gp[k] -= g / pv[k];
    }
  });
}

template <typename T>
ad::Var<T> pixelwise_ce(const ad::Var<T>& probs, const LabelMap& labels, const Mask& pixels) {
  const std::size_t n = pixels.count();
  if (n == 0) throw SetEmptyError("pixelwise_ce: empty pixel set");
  return ad::scale(ce_sum(probs, labels, pixels), static_cast<T>(1) / static_cast<T>(n));
}

Mask correct_set(const LabelMap& pred, const LabelMap& gt, const Mask& patch_mask) {
  if (pred.height != gt.height || pred.width != gt.width || patch_mask.height != gt.height ||
      patch_mask.width != gt.width) {
    throw DimensionError("correct_set: prediction, ground truth and patch mask dims differ");
  }
  Mask out(gt.height, gt.width);
  for (std::size_t i = 0; i < out.size(); ++i) out.set(i, !patch_mask[i] && pred.data[i] == gt.data[i]);
  if constexpr (kCheckInvariants) check_invariant((out & patch_mask).count() == 0, "correct set meets patch mask");
  return out;
}

template <typename T>
SplitLosses<T> split_losses(const ad::Var<T>& probs, const LabelMap& labels, const Mask& correct,
                            const Mask& patch_mask) {
  if ((correct & patch_mask).count() != 0) throw UsageError("split_losses: correct set overlaps the patch mask");
  const Mask wrong = patch_mask.complement().minus(correct);
  return {ce_sum(probs, labels, correct), ce_sum(probs, labels, wrong)};
}

Tensor combined_gradient(const Tensor& gc, const Tensor& gw, float gamma) {
  if (gc.shape() != gw.shape()) throw DimensionError("combined_gradient: gradient shapes differ");
  if (!(gamma >= 0.f && gamma <= 1.f)) throw ConfigError("combined_gradient: gamma must lie in [0,1]");
  auto norm = [](const Tensor& g) {
    std::vector<float> sq(g.numel());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = g[i] * g[i];
    return std::max(std::sqrt(pairwise_sum<float>(sq)), 1e-12f);
  };
  const float a = gamma / norm(gc);
  const float b = (1.f - gamma) / norm(gw);
  Tensor out(gc.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * gc[i] + b * gw[i];
  if constexpr (kCheckInvariants) {
    std::vector<float> sq(out.numel());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = out[i] * out[i];
    check_invariant(std::sqrt(pairwise_sum<float>(sq)) <= 1.f + 1e-5f, "combined gradient norm exceeds 1");
  }
  return out;
}

float adaptive_gamma(const Mask& correct, const Mask& patch_mask) {
  if (correct.size() != patch_mask.size()) throw DimensionError("adaptive_gamma: mask sizes differ");
  const std::size_t outside = patch_mask.size() - patch_mask.count();
  if (outside == 0) throw ConfigError("adaptive_gamma: patch covers the whole image");
  const float g = static_cast<float>(static_cast<double>(correct.count()) / static_cast<double>(outside));
  check_invariant(g >= 0.f && g <= 1.f, "adaptive gamma outside [0,1]");
  return g;
}

template <typename T>
ad::Var<T> smoothness_loss(const ad::Var<T>& patch) {
  const Shape& s = patch.shape();
  if (s.size() != 3) throw DimensionError("smoothness_loss: patch must be [C,H,W], got " + shape_str(s));
  const std::size_t C = s[0], H = s[1], W = s[2];
  const BasicTensor<T>& d = patch.value();
  std::vector<T> terms;
  terms.reserve(2 * C * H * W);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < H; ++i)
      for (std::size_t j = 0; j < W; ++j) {
        if (i + 1 < H) {
          const T e = d.at(c, i, j) - d.at(c, i + 1, j);
          terms.push_back(e * e);
        }
        if (j + 1 < W) {
          const T e = d.at(c, i, j) - d.at(c, i, j + 1);
          terms.push_back(e * e);
        }
      }
  const T inv = static_cast<T>(1) / static_cast<T>(H * W);
  const T value = pairwise_sum<T>(terms) * inv;
  const std::size_t id = patch.id();
  return patch.tape()->record("smoothness", BasicTensor<T>::scalar(value), {id},
                              [id, C, H, W, inv](ad::Tape<T>& tp, std::size_t self) {
                                const T g = tp.grad(self)[0] * inv * 2;
                                const BasicTensor<T>& v = tp.value(id);
                                BasicTensor<T>& gd = tp.grad_slot(id);
                                for (std::size_t c = 0; c < C; ++c)
                                  for (std::size_t i = 0; i < H; ++i)
                                    for (std::size_t j = 0; j < W; ++j) {
                                      if (i + 1 < H) {
                                        const T e = g * (v.at(c, i, j) - v.at(c, i + 1, j));
                                        gd.at(c, i, j) += e;
                                        gd.at(c, i + 1, j) -= e;
                                      }
                                      if (j + 1 < W) {
                                        const T e = g * (v.at(c, i, j) - v.at(c, i, j + 1));
                                        gd.at(c, i, j) += e;
                                        gd.at(c, i, j + 1) -= e;
                                      }
                                    }
                              });
}

PrintableColorSet PrintableColorSet::defaults() {
  PrintableColorSet s;
  const float levels[] = {0.1f, 0.45f, 0.8f};
  for (float r : levels)
    for (float g : levels)
      for (float b : levels) s.colors.push_back({r, g, b});
  s.colors.push_back({0.f, 0.f, 0.f});
  s.colors.push_back({1.f, 1.f, 1.f});
  s.colors.push_back({0.5f, 0.5f, 0.5f});
  return s;
}

void PrintableColorSet::validate() const {
  if (colors.empty()) throw ConfigError("printable colors: set is empty");
  for (const auto& c : colors)
    for (float v : c)
      if (!(v >= 0.f && v <= 1.f)) throw ConfigError("printable colors: component outside [0,1]");
}

PrintableColorSet parse_color_set(const std::string& json_text) {
  PrintableColorSet s;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (!j.is_array()) throw ConfigError("printable colors: expected a JSON array of [r,g,b]");
    for (const auto& c : j) {
      if (!c.is_array() || c.size() != 3) throw ConfigError("printable colors: each entry must be [r,g,b]");
      s.colors.push_back({c[0].get<float>(), c[1].get<float>(), c[2].get<float>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("printable colors: ") + e.what());
  }
  s.validate();
  return s;
}

template <typename T>
ad::Var<T> nps_loss(const ad::Var<T>& patch, const PrintableColorSet& colors) {
  colors.validate();
  const Shape& s = patch.shape();
  if (s.size() != 3 || s[0] != 3) throw DimensionError("nps_loss: patch must be [3,H,W], got " + shape_str(s));
  const std::size_t plane = s[1] * s[2];
  const std::size_t K = colors.colors.size();
  auto cols = std::make_shared<std::vector<std::array<T, 3>>>();
  for (const auto& c : colors.colors) cols->push_back({c[0], c[1], c[2]});

  const T* d = patch.value().data().data();
  std::vector<T> terms(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    T prod = 1;
    for (const auto& c : *cols) {
      const T r = d[i] - c[0], g = d[plane + i] - c[1], b = d[2 * plane + i] - c[2];
      prod *= r * r + g * g + b * b;
    }
    terms[i] = prod;
  }
  const T inv = static_cast<T>(1) / static_cast<T>(plane);
  const T value = pairwise_sum<T>(terms) * inv;
  const std::size_t id = patch.id();
  return patch.tape()->record(
      "nps", BasicTensor<T>::scalar(value), {id}, [id, plane, K, cols, inv](ad::Tape<T>& tp, std::size_t self) {
        const T g = tp.grad(self)[0] * inv;
        const T* v = tp.value(id).data().data();
        T* gd = tp.grad_slot(id).data().data();
        std::vector<T> dist(K), prefix(K + 1), suffix(K + 1);
        for (std::size_t i = 0; i < plane; ++i) {
          for (std::size_t k = 0; k < K; ++k) {
            const auto& c = (*cols)[k];
            const T r = v[i] - c[0], gg = v[plane + i] - c[1], b = v[2 * plane + i] - c[2];
            dist[k] = r * r + gg * gg + b * b;
          }
          prefix[0] = 1;
          for (std::size_t k = 0; k < K; ++k) prefix[k + 1] = prefix[k] * dist[k];
          suffix[K] = 1;
          for (std::size_t k = K; k-- > 0;) suffix[k] = suffix[k + 1] * dist[k];
          for (std::size_t k = 0; k < K; ++k) {
            const T others = prefix[k] * suffix[k + 1] * g * 2;
            const auto& c = (*cols)[k];
            gd[i] += others * (v[i] - c[0]);
            gd[plane + i] += others * (v[plane + i] - c[1]);
            gd[2 * plane + i] += others * (v[2 * plane + i] - c[2]);
          }
        }
      });
}

void LossConfig::validate() const {
  if (gamma_mode == GammaMode::fixed && !(gamma >= 0.f && gamma <= 1.f)) {
    throw ConfigError("loss: fixed gamma must lie in [0,1]");
  }
  if (!(lambda_smooth >= 0.f) || !(lambda_nps >= 0.f)) throw ConfigError("loss: regularizer weights must be >= 0");
}

std::string LossConfig::tag() const {
  switch (baseline) {
    case BaselineMode::ce_full_n:
      return "ce_full_N";
    case BaselineMode::ce_excluding_patch:
      return "ce_excluding_patch";
    case BaselineMode::gamma_split:
      break;
  }
  if (gamma_mode == GammaMode::adaptive) return "adaptive";
  char buf[32];
  std::snprintf(buf, sizeof buf, "gamma%g", static_cast<double>(gamma));
  return buf;
}

#define RWPATCH_INSTANTIATE_LOSS(T)                                                                          \
  template ad::Var<T> ce_sum<T>(const ad::Var<T>&, const LabelMap&, const Mask&);                           \
  template ad::Var<T> pixelwise_ce<T>(const ad::Var<T>&, const LabelMap&, const Mask&);                     \
  template SplitLosses<T> split_losses<T>(const ad::Var<T>&, const LabelMap&, const Mask&, const Mask&);    \
  template ad::Var<T> smoothness_loss<T>(const ad::Var<T>&);                                                 \
  template ad::Var<T> nps_loss<T>(const ad::Var<T>&, const PrintableColorSet&);

RWPATCH_INSTANTIATE_LOSS(float)
RWPATCH_INSTANTIATE_LOSS(double)

}  // namespace rwpatch
