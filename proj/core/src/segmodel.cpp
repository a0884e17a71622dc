#include "rwpatch/segmodel.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rwpatch/advloss.hpp"
#include "rwpatch/io.hpp"
#include "rwpatch/rng.hpp"

namespace rwpatch {

namespace {

constexpr const char* kWeightFormat = "rwpatch-segmodel";

struct LayerSpec {
  std::size_t cout, cin, k;
};

// e1, e2, m x mid_convs, [context], d2, d1, head.
std::vector<LayerSpec> layers(const ModelConfig& c) {
  const std::size_t w0 = c.widths[0], w1 = c.widths[1];
  std::vector<LayerSpec> out{{w0, 3, 3}, {w1, w0, 3}};
  for (std::size_t i = 0; i < c.mid_convs; ++i) out.push_back({w1, w1, 3});
  if (c.global_context) out.push_back({w1, w1, 1});
  out.insert(out.end(), {{w0, w1, 3}, {w0, w0, 3}, {c.num_classes, w0, 1}});
  return out;
}

}  // namespace

std::vector<Shape> weight_shapes(const ModelConfig& cfg) {
  std::vector<Shape> out;
  for (const LayerSpec& l : layers(cfg)) {
    out.push_back({l.cout, l.cin, l.k, l.k});
    out.push_back({l.cout});
  }
  return out;
}

template <typename T>
ad::Var<T> segnet_logits(const ad::Var<T>& image, const std::vector<ad::Var<T>>& w, const ModelConfig& cfg) {
  const std::size_t n_layers = layers(cfg).size();
  if (w.size() != 2 * n_layers) {
    throw DimensionError("segnet: expected " + std::to_string(2 * n_layers) + " weight tensors, got " +
                         std::to_string(w.size()));
  }
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 3) throw DimensionError("segnet: input must be [3,H,W], got " + shape_str(s));
  if (s[1] % 4 != 0 || s[2] % 4 != 0 || s[1] == 0 || s[2] == 0) {
    throw DimensionError("segnet: H and W must be positive multiples of 4, got " + shape_str(s));
  }
  std::size_t layer = 0;
  auto conv = [&](const ad::Var<T>& x) {
    const int pad = static_cast<int>(w[2 * layer].shape()[2] / 2);
    auto y = ad::add_channel_bias(ad::conv2d(x, w[2 * layer], 1, pad), w[2 * layer + 1]);
    ++layer;
    return y;
  };
  const auto e1 = ad::relu(conv(image));
  const auto e2 = ad::relu(conv(ad::avg_pool2(e1)));
  auto m = ad::avg_pool2(e2);
  for (std::size_t i = 0; i < cfg.mid_convs; ++i) m = ad::relu(conv(m));
  if (cfg.global_context) {
    const auto ctx = ad::relu(conv(ad::global_avg_pool(m)));
    m = ad::add_channel_bias(m, ad::reshape(ctx, Shape{ctx.shape()[0]}));
  }
  const auto d2 = ad::relu(conv(ad::add(ad::upsample_nearest2(m), e2)));
  const auto d1 = ad::relu(conv(ad::add(ad::upsample_nearest2(d2), e1)));
  return conv(d1);
}

template ad::Var<float> segnet_logits<float>(const ad::Var<float>&, const std::vector<ad::Var<float>>&,
                                            const ModelConfig&);
template ad::Var<double> segnet_logits<double>(const ad::Var<double>&, const std::vector<ad::Var<double>>&,
                                              const ModelConfig&);

SegModel::SegModel(const ModelConfig& cfg) : cfg_(cfg) {
  if (cfg.num_classes < 2) throw ConfigError("model: need at least 2 classes");
  if (cfg.widths[0] == 0 || cfg.widths[1] == 0) throw ConfigError("model: channel widths must be positive");
  if (cfg.mid_convs == 0) throw ConfigError("model: need at least one quarter-resolution conv");
  RngStream rng(cfg.seed, "init");
  for (const Shape& s : weight_shapes(cfg)) {
    Tensor t(s);
    if (s.size() == 4) {
      const float fan_in = static_cast<float>(s[1] * s[2] * s[3]);
      const float sd = std::sqrt(2.f / fan_in);
      for (float& v : t.vec()) v = rng.normal(0.f, sd);
    }
    weights_.push_back(std::move(t));
  }
}

SegModel::SegModel(const ModelConfig& cfg, std::vector<Tensor> weights) : cfg_(cfg), weights_(std::move(weights)) {
  const auto shapes = weight_shapes(cfg);
  if (weights_.size() != shapes.size()) throw DimensionError("model: wrong number of weight tensors");
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (weights_[i].shape() != shapes[i]) {
      throw DimensionError("model: weight " + std::to_string(i) + " has shape " + shape_str(weights_[i].shape()) +
                           ", architecture needs " + shape_str(shapes[i]));
    }
    weights_[i].require_finite("model weight " + std::to_string(i));
  }
}

ad::Var<float> SegModel::forward(ad::Tape<float>& tape, const ad::Var<float>& image,
                                 std::vector<ad::Var<float>>* weight_vars) const {
  std::vector<ad::Var<float>> w;
  w.reserve(weights_.size());
  for (const Tensor& t : weights_) w.push_back(tape.leaf(t, weight_vars != nullptr));
  if (weight_vars) *weight_vars = w;
  return ad::softmax_channels(segnet_logits(image, w, cfg_));
}

Tensor SegModel::predict(const Tensor& image) const {
  ad::Tape<float> tape;
  return forward(tape, tape.constant(image)).value();
}

LabelMap SegModel::segment(const Tensor& image) const { return predict_labels(predict(image)); }

LabelMap predict_labels(const Tensor& probs) {
  if (probs.rank() != 3) throw DimensionError("predict_labels: probs must be [N_c,H,W]");
  const std::size_t nc = probs.dim(0), h = probs.dim(1), w = probs.dim(2), plane = h * w;
  LabelMap out(h, w, 0);
  const float* p = probs.data().data();
  for (std::size_t i = 0; i < plane; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < nc; ++c) {
      if (p[c * plane + i] > p[best * plane + i]) best = c;
    }
    out.data[i] = static_cast<std::uint8_t>(best);
  }
  return out;
}

TrainResult train(SegModel& model, const std::vector<SceneSample>& data, const TrainOptions& opts) {
  if (data.empty()) throw DataError("train: empty dataset");
  if (opts.epochs == 0) throw UsageError("train: epochs must be >= 1");
  if (!(opts.lr > 0.f)) throw UsageError("train: learning rate must be positive");
  const std::size_t nc = model.config().num_classes;
  for (const SceneSample& s : data) {
    for (std::uint8_t y : s.labels.data) {
      if (y >= nc) throw DataError("train: label " + std::to_string(y) + " out of range in sample " + s.split + "/" +
                                   std::to_string(s.index));
    }
  }
  std::vector<AdamState> states;
  for (const Tensor& w : model.weights()) states.emplace_back(w.shape());
  AdamParams hp;
  hp.lr = opts.lr;

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (std::size_t e = 0; e < opts.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    RngStream rng(opts.seed, "train-order", e);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.integer(0, i - 1)]);

    if (opts.cosine_decay) {
      const double pi = 3.14159265358979323846;
      hp.lr = static_cast<float>(opts.lr * 0.5 * (1 + std::cos(pi * static_cast<double>(e) / static_cast<double>(opts.epochs))));
    }
    std::vector<double> losses;
    for (std::size_t k : order) {
      const SceneSample& s = data[k];
      ad::Tape<float> tape;
      std::vector<ad::Var<float>> w;
      const auto probs = model.forward(tape, tape.constant(s.image), &w);
      const Mask all(s.labels.height, s.labels.width, true);
      const auto loss = pixelwise_ce(probs, s.labels, all);
      tape.backward(loss);
      losses.push_back(loss.value()[0]);
      for (std::size_t j = 0; j < w.size(); ++j) {
        adam_step(model.weights()[j], w[j].grad(), states[j], hp);
        model.weights()[j].require_finite("model weight after training step");
      }
    }
    const double mean = pairwise_sum<double>(losses) / static_cast<double>(losses.size());
    result.epoch_loss.push_back(mean);
    if (opts.on_epoch) opts.on_epoch(e, mean);
  }
  return result;
}

std::string serialize_weights(const SegModel& model) {
  const ModelConfig& c = model.config();
  nlohmann::json h = {{"format", kWeightFormat},
                      {"num_classes", c.num_classes},
                      {"widths", {c.widths[0], c.widths[1]}},
                      {"mid_convs", c.mid_convs},
                      {"global_context", c.global_context},
                      {"seed", c.seed}};
  std::ostringstream os;
  os << h.dump() << '\n';
  for (const Tensor& t : model.weights()) io::write_pft(os, t);
  return os.str();
}

void save_weights(const SegModel& model, const std::filesystem::path& path) {
  io::write_file_atomic(path, serialize_weights(model));
}

SegModel load_weights(const std::filesystem::path& path, const ModelConfig* expected) {
  const std::string bytes = io::read_file(path);
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError("weights '" + path.string() + "': missing header line");
  ModelConfig cfg;
  try {
    const auto h = nlohmann::json::parse(bytes.substr(0, nl));
    if (h.value("format", std::string{}) != kWeightFormat) {
      throw FormatError("weights '" + path.string() + "': not a segmentation weight file");
    }
    cfg.num_classes = h.at("num_classes").get<std::size_t>();
    cfg.widths = {h.at("widths").at(0).get<std::size_t>(), h.at("widths").at(1).get<std::size_t>()};
    cfg.mid_convs = h.at("mid_convs").get<std::size_t>();
    cfg.global_context = h.at("global_context").get<bool>();
    cfg.seed = h.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("weights '" + path.string() + "': bad header: " + e.what());
  }
  auto arch = [](const ModelConfig& c) {
    return std::to_string(c.num_classes) + " classes, widths [" + std::to_string(c.widths[0]) + "," +
           std::to_string(c.widths[1]) + "], " + std::to_string(c.mid_convs) + " mid convs" +
           (c.global_context ? ", global context" : "");
  };
  if (expected && (expected->num_classes != cfg.num_classes || expected->widths != cfg.widths ||
                   expected->mid_convs != cfg.mid_convs || expected->global_context != cfg.global_context)) {
    throw DimensionError("weights '" + path.string() + "': stored model has " + arch(cfg) + ", expected " +
                         arch(*expected));
  }
  std::istringstream is(bytes.substr(nl + 1));
  std::vector<Tensor> w;
  const auto shapes = weight_shapes(cfg);
  for (const Shape& s : shapes) {
    Tensor t = io::read_pft(is);
    if (t.shape() != s) {
      throw FormatError("weights '" + path.string() + "': tensor shape " + shape_str(t.shape()) +
                        " does not match architecture " + shape_str(s));
    }
    w.push_back(std::move(t));
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("weights '" + path.string() + "': trailing bytes");
  return SegModel(cfg, std::move(w));
}

}  // namespace rwpatch
