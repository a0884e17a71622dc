#include <gtest/gtest.h>

#include <cmath>

#include "rwpatch/io.hpp"
#include "rwpatch/metrics.hpp"
#include "rwpatch/segmodel.hpp"
#include "support.hpp"

using namespace rwpatch;

TEST(SegModel, OutputShapeAndNormalization) {
  const auto model = rwtest::tiny_model();
  for (auto [h, w] : {std::pair{8, 8}, std::pair{16, 32}, std::pair{64, 128}}) {
    const Tensor img = rwtest::random_tensor({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, 1);
    const Tensor p = model.predict(img);
    ASSERT_EQ(p.shape(), (Shape{5, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}));
    const std::size_t plane = static_cast<std::size_t>(h * w);
    for (std::size_t i = 0; i < plane; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += p[c * plane + i];
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
  }
}

TEST(SegModel, IndivisibleInputRaises) {
  const auto model = rwtest::tiny_model();
  EXPECT_THROW(model.predict(Tensor(Shape{3, 10, 16})), DimensionError);
}

TEST(SegModel, ForwardIsDeterministic) {
  const auto model = rwtest::tiny_model();
  const Tensor img = rwtest::random_tensor({3, 16, 32}, 2);
  EXPECT_EQ(model.predict(img), model.predict(img));
  EXPECT_EQ(rwtest::tiny_model().weights(), model.weights());
}

TEST(SegModel, ArgmaxRules) {
  Tensor onehot(Shape{5, 1, 5});
  for (std::size_t i = 0; i < 5; ++i) onehot[((4 - i) * 5) + i] = 1;
  const LabelMap l = predict_labels(onehot);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(l.data[i], 4 - i);
  const LabelMap u = predict_labels(Tensor(Shape{5, 2, 3}, 0.2f));
  for (auto v : u.data) EXPECT_EQ(v, 0);
}

TEST(SegModel, ArgmaxCommutesWithSoftmaxAndScaling) {
  const Tensor z = rwtest::random_tensor({5, 6, 6}, 3, -4, 4);
  ad::Tape<float> t;
  const auto zv = t.constant(z);
  const LabelMap a = predict_labels(z);
  EXPECT_EQ(predict_labels(ad::softmax_channels(zv).value()), a);
  EXPECT_EQ(predict_labels(ad::softmax_channels(ad::scale(zv, 2.f)).value()), a);
}

TEST(SegModel, SaveLoadRoundTrip) {
  const auto model = rwtest::tiny_model(4);
  const auto dir = rwtest::scratch_dir("weights");
  save_weights(model, dir / "m.rwm");
  const auto back = load_weights(dir / "m.rwm");
  const Tensor img = rwtest::random_tensor({3, 16, 32}, 5);
  EXPECT_EQ(back.predict(img), model.predict(img));
  EXPECT_EQ(back.config(), model.config());
  EXPECT_EQ(serialize_weights(back), serialize_weights(model));
}

TEST(SegModel, TruncatedFileIsFormatError) {
  const auto model = rwtest::tiny_model(4);
  const auto dir = rwtest::scratch_dir("weights-cut");
  const std::string bytes = serialize_weights(model);
  for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    io::write_file_atomic(dir / "m.rwm", bytes.substr(0, cut));
    EXPECT_THROW(load_weights(dir / "m.rwm"), FormatError) << cut;
  }
  io::write_file_atomic(dir / "m.rwm", "garbage\n");
  EXPECT_THROW(load_weights(dir / "m.rwm"), FormatError);
}

TEST(SegModel, WrongClassCountIsDimensionError) {
  const auto dir = rwtest::scratch_dir("weights-nc");
  save_weights(rwtest::tiny_model(), dir / "m.rwm");
  ModelConfig expected = rwtest::tiny_model().config();
  expected.num_classes = 4;
  EXPECT_THROW(load_weights(dir / "m.rwm", &expected), DimensionError);
}

TEST(SegModel, ArchitectureOptions) {
  ModelConfig mc;
  mc.widths = {4, 4};
  mc.mid_convs = 3;
  mc.global_context = true;
  const SegModel m(mc);
  EXPECT_EQ(m.weights().size(), weight_shapes(mc).size());
  EXPECT_EQ(m.predict(rwtest::random_tensor({3, 16, 16}, 6)).shape(), (Shape{5, 16, 16}));
  mc.mid_convs = 0;
  EXPECT_THROW(SegModel{mc}, ConfigError);
}

TEST(SegModel, OverfitsOneSample) {
  auto model = rwtest::tiny_model(7);
  const auto data = rwtest::small_samples(1);
  TrainOptions opts;
  opts.epochs = 50;
  const auto res = train(model, data, opts);
  ASSERT_EQ(res.epoch_loss.size(), 50u);
  EXPECT_LT(res.epoch_loss.back(), res.epoch_loss.front());
  for (const auto& w : model.weights()) EXPECT_TRUE(w.all_finite());
}

TEST(SegModel, TrainingIsDeterministic) {
  const auto data = rwtest::small_samples(3);
  TrainOptions opts;
  opts.epochs = 3;
  opts.seed = 11;
  auto a = rwtest::tiny_model(2), b = rwtest::tiny_model(2);
  train(a, data, opts);
  train(b, data, opts);
  EXPECT_EQ(a.weights(), b.weights());
}

TEST(SegModel, LabelOutOfRangeIsDataError) {
  auto data = rwtest::small_samples(1);
  data[0].labels.data[0] = 9;
  auto model = rwtest::tiny_model();
  TrainOptions opts;
  opts.epochs = 1;
  EXPECT_THROW(train(model, data, opts), DataError);
}

TEST(SegModel, ClassPermutationSymmetry) {
  // Relabel classes by a permutation, train on both, and compare mIoU after
  // mapping predictions back. Kernel init does not depend on class order
  // except through the head rows, so permute those too.
  const std::uint8_t perm[5] = {3, 0, 4, 1, 2};
  auto data = rwtest::small_samples(3);
  auto pdata = data;
  for (auto& s : pdata)
    for (auto& l : s.labels.data) l = perm[l];
  auto a = rwtest::tiny_model(5);
  auto weights = a.weights();
  // Head kernel and bias are the last two tensors; row c moves to perm[c].
  Tensor& hk = weights[weights.size() - 2];
  Tensor& hb = weights.back();
  const Tensor hk0 = hk, hb0 = hb;
  const std::size_t row = hk.numel() / 5;
  for (std::size_t c = 0; c < 5; ++c) {
    for (std::size_t i = 0; i < row; ++i) hk[perm[c] * row + i] = hk0[c * row + i];
    hb[perm[c]] = hb0[c];
  }
  SegModel b(a.config(), weights);
  TrainOptions opts;
  opts.epochs = 2;
  train(a, data, opts);
  train(b, pdata, opts);
  ConfusionMatrix ca(5), cb(5);
  for (std::size_t k = 0; k < data.size(); ++k) {
    accumulate(ca, a.segment(data[k].image), data[k].labels);
    accumulate(cb, b.segment(pdata[k].image), pdata[k].labels);
  }
  // Channel sums run in a different order, so allow for a few flipped pixels.
  EXPECT_NEAR(miou(ca), miou(cb), 5e-3);
}
