#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "emgauth/dataset.hpp"
#include "emgauth/error.hpp"
#include "emgauth/network.hpp"
#include "emgauth/training.hpp"
#include "test_support.hpp"

namespace emgauth {
namespace {

using testing::random_window;

ModelConfig tiny_config(int width = 16) {
  ModelConfig cfg;
  cfg.conv_filters = {2, 3, 3};
  cfg.dropout_rates = {0.0, 0.0, 0.0};
  cfg.embed_dim = 8;
  cfg.input_width = width;
  return cfg;
}

// Init weights plus nonzero biases, so no pre-activation sits exactly on the
// ReLU kink where finite differences are one-sided.
template <typename T>
SiameseModel<T> random_model(const ModelConfig& cfg, std::uint64_t seed) {
  SiameseModel<float> model = init_model(cfg, seed);
  Rng rng(seed + 1000);
  for (Tensor t : {Tensor::kConv1B, Tensor::kConv2B, Tensor::kConv3B, Tensor::kDenseB}) {
    for (float& b : model.tensor(t)) b = static_cast<float>(rng.uniform(-0.1, 0.1));
  }
  return model.template cast<T>();
}

TEST(Shapes, SittingWidth) {
  ModelConfig cfg;
  EXPECT_EQ(cfg.input_width, 400);
  EXPECT_EQ(cfg.reduced_width(), 398);
  EXPECT_EQ(cfg.flat_dim(), 12736);
  EXPECT_EQ(tensor_shape(cfg, Tensor::kConv1W), (std::vector<std::size_t>{16, 8, 1, 1}));
  EXPECT_EQ(tensor_shape(cfg, Tensor::kConv2W), (std::vector<std::size_t>{32, 1, 3, 16}));
  EXPECT_EQ(tensor_shape(cfg, Tensor::kConv3W), (std::vector<std::size_t>{32, 1, 1, 32}));
  EXPECT_EQ(tensor_shape(cfg, Tensor::kDenseW), (std::vector<std::size_t>{12736, 128}));

  const SiameseModel<float> model = init_model(cfg, 1);
  Rng rng(1);
  const Vector<float> e = tower_forward(model, random_window(rng, 400).data());
  EXPECT_EQ(e.size(), 128);
}

TEST(Shapes, StandingWidth) {
  ModelConfig cfg;
  cfg.input_width = 242;
  EXPECT_EQ(cfg.reduced_width(), 240);
  EXPECT_EQ(cfg.flat_dim(), 32 * 240);
  const SiameseModel<float> model = init_model(cfg, 1);
  Rng rng(1);
  EXPECT_EQ(tower_forward(model, random_window(rng, 242).data()).size(), 128);
}

TEST(Shapes, ParameterCount) {
  const ModelConfig cfg;
  const std::size_t expected = 16 * 8 + 16 + 32 * 3 * 16 + 32 + 32 * 32 + 32 + 12736 * 128 + 128;
  EXPECT_EQ(SiameseModel<float>(cfg).parameters().size(), expected);
}

TEST(Shapes, WrongWindowWidthIsShapeMismatch) {
  const SiameseModel<float> model = init_model(tiny_config(16), 1);
  Rng rng(1);
  try {
    tower_forward(model, random_window(rng, 17).data());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::kShapeMismatch);
  }
}

TEST(Forward, ZeroWindowWithZeroBiasesEmbedsToZero) {
  const SiameseModel<float> model = init_model(ModelConfig{}, 3);
  const Vector<float> e = tower_forward(model, ChannelMatrix::Zero(kChannels, 400));
  EXPECT_TRUE(e.isZero(0.0f));
}

TEST(Forward, BatchMatchesSingle) {
  const ModelConfig cfg = tiny_config(20);
  const SiameseModel<float> model = init_model(cfg, 4);
  Rng rng(4);
  std::vector<EmgWindow> windows;
  for (int i = 0; i < 5; ++i) windows.push_back(random_window(rng, 20));
  const Matrix<float> batch = embed_windows(model, windows);
  for (int i = 0; i < 5; ++i) {
    const Vector<float> single = tower_forward(model, windows[i].data());
    EXPECT_LT((batch.row(i).transpose() - single).cwiseAbs().maxCoeff(), 1e-5f);
  }
}

TEST(Forward, DropoutOnlyWithRng) {
  ModelConfig cfg = tiny_config(20);
  cfg.dropout_rates = {0.5, 0.5, 0.5};
  const SiameseModel<float> model = init_model(cfg, 4);
  Rng rng(4);
  const EmgWindow w = random_window(rng, 20);
  const Vector<float> a = tower_forward(model, w.data());
  EXPECT_EQ(a, tower_forward(model, w.data()));
  Rng d1(1);
  EXPECT_NE(a, tower_forward(model, w.data(), &d1));
}

TEST(Forward, RollIsNotEquivariantForFixedModel) {
  const ModelConfig cfg = tiny_config(16);
  const SiameseModel<float> model = init_model(cfg, 9);
  Rng rng(9);
  const EmgWindow w = random_window(rng, 16);
  const Vector<float> base = tower_forward(model, w.data());
  bool differs = false;
  for (int k = 1; k < kChannels; ++k) {
    differs = differs || (tower_forward(model, roll_channels(w, k).data()) - base).norm() > 1e-4f;
  }
  EXPECT_TRUE(differs);
}

TEST(Distance, HandValues) {
  Embedding a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  EXPECT_NEAR(distance(a, b, DistanceKind::kEuclidean), std::sqrt(2.0f), 1e-6);
  EXPECT_NEAR(distance(a, b, DistanceKind::kManhattan), 2.0f, 1e-6);
  EXPECT_NEAR(distance(a, b, DistanceKind::kCosine), 1.0f, 1e-6);
}

TEST(Distance, CosineOfZeroVectorIsZero) {
  Embedding a = Embedding::Zero(3), b(3);
  b << 1, 2, 3;
  EXPECT_EQ(distance(a, b, DistanceKind::kCosine), 0.0f);
}

TEST(Distance, SymmetricAndZeroOnSelf) {
  Rng rng(2);
  for (DistanceKind kind : {DistanceKind::kEuclidean, DistanceKind::kManhattan, DistanceKind::kCosine}) {
    for (int i = 0; i < 50; ++i) {
      Embedding a(6), b(6);
      for (int j = 0; j < 6; ++j) {
        a[j] = static_cast<float>(rng.normal());
        b[j] = static_cast<float>(rng.normal());
      }
      EXPECT_FLOAT_EQ(distance(a, b, kind), distance(b, a, kind));
      EXPECT_NEAR(distance(a, a, kind), 0.0f, 1e-6);
      EXPECT_GE(distance(a, b, kind), 0.0f);
    }
  }
}

TEST(Distance, LengthMismatchThrows) {
  EXPECT_THROW(distance(Embedding::Zero(2), Embedding::Zero(3), DistanceKind::kEuclidean), Error);
}

TEST(Distance, GradientMatchesFiniteDifference) {
  Rng rng(3);
  for (DistanceKind kind : {DistanceKind::kEuclidean, DistanceKind::kManhattan, DistanceKind::kCosine}) {
    std::vector<double> a(5), b(5);
    for (int j = 0; j < 5; ++j) {
      a[j] = rng.normal();
      b[j] = rng.normal();
    }
    const double d = distance<double>(a, b, kind);
    std::vector<double> ga(5), gb(5);
    distance_gradient<double>(a, b, kind, d, ga, gb);
    for (int j = 0; j < 5; ++j) {
      auto ap = a, am = a;
      ap[j] += 1e-6;
      am[j] -= 1e-6;
      const double numeric = (distance<double>(ap, b, kind) - distance<double>(am, b, kind)) / 2e-6;
      EXPECT_NEAR(ga[j], numeric, 1e-6) << distance_name(kind) << " " << j;
      auto bp = b, bm = b;
      bp[j] += 1e-6;
      bm[j] -= 1e-6;
      const double numeric_b = (distance<double>(a, bp, kind) - distance<double>(a, bm, kind)) / 2e-6;
      EXPECT_NEAR(gb[j], numeric_b, 1e-6) << distance_name(kind) << " " << j;
    }
  }
}

TEST(Distance, NamesRoundTrip) {
  for (DistanceKind k : {DistanceKind::kEuclidean, DistanceKind::kManhattan, DistanceKind::kCosine}) {
    EXPECT_EQ(parse_distance(distance_name(k)), k);
  }
  EXPECT_THROW(parse_distance("chebyshev"), Error);
}

TEST(Loss, SameSubjectSquaresDistance) {
  const LossValue v = contrastive_loss(0.5, true, 1.0);
  EXPECT_DOUBLE_EQ(v.loss, 0.25);
  EXPECT_DOUBLE_EQ(v.grad, 1.0);
}

TEST(Loss, DifferentSubjectsInsideMargin) {
  const LossValue v = contrastive_loss(0.4, false, 1.0);
  EXPECT_NEAR(v.loss, 0.36, 1e-12);
  EXPECT_NEAR(v.grad, -1.2, 1e-12);
}

TEST(Loss, DifferentSubjectsBeyondMarginIsZero) {
  for (double d : {1.0, 1.5, 10.0}) {
    const LossValue v = contrastive_loss(d, false, 1.0);
    EXPECT_EQ(v.loss, 0.0);
    EXPECT_EQ(v.grad, 0.0);
  }
}

TEST(Loss, NonNegative) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double d = rng.uniform(0.0, 3.0);
    EXPECT_GE(contrastive_loss(d, rng.below(2) == 0, rng.uniform(0.1, 2.0)).loss, 0.0);
  }
}

PairExample random_pair(Rng& rng, int width, bool same) {
  return PairExample{random_window(rng, width, "a"), random_window(rng, width, same ? "a" : "b"),
                     same};
}

TEST(GradientCheck, DoublePrecision) {
  const ModelConfig cfg = tiny_config(16);
  Rng rng(21);
  for (int trial = 0; trial < 6; ++trial) {
    const SiameseModel<double> model = random_model<double>(cfg, 100 + trial);
    const PairExample pair = random_pair(rng, 16, trial % 2 == 0);
    EXPECT_LT(gradient_check(model, pair, 1e-5), 1e-5) << "trial " << trial;
  }
}

// Float finite differences drown in rounding noise for small gradients, so the
// float backward pass is compared against the double one instead.
TEST(GradientCheck, FloatMatchesDoubleAnalytic) {
  const ModelConfig cfg = tiny_config(16);
  Rng rng(22);
  for (int trial = 0; trial < 4; ++trial) {
    const SiameseModel<float> model = random_model<float>(cfg, 200 + trial);
    const PairExample pair = random_pair(rng, 16, trial % 2 == 0);
    const auto f = pair_backward(model, pair).grads;
    const auto d = pair_backward(model.cast<double>(), pair).grads;
    double scale = 0.0;
    for (double g : d) scale = std::max(scale, std::abs(g));
    for (std::size_t i = 0; i < f.size(); ++i) {
      ASSERT_NEAR(f[i], d[i], 1e-4 * scale) << "trial " << trial << " param " << i;
    }
  }
}

TEST(GradientCheck, OtherDistances) {
  Rng rng(23);
  for (DistanceKind kind : {DistanceKind::kManhattan, DistanceKind::kCosine}) {
    ModelConfig cfg = tiny_config(12);
    cfg.distance = kind;
    const SiameseModel<double> model = random_model<double>(cfg, 5);
    EXPECT_LT(gradient_check(model, random_pair(rng, 12, true), 1e-5), 1e-5) << distance_name(kind);
  }
}

TEST(PairsBackward, BatchEqualsSumOfSingles) {
  const ModelConfig cfg = tiny_config(10);
  const SiameseModel<double> model = random_model<double>(cfg, 7);
  Rng rng(7);
  std::vector<PairExample> pairs;
  for (int i = 0; i < 6; ++i) pairs.push_back(random_pair(rng, 10, i % 2 == 0));
  TowerBatch<double> ws;
  std::vector<double> grads(model.parameters().size(), 0.0);
  const double loss = pairs_backward<double>(model, pairs, nullptr, ws, grads, 1.0);
  std::vector<double> sum(grads.size(), 0.0);
  double loss_sum = 0.0;
  for (const auto& p : pairs) {
    const auto g = pair_backward(model, p);
    loss_sum += g.loss;
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += g.grads[i];
  }
  EXPECT_NEAR(loss, loss_sum, 1e-10);
  for (std::size_t i = 0; i < sum.size(); ++i) EXPECT_NEAR(grads[i], sum[i], 1e-10);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig cfg = tiny_config(30);
  cfg.distance = DistanceKind::kCosine;
  cfg.margin = 0.75;
  EXPECT_EQ(ModelConfig::from_json(cfg.to_json()), cfg);
  EXPECT_THROW(ModelConfig::from_json("{not json"), Error);

  ModelConfig bad;
  bad.dropout_rates[1] = 1.0;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.input_width = 2;
  EXPECT_THROW(bad.validate(), Error);
  bad = {};
  bad.conv_filters[0] = 0;
  EXPECT_THROW(bad.validate(), Error);
}

}  // namespace
}  // namespace emgauth
