#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "pasnet/errors.hpp"
#include "pasnet/grad_check.hpp"
#include "pasnet/gradcheck_suite.hpp"
#include "pasnet/losses.hpp"
#include "pasnet/ops.hpp"
#include "pasnet/rng.hpp"

using namespace pasnet;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = false) {
  std::vector<float> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

float at4(const Tensor& t, std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
  const auto& s = t.shape();
  return t.data()[((n * s[1] + c) * s[2] + y) * s[3] + x];
}

// Direct summation over the receptive field.
std::vector<double> conv_oracle(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t k = ws[2];
  const std::size_t ho = (xs[2] + 2 * pad - k) / stride + 1, wo = (xs[3] + 2 * pad - k) / stride + 1;
  std::vector<double> out(xs[0] * ws[0] * ho * wo);
  for (std::size_t n = 0; n < xs[0]; ++n)
    for (std::size_t co = 0; co < ws[0]; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = b.defined() ? b.data()[co] : 0.0;
          for (std::size_t ci = 0; ci < xs[1]; ++ci)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - pad;
                const long ix = static_cast<long>(ox * stride + kx) - pad;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs[2]) || ix >= static_cast<long>(xs[3])) continue;
                acc += static_cast<double>(at4(x, n, ci, iy, ix)) * at4(w, co, ci, ky, kx);
              }
          out[((n * ws[0] + co) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

}  // namespace

TEST(Tensor, FactoriesValidateShape) {
  EXPECT_THROW(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ShapeError);
  auto t = Tensor::full({2, 3}, 1.5f);
  EXPECT_EQ(t.numel(), 6u);
  for (float v : t.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Tensor, GradHasDataShape) {
  auto t = Tensor::zeros({3, 4}, true);
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.numel());
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  auto x = random_tensor({1, 1, 4, 4}, rng);
  auto w = Tensor::full({1, 1, 1, 1}, 1.0f);
  auto b = Tensor::zeros({1});
  Graph g;
  auto y = ops::conv2d(g, x, w, b, 1, 0);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, OutputShapeArithmetic) {
  EXPECT_EQ(ops::conv2d_output_shape({16, 10, 448, 448}, {32, 10, 3, 3}, 1, 1), (Shape{16, 32, 448, 448}));
  EXPECT_EQ(ops::conv2d_output_shape({1, 32, 224, 224}, {64, 32, 3, 3}, 2, 1), (Shape{1, 64, 112, 112}));
}

TEST(Conv2d, OnesKernelOverOnes) {
  auto x = Tensor::full({1, 1, 3, 3}, 1.0f);
  auto w = Tensor::full({1, 1, 2, 2}, 1.0f);
  Graph g;
  auto y = ops::conv2d(g, x, w, Tensor{}, 1, 0);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
  for (float v : y.data()) EXPECT_EQ(v, 4.0f);
}

TEST(Conv2d, MatchesDirectSummation) {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(2), cin = 1 + rng.below(4), cout = 1 + rng.below(4);
    const std::size_t h = 3 + rng.below(6), w = 3 + rng.below(6);
    const std::size_t k = rng.below(2) ? 3 : 1;
    const int stride = 1 + static_cast<int>(rng.below(2));
    const int pad = k == 3 ? static_cast<int>(rng.below(2)) : 0;
    auto x = random_tensor({n, cin, h, w}, rng);
    auto wt = random_tensor({cout, cin, k, k}, rng);
    auto b = random_tensor({cout}, rng);
    Graph g;
    auto y = ops::conv2d(g, x, wt, b, stride, pad);
    const auto ref = conv_oracle(x, wt, b, stride, pad);
    ASSERT_EQ(y.numel(), ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(y.data()[i], ref[i], 1e-5);
  }
}

TEST(Conv2d, RejectsBadShapes) {
  Graph g;
  EXPECT_THROW(ops::conv2d(g, Tensor::zeros({1, 2, 4, 4}), Tensor::zeros({1, 3, 3, 3}), Tensor{}, 1, 1), ShapeError);
  EXPECT_THROW(ops::conv2d(g, Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), Tensor{}, 1, 0), ShapeError);
  EXPECT_THROW(ops::conv2d(g, Tensor::zeros({1, 1, 4, 4}), Tensor::zeros({1, 1, 3, 3}), Tensor{}, 3, 1), ShapeError);
}

TEST(MaxPool, WindowMax) {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Graph g;
  EXPECT_EQ(ops::maxpool2d(g, x).item(), 4.0f);
  auto c = Tensor::full({2, 3, 4, 6}, -0.25f);
  const auto y = ops::maxpool2d(g, c);
  for (float v : y.data()) EXPECT_EQ(v, -0.25f);
}

TEST(MaxPool, MatchesWindowScan) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({2, 3, 4, 4}, rng);
    Graph g;
    auto y = ops::maxpool2d(g, x);
    ASSERT_EQ(y.shape(), (Shape{2, 3, 2, 2}));
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t oy = 0; oy < 2; ++oy)
          for (std::size_t ox = 0; ox < 2; ++ox) {
            float m = -INFINITY;
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) m = std::max(m, at4(x, n, c, 2 * oy + dy, 2 * ox + dx));
            EXPECT_EQ(at4(y, n, c, oy, ox), m);
          }
  }
}

TEST(MaxPool, TieRoutesToFirst) {
  auto x = Tensor::from({1, 1, 2, 2}, {5, 5, 5, 5}, true);
  Graph g;
  auto y = ops::maxpool2d(g, x);
  g.backward(ops::sum(g, y));
  EXPECT_EQ(x.grad()[0], 1.0f);
  EXPECT_EQ(x.grad()[1], 0.0f);
  EXPECT_EQ(x.grad()[2], 0.0f);
  EXPECT_EQ(x.grad()[3], 0.0f);
}

TEST(MaxPool, RejectsOddExtent) {
  Graph g;
  EXPECT_THROW(ops::maxpool2d(g, Tensor::zeros({1, 1, 3, 4})), ShapeError);
}

TEST(Relu, Values) {
  auto x = Tensor::from({2}, {-1.5f, 2.0f});
  Graph g;
  auto y = ops::relu(g, x);
  EXPECT_EQ(y.data()[0], 0.0f);
  EXPECT_EQ(y.data()[1], 2.0f);
}

TEST(Concat, ChannelOrder) {
  auto a = Tensor::full({1, 2, 4, 4}, 1.0f);
  auto b = Tensor::full({1, 3, 4, 4}, 2.0f);
  Graph g;
  auto y = ops::concat_channels(g, a, b);
  ASSERT_EQ(y.shape(), (Shape{1, 5, 4, 4}));
  EXPECT_EQ(at4(y, 0, 1, 3, 3), 1.0f);
  EXPECT_EQ(at4(y, 0, 2, 0, 0), 2.0f);
  EXPECT_THROW(ops::concat_channels(g, a, Tensor::zeros({1, 3, 2, 2})), ShapeError);
}

TEST(Add, RejectsShapeMismatch) {
  Graph g;
  EXPECT_THROW(ops::add(g, Tensor::zeros({2, 3}), Tensor::zeros({3, 2})), ShapeError);
}

TEST(Upsample, NearestCopies) {
  auto x = Tensor::from({1, 1, 2, 2}, {1, 2, 3, 4});
  Graph g;
  auto y = ops::upsample_nearest2x(g, x);
  ASSERT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
  const std::vector<float> expect{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(y.data()[i], expect[i]);
}

TEST(BatchNorm, TrainingMomentsNormalized) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(4), c = 1 + rng.below(5), h = 2 + rng.below(5), w = 2 + rng.below(5);
    auto x = random_tensor({n, c, h, w}, rng, -3.0, 5.0);
    auto stats = ops::RunningStats::init(c);
    Graph g;
    auto y = ops::batchnorm2d(g, x, Tensor::full({c}, 1.0f), Tensor::zeros({c}), stats, true);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0, s2 = 0;
      const double m = static_cast<double>(n * h * w);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) s += at4(y, i, ch, yy, xx);
      const double mean = s / m;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t yy = 0; yy < h; ++yy)
          for (std::size_t xx = 0; xx < w; ++xx) s2 += std::pow(at4(y, i, ch, yy, xx) - mean, 2);
      EXPECT_NEAR(mean, 0.0, 1e-4);
      EXPECT_NEAR(s2 / m, 1.0, 1e-4);
    }
  }
}

TEST(BatchNorm, RunningStatsMomentum) {
  auto x = Tensor::from({2, 1, 1, 2}, {1, 3, 5, 7});
  auto stats = ops::RunningStats::init(1);
  Graph g;
  ops::batchnorm2d(g, x, Tensor::full({1}, 1.0f), Tensor::zeros({1}), stats, true);
  // Batch mean 4, unbiased variance 20/3.
  EXPECT_NEAR(stats.mean.data()[0], 0.1 * 4.0, 1e-6);
  EXPECT_NEAR(stats.var.data()[0], 0.9 + 0.1 * 20.0 / 3.0, 1e-6);
}

TEST(BatchNorm, EvalUsesRunningStats) {
  auto stats = ops::RunningStats::init(1);
  stats.mean.data()[0] = 2.0f;
  stats.var.data()[0] = 4.0f;
  auto x = Tensor::from({1, 1, 1, 2}, {2.0f, 6.0f});
  Graph g;
  auto y = ops::batchnorm2d(g, x, Tensor::full({1}, 3.0f), Tensor::full({1}, 0.5f), stats, false);
  EXPECT_NEAR(y.data()[0], 0.5, 1e-6);
  EXPECT_NEAR(y.data()[1], 0.5 + 3.0 * 4.0 / std::sqrt(4.0 + 1e-5), 1e-5);
  EXPECT_EQ(stats.mean.data()[0], 2.0f);
}

TEST(GlobalAvgPool, Values) {
  Graph g;
  EXPECT_EQ(ops::global_avg_pool(g, Tensor::from({1, 1, 2, 2}, {1, 3, 5, 7})).item(), 4.0f);
  auto c = ops::global_avg_pool(g, Tensor::full({2, 3, 5, 5}, 0.75f));
  ASSERT_EQ(c.shape(), (Shape{2, 3}));
  for (float v : c.data()) EXPECT_FLOAT_EQ(v, 0.75f);
}

TEST(GlobalAvgPool, MatchesSummation) {
  Rng rng(5);
  auto x = random_tensor({2, 512, 14, 14}, rng);
  Graph g;
  auto y = ops::global_avg_pool(g, x);
  ASSERT_EQ(y.shape(), (Shape{2, 512}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 512; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < 196; ++i) s += x.data()[(n * 512 + c) * 196 + i];
      EXPECT_NEAR(y.data()[n * 512 + c], s / 196.0, 1e-6);
    }
}

TEST(Linear, IdentityAndShape) {
  Rng rng(6);
  auto x = random_tensor({3, 3}, rng);
  auto eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Graph g;
  auto y = ops::linear(g, x, eye, Tensor::zeros({3}));
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
  auto big = ops::linear(g, Tensor::zeros({16, 512}), Tensor::zeros({4, 512}), Tensor::zeros({4}));
  EXPECT_EQ(big.shape(), (Shape{16, 4}));
  EXPECT_THROW(ops::linear(g, Tensor::zeros({2, 5}), Tensor::zeros({4, 6}), Tensor::zeros({4})), ShapeError);
}

TEST(Linear, MatchesTripleLoop) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor({3, 3}, rng), w = random_tensor({3, 3}, rng), b = random_tensor({3}, rng);
    Graph g;
    auto y = ops::linear(g, x, w, b);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        double acc = b.data()[j];
        for (std::size_t k = 0; k < 3; ++k) acc += static_cast<double>(x.data()[i * 3 + k]) * w.data()[j * 3 + k];
        EXPECT_NEAR(y.data()[i * 3 + j], acc, 1e-6);
      }
  }
}

TEST(Backward, SumGivesOnes) {
  Rng rng(8);
  auto x = random_tensor({2, 3}, rng, -1, 1, true);
  Graph g;
  g.backward(ops::sum(g, x));
  for (float v : x.grad()) EXPECT_EQ(v, 1.0f);
}

TEST(Backward, HalfSquareGivesX) {
  Rng rng(9);
  auto x = random_tensor({4, 5}, rng, -1, 1, true);
  Graph g;
  g.backward(ops::scale(g, ops::sum(g, ops::mul(g, x, x)), 0.5f));
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(x.grad()[i], x.data()[i]);
}

TEST(Backward, AccumulatesAcrossCalls) {
  auto x = Tensor::from({2}, {1, 2}, true);
  for (int call = 0; call < 2; ++call) {
    Graph g;
    g.backward(ops::sum(g, x));
  }
  EXPECT_EQ(x.grad()[0], 2.0f);
}

TEST(Backward, MultipleConsumersAccumulate) {
  auto x = Tensor::from({3}, {1, 2, 3}, true);
  Graph g;
  g.backward(ops::sum(g, ops::add(g, x, ops::scale(g, x, 2.0f))));
  for (float v : x.grad()) EXPECT_EQ(v, 3.0f);
}

TEST(Backward, RejectsNonScalarLoss) {
  auto x = Tensor::from({2}, {1, 2}, true);
  Graph g;
  auto y = ops::relu(g, x);
  EXPECT_THROW(g.backward(y), ShapeError);
}

TEST(Backward, Linearity) {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = random_tensor({1, 2, 5, 5}, rng, -1, 1, true);
    auto w = random_tensor({3, 2, 3, 3}, rng);
    auto r = random_tensor({1, 3, 5, 5}, rng);
    const float a = static_cast<float>(rng.uniform(-2, 2)), b = static_cast<float>(rng.uniform(-2, 2));
    auto f = [&](Graph& g) { return ops::sum(g, ops::mul(g, ops::conv2d(g, x, w, Tensor{}, 1, 1), r)); };
    auto h = [&](Graph& g) { return ops::sum(g, ops::mul(g, ops::global_avg_pool(g, x), ops::global_avg_pool(g, x))); };
    auto grad_of = [&](auto fn) {
      x.zero_grad();
      Graph g;
      g.backward(fn(g));
      return std::vector<float>(x.grad().begin(), x.grad().end());
    };
    const auto gf = grad_of(f), gh = grad_of(h);
    const auto gc = grad_of([&](Graph& g) { return ops::add(g, ops::scale(g, f(g), a), ops::scale(g, h(g), b)); });
    for (std::size_t i = 0; i < gc.size(); ++i) EXPECT_NEAR(gc[i], a * gf[i] + b * gh[i], 1e-5);
  }
}

TEST(Ops, RejectNonFinite) {
  Graph g;
  auto x = Tensor::from({1, 1, 2, 2}, {1.0f, NAN, 0.0f, 2.0f});
  EXPECT_THROW(ops::relu(g, x), NumericError);
  EXPECT_THROW(ops::maxpool2d(g, x), NumericError);
  EXPECT_THROW(ops::add(g, x, Tensor::zeros({1, 1, 2, 2})), NumericError);
}

TEST(Ops, Deterministic) {
  Rng r1(11), r2(11);
  auto x1 = random_tensor({2, 3, 8, 8}, r1), x2 = random_tensor({2, 3, 8, 8}, r2);
  auto w = Tensor::full({4, 3, 3, 3}, 0.1f);
  Graph g;
  auto y1 = ops::conv2d(g, x1, w, Tensor{}, 2, 1), y2 = ops::conv2d(g, x2, w, Tensor{}, 2, 1);
  for (std::size_t i = 0; i < y1.numel(); ++i) EXPECT_EQ(y1.data()[i], y2.data()[i]);
}

TEST(Ops, ShapeAlgebraRandom) {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(3), c = 1 + rng.below(4), h = 2 * (1 + rng.below(5)), w = 2 * (1 + rng.below(5));
    auto x = Tensor::zeros({n, c, h, w});
    Graph g;
    EXPECT_EQ(ops::maxpool2d(g, x).shape(), (Shape{n, c, h / 2, w / 2}));
    EXPECT_EQ(ops::upsample_nearest2x(g, x).shape(), (Shape{n, c, 2 * h, 2 * w}));
    EXPECT_EQ(ops::global_avg_pool(g, x).shape(), (Shape{n, c}));
    EXPECT_EQ(ops::relu(g, x).shape(), x.shape());
    const std::size_t co = 1 + rng.below(4);
    const int stride = 1 + static_cast<int>(rng.below(2));
    auto y = ops::conv2d(g, x, Tensor::zeros({co, c, 3, 3}), Tensor{}, stride, 1);
    EXPECT_EQ(y.shape(), (Shape{n, co, (h - 1) / stride + 1, (w - 1) / stride + 1}));
  }
}

TEST(GradCheck, SumIsExact) {
  Rng rng(13);
  auto x = random_tensor({3, 4}, rng, -1, 1, true);
  EXPECT_LT(grad_check([&](Graph& g) { return ops::sum(g, x); }, x), 1e-3);
}

TEST(GradCheck, BceAgainstFixedTarget) {
  Rng rng(14);
  auto x = random_tensor({2, 3, 4, 4}, rng, -3, 3, true);
  auto t = Tensor::zeros({2, 3, 4, 4});
  for (auto& v : t.data()) v = rng.uniform() < 0.5 ? 1.0f : 0.0f;
  EXPECT_LT(grad_check([&](Graph& g) { return bce_with_logits(g, x, t); }, x), 1e-2);
}

TEST(GradCheck, CompositeGraph) {
  Rng rng(15);
  auto x = random_tensor({2, 2, 5, 5}, rng, -1, 1, true);
  auto w = random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5, true);
  auto lw = random_tensor({4, 3}, rng, -1, 1, true), lb = random_tensor({4}, rng, -1, 1, true);
  const std::vector<int> labels{1, 3};
  auto f = [&](Graph& g) {
    auto h = ops::relu(g, ops::conv2d(g, x, w, Tensor{}, 1, 1));
    return cross_entropy_logits(g, ops::linear(g, ops::global_avg_pool(g, h), lw, lb), labels);
  };
  GradCheckOptions opts;
  opts.kink_aware = true;
  EXPECT_LT(grad_check(f, {x, w, lw, lb}, opts), 1e-2);
}

TEST(GradCheck, CatchesWrongGradient) {
  // 3x computed off the recorded graph: the analytic gradient is zero while
  // the numeric one is 3, a relative error of 1.
  auto x = Tensor::from({3}, {0.5f, 1.0f, 2.0f}, true);
  auto f = [&](Graph& g) {
    Graph detached(false);
    auto y = ops::scale(detached, x, 3.0f);
    auto z = Tensor::from({3}, std::vector<float>(y.data().begin(), y.data().end()));
    return ops::add(g, ops::sum(g, z), ops::scale(g, ops::sum(g, x), 0.0f));
  };
  EXPECT_GT(grad_check(f, x), 0.5);
}

TEST(GradCheckSuite, EveryOpUnderTolerance) {
  for (const auto& c : run_gradcheck_suite({"all"}, 1, 20)) {
    EXPECT_LT(c.max_error, kGradCheckTolerance) << c.op;
    EXPECT_GE(c.instances, 1u);
  }
}

TEST(GradCheckSuite, RejectsUnknownOp) { EXPECT_THROW(run_gradcheck_suite({"nope"}, 1, 1), ConfigError); }
