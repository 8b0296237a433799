#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "s2i/ops.hpp"
#include "test_util.hpp"

using s2i::Tensor;
using testutil::random_tensor;

TEST(Conv, HandComputed1d) {
  // [1,2,3,4] * [1,0,-1], no padding -> [-2,-2]
  auto x = Tensor<double>::from({1, 1, 4}, {1, 2, 3, 4});
  auto w = Tensor<double>::from({1, 1, 3}, {1, 0, -1});
  auto b = Tensor<double>::from({1}, {0});
  auto y = s2i::conv(x, w, b);
  ASSERT_EQ(y.shape(), (s2i::Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), -2.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1}), -2.0);
}

TEST(Conv, KernelOneIdentity) {
  s2i::Rng rng(1);
  auto x = random_tensor<double>({2, 1, 5, 5}, rng);
  auto w = Tensor<double>::from({1, 1, 1, 1}, {1.0});
  auto b = Tensor<double>::from({1}, {0.0});
  auto y = s2i::conv(x, w, b);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv, MatchesNaive2d) {
  s2i::Rng rng(7);
  for (int iter = 0; iter < 20; ++iter) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t cout = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t h = k + static_cast<int64_t>(rng.uniform_int(14));
    int64_t w = k + static_cast<int64_t>(rng.uniform_int(14));
    int64_t stride = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t pad = static_cast<int64_t>(rng.uniform_int(2));
    auto x = random_tensor<double>({n, cin, h, w}, rng);
    auto wt = random_tensor<double>({cout, cin, k, k}, rng);
    auto b = random_tensor<double>({cout}, rng);
    auto y = s2i::conv(x, wt, b, stride, pad);
    auto ref = oracle::conv2d_naive(x.data(), n, cin, h, w, wt.data(), cout, k,
                                    b.data(), stride, pad);
    ASSERT_EQ(y.data().size(), ref.size());
    EXPECT_LE(testutil::max_rel_diff(y.data(), ref), 1e-12);
  }
}

TEST(Conv, MatchesNaiveSpecInstance) {
  // The 2x3x16x16 instance called out as the direct-convolution check.
  s2i::Rng rng(42);
  auto x = random_tensor<double>({2, 3, 16, 16}, rng);
  auto w = random_tensor<double>({4, 3, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto y = s2i::conv(x, w, b, 1, 0);
  auto ref = oracle::conv2d_naive(x.data(), 2, 3, 16, 16, w.data(), 4, 3,
                                  b.data(), 1, 0);
  EXPECT_LE(testutil::max_rel_diff(y.data(), ref), 1e-12);
}

TEST(Conv, MatchesNaive1d) {
  s2i::Rng rng(11);
  for (int iter = 0; iter < 20; ++iter) {
    int64_t cin = 1 + static_cast<int64_t>(rng.uniform_int(3));
    int64_t cout = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(4));
    int64_t len = k + static_cast<int64_t>(rng.uniform_int(20));
    int64_t stride = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t pad = static_cast<int64_t>(rng.uniform_int(3));
    auto x = random_tensor<double>({2, cin, len}, rng);
    auto wt = random_tensor<double>({cout, cin, k}, rng);
    auto b = random_tensor<double>({cout}, rng);
    auto y = s2i::conv(x, wt, b, stride, pad);
    auto ref = oracle::conv1d_naive(x.data(), 2, cin, len, wt.data(), cout, k,
                                    b.data(), stride, pad);
    EXPECT_LE(testutil::max_rel_diff(y.data(), ref), 1e-12);
  }
}

TEST(Conv, RejectsBadShapes) {
  auto x = Tensor<double>::from({1, 2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto w = Tensor<double>::from({1, 1, 3}, {1, 0, -1});  // expects 1 channel
  auto b = Tensor<double>::from({1}, {0});
  EXPECT_THROW(s2i::conv(x, w, b), s2i::Error);
  // output extent < 1
  auto x2 = Tensor<double>::from({1, 1, 2}, {1, 2});
  EXPECT_THROW(s2i::conv(x2, w, b), s2i::Error);
}

TEST(MaxPool, HandComputed) {
  auto x = Tensor<double>::from({1, 1, 4}, {3, 1, 2, 5});
  auto y = s2i::maxpool(x, 2, 2);
  ASSERT_EQ(y.shape(), (s2i::Shape{1, 1, 2}));
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 3.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1}), 5.0);
}

TEST(MaxPool, TieRoutesGradientToFirstElement) {
  auto x = Tensor<double>::full({1, 1, 4}, 2.0);
  x.set_requires_grad(true);
  auto y = s2i::maxpool(x, 2, 2);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 2.0);
  s2i::sum(y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 0.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 1.0);
  EXPECT_DOUBLE_EQ(x.grad()[3], 0.0);
}

TEST(MaxPool, MatchesNaive) {
  s2i::Rng rng(3);
  for (int iter = 0; iter < 20; ++iter) {
    int64_t k = 2 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t s = 1 + static_cast<int64_t>(rng.uniform_int(2));
    int64_t p = static_cast<int64_t>(rng.uniform_int(k / 2 + 1));
    int64_t h = k + static_cast<int64_t>(rng.uniform_int(12));
    int64_t w = k + static_cast<int64_t>(rng.uniform_int(12));
    auto x = random_tensor<double>({2, 3, h, w}, rng);
    auto y = s2i::maxpool(x, k, s, p);
    auto ref = oracle::maxpool2d_naive(x.data(), 6, h, w, k, s, p);
    EXPECT_EQ(testutil::max_abs_diff(y.data(), ref), 0.0);
  }
}

TEST(MaxPool, RejectsTooSmallInput) {
  auto x = Tensor<double>::from({1, 1, 3}, {1, 2, 3});
  EXPECT_THROW(s2i::maxpool(x, 4, 4), s2i::Error);
}

TEST(AvgPool, MatchesMean) {
  auto x = Tensor<double>::from({1, 1, 4}, {1, 3, 5, 7});
  auto y = s2i::avgpool(x, 2, 2);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 0}), 2.0);
  EXPECT_DOUBLE_EQ(y.at({0, 0, 1}), 6.0);
}

TEST(BatchNorm, ConstantBatchIsZeroed) {
  auto x = Tensor<double>::full({4, 2, 3}, 7.0);
  auto gamma = Tensor<double>::full({2}, 1.0);
  auto beta = Tensor<double>::zeros({2});
  auto rm = Tensor<double>::zeros({2});
  auto rv = Tensor<double>::full({2}, 1.0);
  auto y = s2i::batchnorm(x, gamma, beta, rm, rv, /*training=*/true);
  for (double v : y.data()) EXPECT_NEAR(v, 0.0, 1e-9);
}

TEST(BatchNorm, EvalModeIdentityWithUnitStats) {
  s2i::Rng rng(5);
  auto x = random_tensor<double>({3, 4, 5}, rng);
  auto gamma = Tensor<double>::full({4}, 1.0);
  auto beta = Tensor<double>::zeros({4});
  auto rm = Tensor<double>::zeros({4});
  auto rv = Tensor<double>::full({4}, 1.0);
  auto y = s2i::batchnorm(x, gamma, beta, rm, rv, /*training=*/false);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_NEAR(y.data()[i], x.data()[i] / std::sqrt(1.0 + 1e-5), 1e-12);
}

TEST(BatchNorm, TrainOutputStatisticsMatchGammaBeta) {
  s2i::Rng rng(6);
  auto x = random_tensor<double>({8, 3, 10}, rng, -5.0, 5.0);
  auto gamma = Tensor<double>::from({3}, {1.5, 0.5, 2.0});
  auto beta = Tensor<double>::from({3}, {0.25, -1.0, 3.0});
  auto rm = Tensor<double>::zeros({3});
  auto rv = Tensor<double>::full({3}, 1.0);
  auto y = s2i::batchnorm(x, gamma, beta, rm, rv, true);
  // Recompute per-channel statistics of the output.
  for (int64_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    int64_t count = 0;
    for (int64_t n = 0; n < 8; ++n)
      for (int64_t j = 0; j < 10; ++j) {
        mean += y.at({n, c, j});
        ++count;
      }
    mean /= count;
    for (int64_t n = 0; n < 8; ++n)
      for (int64_t j = 0; j < 10; ++j) {
        double d = y.at({n, c, j}) - mean;
        var += d * d;
      }
    var /= count;
    EXPECT_NEAR(mean, beta.data()[c], 1e-6);
    EXPECT_NEAR(var, gamma.data()[c] * gamma.data()[c], 1e-4);
  }
}

TEST(AdaptivePool, TargetOneIsGlobalMean) {
  s2i::Rng rng(8);
  auto x = random_tensor<double>({2, 3, 7, 9}, rng);
  auto y = s2i::adaptive_avg_pool(x, 1);
  ASSERT_EQ(y.shape(), (s2i::Shape{2, 3, 1, 1}));
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (int64_t i = 0; i < 7; ++i)
        for (int64_t j = 0; j < 9; ++j) mean += x.at({n, c, i, j});
      mean /= 63.0;
      EXPECT_NEAR(y.at({n, c, 0, 0}), mean, 1e-12);
    }
}

TEST(AdaptivePool, TargetEqualsInputIsIdentity) {
  s2i::Rng rng(9);
  auto x = random_tensor<double>({1, 2, 6, 6}, rng);
  auto y = s2i::adaptive_avg_pool(x, 6);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(AdaptivePool, MatchesWindowFormula) {
  s2i::Rng rng(10);
  auto x = random_tensor<double>({2, 2, 7, 7}, rng);
  auto y = s2i::adaptive_avg_pool(x, 3);
  auto ref = oracle::adaptive_avgpool2d_naive(x.data(), 4, 7, 7, 3);
  EXPECT_LE(testutil::max_abs_diff(y.data(), ref), 1e-14);
}

TEST(Linear, IdentityAndBias) {
  auto x = Tensor<double>::from({2, 2}, {1, 2, 3, 4});
  auto w_id = Tensor<double>::from({2, 2}, {1, 0, 0, 1});
  auto b0 = Tensor<double>::zeros({2});
  auto y = s2i::linear(x, w_id, b0);
  for (int64_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);

  auto w0 = Tensor<double>::zeros({2, 2});
  auto b = Tensor<double>::from({2}, {5, -3});
  auto y2 = s2i::linear(x, w0, b);
  EXPECT_DOUBLE_EQ(y2.at({0, 0}), 5.0);
  EXPECT_DOUBLE_EQ(y2.at({0, 1}), -3.0);
  EXPECT_DOUBLE_EQ(y2.at({1, 0}), 5.0);
  EXPECT_DOUBLE_EQ(y2.at({1, 1}), -3.0);
}

TEST(Linear, MatchesNaive) {
  s2i::Rng rng(12);
  for (int iter = 0; iter < 20; ++iter) {
    int64_t n = 1 + static_cast<int64_t>(rng.uniform_int(6));
    int64_t k = 1 + static_cast<int64_t>(rng.uniform_int(16));
    int64_t o = 1 + static_cast<int64_t>(rng.uniform_int(8));
    auto x = random_tensor<double>({n, k}, rng);
    auto w = random_tensor<double>({o, k}, rng);
    auto b = random_tensor<double>({o}, rng);
    auto y = s2i::linear(x, w, b);
    auto ref = oracle::linear_naive(x.data(), n, k, w.data(), o, b.data());
    EXPECT_LE(testutil::max_rel_diff(y.data(), ref), 1e-12);
  }
}

TEST(Linear, RejectsDimensionMismatch) {
  auto x = Tensor<double>::zeros({2, 3});
  auto w = Tensor<double>::zeros({4, 5});
  auto b = Tensor<double>::zeros({4});
  EXPECT_THROW(s2i::linear(x, w, b), s2i::Error);
}

TEST(Relu, Basics) {
  auto x = Tensor<double>::from({2}, {-1, 2});
  auto y = s2i::relu(x);
  EXPECT_DOUBLE_EQ(y.data()[0], 0.0);
  EXPECT_DOUBLE_EQ(y.data()[1], 2.0);

  auto neg = Tensor<double>::from({3}, {-5, -1, -0.5});
  neg.set_requires_grad(true);
  auto z = s2i::relu(neg);
  for (double v : z.data()) EXPECT_DOUBLE_EQ(v, 0.0);
  s2i::sum(z).backward();
  for (double g : neg.grad()) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(Dropout, IdentityCases) {
  s2i::Rng rng(13);
  auto x = random_tensor<double>({100}, rng);
  s2i::Rng drng(1);
  auto y = s2i::dropout(x, 0.0, true, drng);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
  auto z = s2i::dropout(x, 0.7, false, drng);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(z.data()[i], x.data()[i]);
  EXPECT_THROW(s2i::dropout(x, 1.0, true, drng), s2i::Error);
}

TEST(Dropout, SurvivorMeanWithinThreeSigma) {
  const int64_t n = 100000;
  auto x = Tensor<double>::full({n}, 1.0);
  s2i::Rng rng(99);
  auto y = s2i::dropout(x, 0.5, true, rng);
  double mean = 0.0;
  for (double v : y.data()) mean += v;
  mean /= double(n);
  // Each element is 0 or 2 with p=1/2; sigma of the mean = 1/sqrt(n).
  double sigma = 1.0 / std::sqrt(double(n));
  EXPECT_NEAR(mean, 1.0, 3.0 * sigma);
}

TEST(Concat, RowsAndIdentity) {
  s2i::Rng rng(14);
  std::vector<Tensor<double>> rows;
  for (int i = 0; i < 8; ++i) rows.push_back(random_tensor<double>({1, 178}, rng));
  auto out = s2i::concat(rows, 0);
  ASSERT_EQ(out.shape(), (s2i::Shape{8, 178}));
  for (int64_t r = 0; r < 8; ++r)
    for (int64_t cidx = 0; cidx < 178; ++cidx)
      EXPECT_DOUBLE_EQ(out.at({r, cidx}), rows[static_cast<size_t>(r)].at({0, cidx}));

  auto single = s2i::concat({rows[0]}, 0);
  for (int64_t i = 0; i < single.numel(); ++i)
    EXPECT_DOUBLE_EQ(single.data()[i], rows[0].data()[i]);
}

TEST(Concat, BackwardDistributesOnes) {
  auto a = Tensor<double>::full({2, 2}, 1.0);
  auto b = Tensor<double>::full({3, 2}, 2.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  auto out = s2i::concat({a, b}, 0);
  s2i::sum(out).backward();
  for (double g : a.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
  for (double g : b.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Concat, RejectsIncompatibleShapes) {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({2, 4});
  EXPECT_THROW(s2i::concat({a, b}, 0), s2i::Error);
}

TEST(Resize, ConstantImageStaysConstant) {
  auto x = Tensor<double>::full({1, 1, 5, 7}, 3.25);
  auto y = s2i::bilinear_resize(x, 13, 3);
  for (double v : y.data()) EXPECT_DOUBLE_EQ(v, 3.25);
}

TEST(Resize, SameSizeIsIdentity) {
  s2i::Rng rng(15);
  auto x = random_tensor<double>({2, 6, 6}, rng);
  auto y = s2i::bilinear_resize(x, 6, 6);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(y.data()[i], x.data()[i]);
}

TEST(Resize, MatchesCoordinateFormula) {
  s2i::Rng rng(16);
  auto x = random_tensor<double>({1, 2, 2}, rng);
  auto y = s2i::bilinear_resize(x, 4, 4);
  auto ref = oracle::bilinear_naive(x.data(), 1, 2, 2, 4, 4);
  EXPECT_LE(testutil::max_abs_diff(y.data(), ref), 1e-15);

  auto big = random_tensor<double>({3, 9, 5}, rng);
  auto up = s2i::bilinear_resize(big, 17, 23);
  auto ref2 = oracle::bilinear_naive(big.data(), 3, 9, 5, 17, 23);
  EXPECT_LE(testutil::max_abs_diff(up.data(), ref2), 1e-13);
}

TEST(Resize, RejectsNonPositiveTarget) {
  auto x = Tensor<double>::zeros({1, 2, 2});
  EXPECT_THROW(s2i::bilinear_resize(x, 0, 4), s2i::Error);
}

TEST(CrossEntropy, UniformLogitsGiveLogFive) {
  auto logits = Tensor<double>::zeros({3, 5});
  auto loss = s2i::cross_entropy(logits, {0, 2, 4});
  EXPECT_NEAR(loss.item(), std::log(5.0), 1e-12);
}

TEST(CrossEntropy, ConfidentLogitNearZeroLoss) {
  auto logits = Tensor<double>::from({1, 5}, {100, 0, 0, 0, 0});
  auto loss = s2i::cross_entropy(logits, {0});
  EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(CrossEntropy, RejectsOutOfRangeLabel) {
  auto logits = Tensor<double>::zeros({1, 5});
  EXPECT_THROW(s2i::cross_entropy(logits, {5}), s2i::Error);
}

TEST(Softmax, RowsSumToOne) {
  s2i::Rng rng(17);
  auto x = random_tensor<double>({10, 5}, rng, -30.0, 30.0);
  auto p = s2i::softmax(x);
  for (int64_t i = 0; i < 10; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < 5; ++j) s += p.at({i, j});
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(StackChannels, ThreeIdenticalCopies) {
  s2i::Rng rng(18);
  auto img = random_tensor<double>({4, 4}, rng);
  auto out = s2i::stack_channels(img);
  ASSERT_EQ(out.shape(), (s2i::Shape{3, 4, 4}));
  for (int64_t c = 0; c < 3; ++c)
    for (int64_t i = 0; i < 4; ++i)
      for (int64_t j = 0; j < 4; ++j)
        EXPECT_DOUBLE_EQ(out.at({c, i, j}), img.at({i, j}));

  auto zero = Tensor<double>::zeros({2, 2});
  auto zout = s2i::stack_channels(zero);
  for (double v : zout.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(StackChannels, BackwardSumsChannelGradients) {
  auto img = Tensor<double>::full({2, 2}, 1.0);
  img.set_requires_grad(true);
  auto out = s2i::stack_channels(img);
  s2i::sum(out).backward();
  for (double g : img.grad()) EXPECT_DOUBLE_EQ(g, 3.0);
}

TEST(Parallel, ResultsIndependentOfWorkerCount) {
  s2i::Rng rng(19);
  auto x = random_tensor<double>({2, 3, 17, 19}, rng);
  int saved = s2i::worker_count();
  s2i::set_worker_count(1);
  auto y1 = s2i::maxpool(x, 3, 2, 1);
  auto r1 = s2i::bilinear_resize(x, 31, 9);
  s2i::set_worker_count(3);
  auto y3 = s2i::maxpool(x, 3, 2, 1);
  auto r3 = s2i::bilinear_resize(x, 31, 9);
  s2i::set_worker_count(saved);
  EXPECT_EQ(y1.data(), y3.data());
  EXPECT_EQ(r1.data(), r3.data());
}
