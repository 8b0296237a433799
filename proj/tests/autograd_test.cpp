#include <gtest/gtest.h>

#include <cmath>

#include "s2i/gradcheck.hpp"
#include "s2i/ops.hpp"
#include "test_util.hpp"

using s2i::GradCheckOptions;
using s2i::Tensor;
using testutil::random_tensor;

TEST(Backward, SquareAtThree) {
  auto x = Tensor<double>::from({1}, {3.0});
  x.set_requires_grad(true);
  auto y = s2i::mul(x, x);
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, RepeatedCallsAccumulate) {
  auto x = Tensor<double>::from({1}, {3.0});
  x.set_requires_grad(true);
  auto y = s2i::mul(x, x);
  y.backward();
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Backward, RejectsNonScalar) {
  auto x = Tensor<double>::from({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  auto y = s2i::relu(x);
  EXPECT_THROW(y.backward(), s2i::Error);
}

TEST(Backward, DiamondGraphAccumulates) {
  // y = x*x + x*x: both paths contribute, grad = 4x.
  auto x = Tensor<double>::from({1}, {2.5});
  x.set_requires_grad(true);
  auto sq = s2i::mul(x, x);
  auto y = s2i::add(sq, sq);
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 10.0);
}

TEST(GradCheck, Linear) {
  s2i::Rng rng(21);
  auto x = random_tensor<double>({3, 4}, rng);
  auto w = random_tensor<double>({5, 4}, rng);
  auto b = random_tensor<double>({5}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::linear(in[0], in[1], in[2]);
      },
      {x, w, b});
  EXPECT_LE(report.max_rel_err, 1e-7);
  EXPECT_EQ(report.excluded, 0);
}

TEST(GradCheck, Conv2d) {
  s2i::Rng rng(22);
  auto x = random_tensor<double>({2, 2, 6, 6}, rng);
  auto w = random_tensor<double>({3, 2, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::conv(in[0], in[1], in[2], 1, 1);
      },
      {x, w, b});
  EXPECT_LE(report.max_rel_err, 1e-6);
}

TEST(GradCheck, Conv1dStrided) {
  s2i::Rng rng(23);
  auto x = random_tensor<double>({2, 3, 11}, rng);
  auto w = random_tensor<double>({4, 3, 3}, rng);
  auto b = random_tensor<double>({4}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::conv(in[0], in[1], in[2], 2, 1);
      },
      {x, w, b});
  EXPECT_LE(report.max_rel_err, 1e-6);
}

TEST(GradCheck, BilinearResize) {
  s2i::Rng rng(24);
  auto x = random_tensor<double>({2, 5, 7}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::bilinear_resize(in[0], 11, 4);
      },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-6);
}

TEST(GradCheck, ReluAwayFromZero) {
  // Points are sampled away from the kink; gradient must match closely.
  s2i::Rng rng(25);
  std::vector<double> vals(24);
  for (auto& v : vals) {
    v = rng.uniform(0.2, 1.5);
    if (rng.uniform() < 0.5) v = -v;
  }
  auto x = Tensor<double>::from({24}, vals);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) { return s2i::relu(in[0]); },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-6);
  EXPECT_EQ(report.excluded, 0);
}

TEST(GradCheck, MaxPoolTieIsFlaggedNonCheckable) {
  // A constant plane puts every window at a tie: the one-sided derivatives
  // disagree there, so those coordinates must be excluded, not failed.
  auto x = Tensor<double>::full({1, 1, 4}, 1.0);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::maxpool(in[0], 2, 2);
      },
      {x});
  EXPECT_GT(report.excluded, 0);
  EXPECT_LE(report.max_rel_err, 1e-6);
}

TEST(GradCheck, MaxPoolRandomPoints) {
  s2i::Rng rng(26);
  auto x = random_tensor<double>({2, 2, 9, 9}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::maxpool(in[0], 3, 2, 1);
      },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-5);
}

TEST(GradCheck, AdaptiveAvgPool) {
  s2i::Rng rng(27);
  auto x = random_tensor<double>({2, 3, 7}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        return s2i::adaptive_avg_pool(in[0], 3);
      },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-7);
}

TEST(GradCheck, BatchNormTrainMode) {
  s2i::Rng rng(28);
  auto x = random_tensor<double>({4, 3, 5}, rng);
  auto gamma = random_tensor<double>({3}, rng, 0.5, 1.5);
  auto beta = random_tensor<double>({3}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        auto rm = Tensor<double>::zeros({3});
        auto rv = Tensor<double>::full({3}, 1.0);
        return s2i::batchnorm(in[0], in[1], in[2], rm, rv, true);
      },
      {x, gamma, beta});
  EXPECT_LE(report.max_rel_err, 1e-6);
}

TEST(GradCheck, BatchNormEvalMode) {
  s2i::Rng rng(29);
  auto x = random_tensor<double>({4, 3, 5}, rng);
  auto gamma = random_tensor<double>({3}, rng, 0.5, 1.5);
  auto beta = random_tensor<double>({3}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        auto rm = Tensor<double>::from({3}, {0.1, -0.2, 0.3});
        auto rv = Tensor<double>::from({3}, {1.5, 0.7, 2.0});
        return s2i::batchnorm(in[0], in[1], in[2], rm, rv, false);
      },
      {x, gamma, beta});
  EXPECT_LE(report.max_rel_err, 1e-7);
}

TEST(GradCheck, SoftmaxAndCrossEntropy) {
  s2i::Rng rng(30);
  auto x = random_tensor<double>({4, 5}, rng, -2.0, 2.0);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) { return s2i::softmax(in[0]); },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-6);

  auto logits = random_tensor<double>({6, 5}, rng, -2.0, 2.0);
  std::vector<int64_t> labels = {0, 1, 2, 3, 4, 2};
  auto report2 = s2i::gradcheck(
      [labels](const std::vector<Tensor<double>>& in) {
        return s2i::cross_entropy(in[0], labels);
      },
      {logits});
  EXPECT_LE(report2.max_rel_err, 1e-6);
}

TEST(GradCheck, CrossEntropyGradientFormula) {
  // Analytic gradient must equal (softmax - onehot)/N.
  s2i::Rng rng(31);
  auto logits = random_tensor<double>({3, 5}, rng, -1.0, 1.0);
  logits.set_requires_grad(true);
  std::vector<int64_t> labels = {2, 0, 4};
  auto loss = s2i::cross_entropy(logits, labels);
  loss.backward();
  auto p = s2i::softmax(logits);
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t j = 0; j < 5; ++j) {
      double expect = (p.at({i, j}) - (labels[static_cast<size_t>(i)] == j ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(logits.grad()[static_cast<size_t>(i * 5 + j)], expect, 1e-12);
    }
}

TEST(GradCheck, DropoutWithReseededMask) {
  s2i::Rng rng(32);
  auto x = random_tensor<double>({40}, rng);
  auto report = s2i::gradcheck(
      [](const std::vector<Tensor<double>>& in) {
        s2i::Rng mask_rng(777);  // same mask on every evaluation
        return s2i::dropout(in[0], 0.4, true, mask_rng);
      },
      {x});
  EXPECT_LE(report.max_rel_err, 1e-7);
}

TEST(GradCheck, CompositeConvReluPoolLinearCrossEntropy) {
  s2i::Rng rng(33);
  auto x = random_tensor<double>({2, 1, 12, 12}, rng);
  auto w = random_tensor<double>({3, 1, 3, 3}, rng);
  auto b = random_tensor<double>({3}, rng);
  auto fw = random_tensor<double>({5, 75}, rng, -0.3, 0.3);
  auto fb = random_tensor<double>({5}, rng);
  std::vector<int64_t> labels = {1, 3};
  auto full = s2i::gradcheck(
      [labels](const std::vector<Tensor<double>>& in) {
        auto h = s2i::conv(in[0], in[1], in[2], 1, 1);  // [2,3,12,12]
        h = s2i::relu(h);
        h = s2i::maxpool(h, 2, 2);                       // [2,3,6,6]
        h = s2i::adaptive_avg_pool(h, 5);                // [2,3,5,5]
        h = s2i::reshape(h, {2, 75});
        h = s2i::linear(h, in[3], in[4]);                // [2,5]
        return s2i::cross_entropy(h, labels);
      },
      {x, w, b, fw, fb}, GradCheckOptions{.step = 1e-5});
  EXPECT_LE(full.max_rel_err, 1e-4);
  EXPECT_GT(full.checked, 0);
}
