#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dagsynth/gbdt.hpp"

namespace dagsynth {
namespace {

BoostingConfig quick() {
  BoostingConfig c;
  c.n_trees = 80;
  c.max_depth = 4;
  return c;
}

TEST(BoostedTrees, SeparableClassifier) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::MatrixXd x(400, 2);
  std::vector<std::int32_t> y(400);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    y[static_cast<std::size_t>(i)] = (x(i, 0) > 0 ? 1 : 0) + (x(i, 1) > 0.5 ? 1 : 0);
  }
  const auto model = BoostedTrees::fit_classifier(x, y, 3, quick());
  const Eigen::MatrixXd p = model.predict(x);
  ASSERT_EQ(p.cols(), 3);
  int correct = 0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    Eigen::Index arg = 0;
    p.row(i).maxCoeff(&arg);
    correct += arg == y[static_cast<std::size_t>(i)] ? 1 : 0;
  }
  EXPECT_GT(correct, 390);
}

TEST(BoostedTrees, Regressor) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  Eigen::MatrixXd x(500, 1);
  std::vector<double> y(500);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    x(i, 0) = u(rng);
    y[static_cast<std::size_t>(i)] = x(i, 0) * x(i, 0);
  }
  const auto model = BoostedTrees::fit_regressor(x, y, quick());
  const Eigen::MatrixXd p = model.predict(x);
  ASSERT_EQ(p.cols(), 1);
  double mse = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    mse += std::pow(p(i, 0) - y[static_cast<std::size_t>(i)], 2);
  }
  EXPECT_LT(mse / 500.0, 0.01);
}

TEST(BoostedTrees, ConstantFeatureFallsBackToPrior) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(100, 1);
  std::vector<std::int32_t> y(100);
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = i < 25 ? 1 : 0;
  }
  const auto model = BoostedTrees::fit_classifier(x, y, 2, quick());
  EXPECT_NEAR(model.predict(x)(0, 1), 0.25, 1e-9);
}

TEST(BoostedTrees, Deterministic) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::MatrixXd x(200, 3);
  std::vector<double> y(200);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < 3; ++j) {
      x(i, j) = n(rng);
    }
    y[static_cast<std::size_t>(i)] = x(i, 0) - 2 * x(i, 2);
  }
  EXPECT_EQ(BoostedTrees::fit_regressor(x, y, quick()).predict(x),
            BoostedTrees::fit_regressor(x, y, quick()).predict(x));
}

}  // namespace
}  // namespace dagsynth
