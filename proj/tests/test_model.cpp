#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "tailavg/model.hpp"

using namespace tailavg;

namespace {

std::vector<Sample> random_batch(std::mt19937_64& rng, int dim, int classes, int n) {
  std::normal_distribution<double> normal;
  std::uniform_int_distribution<int> label(0, classes - 1);
  std::vector<Sample> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd x(dim);
    for (int k = 0; k < dim; ++k) x[k] = normal(rng);
    out.push_back({x, label(rng)});
  }
  return out;
}

ParamVector random_params(std::mt19937_64& rng, const MlpSpec& spec, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Eigen::VectorXd v(static_cast<Eigen::Index>(spec.param_count()));
  for (auto& x : v) x = normal(rng);
  return ParamVector(v);
}

// Relative error with a floor on the denominator so coordinates whose gradient
// is essentially zero are judged on absolute error instead.
constexpr double kRelFloor = 1e-4;

double max_fd_rel_error(const MlpSpec& spec, const ParamVector& params, const std::vector<Sample>& batch, double wd,
                        const ForwardMode& mode, std::mt19937_64& rng, int coords) {
  const auto analytic = loss_and_grad(spec, params, batch, wd, mode).grad;
  std::uniform_int_distribution<std::size_t> pick(0, params.size() - 1);
  constexpr double eps = 1e-5;
  double worst = 0.0;
  for (int c = 0; c < coords; ++c) {
    const auto i = static_cast<Eigen::Index>(pick(rng));
    Eigen::VectorXd plus = params.values(), minus = params.values();
    plus[i] += eps;
    minus[i] -= eps;
    const double fd = (loss_and_grad(spec, ParamVector(plus), batch, wd, mode).loss -
                       loss_and_grad(spec, ParamVector(minus), batch, wd, mode).loss) /
                      (2 * eps);
    const double a = analytic.values()[i];
    worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), kRelFloor}));
  }
  return worst;
}

}  // namespace

TEST(MlpSpec, ParamCountAndLayout) {
  const MlpSpec spec{2, {4}, 3, 0.0};
  EXPECT_EQ(spec.param_count(), 2u * 4 + 4 + 4 * 3 + 3);
  EXPECT_EQ(spec.layer_offset(1), 12u);
  const MlpSpec linear{5, {}, 2, 0.0};
  EXPECT_EQ(linear.param_count(), 12u);
  EXPECT_THROW((MlpSpec{2, {}, 1, 0.0}.validate()), InvalidArgument);
  EXPECT_THROW((MlpSpec{2, {0}, 2, 0.0}.validate()), InvalidArgument);
  EXPECT_THROW((MlpSpec{2, {}, 2, 1.0}.validate()), InvalidArgument);
}

TEST(MlpSpec, RowMajorWeightLayout) {
  const MlpSpec spec{2, {}, 2, 0.0};
  // W = [[1, 2], [3, 4]], b = [10, 20]
  const ParamVector p{1, 2, 3, 4, 10, 20};
  const auto z = forward(spec, p, Eigen::Vector2d(1.0, 0.0));
  EXPECT_EQ(z[0], 11.0);
  EXPECT_EQ(z[1], 23.0);
}

TEST(InitParams, DeterministicBoundedZeroBias) {
  const MlpSpec spec{2, {16, 8}, 3, 0.0};
  const auto a = init_params(spec, 11);
  EXPECT_TRUE(a.bit_equal(init_params(spec, 11)));
  EXPECT_FALSE(a.bit_equal(init_params(spec, 12)));
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / (spec.fan_in(l) + spec.fan_out(l)));
    const auto off = spec.layer_offset(l);
    const std::size_t nw = static_cast<std::size_t>(spec.fan_in(l)) * spec.fan_out(l);
    for (std::size_t i = 0; i < nw; ++i) {
      EXPECT_GT(a[off + i], -bound);
      EXPECT_LT(a[off + i], bound);
    }
    for (int i = 0; i < spec.fan_out(l); ++i) EXPECT_EQ(a[off + nw + static_cast<std::size_t>(i)], 0.0);
  }
}

TEST(Forward, ZeroNetworkGivesUniformSoftmax) {
  const MlpSpec spec{3, {5}, 4, 0.0};
  const ParamVector zero(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.param_count())));
  const auto z = forward(spec, zero, Eigen::Vector3d(1.0, -2.0, 3.0));
  EXPECT_EQ(z, Eigen::VectorXd::Zero(4));
  const auto p = softmax(z);
  for (int k = 0; k < 4; ++k) EXPECT_DOUBLE_EQ(p[k], 0.25);
}

TEST(Forward, LinearModelIsAffineInParams) {
  std::mt19937_64 rng(5);
  const MlpSpec spec{3, {}, 4, 0.0};
  const auto t1 = random_params(rng, spec), t2 = random_params(rng, spec);
  const Eigen::Vector3d x(0.3, -1.2, 2.0);
  for (double alpha : {0.0, 0.25, 0.7, 1.0}) {
    const ParamVector mix(alpha * t1.values() + (1 - alpha) * t2.values());
    const Eigen::VectorXd lhs = forward(spec, mix, x);
    const Eigen::VectorXd rhs = alpha * forward(spec, t1, x) + (1 - alpha) * forward(spec, t2, x);
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, DropoutZeroTrainEqualsEval) {
  std::mt19937_64 rng(6);
  const MlpSpec spec{2, {8, 8}, 3, 0.0};
  const auto p = random_params(rng, spec);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 10);
  const Eigen::MatrixXd a = forward_batch(spec, p, x, EvalMode{});
  const Eigen::MatrixXd b = forward_batch(spec, p, x, TrainMode{3, 17});
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()), 0);
}

TEST(Forward, DropoutIsKeyedAndInverted) {
  std::mt19937_64 rng(8);
  MlpSpec spec{2, {64}, 3, 0.5};
  const auto p = random_params(rng, spec);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(2, 4);
  const Eigen::MatrixXd a = forward_batch(spec, p, x, TrainMode{1, 5});
  EXPECT_EQ(a, forward_batch(spec, p, x, TrainMode{1, 5}));
  EXPECT_NE(a, forward_batch(spec, p, x, TrainMode{1, 6}));
  EXPECT_NE(a, forward_batch(spec, p, x, EvalMode{}));
  // Linear in the last hidden layer: averaging over many masks approaches the eval output.
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 4);
  const int draws = 4000;
  for (int it = 0; it < draws; ++it) mean += forward_batch(spec, p, x, TrainMode{2, it});
  mean /= draws;
  const Eigen::MatrixXd eval = forward_batch(spec, p, x, EvalMode{});
  EXPECT_LT((mean - eval).cwiseAbs().maxCoeff(), 0.05 * (1.0 + eval.cwiseAbs().maxCoeff()));
}

TEST(Forward, ShapeMismatch) {
  const MlpSpec spec{2, {3}, 2, 0.0};
  const ParamVector wrong{1.0, 2.0};
  EXPECT_THROW(forward(spec, wrong, Eigen::Vector2d::Zero()), ShapeError);
  const auto p = init_params(spec, 1);
  EXPECT_THROW(forward(spec, p, Eigen::Vector3d::Zero()), ShapeError);
}

TEST(LossAndGrad, ZeroParamsTwoClasses) {
  const MlpSpec spec{2, {4}, 2, 0.0};
  const ParamVector zero(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.param_count())));
  std::vector<Sample> batch{{Eigen::Vector2d(1, 2), 0}, {Eigen::Vector2d(-1, 0.5), 1}};
  EXPECT_NEAR(loss_and_grad(spec, zero, batch, 0.0).loss, std::log(2.0), 1e-15);
}

TEST(LossAndGrad, WeightDecayExcludesBiases) {
  const MlpSpec spec{1, {}, 2, 0.0};
  // W = [[1], [2]], b = [5, -5]; with x = 0 logits are the biases.
  const ParamVector p{1.0, 2.0, 5.0, -5.0};
  std::vector<Sample> batch{{Eigen::VectorXd::Zero(1), 0}};
  const auto plain = loss_and_grad(spec, p, batch, 0.0);
  const auto decayed = loss_and_grad(spec, p, batch, 0.1);
  EXPECT_NEAR(decayed.loss - plain.loss, 0.05 * (1.0 + 4.0), 1e-15);
  EXPECT_NEAR(decayed.grad[0] - plain.grad[0], 0.1, 1e-15);
  EXPECT_NEAR(decayed.grad[1] - plain.grad[1], 0.2, 1e-15);
  EXPECT_EQ(decayed.grad[2], plain.grad[2]);
  EXPECT_EQ(decayed.grad[3], plain.grad[3]);
}

TEST(LossAndGrad, DuplicatedBatchSameMean) {
  std::mt19937_64 rng(9);
  const MlpSpec spec{2, {5}, 3, 0.0};
  const auto p = random_params(rng, spec);
  const auto batch = random_batch(rng, 2, 3, 6);
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const auto a = loss_and_grad(spec, p, batch, 0.0);
  const auto b = loss_and_grad(spec, p, doubled, 0.0);
  EXPECT_NEAR(a.loss, b.loss, 1e-14);
  EXPECT_LT((a.grad.values() - b.grad.values()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LossAndGrad, Errors) {
  const MlpSpec spec{2, {}, 2, 0.0};
  const auto p = init_params(spec, 1);
  EXPECT_THROW(loss_and_grad(spec, p, std::vector<Sample>{}, 0.0), InvalidArgument);
  EXPECT_THROW(loss_and_grad(spec, p, std::vector<Sample>{{Eigen::Vector2d::Zero(), 2}}, 0.0), InvalidArgument);
  EXPECT_THROW(loss_and_grad(spec, p, std::vector<Sample>{{Eigen::Vector2d::Zero(), -1}}, 0.0), InvalidArgument);
}

TEST(LossAndGrad, LargeLogitsStayFinite) {
  const MlpSpec spec{1, {}, 2, 0.0};
  const ParamVector p{0.0, 0.0, 1000.0, -1000.0};
  std::vector<Sample> batch{{Eigen::VectorXd::Zero(1), 1}};
  EXPECT_NEAR(loss_and_grad(spec, p, batch, 0.0).loss, 2000.0, 1e-9);
}

TEST(LossAndGrad, MatchesFiniteDifferences243) {
  std::mt19937_64 rng(10);
  const MlpSpec spec{2, {4}, 3, 0.0};
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(rng, spec);
    const auto batch = random_batch(rng, 2, 3, 8);
    EXPECT_LT(max_fd_rel_error(spec, p, batch, 0.0, EvalMode{}, rng, 64), 1e-5);
  }
}

TEST(LossAndGrad, MatchesFiniteDifferencesAcrossShapes) {
  std::mt19937_64 rng(11);
  const std::vector<MlpSpec> grid{
      {2, {}, 2, 0.0}, {3, {}, 4, 0.0}, {2, {8}, 3, 0.0}, {4, {6, 5}, 3, 0.0}, {2, {16}, 5, 0.5}, {3, {4, 4, 4}, 2, 0.1}};
  for (const auto& spec : grid) {
    const auto p = random_params(rng, spec);
    const auto batch = random_batch(rng, spec.input_dim, spec.num_classes, 12);
    const ForwardMode mode = spec.dropout_rate > 0 ? ForwardMode(TrainMode{3, 4}) : ForwardMode(EvalMode{});
    EXPECT_LT(max_fd_rel_error(spec, p, batch, 1e-3, mode, rng, 64), 1e-5);
  }
}

TEST(Predict, ArgmaxAndTies) {
  EXPECT_EQ(argmax(Eigen::Vector3d(0.1, 2.0, -1.0)), 1);
  EXPECT_EQ(argmax(Eigen::Vector2d(1.0, 1.0)), 0);
}

TEST(Predict, EqualsSoftmaxArgmaxOracle) {
  std::mt19937_64 rng(12);
  const MlpSpec spec{2, {6}, 4, 0.0};
  for (int trial = 0; trial < 200; ++trial) {
    const auto p = random_params(rng, spec);
    const auto x = random_batch(rng, 2, 4, 1).front().x;
    const Eigen::VectorXd probs = softmax(forward(spec, p, x));
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < probs.size(); ++k) {
      if (probs[k] > probs[best]) best = k;
    }
    EXPECT_EQ(predict(spec, p, x), best);
  }
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> normal(0.0, 20.0);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd z(5);
    for (auto& v : z) v = normal(rng);
    const auto p = softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    const Eigen::VectorXd shifted = z.array() + normal(rng);
    EXPECT_LT((softmax(shifted) - p).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Accuracy, EmptyAndCounts) {
  const MlpSpec spec{1, {}, 2, 0.0};
  const ParamVector p{1.0, -1.0, 0.0, 0.0};  // class 0 iff x > 0
  std::vector<Sample> s{{Eigen::VectorXd::Constant(1, 1.0), 0},
                        {Eigen::VectorXd::Constant(1, -1.0), 1},
                        {Eigen::VectorXd::Constant(1, 2.0), 1},
                        {Eigen::VectorXd::Constant(1, -3.0), 1}};
  EXPECT_DOUBLE_EQ(accuracy(spec, p, s), 0.75);
  EXPECT_THROW(accuracy(spec, p, std::vector<Sample>{}), InvalidArgument);
}
