#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "tailavg/diagnostics.hpp"

using namespace tailavg;

namespace {

// Independent oracle: sort-based ranks with ties averaged, then textbook Pearson.
std::vector<double> oracle_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
  const auto rx = oracle_ranks(x), ry = oracle_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i] / n;
    my += ry[i] / n;
  }
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

RunRecord record(const std::string& id, const std::string& group, const std::vector<double>& val,
                 const std::vector<double>& test) {
  RunRecord r;
  r.run_id = id;
  r.test_domain = group;
  for (std::size_t i = 0; i < val.size(); ++i) {
    const CurvePoint p{static_cast<std::int64_t>(10 * (i + 1)), 0.0, val[i], test[i]};
    r.online_curve.push_back(p);
    r.sma_curve.push_back(p);
  }
  return r;
}

std::vector<Eigen::VectorXd> random_probs(std::mt19937_64& rng, int n, int k, double spread = 2.0) {
  std::normal_distribution<double> normal(0.0, spread);
  std::vector<Eigen::VectorXd> out;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(k);
    for (auto& v : z) v = normal(rng);
    out.push_back(softmax(z));
  }
  return out;
}

}  // namespace

TEST(Spearman, KnownValues) {
  const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4};
  EXPECT_NEAR(spearman(x, y), 0.8, 1e-15);
  const std::vector<double> rev{4, 3, 2, 1};
  EXPECT_EQ(spearman(x, rev), -1.0);
  const std::vector<double> cubed{1, 8, 27, 64};
  EXPECT_EQ(spearman(x, cubed), 1.0);
}

TEST(Spearman, AverageRanks) {
  const std::vector<double> v{10, 20, 20, 5};
  const auto r = average_ranks(v);
  EXPECT_EQ(r[0], 2.0);
  EXPECT_EQ(r[1], 3.5);
  EXPECT_EQ(r[2], 3.5);
  EXPECT_EQ(r[3], 1.0);
}

TEST(Spearman, MatchesOracleWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(2, 40), small(0, 5);
  std::normal_distribution<double> normal;
  int checked = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = len(rng);
    std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      x[static_cast<std::size_t>(i)] = trial % 2 ? small(rng) : normal(rng);
      y[static_cast<std::size_t>(i)] = small(rng);
    }
    const bool cx = std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; });
    const bool cy = std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; });
    if (cx || cy) {
      EXPECT_THROW(spearman(x, y), UndefinedCorrelationError);
      continue;
    }
    ++checked;
    ASSERT_NEAR(spearman(x, y), oracle_spearman(x, y), 1e-12) << "trial " << trial;
  }
  EXPECT_GT(checked, 900);
}

TEST(Spearman, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(20), y(20), tx(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = normal(rng);
      y[i] = normal(rng);
      tx[i] = std::exp(3 * x[i]) + 7;
    }
    EXPECT_EQ(spearman(x, y), spearman(tx, y));
  }
}

TEST(Spearman, Errors) {
  const std::vector<double> a{1, 2, 3}, b{1, 2}, c{5, 5, 5}, one{1};
  EXPECT_THROW(spearman(a, b), ShapeError);
  EXPECT_THROW(spearman(a, c), UndefinedCorrelationError);
  EXPECT_THROW(spearman(one, one), InvalidArgument);
}

TEST(WithinRun, IdenticalAndReversed) {
  std::vector<RunRecord> rs{record("a", "D0", {0.1, 0.3, 0.2}, {0.1, 0.3, 0.2}),
                            record("b", "D0", {0.5, 0.6, 0.7}, {0.5, 0.6, 0.7}),
                            record("c", "D1", {0.1, 0.2, 0.3}, {0.9, 0.8, 0.7})};
  const auto rep = within_run_rankcorr(rs, CheckpointKind::online);
  ASSERT_EQ(rep.runs.size(), 3u);
  EXPECT_EQ(rep.runs[0].rho, 1.0);
  EXPECT_EQ(rep.runs[1].rho, 1.0);
  EXPECT_EQ(rep.runs[2].rho, -1.0);
  ASSERT_EQ(rep.groups.size(), 2u);
  EXPECT_EQ(rep.groups[0].group, "D0");
  EXPECT_EQ(rep.groups[0].mean, 1.0);
  EXPECT_EQ(rep.groups[0].std_err, 0.0);
  EXPECT_EQ(rep.groups[1].mean, -1.0);
}

TEST(WithinRun, ConstantCurvesExcludedAndCounted) {
  std::vector<RunRecord> rs{record("a", "D0", {0.5, 0.5, 0.5}, {0.1, 0.2, 0.3}),
                            record("b", "D0", {0.1, 0.2, 0.3}, {0.1, 0.3, 0.2})};
  const auto rep = within_run_rankcorr(rs, CheckpointKind::sma);
  EXPECT_EQ(rep.n_excluded, 1u);
  EXPECT_EQ(rep.excluded_runs, std::vector<std::string>{"a"});
  ASSERT_EQ(rep.groups.size(), 1u);
  EXPECT_EQ(rep.groups[0].n_runs, 1u);
  EXPECT_EQ(rep.groups[0].n_excluded, 1u);
  EXPECT_NEAR(rep.groups[0].mean, 0.5, 1e-15);
}

TEST(WithinRun, GroupStatsMatchOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> acc(0, 20);
  std::vector<RunRecord> rs;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> v, t;
    for (int k = 0; k < 15; ++k) {
      v.push_back(acc(rng) / 20.0);
      t.push_back(acc(rng) / 20.0);
    }
    rs.push_back(record("r" + std::to_string(i), "G", v, t));
  }
  const auto rep = within_run_rankcorr(rs, CheckpointKind::online);
  std::vector<double> rhos;
  for (const auto& r : rs) {
    std::vector<double> v, t;
    for (const auto& p : r.online_curve) {
      v.push_back(p.val_acc);
      t.push_back(p.test_acc);
    }
    rhos.push_back(oracle_spearman(v, t));
  }
  double mean = 0;
  for (double r : rhos) mean += r / 6.0;
  double ss = 0;
  for (double r : rhos) ss += (r - mean) * (r - mean);
  EXPECT_NEAR(rep.groups[0].mean, mean, 1e-12);
  EXPECT_NEAR(rep.groups[0].std_err, std::sqrt(ss / 5.0) / std::sqrt(6.0), 1e-12);
  for (const auto& r : rep.runs) {
    EXPECT_GE(r.rho, -1.0);
    EXPECT_LE(r.rho, 1.0);
  }
}

TEST(CrossRun, ProportionalRunsGiveOne) {
  std::vector<RunRecord> rs{record("a", "D0", {0.1, 0.2}, {0.2, 0.4}), record("b", "D0", {0.3, 0.4}, {0.6, 0.8}),
                            record("c", "D0", {0.2, 0.3}, {0.4, 0.6})};
  const auto out = cross_run_rankcorr(rs, CheckpointKind::online);
  ASSERT_EQ(out.size(), 2u);
  for (const auto& p : out) EXPECT_EQ(p.rho.value(), 1.0);
  std::reverse(rs.begin(), rs.end());
  const auto again = cross_run_rankcorr(rs, CheckpointKind::online);
  for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(again[i].rho, out[i].rho);
}

TEST(CrossRun, Errors) {
  std::vector<RunRecord> one{record("a", "D0", {0.1, 0.2}, {0.2, 0.4})};
  EXPECT_THROW(cross_run_rankcorr(one, CheckpointKind::online), InvalidArgument);
  std::vector<RunRecord> mismatched{record("a", "D0", {0.1, 0.2}, {0.2, 0.4}), record("b", "D0", {0.1}, {0.2})};
  EXPECT_THROW(cross_run_rankcorr(mismatched, CheckpointKind::online), InvalidArgument);
  std::vector<RunRecord> tied{record("a", "D0", {0.1}, {0.2}), record("b", "D0", {0.1}, {0.3})};
  EXPECT_FALSE(cross_run_rankcorr(tied, CheckpointKind::online)[0].rho.has_value());
}

TEST(BiasVariance, SymmetricPair) {
  std::vector<std::vector<Eigen::VectorXd>> probs{{Eigen::Vector2d(0.8, 0.2)}, {Eigen::Vector2d(0.2, 0.8)}};
  const int labels[] = {0};
  const auto r = bias_variance(probs, labels);
  EXPECT_NEAR(r.bias, std::log(2.0), 1e-12);
  EXPECT_NEAR(r.mean_ce, (-std::log(0.8) - std::log(0.2)) / 2.0, 1e-12);
  EXPECT_NEAR(r.variance, r.mean_ce - std::log(2.0), 1e-12);
  EXPECT_NEAR(r.variance, 0.2231, 1e-4);
}

TEST(BiasVariance, IdenticalMembersHaveZeroVariance) {
  std::mt19937_64 rng(4);
  const auto p = random_probs(rng, 10, 3);
  std::vector<std::vector<Eigen::VectorXd>> probs{p, p, p};
  std::vector<int> labels(10);
  for (int i = 0; i < 10; ++i) labels[static_cast<std::size_t>(i)] = i % 3;
  const auto r = bias_variance(probs, labels);
  EXPECT_NEAR(r.variance, 0.0, 1e-14);
  EXPECT_NEAR(r.bias, r.mean_ce, 1e-12);
}

TEST(BiasVariance, IdentityAgainstDirectSums) {
  std::mt19937_64 rng(5);
  const int members = 5, n = 20, k = 4;
  std::vector<std::vector<Eigen::VectorXd>> probs;
  for (int i = 0; i < members; ++i) probs.push_back(random_probs(rng, n, k));
  std::vector<int> labels(n);
  for (int s = 0; s < n; ++s) labels[static_cast<std::size_t>(s)] = s % k;
  const auto r = bias_variance(probs, labels);
  EXPECT_LT(std::abs(r.bias + r.variance - r.mean_ce), 1e-10);
  // Direct evaluation of each term.
  double bias = 0, var = 0, ce = 0;
  for (int s = 0; s < n; ++s) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(k);
    for (int i = 0; i < members; ++i) g += probs[i][s].array().log().matrix() / members;
    g = g.array().exp().matrix();
    g /= g.sum();
    const int y = labels[static_cast<std::size_t>(s)];
    bias += -std::log(g[y]) / n;
    for (int i = 0; i < members; ++i) {
      ce += -std::log(probs[i][s][y]) / (n * members);
      for (int c = 0; c < k; ++c) var += g[c] * std::log(g[c] / probs[i][s][c]) / (n * members);
    }
  }
  EXPECT_NEAR(r.bias, bias, 1e-12);
  EXPECT_NEAR(r.variance, var, 1e-12);
  EXPECT_NEAR(r.mean_ce, ce, 1e-12);
}

TEST(BiasVariance, ArithmeticCentroidReported) {
  std::vector<std::vector<Eigen::VectorXd>> probs{{Eigen::Vector2d(0.9, 0.1)}, {Eigen::Vector2d(0.3, 0.7)}};
  const int labels[] = {0};
  const auto r = bias_variance(probs, labels, CentroidKind::arithmetic);
  EXPECT_EQ(r.centroid_kind, CentroidKind::arithmetic);
  EXPECT_NEAR(r.bias, -std::log(0.6), 1e-12);
}

TEST(BiasVariance, FlooringAndErrors) {
  std::vector<std::vector<Eigen::VectorXd>> probs{{Eigen::Vector2d(1.0, 0.0)}, {Eigen::Vector2d(0.5, 0.5)}};
  const int labels[] = {1};
  const auto r = bias_variance(probs, labels);
  EXPECT_TRUE(std::isfinite(r.mean_ce));
  EXPECT_LT(std::abs(r.bias + r.variance - r.mean_ce), 1e-10);
  std::vector<std::vector<Eigen::VectorXd>> bad{{Eigen::Vector2d(0.7, 0.7)}};
  EXPECT_THROW(bias_variance(bad, labels), InvalidArgument);
  const int two[] = {0, 1};
  EXPECT_THROW(bias_variance(probs, two), ShapeError);
}

TEST(FiniteDifference, ScalarQuadratic) {
  auto f = [](const Eigen::VectorXd& t) { return t[0] * t[0]; };
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 1.0);
  const Eigen::VectorXd d = theta - Eigen::VectorXd::Constant(1, 2.0);
  EXPECT_NEAR(directional_second_derivative(f, theta, d, 1e-3), 2.0, 1e-6);
  EXPECT_NEAR(directional_second_derivative(f, theta, d, default_fd_step(theta, d)), 2.0, 1e-6);
  EXPECT_THROW(directional_second_derivative(f, theta, d, 0.0), InvalidArgument);
}

TEST(FiniteDifference, NonFiniteReported) {
  auto f = [](const Eigen::VectorXd& t) { return 1.0 / (t[0] - 1.0); };
  const Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 1.0);
  EXPECT_THROW(directional_second_derivative(f, theta, theta, 1e-3), NonFiniteError);
}

TEST(Taylor, LinearModelHasNoCurvature) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> normal;
  const MlpSpec spec{2, {}, 3, 0.0};
  const auto n = static_cast<Eigen::Index>(spec.param_count());
  std::vector<ParamVector> iterates;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < 10; ++t) {
    Eigen::VectorXd v(n);
    for (auto& x : v) x = 3 * normal(rng);
    iterates.emplace_back(v);
    mean += v / 10.0;
  }
  std::vector<Eigen::VectorXd> samples;
  for (int s = 0; s < 30; ++s) samples.push_back(Eigen::Vector2d(normal(rng), normal(rng)));
  for (int k = 0; k < 3; ++k) {
    const auto rep = taylor_second_order(spec, ParamVector(mean), iterates, samples, k);
    ASSERT_EQ(rep.entries.size(), 30u);
    for (const auto& e : rep.entries) {
      EXPECT_LT(std::abs(e.second_order_term), 1e-6);
      EXPECT_NEAR(e.sma_logit, forward(spec, ParamVector(mean), samples[e.sample])[k], 1e-15);
    }
  }
}

TEST(Taylor, ZeroDirectionsGiveExactZero) {
  const MlpSpec spec{2, {4}, 2, 0.0};
  const auto theta = init_params(spec, 3);
  const std::vector<ParamVector> iterates{theta, theta};
  const std::vector<Eigen::VectorXd> samples{Eigen::Vector2d(1, 2)};
  const auto rep = taylor_second_order(spec, theta, iterates, samples, 1);
  EXPECT_EQ(rep.entries[0].second_order_term, 0.0);
}

TEST(Taylor, MlpCurvatureMatchesExplicitDifference) {
  const MlpSpec spec{2, {5}, 2, 0.0};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal(0.0, 0.3);
  const auto center = init_params(spec, 1);
  Eigen::VectorXd off(static_cast<Eigen::Index>(spec.param_count()));
  for (auto& x : off) x = normal(rng);
  const std::vector<ParamVector> iterates{ParamVector(center.values() + off)};
  const Eigen::Vector2d x(0.7, -0.4);
  const std::vector<Eigen::VectorXd> samples{x};
  const double h = 1e-2;
  const auto rep = taylor_second_order(spec, center, iterates, samples, 0, h);
  auto f = [&](const Eigen::VectorXd& t) { return forward(spec, ParamVector(t), x)[0]; };
  const Eigen::VectorXd d = -off;
  EXPECT_NEAR(rep.entries[0].second_order_term, 0.5 * directional_second_derivative(f, center.values(), d, h), 1e-12);
  EXPECT_EQ(rep.steps, std::vector<double>{h});
}

TEST(Taylor, Errors) {
  const MlpSpec spec{2, {}, 2, 0.0};
  const auto theta = init_params(spec, 3);
  const std::vector<Eigen::VectorXd> samples{Eigen::Vector2d(1, 2)};
  EXPECT_THROW(taylor_second_order(spec, theta, std::vector<ParamVector>{}, samples, 0), InvalidArgument);
  EXPECT_THROW(taylor_second_order(spec, theta, std::vector<ParamVector>{ParamVector{1.0}}, samples, 0), ShapeError);
  EXPECT_THROW(taylor_second_order(spec, theta, std::vector<ParamVector>{theta}, samples, 5), InvalidArgument);
  EXPECT_THROW(taylor_second_order(spec, theta, std::vector<ParamVector>{theta}, samples, 0, -1.0), InvalidArgument);
}

TEST(Stability, KnownValues) {
  std::vector<CurvePoint> flat{{1, 0, 0, 0.5}, {2, 0, 0, 0.5}, {3, 0, 0, 0.5}};
  EXPECT_EQ(stability_metric(flat, 0.5), 0.0);
  std::vector<CurvePoint> two{{1, 0, 0, 0.4}, {2, 0, 0, 0.6}};
  EXPECT_NEAR(stability_metric(two, 1.0), std::sqrt(0.02), 1e-15);
  EXPECT_THROW(stability_metric(two, 0.5), InvalidArgument);
  EXPECT_THROW(stability_metric(two, 0.0), InvalidArgument);
}

TEST(Stability, MatchesTextbookSampleStd) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u;
  std::uniform_int_distribution<int> len(4, 60);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = len(rng);
    std::vector<CurvePoint> c;
    for (int i = 0; i < n; ++i) c.push_back({i, 0, 0, u(rng)});
    const double frac = 0.5;
    const std::size_t tail = static_cast<std::size_t>(std::ceil(frac * n));
    double mean = 0;
    for (std::size_t i = n - tail; i < static_cast<std::size_t>(n); ++i) mean += c[i].test_acc / tail;
    double ss = 0;
    for (std::size_t i = n - tail; i < static_cast<std::size_t>(n); ++i) ss += (c[i].test_acc - mean) * (c[i].test_acc - mean);
    ASSERT_NEAR(stability_metric(c, frac), std::sqrt(ss / (tail - 1)), 1e-12);
  }
}
