#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailavg/checkpoint.hpp"
#include "tailavg/model.hpp"
#include "tailavg/run_record.hpp"

namespace tailavg {

/// Ranks starting at 1; tied values share the mean of the ranks they span.
Eigen::VectorXd average_ranks(std::span<const double> values);

/// Spearman's rho: Pearson correlation of average ranks.
/// Throws UndefinedCorrelationError when either side is constant.
double spearman(std::span<const double> xs, std::span<const double> ys);

struct RunRho {
  std::string run_id;
  std::string group;  // test domain
  double rho;
};

struct GroupRho {
  std::string group;
  double mean;
  double std_err;  // sample std / sqrt(n); 0 when n == 1
  std::size_t n_runs;
  std::size_t n_excluded;
};

struct RankCorrReport {
  CheckpointKind kind = CheckpointKind::online;
  std::vector<RunRho> runs;
  std::vector<GroupRho> groups;  // in order of first appearance
  std::size_t n_excluded = 0;
  std::vector<std::string> excluded_runs;
};

/// Per run, rho between the val_acc and test_acc series of the chosen curve.
/// Runs whose series is constant are excluded and counted.
RankCorrReport within_run_rankcorr(std::span<const RunRecord> records, CheckpointKind kind);

struct IterationRho {
  std::int64_t iteration;
  std::optional<double> rho;  // empty when val or test accuracy ties across all runs
};

/// At every shared eval iteration, rho across runs between val_acc and test_acc.
std::vector<IterationRho> cross_run_rankcorr(std::span<const RunRecord> records, CheckpointKind kind);

enum class CentroidKind { geometric, arithmetic };

std::string to_string(CentroidKind kind);

struct BiasVarReport {
  double bias;
  double variance;
  double mean_ce;
  CentroidKind centroid_kind;
};

/// member_probs[i][n] is member i's class-probability vector on sample n.
/// Entries are floored at 1e-12 and renormalized. With the geometric centroid
/// g ∝ exp(mean_i log p_i): bias = mean_n CE(y_n, g), variance = mean_n mean_i KL(g || p_i),
/// mean_ce = mean_n mean_i CE(y_n, p_i), and bias + variance == mean_ce.
/// The arithmetic centroid uses the plain mean of p_i and satisfies no identity.
BiasVarReport bias_variance(const std::vector<std::vector<Eigen::VectorXd>>& member_probs, std::span<const int> labels,
                            CentroidKind centroid = CentroidKind::geometric);

/// (f(theta + eps d) - 2 f(theta) + f(theta - eps d)) / eps^2, i.e. d^T H d by central differences.
double directional_second_derivative(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& theta, const Eigen::VectorXd& direction, double eps);

/// Step used when none is given: 1e-3 * max(1, ||theta||) / (1 + ||d||).
double default_fd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& direction);

struct TaylorEntry {
  std::size_t sample;
  int cls;
  double sma_logit;
  double second_order_term;
};

struct TaylorReport {
  std::vector<TaylorEntry> entries;
  std::vector<double> steps;  // FD step per iterate
};

/// For every sample x: the averaged model's logit f(x; theta_hat)_k and
/// 0.5 * mean_t d_t^T H_k d_t with d_t = theta_hat - theta_t, in eval mode.
TaylorReport taylor_second_order(const MlpSpec& spec, const ParamVector& sma_params,
                                 std::span<const ParamVector> iterates, std::span<const Eigen::VectorXd> samples,
                                 int cls, std::optional<double> eps = std::nullopt);

/// Sample standard deviation of test_acc over the last ceil(tail_fraction * n) points.
double stability_metric(std::span<const CurvePoint> curve, double tail_fraction);

}  // namespace tailavg
