#include "tailavg/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace tailavg {
namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> column(const std::vector<CurvePoint>& curve, double CurvePoint::*field) {
  std::vector<double> out;
  out.reserve(curve.size());
  for (const auto& p : curve) out.push_back(p.*field);
  return out;
}

bool constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

Eigen::VectorXd floored(const Eigen::VectorXd& p) {
  if (p.size() < 2) throw ShapeError("probability vector needs at least 2 classes");
  if (!p.allFinite() || (p.array() < 0.0).any()) throw InvalidArgument("probability vector has invalid entries");
  if (std::abs(p.sum() - 1.0) > 1e-9) throw InvalidArgument("probability vector does not sum to 1");
  Eigen::VectorXd q = p.cwiseMax(kProbFloor);
  q /= q.sum();
  if ((q.array() <= 0.0).any()) throw InvalidArgument("zero probability after flooring");
  return q;
}

}  // namespace

Eigen::VectorXd average_ranks(std::span<const double> values) {
  const auto n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
  Eigen::VectorXd ranks(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share ranks i+1..j+1
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[static_cast<Eigen::Index>(order[k])] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw ShapeError("spearman: lengths differ (" + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) + ")");
  }
  if (xs.size() < 2) throw InvalidArgument("spearman: need at least 2 observations");
  for (auto v : xs) if (std::isnan(v)) throw InvalidArgument("spearman: NaN input");
  for (auto v : ys) if (std::isnan(v)) throw InvalidArgument("spearman: NaN input");
  if (constant(xs) || constant(ys)) throw UndefinedCorrelationError("spearman: constant input has no rank correlation");
  const Eigen::VectorXd rx = average_ranks(xs);
  const Eigen::VectorXd ry = average_ranks(ys);
  const Eigen::ArrayXd cx = rx.array() - rx.mean();
  const Eigen::ArrayXd cy = ry.array() - ry.mean();
  const double rho = (cx * cy).sum() / std::sqrt((cx * cx).sum() * (cy * cy).sum());
  return std::clamp(rho, -1.0, 1.0);
}

RankCorrReport within_run_rankcorr(std::span<const RunRecord> records, CheckpointKind kind) {
  RankCorrReport report;
  report.kind = kind;
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> by_group;
  std::map<std::string, std::size_t> excluded_by_group;
  for (const auto& r : records) {
    const auto& curve = r.curve(kind);
    if (curve.size() < 2) throw InvalidArgument("run " + r.run_id + " has fewer than 2 curve points");
    if (!by_group.contains(r.test_domain) && !excluded_by_group.contains(r.test_domain)) order.push_back(r.test_domain);
    const auto val = column(curve, &CurvePoint::val_acc);
    const auto test = column(curve, &CurvePoint::test_acc);
    if (constant(val) || constant(test)) {
      ++report.n_excluded;
      ++excluded_by_group[r.test_domain];
      report.excluded_runs.push_back(r.run_id);
      continue;
    }
    const double rho = spearman(val, test);
    report.runs.push_back({r.run_id, r.test_domain, rho});
    by_group[r.test_domain].push_back(rho);
  }
  for (const auto& g : order) {
    const auto it = by_group.find(g);
    GroupRho gr{g, std::nan(""), 0.0, 0, excluded_by_group[g]};
    if (it != by_group.end()) {
      const auto& v = it->second;
      const double n = static_cast<double>(v.size());
      gr.n_runs = v.size();
      gr.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
      if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - gr.mean) * (x - gr.mean);
        gr.std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
      }
    }
    report.groups.push_back(gr);
  }
  return report;
}

std::vector<IterationRho> cross_run_rankcorr(std::span<const RunRecord> records, CheckpointKind kind) {
  if (records.size() < 2) throw InvalidArgument("cross_run_rankcorr: need at least 2 runs");
  const auto& grid = records.front().curve(kind);
  for (const auto& r : records) {
    const auto& c = r.curve(kind);
    bool same = c.size() == grid.size();
    for (std::size_t i = 0; same && i < c.size(); ++i) same = c[i].iteration == grid[i].iteration;
    if (!same) throw InvalidArgument("cross_run_rankcorr: run " + r.run_id + " uses a different iteration grid");
  }
  std::vector<IterationRho> out;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::vector<double> val, test;
    for (const auto& r : records) {
      val.push_back(r.curve(kind)[i].val_acc);
      test.push_back(r.curve(kind)[i].test_acc);
    }
    IterationRho point{grid[i].iteration, std::nullopt};
    if (!constant(val) && !constant(test)) point.rho = spearman(val, test);
    out.push_back(point);
  }
  return out;
}

std::string to_string(CentroidKind kind) { return kind == CentroidKind::geometric ? "geometric" : "arithmetic"; }

BiasVarReport bias_variance(const std::vector<std::vector<Eigen::VectorXd>>& member_probs, std::span<const int> labels,
                            CentroidKind centroid) {
  if (member_probs.empty()) throw InvalidArgument("bias_variance: no members");
  const auto n = labels.size();
  if (n == 0) throw InvalidArgument("bias_variance: no samples");
  for (const auto& m : member_probs) {
    if (m.size() != n) throw ShapeError("bias_variance: member sample count differs from label count");
  }
  const auto members = member_probs.size();
  const auto k = member_probs.front().front().size();

  double bias = 0.0, variance = 0.0, mean_ce = 0.0;
  std::vector<Eigen::VectorXd> logp(members);
  for (std::size_t s = 0; s < n; ++s) {
    const int y = labels[s];
    if (y < 0 || y >= k) throw InvalidArgument("bias_variance: label out of range");
    Eigen::VectorXd mean_log = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd mean_prob = Eigen::VectorXd::Zero(k);
    for (std::size_t i = 0; i < members; ++i) {
      if (member_probs[i][s].size() != k) throw ShapeError("bias_variance: class counts differ");
      const Eigen::VectorXd p = floored(member_probs[i][s]);
      logp[i] = p.array().log().matrix();
      mean_log += logp[i];
      mean_prob += p;
      mean_ce -= logp[i][y];
    }
    mean_log /= static_cast<double>(members);
    mean_prob /= static_cast<double>(members);
    // log of the normalized centroid
    Eigen::VectorXd log_c;
    if (centroid == CentroidKind::geometric) {
      log_c = log_softmax(mean_log);
    } else {
      log_c = mean_prob.array().log().matrix();
    }
    const Eigen::VectorXd c = log_c.array().exp().matrix();
    bias -= log_c[y];
    for (std::size_t i = 0; i < members; ++i) variance += c.dot(log_c - logp[i]);
  }
  const double nn = static_cast<double>(n);
  BiasVarReport report{bias / nn, variance / (nn * static_cast<double>(members)), mean_ce / (nn * static_cast<double>(members)),
                       centroid};
  // KL is non-negative; only rounding can push the sum below zero.
  if (report.variance < 0.0 && report.variance > -1e-12) report.variance = 0.0;
  return report;
}

double directional_second_derivative(const std::function<double(const Eigen::VectorXd&)>& f,
                                     const Eigen::VectorXd& theta, const Eigen::VectorXd& direction, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("finite-difference step must be > 0");
  if (theta.size() != direction.size()) throw ShapeError("direction length differs from parameter length");
  const double plus = f(theta + eps * direction);
  const double mid = f(theta);
  const double minus = f(theta - eps * direction);
  const double value = (plus - 2.0 * mid + minus) / (eps * eps);
  if (!std::isfinite(value)) {
    throw NonFiniteError("finite-difference curvature is not finite at step " + std::to_string(eps) +
                         "; try a smaller or larger step");
  }
  return value;
}

double default_fd_step(const Eigen::VectorXd& theta, const Eigen::VectorXd& direction) {
  return 1e-3 * std::max(1.0, theta.norm()) / (1.0 + direction.norm());
}

TaylorReport taylor_second_order(const MlpSpec& spec, const ParamVector& sma_params,
                                 std::span<const ParamVector> iterates, std::span<const Eigen::VectorXd> samples,
                                 int cls, std::optional<double> eps) {
  spec.validate();
  if (cls < 0 || cls >= spec.num_classes) throw InvalidArgument("class index out of range");
  if (iterates.empty()) throw InvalidArgument("taylor_second_order: no iterates");
  if (sma_params.size() != spec.param_count()) throw ShapeError("averaged parameters do not match the network");
  for (const auto& it : iterates) require_same_length(sma_params, it, "taylor_second_order");
  if (eps && !(*eps > 0.0)) throw InvalidArgument("finite-difference step must be > 0");

  const Eigen::VectorXd& center = sma_params.values();
  std::vector<Eigen::VectorXd> directions;
  TaylorReport report;
  for (const auto& it : iterates) {
    directions.push_back(center - it.values());
    report.steps.push_back(eps ? *eps : default_fd_step(center, directions.back()));
  }

  Eigen::MatrixXd inputs(spec.input_dim, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t s = 0; s < samples.size(); ++s) {
    if (samples[s].size() != spec.input_dim) throw ShapeError("sample feature count differs from input_dim");
    inputs.col(static_cast<Eigen::Index>(s)) = samples[s];
  }
  // Logit row for class `cls` over all samples at a given parameter point.
  auto logits_at = [&](const Eigen::VectorXd& theta) -> Eigen::RowVectorXd {
    return forward_batch(spec, ParamVector(theta), inputs).row(cls);
  };

  const Eigen::RowVectorXd center_logits = logits_at(center);
  Eigen::RowVectorXd term = Eigen::RowVectorXd::Zero(inputs.cols());
  for (std::size_t t = 0; t < directions.size(); ++t) {
    const auto& d = directions[t];
    if (d.isZero(0.0)) continue;  // f(theta) - 2 f(theta) + f(theta) is exactly zero
    const double h = report.steps[t];
    const Eigen::RowVectorXd plus = logits_at(center + h * d);
    const Eigen::RowVectorXd minus = logits_at(center - h * d);
    const Eigen::RowVectorXd curvature = (plus - 2.0 * center_logits + minus) / (h * h);
    if (!curvature.allFinite()) {
      throw NonFiniteError("finite-difference curvature is not finite at step " + std::to_string(h) +
                           "; try a different step");
    }
    term += curvature;
  }
  term *= 0.5 / static_cast<double>(directions.size());
  for (Eigen::Index s = 0; s < inputs.cols(); ++s) {
    report.entries.push_back({static_cast<std::size_t>(s), cls, center_logits[s], term[s]});
  }
  return report;
}

double stability_metric(std::span<const CurvePoint> curve, double tail_fraction) {
  if (!(tail_fraction > 0.0 && tail_fraction <= 1.0)) throw InvalidArgument("tail_fraction must be in (0, 1]");
  const auto n = curve.size();
  auto tail = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n) - 1e-9));
  tail = std::min(tail, n);
  if (tail < 2) throw InvalidArgument("stability_metric: tail window has fewer than 2 points");
  const auto window = curve.subspan(n - tail);
  double mean = 0.0;
  for (const auto& p : window) mean += p.test_acc;
  mean /= static_cast<double>(tail);
  double ss = 0.0;
  for (const auto& p : window) ss += (p.test_acc - mean) * (p.test_acc - mean);
  return std::sqrt(ss / static_cast<double>(tail - 1));
}

}  // namespace tailavg
