#include "tailavg/ablation.hpp"

#include <algorithm>

#include "tailavg/model.hpp"
#include "tailavg/sma.hpp"
#include "tailavg/trainer.hpp"

namespace tailavg {

void check_reaveraging(const RunRecord& record, const SmaConfig& sma) {
  sma.validate();
  const auto& c = record.config;
  if (sma.t0 >= c.total_iters) {
    throw EmptyAverageError("t0 = " + std::to_string(sma.t0) + " leaves no iterate to average in a run of " +
                            std::to_string(c.total_iters) + " iterations");
  }
  const auto stride = c.iterate_stride;
  if (sma.freq % stride != 0 || sma.t0 % stride != 0) {
    throw InvalidArgument("stored iterates are too sparse: the trajectory keeps every " + std::to_string(stride) +
                          " iterations, so t0 and freq must be multiples of it (got t0 = " + std::to_string(sma.t0) +
                          ", freq = " + std::to_string(sma.freq) + ")");
  }
  if (c.eval_interval % stride != 0) {
    throw InvalidArgument("eval points are not on the stored trajectory grid");
  }
}

std::vector<CurvePoint> reaveraged_curve(const RunRecord& record, std::span<const Checkpoint> trajectory,
                                         const Splits& splits, const SmaConfig& sma) {
  check_reaveraging(record, sma);
  const auto& grid = record.sma_curve;
  std::vector<int> val_labels, test_labels;
  for (const auto& s : splits.val.samples) val_labels.push_back(s.y);
  for (const auto& s : splits.test.samples) test_labels.push_back(s.y);
  const Eigen::MatrixXd val_inputs = stack_inputs(splits.val.samples);
  const Eigen::MatrixXd test_inputs = stack_inputs(splits.test.samples);

  SmaState state(sma);
  std::vector<CurvePoint> out;
  std::size_t next_eval = 0;
  for (const auto& ckpt : trajectory) {
    if (next_eval == grid.size()) break;
    state.absorb(ckpt.params.values(), ckpt.iteration);
    if (ckpt.iteration != grid[next_eval].iteration) continue;
    const ParamVector averaged(state.view(ckpt.params.values()));
    out.push_back({ckpt.iteration, 0.0, accuracy(record.model, averaged, val_inputs, val_labels),
                   accuracy(record.model, averaged, test_inputs, test_labels)});
    ++next_eval;
  }
  if (out.size() != grid.size()) {
    throw InvalidArgument("trajectory of run " + record.run_id + " does not cover every eval iteration");
  }
  return out;
}

std::size_t dedupe_in_order(std::vector<std::int64_t>& values) {
  std::vector<std::int64_t> seen;
  for (auto v : values) {
    if (std::find(seen.begin(), seen.end(), v) == seen.end()) seen.push_back(v);
  }
  const auto dropped = values.size() - seen.size();
  values = std::move(seen);
  return dropped;
}

std::vector<AblationRow> ablate(const SweepDirectory& sweep, AblationAxis axis, std::span<const std::int64_t> values) {
  std::vector<std::int64_t> distinct(values.begin(), values.end());
  dedupe_in_order(distinct);
  std::vector<AblationRow> rows;
  for (auto v : distinct) rows.push_back({v, 0.0, 0, 0, {}});

  for (const auto& loc : sweep.trials) {
    const auto record = load_run_record(loc.dir);
    const auto trajectory = load_trajectory(loc.dir / kTrajectoryFile, record.run_id);
    const auto data = sweep.trial_data(record);
    for (auto& row : rows) {
      SmaConfig sma = record.config.sma;
      (axis == AblationAxis::t0 ? sma.t0 : sma.freq) = row.value;
      AblationRun run{record.run_id, record.test_domain, 0, 0.0, 0.0, {}};
      try {
        const auto curve = reaveraged_curve(record, trajectory, data.splits, sma);
        const auto& best = curve[best_index(curve)];
        run.selected_iter = best.iteration;
        run.val_acc = best.val_acc;
        run.test_acc = best.test_acc;
        row.mean_test_acc += best.test_acc;
        ++row.n_runs;
      } catch (const Error& e) {
        run.error = e.what();
        ++row.n_failed;
      }
      row.runs.push_back(std::move(run));
    }
  }
  for (auto& row : rows) {
    row.mean_test_acc = row.n_runs > 0 ? row.mean_test_acc / static_cast<double>(row.n_runs) : std::nan("");
  }
  return rows;
}

}  // namespace tailavg
