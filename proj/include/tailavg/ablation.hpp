#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailavg/checkpoint.hpp"
#include "tailavg/config.hpp"
#include "tailavg/data.hpp"
#include "tailavg/experiment.hpp"
#include "tailavg/run_record.hpp"

namespace tailavg {

// Offline re-averaging: rebuild the averaged model of a finished run from its
// stored online trajectory under a different (t0, freq), then redo model
// selection on the rebuilt curve. The recursion is replayed over the stored
// iterates in order, so with the run's own config and stride 1 the result is
// bit-identical to what the run computed while training.

/// Throws InvalidArgument when the grid of `sma` needs iterates the trajectory
/// does not hold, and EmptyAverageError when t0 >= total_iters.
void check_reaveraging(const RunRecord& record, const SmaConfig& sma);

/// Averaged-model curve on the run's eval grid (train_loss is reported as 0).
std::vector<CurvePoint> reaveraged_curve(const RunRecord& record, std::span<const Checkpoint> trajectory,
                                         const Splits& splits, const SmaConfig& sma);

struct AblationRun {
  std::string run_id;
  std::string test_domain;
  std::int64_t selected_iter = 0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::string error;  // empty on success
};

struct AblationRow {
  std::int64_t value;  // t0 or freq
  double mean_test_acc;
  std::size_t n_runs;
  std::size_t n_failed;
  std::vector<AblationRun> runs;
};

enum class AblationAxis { t0, freq };

/// One row per distinct value, in first-seen order.
std::vector<AblationRow> ablate(const SweepDirectory& sweep, AblationAxis axis, std::span<const std::int64_t> values);

/// Removes repeated values keeping the first occurrence; returns how many were dropped.
std::size_t dedupe_in_order(std::vector<std::int64_t>& values);

}  // namespace tailavg
