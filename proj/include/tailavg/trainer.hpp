#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tailavg/config.hpp"
#include "tailavg/data.hpp"
#include "tailavg/model.hpp"
#include "tailavg/run_record.hpp"

namespace tailavg {

/// Random hyper-parameter search space. Learning rate and batch size are fixed;
/// dropout is drawn from `dropout_choices`, weight decay as 10^U(log10_wd_lo, log10_wd_hi).
struct HyperSampler {
  std::uint64_t seed = 0;
  double lr_fixed = 0.05;
  std::int64_t batch_size = 32;
  std::array<double, 3> dropout_choices{0.0, 0.1, 0.5};
  double log10_wd_lo = -6.0;
  double log10_wd_hi = -4.0;
};

/// Returns `base` with lr, batch size, dropout and weight decay replaced by the
/// sample for `trial_index`. Deterministic in (sampler.seed, trial_index).
TrainConfig sample_hyperparams(const HyperSampler& sampler, std::uint64_t trial_index, TrainConfig base = {});

/// Checkpoint at the curve point with the highest val_acc; ties go to the earliest.
/// `checkpoints` must hold one checkpoint per curve iteration (any order).
const Checkpoint& select_best(std::span<const CurvePoint> curve, std::span<const Checkpoint> checkpoints);

/// Index of the curve point select_best() would pick.
std::size_t best_index(std::span<const CurvePoint> curve);

struct TrainInputs {
  std::string test_domain;
  std::uint64_t split_seed = 0;
  Standardizer standardizer{};
};

/// One training run on already-standardized splits.
///
/// Iteration t = 0 is the initialization; iterations 1..total_iters are
/// optimizer steps. Every eval_interval steps both the online and the averaged
/// parameters are scored on val and test. When `run_dir` is given the run
/// persists its checkpoints at every eval point, the online trajectory at
/// `iterate_stride`, and the manifest plus curves.
RunRecord train_run(const MlpSpec& spec, const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                    const std::string& run_id, const TrainInputs& inputs = {},
                    const std::optional<std::filesystem::path>& run_dir = std::nullopt);

}  // namespace tailavg
