#include "tailavg/trainer.hpp"

#include <cmath>
#include <numeric>

#include "tailavg/optimizer.hpp"
#include "tailavg/random.hpp"
#include "tailavg/sma.hpp"

namespace tailavg {
namespace {

// Stream ids for derive_seed so each consumer of randomness is independent.
enum : std::uint64_t { kInitStream = 1, kBatchStream = 2, kDropoutStream = 3, kHyperStream = 4 };

class EpochSampler {
 public:
  EpochSampler(std::size_t n, std::size_t batch, std::uint64_t seed) : order_(n), batch_(batch), engine_(seed) {
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
  }

  std::span<const std::size_t> next() {
    if (pos_ + batch_ > order_.size()) reshuffle();
    auto out = std::span<const std::size_t>(order_).subspan(pos_, batch_);
    pos_ += batch_;
    return out;
  }

 private:
  void reshuffle() {
    shuffle(order_.begin(), order_.end(), engine_);
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  std::size_t batch_;
  std::size_t pos_ = 0;
  Engine engine_;
};

struct EvalSet {
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  explicit EvalSet(const std::vector<Sample>& samples) : inputs(stack_inputs(samples)) {
    for (const auto& s : samples) labels.push_back(s.y);
  }
};

double mean_cross_entropy(const MlpSpec& spec, const ParamVector& params, std::span<const Sample> batch) {
  const Eigen::MatrixXd logits = forward_batch(spec, params, stack_inputs(batch));
  double ce = 0.0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) ce -= log_softmax(logits.col(j))[batch[j].y];
  return ce / static_cast<double>(batch.size());
}

}  // namespace

TrainConfig sample_hyperparams(const HyperSampler& sampler, std::uint64_t trial_index, TrainConfig base) {
  Engine engine(derive_seed(sampler.seed, {kHyperStream, trial_index}));
  base.learning_rate = sampler.lr_fixed;
  base.batch_size = sampler.batch_size;
  base.dropout_rate = sampler.dropout_choices[uniform_index(engine, sampler.dropout_choices.size())];
  const double exponent = uniform(engine, sampler.log10_wd_lo, sampler.log10_wd_hi);
  base.weight_decay = std::clamp(std::pow(10.0, exponent), std::pow(10.0, sampler.log10_wd_lo),
                                 std::pow(10.0, sampler.log10_wd_hi));
  return base;
}

std::size_t best_index(std::span<const CurvePoint> curve) {
  if (curve.empty()) throw InvalidArgument("select_best: empty curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].val_acc > curve[best].val_acc) best = i;
  }
  return best;
}

const Checkpoint& select_best(std::span<const CurvePoint> curve, std::span<const Checkpoint> checkpoints) {
  const auto& point = curve[best_index(curve)];
  for (const auto& c : checkpoints) {
    if (c.iteration == point.iteration) return c;
  }
  throw InvalidArgument("select_best: no checkpoint for iteration " + std::to_string(point.iteration));
}

RunRecord train_run(const MlpSpec& base_spec, const Splits& splits, const TrainConfig& config, std::uint64_t seed,
                    const std::string& run_id, const TrainInputs& inputs,
                    const std::optional<std::filesystem::path>& run_dir) {
  config.validate();
  MlpSpec spec = base_spec;
  spec.dropout_rate = config.dropout_rate;
  spec.validate();
  const auto& train = splits.train.samples;
  if (train.empty()) throw InvalidArgument("train_run: empty train split");
  if (splits.val.samples.empty() || splits.test.samples.empty()) {
    throw InvalidArgument("train_run: validation and test splits must be non-empty");
  }
  if (static_cast<std::size_t>(config.batch_size) > train.size()) {
    throw InvalidArgument("train_run: batch_size exceeds the train split size");
  }

  RunRecord record;
  record.run_id = run_id;
  record.seed = seed;
  record.config = config;
  record.model = spec;
  record.test_domain = inputs.test_domain;
  record.split_seed = inputs.split_seed;
  record.standardizer = inputs.standardizer.mean.size() ? inputs.standardizer : Standardizer::identity(spec.input_dim);

  std::optional<TrajectoryWriter> trajectory;
  if (run_dir) {
    std::filesystem::create_directories(*run_dir / kCheckpointDir);
    trajectory.emplace(*run_dir / kTrajectoryFile);
  }

  const EvalSet val(splits.val.samples);
  const EvalSet test(splits.test.samples);
  EpochSampler batches(train.size(), static_cast<std::size_t>(config.batch_size),
                       derive_seed(seed, {kBatchStream}));
  const std::uint64_t dropout_seed = derive_seed(seed, {kDropoutStream});

  ParamVector params = init_params(spec, derive_seed(seed, {kInitStream}));
  OptimizerState opt = config.optimizer == OptimizerKind::adam ? OptimizerState::make_adam(config.adam)
                                                                : OptimizerState::sgd();
  SmaState sma(config.sma);
  sma.absorb(params.values(), 0);
  if (trajectory) trajectory->append({run_id, 0, CheckpointKind::online, params});

  std::vector<Checkpoint> online_ckpts;
  std::vector<Checkpoint> sma_ckpts;
  std::vector<Sample> batch(static_cast<std::size_t>(config.batch_size));
  double window_loss = 0.0;
  std::int64_t window_steps = 0;

  for (std::int64_t t = 1; t <= config.total_iters; ++t) {
    const auto idx = batches.next();
    for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = train[idx[i]];
    try {
      auto [loss, grad] = loss_and_grad(spec, params, batch, config.weight_decay, TrainMode{dropout_seed, t});
      auto [next, next_opt] = optimizer_step(opt, params, grad, config.learning_rate);
      params = std::move(next);
      opt = std::move(next_opt);
      window_loss += loss;
      ++window_steps;
    } catch (const NonFiniteError& e) {
      throw DivergenceError("run " + run_id + " diverged at iteration " + std::to_string(t) + ": " + e.what(), t);
    }
    sma.absorb(params.values(), t);
    if (trajectory && t % config.iterate_stride == 0) trajectory->append({run_id, t, CheckpointKind::online, params});

    if (t % config.eval_interval != 0) continue;
    const ParamVector averaged(sma.view(params.values()));
    record.online_curve.push_back({t, window_loss / static_cast<double>(window_steps),
                                   accuracy(spec, params, val.inputs, val.labels),
                                   accuracy(spec, params, test.inputs, test.labels)});
    record.sma_curve.push_back({t, mean_cross_entropy(spec, averaged, batch),
                                accuracy(spec, averaged, val.inputs, val.labels),
                                accuracy(spec, averaged, test.inputs, test.labels)});
    window_loss = 0.0;
    window_steps = 0;
    online_ckpts.push_back({run_id, t, CheckpointKind::online, params});
    sma_ckpts.push_back({run_id, t, CheckpointKind::sma, averaged});
    if (run_dir) {
      save_checkpoint(online_ckpts.back(), checkpoint_path(*run_dir, CheckpointKind::online, t));
      save_checkpoint(sma_ckpts.back(), checkpoint_path(*run_dir, CheckpointKind::sma, t));
    }
  }

  record.selected_online = select_best(record.online_curve, online_ckpts);
  record.selected_sma = select_best(record.sma_curve, sma_ckpts);
  if (run_dir) {
    trajectory->commit();
    write_run_record(record, *run_dir);
  }
  return record;
}

}  // namespace tailavg
