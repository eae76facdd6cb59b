#pragma once

#include <cstdint>
#include <string>

namespace tailavg {

/// Start iteration and sampling frequency of the tail average.
/// Iterate t is absorbed when t >= t0 and (t - t0) % freq == 0.
struct SmaConfig {
  std::int64_t t0 = 100;
  std::int64_t freq = 1;

  void validate() const;
  bool samples(std::int64_t t) const noexcept { return t >= t0 && (t - t0) % freq == 0; }

  friend bool operator==(const SmaConfig&, const SmaConfig&) = default;
};

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  friend bool operator==(const AdamParams&, const AdamParams&) = default;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::int64_t batch_size = 32;
  double weight_decay = 0.0;
  double dropout_rate = 0.0;
  std::int64_t total_iters = 3000;
  std::int64_t eval_interval = 50;
  OptimizerKind optimizer = OptimizerKind::sgd;
  AdamParams adam{};
  SmaConfig sma{};
  // Online iterates are persisted every `iterate_stride` iterations for offline re-averaging.
  std::int64_t iterate_stride = 1;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Default learning rate for the toy task per optimizer.
double default_learning_rate(OptimizerKind kind) noexcept;

}  // namespace tailavg
