#include "tailavg/config.hpp"

#include <cmath>

#include "tailavg/error.hpp"

namespace tailavg {

void SmaConfig::validate() const {
  if (t0 < 0) throw InvalidArgument("sma t0 must be >= 0");
  if (freq < 1) throw InvalidArgument("sma freq must be >= 1");
}

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw InvalidArgument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

double default_learning_rate(OptimizerKind kind) noexcept { return kind == OptimizerKind::sgd ? 0.05 : 0.005; }

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidArgument("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw InvalidArgument("weight_decay must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must be in [0, 1)");
  if (total_iters < 1) throw InvalidArgument("total_iters must be >= 1");
  if (eval_interval < 1 || eval_interval > total_iters) {
    throw InvalidArgument("eval_interval must be in [1, total_iters]");
  }
  if (iterate_stride < 1) throw InvalidArgument("iterate_stride must be >= 1");
  if (optimizer == OptimizerKind::adam) {
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
      throw InvalidArgument("adam parameters out of range");
    }
  }
  sma.validate();
}

}  // namespace tailavg
