#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>

#include "tailavg/config.hpp"
#include "tailavg/param_vector.hpp"

namespace tailavg {

/// Moment estimates and step counter. Plain SGD keeps no state beyond the kind.
struct OptimizerState {
  OptimizerKind kind = OptimizerKind::sgd;
  AdamParams adam{};
  Eigen::VectorXd first_moment{};
  Eigen::VectorXd second_moment{};
  std::int64_t step = 0;

  static OptimizerState sgd() { return {}; }
  static OptimizerState make_adam(AdamParams params = {}) { return {OptimizerKind::adam, params, {}, {}, 0}; }
};

/// SGD: p - lr * g. Adam: bias-corrected moment update
///   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2,
///   p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps).
std::pair<ParamVector, OptimizerState> optimizer_step(const OptimizerState& state, const ParamVector& params,
                                                      const ParamVector& grad, double lr);

}  // namespace tailavg
