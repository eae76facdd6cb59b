#include "tailavg/optimizer.hpp"

#include <cmath>

namespace tailavg {

std::pair<ParamVector, OptimizerState> optimizer_step(const OptimizerState& state, const ParamVector& params,
                                                      const ParamVector& grad, double lr) {
  require_same_length(params, grad, "optimizer_step");
  const auto& g = grad.values();
  OptimizerState next = state;
  ++next.step;
  if (state.kind == OptimizerKind::sgd) {
    return {ParamVector(params.values() - lr * g), std::move(next)};
  }
  if (next.first_moment.size() == 0) {
    next.first_moment = Eigen::VectorXd::Zero(g.size());
    next.second_moment = Eigen::VectorXd::Zero(g.size());
  } else if (next.first_moment.size() != g.size()) {
    throw ShapeError("optimizer_step: moment length does not match parameters");
  }
  const auto& a = state.adam;
  next.first_moment = a.beta1 * next.first_moment + (1.0 - a.beta1) * g;
  next.second_moment = a.beta2 * next.second_moment + (1.0 - a.beta2) * g.cwiseAbs2();
  const double k = static_cast<double>(next.step);
  const double c1 = 1.0 - std::pow(a.beta1, k);
  const double c2 = 1.0 - std::pow(a.beta2, k);
  const Eigen::VectorXd m_hat = next.first_moment / c1;
  const Eigen::VectorXd v_hat = next.second_moment / c2;
  Eigen::VectorXd updated = params.values().array() - lr * m_hat.array() / (v_hat.array().sqrt() + a.eps);
  return {ParamVector(std::move(updated)), std::move(next)};
}

}  // namespace tailavg
