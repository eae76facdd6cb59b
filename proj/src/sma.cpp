#include "tailavg/sma.hpp"

namespace tailavg {

ParamVector sma_closed_form(std::span<const Iterate> iterates, const SmaConfig& config) {
  config.validate();
  Eigen::VectorXd sum;
  Eigen::VectorXd compensation;
  std::int64_t count = 0;
  for (const auto& it : iterates) {
    if (!config.samples(it.iteration)) continue;
    const auto& theta = it.params.values();
    if (count == 0) {
      sum = Eigen::VectorXd::Zero(theta.size());
      compensation = Eigen::VectorXd::Zero(theta.size());
    } else if (theta.size() != sum.size()) {
      throw ShapeError("iterates have differing parameter lengths");
    }
    // Neumaier summation, coordinate-wise.
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double t = sum[i] + theta[i];
      if (std::abs(sum[i]) >= std::abs(theta[i])) {
        compensation[i] += (sum[i] - t) + theta[i];
      } else {
        compensation[i] += (theta[i] - t) + sum[i];
      }
      sum[i] = t;
    }
    ++count;
  }
  if (count == 0) {
    throw EmptyAverageError("no iterate satisfies t >= " + std::to_string(config.t0) + " on the frequency-" +
                            std::to_string(config.freq) + " grid");
  }
  return ParamVector((sum + compensation) / static_cast<double>(count));
}

}  // namespace tailavg
