#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>

#include "tailavg/config.hpp"
#include "tailavg/param_vector.hpp"

namespace tailavg {

/// Running tail average of online iterates.
///
///   avg_t = theta_t                                       t <= t0
///   avg_t = (n / (n + 1)) * avg_{t-1} + theta_t / (n + 1)   otherwise
///
/// where n counts the iterates absorbed so far. With freq > 1 only iterates on
/// the grid t0, t0 + freq, t0 + 2 freq, ... are absorbed. The iterate at t0 is
/// included. Updates return a new state; the input is left untouched.
template <typename Scalar>
class BasicSmaState {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  explicit BasicSmaState(SmaConfig config) : config_(config) { config_.validate(); }

  const SmaConfig& config() const noexcept { return config_; }
  std::int64_t count() const noexcept { return count_; }
  std::int64_t last_iteration() const noexcept { return last_iteration_; }
  bool empty() const noexcept { return count_ == 0; }

  /// Mean of the absorbed iterates. Throws EmptyAverageError when none were absorbed.
  const Vector& average() const {
    if (count_ == 0) throw EmptyAverageError("no iterate has been absorbed yet (t0 = " + std::to_string(config_.t0) + ")");
    return average_;
  }

  template <typename Derived>
  [[nodiscard]] BasicSmaState update(const Eigen::MatrixBase<Derived>& theta, std::int64_t t) const& {
    BasicSmaState next = *this;
    next.absorb(theta, t);
    return next;
  }

  template <typename Derived>
  [[nodiscard]] BasicSmaState update(const Eigen::MatrixBase<Derived>& theta, std::int64_t t) && {
    absorb(theta, t);
    return std::move(*this);
  }

  /// In-place form of update(), for training loops that own their state.
  template <typename Derived>
  void absorb(const Eigen::MatrixBase<Derived>& theta, std::int64_t t) {
    if (t <= last_iteration_) {
      throw OrderingError("iteration " + std::to_string(t) + " does not follow " + std::to_string(last_iteration_));
    }
    if (count_ > 0 && theta.size() != average_.size()) {
      throw ShapeError("iterate length " + std::to_string(theta.size()) + " does not match average length " +
                       std::to_string(average_.size()));
    }
    last_iteration_ = t;
    if (!config_.samples(t)) return;
    if (count_ == 0) {
      average_ = theta;
    } else {
      const Scalar n = static_cast<Scalar>(count_);
      average_ = (n / (n + 1)) * average_ + (Scalar(1) / (n + 1)) * theta;
    }
    ++count_;
  }

  /// Parameters of the averaged model as seen at the last absorbed iteration:
  /// the running mean once averaging has started, otherwise the online iterate.
  template <typename Derived>
  Vector view(const Eigen::MatrixBase<Derived>& online) const {
    if (count_ == 0) return online;
    return average_;
  }

 private:
  SmaConfig config_;
  std::int64_t count_ = 0;
  Vector average_{};
  std::int64_t last_iteration_ = std::numeric_limits<std::int64_t>::min();
};

using SmaState = BasicSmaState<double>;

/// One stored iterate: an iteration number and the online parameters at it.
struct Iterate {
  std::int64_t iteration;
  ParamVector params;
};

inline SmaState sma_update(const SmaState& state, const ParamVector& theta, std::int64_t t) {
  return state.update(theta.values(), t);
}

/// Order-free oracle for the recursion: arithmetic mean of every iterate the
/// config samples. Summation is compensated so the oracle is accurate to a few ulps.
ParamVector sma_closed_form(std::span<const Iterate> iterates, const SmaConfig& config);

}  // namespace tailavg
