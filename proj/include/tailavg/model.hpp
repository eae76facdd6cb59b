#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "tailavg/param_vector.hpp"

namespace tailavg {

/// One labelled example.
struct Sample {
  Eigen::VectorXd x;
  int y = 0;

  friend bool operator==(const Sample& a, const Sample& b) { return a.y == b.y && a.x == b.x; }
};

/// Fully connected ReLU network. Empty `hidden_dims` gives a linear (affine) model.
///
/// Flat parameter layout, layer by layer from input to output: the weight
/// matrix (fan_out x fan_in, row-major) followed by that layer's bias vector.
struct MlpSpec {
  int input_dim = 2;
  std::vector<int> hidden_dims{};
  int num_classes = 2;
  double dropout_rate = 0.0;

  void validate() const;
  int num_layers() const noexcept { return static_cast<int>(hidden_dims.size()) + 1; }
  int fan_in(int layer) const;
  int fan_out(int layer) const;
  std::size_t param_count() const;
  /// Offset of layer's weight block; its bias block follows at offset + fan_in * fan_out.
  std::size_t layer_offset(int layer) const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

struct EvalMode {};

/// Training forward pass: inverted dropout on hidden activations, with the
/// mask of (layer, unit) for batch row `sample` drawn from (seed, iteration).
struct TrainMode {
  std::uint64_t seed = 0;
  std::int64_t iteration = 0;
};

using ForwardMode = std::variant<EvalMode, TrainMode>;

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

/// Logits for a batch. Columns of `inputs` are samples; the result is num_classes x n.
/// In train mode, column j uses dropout stream j.
Eigen::MatrixXd forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                              const ForwardMode& mode = EvalMode{});

Eigen::VectorXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x,
                        const ForwardMode& mode = EvalMode{});

struct LossAndGrad {
  double loss;
  ParamVector grad;
};

/// Mean cross-entropy over the batch plus (weight_decay / 2) * ||W||^2 summed over
/// weight matrices (biases are not decayed), and its exact gradient.
LossAndGrad loss_and_grad(const MlpSpec& spec, const ParamVector& params, std::span<const Sample> batch,
                          double weight_decay, const ForwardMode& mode = EvalMode{});

template <typename Derived>
Eigen::VectorXd softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

template <typename Derived>
Eigen::VectorXd log_softmax(const Eigen::MatrixBase<Derived>& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).matrix();
}

/// Index of the largest entry, ties to the lowest index.
template <typename Derived>
int argmax(const Eigen::MatrixBase<Derived>& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = static_cast<int>(i);
  }
  return best;
}

int predict(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x);

/// Stacks sample features as columns.
Eigen::MatrixXd stack_inputs(std::span<const Sample> samples);

/// Fraction of samples classified correctly in eval mode. Throws on an empty set.
double accuracy(const MlpSpec& spec, const ParamVector& params, std::span<const Sample> samples);

/// Same as accuracy() with the inputs already stacked.
double accuracy(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                std::span<const int> labels);

}  // namespace tailavg
