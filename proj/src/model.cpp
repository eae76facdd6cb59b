#include "tailavg/model.hpp"

#include <cmath>
#include <string>

#include "tailavg/random.hpp"

namespace tailavg {
namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using Weights = Eigen::Map<RowMajorMatrix>;

ConstWeights weights(const MlpSpec& spec, const Eigen::VectorXd& flat, int layer) {
  return ConstWeights(flat.data() + spec.layer_offset(layer), spec.fan_out(layer), spec.fan_in(layer));
}

Eigen::Map<const Eigen::VectorXd> bias(const MlpSpec& spec, const Eigen::VectorXd& flat, int layer) {
  const auto off = spec.layer_offset(layer) + static_cast<std::size_t>(spec.fan_in(layer)) * spec.fan_out(layer);
  return Eigen::Map<const Eigen::VectorXd>(flat.data() + off, spec.fan_out(layer));
}

void check_params(const MlpSpec& spec, const ParamVector& params) {
  if (params.size() != spec.param_count()) {
    throw ShapeError("parameter vector has " + std::to_string(params.size()) + " entries, network expects " +
                     std::to_string(spec.param_count()));
  }
}

void check_inputs(const MlpSpec& spec, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != spec.input_dim) {
    throw ShapeError("input has " + std::to_string(inputs.rows()) + " features, network expects " +
                     std::to_string(spec.input_dim));
  }
}

// Inverted-dropout scale for one hidden layer: 0 for dropped units, 1/(1-p) for kept ones.
Eigen::MatrixXd dropout_mask(const TrainMode& mode, int layer, Eigen::Index units, Eigen::Index batch, double rate) {
  Eigen::MatrixXd mask(units, batch);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const auto base = derive_seed(mode.seed, {static_cast<std::uint64_t>(mode.iteration),
                                              static_cast<std::uint64_t>(layer), static_cast<std::uint64_t>(j)});
    for (Eigen::Index u = 0; u < units; ++u) {
      const double draw = to_unit(splitmix64(base + static_cast<std::uint64_t>(u)));
      mask(u, j) = draw < rate ? 0.0 : keep_scale;
    }
  }
  return mask;
}

struct ForwardTrace {
  // activations[l] is the input to layer l; activations[L] is the logits.
  std::vector<Eigen::MatrixXd> activations;
  // Per hidden layer: derivative factor relu'(z) * dropout scale.
  std::vector<Eigen::MatrixXd> gates;
};

ForwardTrace run_forward(const MlpSpec& spec, const Eigen::VectorXd& flat, const Eigen::MatrixXd& inputs,
                         const ForwardMode& mode, bool keep_trace) {
  const auto* train = std::get_if<TrainMode>(&mode);
  const bool use_dropout = train != nullptr && spec.dropout_rate > 0.0;
  ForwardTrace trace;
  Eigen::MatrixXd a = inputs;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Eigen::MatrixXd z = weights(spec, flat, l) * a;
    z.colwise() += bias(spec, flat, l);
    if (keep_trace) trace.activations.push_back(std::move(a));
    if (l + 1 == spec.num_layers()) {
      a = std::move(z);
      break;
    }
    Eigen::MatrixXd gate = (z.array() > 0.0).cast<double>().matrix();
    if (use_dropout) gate = gate.cwiseProduct(dropout_mask(*train, l, z.rows(), z.cols(), spec.dropout_rate));
    a = z.cwiseProduct(gate);
    if (keep_trace) trace.gates.push_back(std::move(gate));
  }
  trace.activations.push_back(std::move(a));
  return trace;
}

}  // namespace

void MlpSpec::validate() const {
  if (input_dim < 1) throw InvalidArgument("input_dim must be >= 1");
  if (num_classes < 2) throw InvalidArgument("num_classes must be >= 2");
  for (int h : hidden_dims) {
    if (h < 1) throw InvalidArgument("hidden layer widths must be >= 1");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw InvalidArgument("dropout_rate must be in [0, 1)");
}

int MlpSpec::fan_in(int layer) const { return layer == 0 ? input_dim : hidden_dims.at(layer - 1); }

int MlpSpec::fan_out(int layer) const {
  return layer + 1 == num_layers() ? num_classes : hidden_dims.at(layer);
}

std::size_t MlpSpec::layer_offset(int layer) const {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l) off += static_cast<std::size_t>(fan_in(l) + 1) * fan_out(l);
  return off;
}

std::size_t MlpSpec::param_count() const { return layer_offset(num_layers()); }

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Eigen::VectorXd flat = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(spec.param_count()));
  Engine engine(seed);
  for (int l = 0; l < spec.num_layers(); ++l) {
    const double bound = std::sqrt(6.0 / (spec.fan_in(l) + spec.fan_out(l)));
    const auto off = static_cast<Eigen::Index>(spec.layer_offset(l));
    const auto n = static_cast<Eigen::Index>(spec.fan_in(l)) * spec.fan_out(l);
    for (Eigen::Index i = 0; i < n; ++i) {
      double u;
      do {
        u = uniform01(engine);
      } while (u == 0.0);
      flat[off + i] = bound * (2.0 * u - 1.0);
    }
  }
  return ParamVector(std::move(flat));
}

Eigen::MatrixXd forward_batch(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                              const ForwardMode& mode) {
  check_params(spec, params);
  check_inputs(spec, inputs);
  return std::move(run_forward(spec, params.values(), inputs, mode, false).activations.back());
}

Eigen::VectorXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x,
                        const ForwardMode& mode) {
  return forward_batch(spec, params, Eigen::MatrixXd(x), mode).col(0);
}

LossAndGrad loss_and_grad(const MlpSpec& spec, const ParamVector& params, std::span<const Sample> batch,
                          double weight_decay, const ForwardMode& mode) {
  check_params(spec, params);
  if (batch.empty()) throw InvalidArgument("loss_and_grad: empty batch");
  if (weight_decay < 0.0) throw InvalidArgument("loss_and_grad: weight_decay must be >= 0");
  for (const auto& s : batch) {
    if (s.y < 0 || s.y >= spec.num_classes) {
      throw InvalidArgument("label " + std::to_string(s.y) + " outside [0, " + std::to_string(spec.num_classes) + ")");
    }
  }
  const Eigen::MatrixXd inputs = stack_inputs(batch);
  check_inputs(spec, inputs);
  const auto& flat = params.values();
  auto trace = run_forward(spec, flat, inputs, mode, true);
  const Eigen::MatrixXd& logits = trace.activations.back();
  const auto n = static_cast<Eigen::Index>(batch.size());

  double ce = 0.0;
  Eigen::MatrixXd delta(logits.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::VectorXd logp = log_softmax(logits.col(j));
    const int y = batch[static_cast<std::size_t>(j)].y;
    ce -= logp[y];
    delta.col(j) = logp.array().exp().matrix();
    delta(y, j) -= 1.0;
  }
  ce /= static_cast<double>(n);
  delta /= static_cast<double>(n);

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(flat.size());
  double decay = 0.0;
  for (int l = spec.num_layers() - 1; l >= 0; --l) {
    const auto w = weights(spec, flat, l);
    const auto off = static_cast<Eigen::Index>(spec.layer_offset(l));
    Weights gw(grad.data() + off, spec.fan_out(l), spec.fan_in(l));
    gw.noalias() = delta * trace.activations[static_cast<std::size_t>(l)].transpose();
    if (weight_decay > 0.0) {
      gw += weight_decay * w;
      decay += w.squaredNorm();
    }
    grad.segment(off + w.size(), w.rows()) = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = w.transpose() * delta;
      delta = back.cwiseProduct(trace.gates[static_cast<std::size_t>(l - 1)]);
    }
  }
  const double loss = ce + 0.5 * weight_decay * decay;
  if (!std::isfinite(loss)) throw NonFiniteError("loss is not finite");
  return {loss, ParamVector(std::move(grad))};
}

int predict(const MlpSpec& spec, const ParamVector& params, const Eigen::VectorXd& x) {
  return argmax(forward(spec, params, x));
}

Eigen::MatrixXd stack_inputs(std::span<const Sample> samples) {
  if (samples.empty()) return {};
  const auto d = samples.front().x.size();
  Eigen::MatrixXd out(d, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (samples[j].x.size() != d) throw ShapeError("samples have differing feature counts");
    out.col(static_cast<Eigen::Index>(j)) = samples[j].x;
  }
  return out;
}

double accuracy(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs,
                std::span<const int> labels) {
  if (labels.empty()) throw InvalidArgument("accuracy: empty sample set");
  if (static_cast<std::size_t>(inputs.cols()) != labels.size()) throw ShapeError("accuracy: inputs/labels mismatch");
  const Eigen::MatrixXd logits = forward_batch(spec, params, inputs);
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (argmax(logits.col(j)) == labels[static_cast<std::size_t>(j)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double accuracy(const MlpSpec& spec, const ParamVector& params, std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("accuracy: empty sample set");
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.y);
  return accuracy(spec, params, stack_inputs(samples), labels);
}

}  // namespace tailavg
