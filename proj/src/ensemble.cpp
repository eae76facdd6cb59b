#include "tailavg/ensemble.hpp"

#include <cmath>
#include <numeric>

#include "tailavg/random.hpp"

namespace tailavg {
namespace {

Eigen::MatrixXd member_inputs(const EnsembleMember& m, const Eigen::MatrixXd& inputs) {
  if (m.standardizer.mean.size() == 0) return inputs;
  return m.standardizer.apply_columns(inputs);
}

double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

std::vector<std::vector<std::size_t>> all_subsets(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    out.push_back(pick);
    std::size_t i = k;
    while (i > 0 && pick[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t j = i; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return out;
}

EnsembleSpec subset_of(const EnsembleSpec& spec, const std::vector<std::size_t>& idx) {
  EnsembleSpec sub{spec.model, {}, spec.kind};
  for (auto i : idx) sub.members.push_back(spec.members[i]);
  return sub;
}

}  // namespace

std::string to_string(EnsembleKind kind) { return kind == EnsembleKind::eoa ? "eoa" : "plain"; }

EnsembleKind ensemble_kind_from_string(const std::string& name) {
  if (name == "eoa") return EnsembleKind::eoa;
  if (name == "plain") return EnsembleKind::plain;
  throw InvalidArgument("unknown ensemble kind '" + name + "' (expected eoa or plain)");
}

void EnsembleSpec::validate() const {
  model.validate();
  if (members.empty()) throw InvalidArgument("ensemble needs at least one member");
  const auto expected = model.param_count();
  const auto want = kind == EnsembleKind::eoa ? CheckpointKind::sma : CheckpointKind::online;
  for (const auto& m : members) {
    if (m.checkpoint.params.size() != expected) {
      throw ShapeError("ensemble member " + m.checkpoint.run_id + " has " + std::to_string(m.checkpoint.params.size()) +
                       " parameters, expected " + std::to_string(expected));
    }
    if (m.checkpoint.kind != want) {
      throw InvalidArgument(to_string(kind) + " ensemble requires " + tailavg::to_string(want) + " checkpoints");
    }
    if (m.standardizer.mean.size() != 0 && m.standardizer.mean.size() != model.input_dim) {
      throw ShapeError("ensemble member standardizer does not match input_dim");
    }
  }
}

EnsembleSpec make_ensemble(const MlpSpec& model, std::vector<Checkpoint> checkpoints, EnsembleKind kind) {
  EnsembleSpec spec{model, {}, kind};
  for (auto& c : checkpoints) spec.members.push_back({std::move(c), {}});
  spec.validate();
  return spec;
}

Eigen::MatrixXd mean_logits_batch(const EnsembleSpec& spec, const Eigen::MatrixXd& inputs) {
  spec.validate();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(spec.model.num_classes, inputs.cols());
  for (const auto& m : spec.members) sum += forward_batch(spec.model, m.checkpoint.params, member_inputs(m, inputs));
  return sum / static_cast<double>(spec.members.size());
}

Eigen::VectorXd mean_logits(const EnsembleSpec& spec, const Eigen::VectorXd& x) {
  return mean_logits_batch(spec, Eigen::MatrixXd(x)).col(0);
}

int eoa_predict(const EnsembleSpec& spec, const Eigen::VectorXd& x) { return argmax(softmax(mean_logits(spec, x))); }

double ensemble_accuracy(const EnsembleSpec& spec, std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("ensemble_accuracy: empty sample set");
  const Eigen::MatrixXd logits = mean_logits_batch(spec, stack_inputs(samples));
  std::size_t correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    if (argmax(softmax(logits.col(j))) == samples[static_cast<std::size_t>(j)].y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<EnsembleSizePoint> ensemble_size_curve(const EnsembleSpec& spec, std::span<const std::size_t> sizes,
                                                   std::size_t n_subsets, std::uint64_t seed,
                                                   std::span<const Sample> samples) {
  spec.validate();
  if (n_subsets < 1) throw InvalidArgument("n_subsets must be >= 1");
  const auto e = spec.size();
  std::vector<EnsembleSizePoint> out;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const auto size = sizes[si];
    if (size < 1 || size > e) {
      throw InvalidArgument("ensemble size " + std::to_string(size) + " outside [1, " + std::to_string(e) + "]");
    }
    std::vector<std::vector<std::size_t>> picks;
    if (static_cast<double>(n_subsets) >= binomial(e, size)) {
      picks = all_subsets(e, size);
    } else {
      Engine engine(derive_seed(seed, {static_cast<std::uint64_t>(size)}));
      for (std::size_t s = 0; s < n_subsets; ++s) {
        std::vector<std::size_t> idx(e);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t i = 0; i < size; ++i) std::swap(idx[i], idx[i + uniform_index(engine, e - i)]);
        idx.resize(size);
        std::sort(idx.begin(), idx.end());
        picks.push_back(std::move(idx));
      }
    }
    EnsembleSizePoint point{size, 0.0, 0.0, {}};
    for (std::size_t s = 0; s < picks.size(); ++s) {
      const double acc = ensemble_accuracy(subset_of(spec, picks[s]), samples);
      point.subsets.push_back({s, picks[s], acc});
      point.mean_acc += acc;
    }
    const auto n = static_cast<double>(picks.size());
    point.mean_acc /= n;
    if (picks.size() > 1) {
      double ss = 0.0;
      for (const auto& sa : point.subsets) ss += (sa.accuracy - point.mean_acc) * (sa.accuracy - point.mean_acc);
      point.std_err = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    out.push_back(std::move(point));
  }
  return out;
}

}  // namespace tailavg
