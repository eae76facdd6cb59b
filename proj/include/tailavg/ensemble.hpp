#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tailavg/checkpoint.hpp"
#include "tailavg/data.hpp"
#include "tailavg/model.hpp"

namespace tailavg {

enum class EnsembleKind { eoa, plain };

std::string to_string(EnsembleKind kind);
EnsembleKind ensemble_kind_from_string(const std::string& name);

/// A trained model plus the input normalization it was trained with.
struct EnsembleMember {
  Checkpoint checkpoint;
  Standardizer standardizer{};  // empty means identity
};

/// E >= 1 members sharing one architecture. EoA members are averaged (sma)
/// checkpoints, plain members are online checkpoints.
struct EnsembleSpec {
  MlpSpec model{};
  std::vector<EnsembleMember> members;
  EnsembleKind kind = EnsembleKind::eoa;

  void validate() const;
  std::size_t size() const noexcept { return members.size(); }
};

EnsembleSpec make_ensemble(const MlpSpec& model, std::vector<Checkpoint> checkpoints,
                           EnsembleKind kind = EnsembleKind::eoa);

/// Logits averaged over members, (1/E) sum_i f(x; theta_i). Columns of `inputs` are samples.
Eigen::MatrixXd mean_logits_batch(const EnsembleSpec& spec, const Eigen::MatrixXd& inputs);
Eigen::VectorXd mean_logits(const EnsembleSpec& spec, const Eigen::VectorXd& x);

/// argmax_k softmax(mean logits)_k, ties to the lowest class.
int eoa_predict(const EnsembleSpec& spec, const Eigen::VectorXd& x);

double ensemble_accuracy(const EnsembleSpec& spec, std::span<const Sample> samples);

struct SubsetAccuracy {
  std::size_t subset_id;
  std::vector<std::size_t> members;
  double accuracy;
};

struct EnsembleSizePoint {
  std::size_t size;
  double mean_acc;
  double std_err;  // sample standard deviation / sqrt(#subsets); 0 for one subset
  std::vector<SubsetAccuracy> subsets;
};

/// For each size, scores n_subsets member subsets drawn uniformly without
/// replacement. When n_subsets >= C(E, size) every subset is enumerated once
/// in lexicographic order instead, so size == E always yields the single full set.
std::vector<EnsembleSizePoint> ensemble_size_curve(const EnsembleSpec& spec, std::span<const std::size_t> sizes,
                                                   std::size_t n_subsets, std::uint64_t seed,
                                                   std::span<const Sample> samples);

}  // namespace tailavg
