#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <variant>
#include <vector>

#include "tailavg/model.hpp"

namespace tailavg {

struct Domain {
  std::string id;
  std::vector<Sample> samples;

  friend bool operator==(const Domain&, const Domain&) = default;
};

/// Labelled samples grouped by domain. At least two domains, labels below
/// num_classes, every x of length input_dim and finite.
struct DomainDataset {
  std::vector<Domain> domains;
  int num_classes = 2;
  int input_dim = 2;

  void validate() const;
  std::size_t domain_index(const std::string& id) const;
  std::vector<std::string> domain_ids() const;

  friend bool operator==(const DomainDataset&, const DomainDataset&) = default;
};

struct RotatedDomainsParams {
  std::uint64_t seed = 0;
  int n_domains = 4;
  int n_per_domain = 200;
  int num_classes = 3;
  double rotation_step = 0.3;  // radians per domain
  double noise_std = 0.5;
  double radius = 2.0;         // distance of blob centres from the origin
};

/// Domain d holds num_classes Gaussian blobs on a circle, every centre rotated
/// by d * rotation_step. Sample i of a domain has label i % num_classes. Domain ids are "D0".."D{n-1}".
DomainDataset gen_rotated_domains(const RotatedDomainsParams& params);

struct LeaveOneOut {
  std::string test_domain;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

struct Iid {
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  double test_fraction = 0.1;
  std::uint64_t split_seed = 0;
};

using SplitSpec = std::variant<LeaveOneOut, Iid>;

/// Where a split sample came from: (domain index, index within the domain).
struct SampleRef {
  std::size_t domain;
  std::size_t index;

  friend bool operator==(const SampleRef&, const SampleRef&) = default;
  friend auto operator<=>(const SampleRef&, const SampleRef&) = default;
};

struct Partition {
  std::vector<Sample> samples;
  std::vector<SampleRef> refs;
};

struct Splits {
  Partition train;
  Partition val;
  Partition test;
};

/// Leave-one-out: test is the whole held-out domain; each remaining domain is
/// shuffled and floor(val_fraction * n) samples go to val, the rest to train.
/// Iid: all domains pooled and shuffled; val = floor(val_fraction * N),
/// test = floor(test_fraction * N), train takes the remainder.
Splits split(const DomainDataset& dataset, const SplitSpec& spec);

/// Per-feature affine map x -> (x - mean) / scale.
struct Standardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;

  static Standardizer identity(int dim);
  /// Mean and population standard deviation per feature; zero-variance features keep scale 1.
  static Standardizer fit(const std::vector<Sample>& samples);

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd apply_columns(const Eigen::MatrixXd& inputs) const;
  std::vector<Sample> apply(const std::vector<Sample>& samples) const;
};

/// Standardizes all three partitions with statistics fitted on the train partition.
Splits standardized(const Splits& splits, Standardizer* fitted = nullptr);

/// Header `domain,y,x0,...,x{d-1}`; rows in (domain, original index) order.
void write_csv_dataset(const DomainDataset& dataset, std::ostream& out);
void write_csv_dataset(const DomainDataset& dataset, const std::filesystem::path& path);

/// Reads the CSV format above. The class count is 1 + the largest label unless
/// `declared_classes` is positive, in which case larger labels are an error.
DomainDataset load_csv_dataset(const std::filesystem::path& path, int declared_classes = 0);
DomainDataset read_csv_dataset(std::istream& in, int declared_classes = 0);

}  // namespace tailavg
