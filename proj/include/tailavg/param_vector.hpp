#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "tailavg/error.hpp"

namespace tailavg {

/// Flat parameter vector of a model. Non-empty and finite by construction.
///
/// Arithmetic goes through `values()`, which exposes the underlying Eigen
/// vector so callers can build expressions (`a.values() + 0.5 * b.values()`).
/// Construct from the result to re-validate.
class ParamVector {
 public:
  using Vector = Eigen::VectorXd;

  explicit ParamVector(Vector values) : values_(std::move(values)) { validate(); }

  template <typename Derived>
  explicit ParamVector(const Eigen::MatrixBase<Derived>& expr) : values_(expr) {
    validate();
  }

  ParamVector(std::initializer_list<double> values)
      : values_(Eigen::Map<const Vector>(values.begin(), static_cast<Eigen::Index>(values.size()))) {
    validate();
  }

  static ParamVector from_std(const std::vector<double>& values) {
    return ParamVector(Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size())));
  }

  const Vector& values() const noexcept { return values_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(values_.size()); }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

  /// Bitwise equality of the coordinates (so +0.0 and -0.0 differ).
  bool bit_equal(const ParamVector& other) const;

  friend bool operator==(const ParamVector& a, const ParamVector& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_;
  }

 private:
  void validate() const {
    if (values_.size() == 0) throw ShapeError("ParamVector must have at least one entry");
    if (!values_.allFinite()) throw NonFiniteError("ParamVector contains a non-finite entry");
  }

  Vector values_;
};

inline void require_same_length(const ParamVector& a, const ParamVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": parameter length " + std::to_string(a.size()) +
                     " does not match " + std::to_string(b.size()));
  }
}

inline bool ParamVector::bit_equal(const ParamVector& other) const {
  if (size() != other.size()) return false;
  return std::memcmp(values_.data(), other.values_.data(), size() * sizeof(double)) == 0;
}

}  // namespace tailavg
