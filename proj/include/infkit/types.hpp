#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <vector>

namespace infkit {

// All second-order math runs in 64-bit floats.
using Scalar = double;
using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VectorRef = Eigen::Ref<const Vector>;
using MatrixRef = Eigen::Ref<const Matrix>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct DomainError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct SingularError : Error {
  using Error::Error;
};

struct TrainError : Error {
  TrainError(const std::string& msg, int epoch_index)
      : Error(msg), epoch(epoch_index) {}
  int epoch = -1;
};

struct ConfigError : Error {
  using Error::Error;
};

struct CheckpointError : Error {
  using Error::Error;
};

// Thrown when the loss-rescaling loop runs out of restarts.
struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, std::vector<Scalar> history)
      : Error(msg), residual_history(std::move(history)) {}
  std::vector<Scalar> residual_history;
};

// Target-parameter index set J: sorted unique flat indices into a ParamVector.
struct IndexSet {
  std::vector<Index> indices;
  double ratio = 1.0;

  static IndexSet full(Index n) {
    IndexSet J;
    J.indices.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) J.indices[static_cast<std::size_t>(i)] = i;
    J.ratio = 1.0;
    return J;
  }

  Index size() const { return static_cast<Index>(indices.size()); }
  bool is_full(Index n) const { return size() == n; }

  void validate(Index n) const {
    if (indices.empty()) throw ShapeError("index set is empty");
    Index prev = -1;
    for (Index i : indices) {
      if (i <= prev) throw ShapeError("index set is not sorted and unique");
      if (i < 0 || i >= n) throw ShapeError("index " + std::to_string(i) + " is out of range");
      prev = i;
    }
  }
};

// Reads x at the positions in J.
inline Vector gather(VectorRef x, const IndexSet& J) {
  Vector out(J.size());
  for (Index i = 0; i < J.size(); ++i) out[i] = x[J.indices[static_cast<std::size_t>(i)]];
  return out;
}

// Embeds xj at the positions in J of an otherwise-zero length-n vector.
inline Vector scatter(VectorRef xj, const IndexSet& J, Index n) {
  if (xj.size() != J.size()) throw ShapeError("scatter: value count does not match index set");
  Vector out = Vector::Zero(n);
  for (Index i = 0; i < J.size(); ++i) out[J.indices[static_cast<std::size_t>(i)]] = xj[i];
  return out;
}

inline Scalar rel_error(VectorRef got, VectorRef want) {
  const Scalar denom = want.norm();
  return denom > 0 ? (got - want).norm() / denom : (got - want).norm();
}

}  // namespace infkit
