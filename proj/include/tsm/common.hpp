#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace tsm {

/// Column vector in R^d.
using Vec = Eigen::VectorXd;
/// Row-per-sample matrix (n x d).
using Mat = Eigen::MatrixXd;

/// Raised when an importance-sampling estimate has no usable weights.
class WeightDegeneracyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a quadrature window truncates non-negligible mass.
class QuadratureWindowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a user-supplied noise model fails its round-trip check.
class ModelInconsistencyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training or sampling produces a non-finite value.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tsm
