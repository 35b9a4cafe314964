#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace seos {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Precondition violations on caller input.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Numerical breakdown (solver failure, non-finite state, broken spectra).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace seos
