#pragma once

#include "seos/types.hpp"

namespace seos {

// Theta = V diag(lambda) V^T with lambda descending, ties kept in solver order.
struct SpectrumDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;

  Index dim() const { return eigenvalues.size(); }
  double max_eigenvalue() const { return eigenvalues.size() ? eigenvalues(0) : 0.0; }
  double trace() const { return eigenvalues.sum(); }
  Matrix reconstruct() const;
};

// Theta = J J^T / D
Matrix empirical_ntk(const Matrix& jacobian);

SpectrumDecomposition decompose_symmetric(const Matrix& theta);
SpectrumDecomposition decompose_ntk(const Matrix& jacobian);

// Build from given eigenpairs; re-sorts descending and validates orthonormality.
SpectrumDecomposition make_spectrum(Vector eigenvalues, Matrix eigenvectors);

// Modes with lambda below cutoff * lambda_max are frozen (treated as exactly zero).
inline constexpr double kPseudoInverseCutoff = 1e-12;
double active_threshold(const SpectrumDecomposition& s);

}  // namespace seos
