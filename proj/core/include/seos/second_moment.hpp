#pragma once

#include "seos/minibatch.hpp"
#include "seos/spectrum.hpp"
#include "seos/types.hpp"

#include <vector>

namespace seos {

inline constexpr Index kTransferSizeGuard = 64;
inline constexpr Index kMatrixFreeSizeGuard = 256;

// C_{bm} = sum_a V_{ab}^2 V_{am}^2
Matrix coupling_matrix(const Matrix& eigenvectors);

// Second-moment map in the eigenbasis: S'_{mn} = sum_{bg} T_{mn,bg} S_{bg}, with S = V^T Sigma V.
// Pair (m, n) is stored at row m * D + n.
struct TransferOperator {
  Matrix entries;
  SpectrumDecomposition spectrum;
  double eta = 0.0;
  BatchFractions fractions;

  Index dim() const { return spectrum.dim(); }
  Index pair(Index mu, Index nu) const { return mu * dim() + nu; }
  Matrix apply(const Matrix& s) const;
};

TransferOperator build_transfer_operator(const SpectrumDecomposition& spectrum, double eta,
                                         Index batch, Index size_guard = kTransferSizeGuard);

// Largest |eigenvalue| of the dense operator. Frozen-frozen pairs are excluded; all frozen gives 1.
double max_abs_eigenvalue(const TransferOperator& t);

// Same quantity without forming T; exact, uses the low-rank structure of the noise term.
double transfer_spectral_radius(const SpectrumDecomposition& spectrum, double eta, Index batch,
                                Index size_guard = kMatrixFreeSizeGuard);

// E_P[z' z'^T | z z^T = Sigma] for z' = z - (eta/B) J J^T P z.
Matrix covariance_step(const Matrix& sigma, const SpectrumDecomposition& spectrum, double eta,
                       Index batch);
Matrix covariance_step_kernel(const Matrix& sigma, const Matrix& theta, double eta, Index batch);
Matrix covariance_step_jacobian(const Matrix& sigma, const Matrix& jacobian, double eta,
                                Index batch);

// p~_{t+1} = (A + B) p~_t on the diagonal of the eigenbasis covariance, p = Lambda p~.
struct DiagonalDynamics {
  Vector a;                  // diagonal of A
  Vector gap;                // 1 - a, formed as x (2 - r x) without cancellation
  Matrix b;                  // B = (1/beta - beta_tilde/beta) eta^2 Lambda C Lambda
  Matrix coupling;           // C (or a generalized coupling)
  Vector eigenvalues;        // frozen modes set to zero
  std::vector<bool> active;  // modes taking part in stability
  double eta = 0.0;
  BatchFractions fractions;

  Index dim() const { return a.size(); }
  Matrix A() const { return a.asDiagonal(); }
  Matrix evolution() const;
  Vector step(const Vector& p_tilde) const;
  std::vector<Index> active_modes() const;
  bool symmetric_noise() const;
};

DiagonalDynamics build_diagonal_dynamics(const SpectrumDecomposition& spectrum, double eta,
                                         Index batch);
DiagonalDynamics build_diagonal_dynamics(const Vector& eigenvalues, const Matrix& coupling,
                                         double eta, const BatchFractions& fractions);

// Largest eigenvalue of A over active modes (0 when none are active).
double deterministic_operator_norm(const DiagonalDynamics& dyn);

// An active mode sits on the upper branch (r eta lambda >= 1) with 1 - A_ii below `margin`,
// or already has A_ii >= 1. Small steps, where A_ii -> 1 from the other side, do not count.
bool deterministic_critical(const DiagonalDynamics& dyn, double margin);

// max |lambda[A + B]| over active modes.
double evolution_max_abs_eigenvalue(const DiagonalDynamics& dyn);

Matrix restrict_to(const Matrix& m, const std::vector<Index>& idx);
Vector restrict_to(const Vector& v, const std::vector<Index>& idx);

}  // namespace seos
