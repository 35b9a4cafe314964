#pragma once

#include "seos/rng.hpp"
#include "seos/types.hpp"

#include <vector>

namespace seos {

// beta = B/D, beta_tilde = (B-1)/(D-1): first and second order inclusion probabilities.
struct BatchFractions {
  double beta = 1.0;
  double beta_tilde = 1.0;

  static BatchFractions of(Index batch, Index dataset);

  // beta_tilde / beta
  double correlated_weight() const { return beta_tilde / beta; }
  // (1 - beta_tilde) / beta
  double noise_weight() const { return (1.0 - beta_tilde) / beta; }
};

class MinibatchMask {
 public:
  // indices must be distinct and inside [0, dataset); stored sorted.
  MinibatchMask(std::vector<Index> indices, Index dataset);

  const std::vector<Index>& indices() const { return indices_; }
  Index dataset_size() const { return dataset_; }
  Index batch_size() const { return static_cast<Index>(indices_.size()); }
  BatchFractions fractions() const { return BatchFractions::of(batch_size(), dataset_); }

  // P z: entries outside the batch zeroed.
  Vector apply(const Vector& z) const;
  Matrix as_matrix() const;

 private:
  std::vector<Index> indices_;
  Index dataset_;
};

// Partial Fisher-Yates over [0, D); first B entries form the batch.
MinibatchMask sample_mask(Index dataset, Index batch, Rng& rng);

// E[P M P] = beta*beta_tilde*M + beta*(1-beta_tilde)*diag(M)
Matrix mask_second_moment(const Matrix& m, Index batch, Index dataset);

// E[P] M E[P] = beta^2 M
Matrix mask_cross_moment(const Matrix& m, Index batch, Index dataset);

}  // namespace seos
