#pragma once

#include "seos/minibatch.hpp"
#include "seos/rng.hpp"
#include "seos/spectrum.hpp"
#include "seos/types.hpp"

#include <vector>

namespace seos {

// z = J theta - y for a linear model; only J and the initial residual matter.
struct LinearModel {
  Matrix jacobian;
  Vector residual0;

  Index dataset_size() const { return jacobian.rows(); }
  Index parameter_count() const { return jacobian.cols(); }
  void validate() const;
};

inline constexpr double kDivergenceFactor = 1e6;

struct LossTrace {
  std::vector<double> losses;  // L_0 .. L_T, clipped at saturation_cap
  bool diverged = false;
  double saturation_cap = 0.0;
  double initial_loss = 0.0;

  double final_loss() const { return losses.back(); }
  Index steps_run() const { return static_cast<Index>(losses.size()) - 1; }
};

// ||z||^2 / 2D
double residual_loss(const Vector& z);

// z - (eta/B) J J^T P z, touching only batch rows of J for the gradient.
Vector sgd_step(const Vector& z, const Matrix& jacobian, const MinibatchMask& mask, double eta);

// Diverged once L > 1e6 L_0 or non-finite; stops early. Reported losses are min(L, cap).
LossTrace simulate_trajectory(const LinearModel& model, double eta, Index batch, Index steps,
                              double cap, Rng& rng);

// eta * lambda_max; full-batch GD on this model is stable iff < 2.
double deterministic_eos_margin(const SpectrumDecomposition& spectrum, double eta);

}  // namespace seos
