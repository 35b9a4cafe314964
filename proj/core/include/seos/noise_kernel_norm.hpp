#pragma once

#include "seos/second_moment.hpp"
#include "seos/spectrum.hpp"
#include "seos/types.hpp"

#include <optional>
#include <string>
#include <string_view>

namespace seos {

enum class Verdict { Stable, DeterministicUnstable, StochasticUnstable, TUnstableOnly };

std::string_view to_string(Verdict v);
std::optional<Verdict> parse_verdict(std::string_view s);

struct StabilityReport {
  double knorm = 0.0;           // K; +inf at or beyond the deterministic edge
  double a_op_norm = 0.0;       // largest eigenvalue of A over active modes
  double knorm_hd = 0.0;        // +inf when some eta*lambda >= 2
  double knorm_tr = 0.0;
  double eta_lambda_max = 0.0;
  std::optional<double> t_max_abs_eig;
  Verdict verdict = Verdict::Stable;
};

// Below this margin 1 - A_ii (upper branch) the deterministic part is treated as critical and K = inf.
inline constexpr double kCriticalMargin = 1e-8;

// lambda_max((I-A)^{-1/2} B (I-A)^{-1/2}) over active modes; Perron root when B is not symmetric.
double noise_kernel_norm(const DiagonalDynamics& dyn);

// knorm = inf is the critical sentinel and classifies as deterministic.
Verdict classify(double a_op_norm, double knorm, double eta_lambda_max,
                 std::optional<double> t_max_abs_eig = std::nullopt);

StabilityReport stability_verdict(const DiagonalDynamics& dyn, double eta,
                                  const SpectrumDecomposition& spectrum,
                                  std::optional<double> t_max_abs_eig = std::nullopt);

// (eta/B) sum lambda / (2 - eta lambda)
double knorm_hd(const Vector& eigenvalues, double eta, Index batch);

// eta tr / (2B)
double knorm_trace(double trace_ntk, double eta, Index batch);

// (1 - beta) (eta/B) sum lambda / (2 - eta lambda): the isotropic-coupling limit keeping
// the finite-batch factor; the momentum and L2 forms reduce to this.
double knorm_hd_finite_batch(const Vector& eigenvalues, double eta, Index batch, Index dataset);

struct MomentumParams {
  double mu = 0.0;

  static MomentumParams from_mu(double mu);
  static MomentumParams from_alpha(double alpha);
  double alpha() const { return 1.0 - mu; }
};

double knorm_momentum_hd(const Vector& eigenvalues, double eta, Index batch, Index dataset,
                         MomentumParams momentum);

// Same quantity through the closed rational form with the (Omega^2 - 4 mu) denominator.
double knorm_momentum_hd_rational(const Vector& eigenvalues, double eta, Index batch,
                                  Index dataset, MomentumParams momentum);

// eta tr / (2 alpha B)
double knorm_mom_estimator(double trace_ntk, double eta, Index batch, double alpha);

// rho is an L2 strength acting as z <- (1 - eta rho) z on top of the SGD step.
double knorm_l2_hd(const Vector& eigenvalues, double eta, Index batch, Index dataset, double rho);

struct GaussNewtonResult {
  double knorm_tr = 0.0;                    // (eta/2B) tr(J^T H J / N)
  std::optional<Matrix> coupling;           // generalized C when H is positive definite
  std::optional<SpectrumDecomposition> spectrum;  // of H^{1/2} J J^T H^{1/2} / N
  std::optional<DiagonalDynamics> dynamics;
  std::optional<double> knorm;
};

// C~_{mu,b} = sum_a (H^{1/2} V)^2_{a mu} (H^{-1/2} V)^2_{a b}
Matrix generalized_coupling_matrix(const Matrix& eigenvectors, const Matrix& h_sqrt,
                                   const Matrix& h_inv_sqrt);

// jacobian rows are (datapoint, output) pairs grouped in blocks of block_size; batch counts datapoints.
GaussNewtonResult knorm_gauss_newton(const Matrix& jacobian, const Matrix& logit_hessian,
                                     Index block_size, double eta, Index batch);

}  // namespace seos
