#pragma once

#include "seos/minibatch.hpp"
#include "seos/rng.hpp"
#include "seos/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace seos {

// Variance V(sigma) of the curvature entries attached to a left singular direction.
class VarianceProfile {
 public:
  enum class Kind { Flat, Linear, Table };

  static VarianceProfile flat();
  static VarianceProfile linear();
  // Piecewise-linear in sigma, clamped at both ends; sigmas strictly increasing.
  static VarianceProfile table(std::vector<double> sigmas, std::vector<double> values);

  double operator()(double sigma) const;
  Kind kind() const { return kind_; }
  std::string name() const;

 private:
  Kind kind_ = Kind::Flat;
  std::vector<double> sigmas_;
  std::vector<double> values_;
};

struct SingularTriple {
  Vector w;  // D
  Vector v;  // P
  double sigma = 0.0;
};

// f = f0 + J theta + Q(theta, theta)/2 with Q = sum_a w_a (x) M_a, M_a symmetric P x P.
struct QuadraticModel {
  Vector residual0;
  Matrix jacobian0;
  Matrix left;          // D x m, orthonormal columns w_a
  Vector singular;      // m, descending, zero past min(D, P)
  Matrix right;         // P x min(D, P)
  Matrix curvature;     // P x (m P); columns [aP, (a+1)P) hold M_a
  VarianceProfile profile;
  double residual_variance = 1.0;

  Index dataset_size() const { return jacobian0.rows(); }
  Index parameter_count() const { return jacobian0.cols(); }
  Index modes() const { return left.cols(); }
  Index triple_count() const { return right.cols(); }

  Eigen::Map<const Matrix> block(Index a) const;
  SingularTriple triple(Index a) const;
  std::vector<SingularTriple> top_triples(Index k) const;

  // Columns M_a u, a = 0..m-1 (P x m).
  Matrix contract(const Vector& u) const;
  // Q(u, u) = sum_a w_a u^T M_a u
  Vector second_order(const Vector& u) const;
};

QuadraticModel build_quadratic_model(Index dataset, Index parameters, const VarianceProfile& profile,
                                     double residual_variance, Rng& rng);

struct QrmState {
  Vector z;
  Matrix jacobian;
};

// One SGD step with the same mask for both updates, evaluated at the pre-update (z, J):
//   z' = z - (eta/B) J g + (eta^2 / 2B^2) Q(g, g),  J' = J - (eta/B) Q(g, .),  g = J^T P z.
QrmState qrm_step(const QrmState& state, const QuadraticModel& model, const MinibatchMask& mask,
                  double eta);

struct Estimates {
  Vector sigma_hat;   // w^T J v
  Vector lambda_hat;  // ||w^T J||^2
};

Estimates estimators(const Matrix& jacobian, const std::vector<SingularTriple>& triples);

struct DiscreteDerivatives {
  std::vector<double> first;   // x_{t+1} - x_t
  std::vector<double> second;  // x_{t+2} - 2 x_{t+1} + x_t
};

DiscreteDerivatives discrete_derivatives(const std::vector<double>& series);

// E[Delta_1 lambda_hat_a] at t = 0: eta^2 P V_z tr(Theta) V(sigma_a) / B
double theory_first_derivative(const QuadraticModel& model, double eta, Index batch, Index mode);

// Stochastic part of E[Delta_2 sigma_hat_a] at t = 0: -eta^3 sigma^3 V(sigma) P V_z / (B D^2)
double theory_second_derivative_stochastic_part(const QuadraticModel& model, double eta,
                                                Index batch, Index mode);

// Per-replicate Delta_1 lambda_hat and Delta_2 sigma_hat of one mode at t = 0, each replicate
// drawing two fresh masks (step 0 then step 1) from rng. Batched over replicates.
struct EarlyDerivatives {
  Vector first;
  Vector second;
};

EarlyDerivatives early_derivatives(const QuadraticModel& model, double eta, Index batch,
                                   Index mode, Index replicates, Rng& rng);

struct SharpeningConfig {
  Index dataset = 100;
  Index parameters = 150;
  VarianceProfile profile = VarianceProfile::flat();
  double residual_variance = 1.0;
  double eta = 0.1;
  std::vector<Index> batch_sizes{16};
  Index steps = 50;
  Index seeds = 10;
  Index tracked_modes = 8;
  bool resample_model = true;  // false: one model, seeds only drive masks
  std::uint64_t root_seed = 0;
  int threads = 1;
};

struct SharpeningTrace {
  Index seed = 0;
  Index batch = 0;
  double eta = 0.0;
  Matrix sigma_hat;   // (steps + 1) x tracked
  Matrix lambda_hat;  // (steps + 1) x tracked
  std::vector<double> d1_lambda;  // Delta_1 of the top-mode lambda_hat
  std::vector<double> d2_sigma;   // Delta_2 of the top-mode sigma_hat
  double theory_d1 = 0.0;
  double theory_d2_stochastic = 0.0;
};

struct SharpeningSummary {
  Index batch = 0;
  std::vector<double> lambda_mean, lambda_se;  // top mode, per step
  std::vector<double> d1_mean, d1_se;
  std::vector<double> d2_mean, d2_se;
  double theory_d1 = 0.0;  // averaged over seeds
  double theory_d2_stochastic = 0.0;
};

struct SharpeningEnsemble {
  std::vector<SharpeningTrace> traces;  // seed-major, then batch order
  std::vector<SharpeningSummary> summaries;
};

SharpeningEnsemble monte_carlo_sharpening(const SharpeningConfig& config);

// Per-seed model and per-(seed, batch) mask streams used by monte_carlo_sharpening.
Rng sharpening_model_stream(std::uint64_t root, Index seed);
Rng sharpening_mask_stream(std::uint64_t root, Index seed, Index batch);

// Replicate-averaged Delta_1 / Delta_2 at t = 0 per (seed, batch), paired with a full-batch
// (B = D) run on the same model.
struct DerivativeStudyConfig {
  Index dataset = 400;
  Index parameters = 600;
  VarianceProfile profile = VarianceProfile::flat();
  double residual_variance = 1.0;
  double eta = 0.2;
  std::vector<Index> batch_sizes{16, 64, 256};
  std::vector<Index> replicates{64, 64, 8};  // aligned with batch_sizes
  Index seeds = 30;
  Index mode = 0;
  bool full_batch_baseline = true;
  std::uint64_t root_seed = 0;
  int threads = 1;
};

struct DerivativeCell {
  Index seed = 0;
  Index batch = 0;
  Index replicates = 0;
  double d1_mean = 0.0, d1_se = 0.0, d1_theory = 0.0;
  double d2_mean = 0.0, d2_se = 0.0;
  double d2_full_batch = 0.0;  // NaN when no baseline was run
  double d2_stochastic_theory = 0.0;
};

// seed-major, then batch order
std::vector<DerivativeCell> derivative_study(const DerivativeStudyConfig& config);

struct MeanStderr {
  double mean = 0.0;
  double se = 0.0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

}  // namespace seos
