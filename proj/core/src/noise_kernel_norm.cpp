#include "seos/noise_kernel_norm.hpp"

#include <cmath>
#include <limits>

namespace seos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_common(double eta, Index batch) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("learning rate must be positive");
  if (batch < 1) throw InvalidArgument("batch size must be positive");
}

void check_eigenvalues(const Vector& eigenvalues) {
  if (!eigenvalues.allFinite() || (eigenvalues.array() < 0.0).any())
    throw InvalidArgument("eigenvalues must be finite and non-negative");
}

}  // namespace

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Stable: return "Stable";
    case Verdict::DeterministicUnstable: return "DeterministicUnstable";
    case Verdict::StochasticUnstable: return "StochasticUnstable";
    case Verdict::TUnstableOnly: return "TUnstableOnly";
  }
  return "Unknown";
}

std::optional<Verdict> parse_verdict(std::string_view s) {
  for (auto v : {Verdict::Stable, Verdict::DeterministicUnstable, Verdict::StochasticUnstable,
                 Verdict::TUnstableOnly})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

double noise_kernel_norm(const DiagonalDynamics& dyn) {
  const auto idx = dyn.active_modes();
  if (idx.empty()) return 0.0;
  const Vector gap = restrict_to(dyn.gap, idx);
  if (!(gap.minCoeff() > 0.0))
    throw NumericalError("I - A is not positive; the noise kernel norm is undefined");
  const Matrix b = restrict_to(dyn.b, idx);

  if (dyn.symmetric_noise()) {
    const Vector s = gap.cwiseSqrt().cwiseInverse();
    Matrix m = s.asDiagonal() * b * s.asDiagonal();
    m = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("noise kernel eigensolve failed");
    return std::max(0.0, solver.eigenvalues().maxCoeff());
  }
  // entrywise non-negative: the Perron root is the spectral radius
  const Matrix m = gap.cwiseInverse().asDiagonal() * b;
  Eigen::EigenSolver<Matrix> solver(m, false);
  if (solver.info() != Eigen::Success) throw NumericalError("noise kernel eigensolve failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Verdict classify(double a_op_norm, double knorm, double eta_lambda_max,
                 std::optional<double> t_max_abs_eig) {
  if (eta_lambda_max >= 2.0 || a_op_norm >= 1.0 || std::isinf(knorm))
    return Verdict::DeterministicUnstable;
  if (knorm >= 1.0) return Verdict::StochasticUnstable;
  if (t_max_abs_eig && *t_max_abs_eig >= 1.0) return Verdict::TUnstableOnly;
  return Verdict::Stable;
}

StabilityReport stability_verdict(const DiagonalDynamics& dyn, double eta,
                                  const SpectrumDecomposition& spectrum,
                                  std::optional<double> t_max_abs_eig) {
  check_common(eta, 1);
  StabilityReport r;
  r.a_op_norm = deterministic_operator_norm(dyn);
  r.eta_lambda_max = eta * spectrum.max_eigenvalue();
  r.knorm = deterministic_critical(dyn, kCriticalMargin) ? kInf : noise_kernel_norm(dyn);

  const Index batch =
      static_cast<Index>(std::llround(dyn.fractions.beta * static_cast<double>(spectrum.dim())));
  r.knorm_hd = (r.eta_lambda_max >= 2.0) ? kInf : knorm_hd(spectrum.eigenvalues, eta, batch);
  r.knorm_tr = knorm_trace(spectrum.trace(), eta, batch);
  r.t_max_abs_eig = t_max_abs_eig;
  r.verdict = classify(r.a_op_norm, r.knorm, r.eta_lambda_max, t_max_abs_eig);
  return r;
}

double knorm_hd(const Vector& eigenvalues, double eta, Index batch) {
  check_common(eta, batch);
  check_eigenvalues(eigenvalues);
  double sum = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    const double x = eta * eigenvalues(i);
    if (x >= 2.0) throw InvalidArgument("knorm_hd requires eta * lambda < 2 for every mode");
    sum += eigenvalues(i) / (2.0 - x);
  }
  return eta / static_cast<double>(batch) * sum;
}

double knorm_trace(double trace_ntk, double eta, Index batch) {
  check_common(eta, batch);
  if (!(trace_ntk >= 0.0)) throw InvalidArgument("kernel trace must be non-negative");
  return eta * trace_ntk / (2.0 * static_cast<double>(batch));
}

double knorm_hd_finite_batch(const Vector& eigenvalues, double eta, Index batch, Index dataset) {
  const auto f = BatchFractions::of(batch, dataset);
  return (1.0 - f.beta) * knorm_hd(eigenvalues, eta, batch);
}

MomentumParams MomentumParams::from_mu(double mu) {
  if (!(mu >= 0.0 && mu < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  return MomentumParams{mu};
}

MomentumParams MomentumParams::from_alpha(double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  return MomentumParams{1.0 - alpha};
}

double knorm_momentum_hd(const Vector& eigenvalues, double eta, Index batch, Index dataset,
                         MomentumParams momentum) {
  check_common(eta, batch);
  check_eigenvalues(eigenvalues);
  const double mu = MomentumParams::from_mu(momentum.mu).mu;
  const auto f = BatchFractions::of(batch, dataset);
  // sum_t h_t^2 = (1+mu) / ((1-mu) (2(1+mu)x - x^2)) for the AR(2) impulse response
  double sum = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    const double x = eta * eigenvalues(i);
    if (x == 0.0) continue;
    const double den = 2.0 * (1.0 + mu) * x - x * x;
    if (den <= 0.0) throw InvalidArgument("momentum kernel norm diverges: 2(1+mu)x - x^2 <= 0");
    sum += x * x / den;
  }
  const double pref = (1.0 - f.beta) / (f.beta * static_cast<double>(dataset));
  return pref * (1.0 + mu) / (1.0 - mu) * sum;
}

double knorm_momentum_hd_rational(const Vector& eigenvalues, double eta, Index batch,
                                  Index dataset, MomentumParams momentum) {
  check_common(eta, batch);
  check_eigenvalues(eigenvalues);
  const double mu = MomentumParams::from_mu(momentum.mu).mu;
  const auto f = BatchFractions::of(batch, dataset);
  double sum = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    const double x = eta * eigenvalues(i);
    if (x == 0.0) continue;
    const double den2 = 2.0 * (1.0 + mu) * x - x * x;
    if (den2 <= 0.0) throw InvalidArgument("momentum kernel norm diverges: 2(1+mu)x - x^2 <= 0");
    const double den1 = (1.0 - mu) * (1.0 - mu) - 2.0 * (1.0 + mu) * x + x * x;
    const double num = (1.0 - x) * (1.0 - x) - 2.0 * mu * x - mu * mu;
    const double y = x / f.beta;
    sum += 2.0 * y * y / den1 * (-2.0 * mu / (1.0 - mu) + num / den2);
  }
  return f.beta * (1.0 - f.beta) / (2.0 * static_cast<double>(dataset)) * sum;
}

double knorm_mom_estimator(double trace_ntk, double eta, Index batch, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidArgument("alpha must lie in (0, 1]");
  return knorm_trace(trace_ntk, eta, batch) / alpha;
}

double knorm_l2_hd(const Vector& eigenvalues, double eta, Index batch, Index dataset, double rho) {
  check_common(eta, batch);
  check_eigenvalues(eigenvalues);
  if (!(rho >= 0.0)) throw InvalidArgument("L2 strength must be non-negative");
  const auto f = BatchFractions::of(batch, dataset);
  const double y = eta * rho;
  double sum = 0.0;
  for (Index i = 0; i < eigenvalues.size(); ++i) {
    const double x = eta * eigenvalues(i);
    if (x == 0.0) continue;
    const double s = x + y;
    const double den = 1.0 - (1.0 - s) * (1.0 - s);
    if (den <= 0.0) throw InvalidArgument("L2 kernel norm diverges: 1 - (1 - x - eta rho)^2 <= 0");
    sum += x * x / den;
  }
  return (1.0 - f.beta) / (f.beta * static_cast<double>(dataset)) * sum;
}

Matrix generalized_coupling_matrix(const Matrix& eigenvectors, const Matrix& h_sqrt,
                                   const Matrix& h_inv_sqrt) {
  const Matrix x = (h_sqrt * eigenvectors).cwiseAbs2();
  const Matrix y = (h_inv_sqrt * eigenvectors).cwiseAbs2();
  return x.transpose() * y;
}

GaussNewtonResult knorm_gauss_newton(const Matrix& jacobian, const Matrix& logit_hessian,
                                     Index block_size, double eta, Index batch) {
  check_common(eta, batch);
  const Index rows = jacobian.rows();
  if (block_size < 1 || rows % block_size != 0)
    throw InvalidArgument("jacobian rows must be a multiple of the block size");
  if (logit_hessian.rows() != rows || logit_hessian.cols() != rows)
    throw InvalidArgument("logit hessian must be square with side equal to jacobian rows");
  const double hscale = std::max(1.0, logit_hessian.cwiseAbs().maxCoeff());
  if ((logit_hessian - logit_hessian.transpose()).cwiseAbs().maxCoeff() > 1e-10 * hscale)
    throw InvalidArgument("logit hessian is not symmetric");
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < rows; ++j)
      if (i / block_size != j / block_size && std::abs(logit_hessian(i, j)) > 1e-12 * hscale)
        throw InvalidArgument("logit hessian is not block diagonal");

  const Index points = rows / block_size;
  Matrix h_sqrt = Matrix::Zero(rows, rows);
  Matrix h_inv_sqrt = Matrix::Zero(rows, rows);
  bool definite = true;
  for (Index k = 0; k < points; ++k) {
    const Index o = k * block_size;
    Eigen::SelfAdjointEigenSolver<Matrix> es(logit_hessian.block(o, o, block_size, block_size));
    if (es.info() != Eigen::Success) throw NumericalError("hessian block eigensolve failed");
    Vector ev = es.eigenvalues();
    if (ev.minCoeff() < -1e-10 * hscale) throw InvalidArgument("logit hessian is not PSD");
    ev = ev.cwiseMax(0.0);
    if (ev.minCoeff() <= 1e-12 * hscale) definite = false;
    const Matrix& q = es.eigenvectors();
    h_sqrt.block(o, o, block_size, block_size) = q * ev.cwiseSqrt().asDiagonal() * q.transpose();
    if (definite)
      h_inv_sqrt.block(o, o, block_size, block_size) =
          q * ev.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
  }

  GaussNewtonResult out;
  const double n = static_cast<double>(points);
  const double gn_trace = (jacobian.transpose() * logit_hessian * jacobian).trace() / n;
  out.knorm_tr = knorm_trace(std::max(0.0, gn_trace), eta, batch);
  if (!definite) return out;

  const Matrix hj = h_sqrt * jacobian;
  Matrix theta = hj * hj.transpose() / n;
  theta = 0.5 * (theta + theta.transpose());
  auto spectrum = decompose_symmetric(theta);
  Matrix coupling = generalized_coupling_matrix(spectrum.eigenvectors, h_sqrt, h_inv_sqrt);
  auto dyn = build_diagonal_dynamics(spectrum.eigenvalues, coupling, eta,
                                     BatchFractions::of(batch, points));
  out.knorm = deterministic_critical(dyn, kCriticalMargin) ? kInf : noise_kernel_norm(dyn);
  out.coupling = std::move(coupling);
  out.spectrum = std::move(spectrum);
  out.dynamics = std::move(dyn);
  return out;
}

}  // namespace seos
