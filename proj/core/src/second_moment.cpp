#include "seos/second_moment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace seos {

namespace {

void check_eta(double eta) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("learning rate must be positive");
}

std::vector<bool> active_mask(const Vector& eigenvalues, double threshold) {
  std::vector<bool> active(static_cast<std::size_t>(eigenvalues.size()));
  for (Index i = 0; i < eigenvalues.size(); ++i)
    active[static_cast<std::size_t>(i)] = eigenvalues(i) > threshold && eigenvalues(i) > 0.0;
  return active;
}

// Symmetrizable: diag + c L G with G = U^T U; rescaled pairs give a symmetric matrix.
double radius_from_dense(const TransferOperator& t) {
  const Index d = t.dim();
  const auto& lam = t.spectrum.eigenvalues;
  const auto active = active_mask(lam, active_threshold(t.spectrum));

  std::vector<Index> modes;
  for (Index i = 0; i < d; ++i)
    if (active[static_cast<std::size_t>(i)]) modes.push_back(i);
  const Index n = static_cast<Index>(modes.size());

  double radius = 0.0;
  bool any = false;
  for (Index mu = 0; mu < d; ++mu)
    for (Index nu = 0; nu < d; ++nu) {
      const bool am = active[static_cast<std::size_t>(mu)];
      const bool an = active[static_cast<std::size_t>(nu)];
      if (am != an) {
        radius = std::max(radius, std::abs(t.entries(t.pair(mu, nu), t.pair(mu, nu))));
        any = true;
      } else if (am && mu < nu) {
        // antisymmetric combinations only see the diagonal part
        const double x = 1.0 - t.eta * (lam(mu) + lam(nu)) +
                         t.fractions.correlated_weight() * t.eta * t.eta * lam(mu) * lam(nu);
        radius = std::max(radius, std::abs(x));
        any = true;
      }
    }
  if (n == 0) return any ? radius : 1.0;

  // symmetric pair basis over active modes
  std::vector<std::pair<Index, Index>> pairs;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) pairs.emplace_back(modes[static_cast<std::size_t>(i)],
                                                     modes[static_cast<std::size_t>(j)]);
  const Index m = static_cast<Index>(pairs.size());
  auto sqrt_l = [&](Index mu, Index nu) { return std::sqrt(lam(mu) * lam(nu)); };

  Matrix sym(m, m);
  for (Index p = 0; p < m; ++p) {
    const auto [mu, nu] = pairs[static_cast<std::size_t>(p)];
    const double sp = 1.0 / sqrt_l(mu, nu);
    for (Index q = 0; q < m; ++q) {
      const auto [be, ga] = pairs[static_cast<std::size_t>(q)];
      const double sq = sqrt_l(be, ga);
      // <s_p, Tsym s_q> with s = (e_bg + e_gb)/sqrt2 off-diagonal
      double v;
      const Index r1 = t.pair(mu, nu);
      if (be == ga) {
        v = t.entries(r1, t.pair(be, be));
      } else {
        v = (t.entries(r1, t.pair(be, ga)) + t.entries(r1, t.pair(ga, be))) / std::sqrt(2.0);
      }
      if (mu != nu) {
        const Index r2 = t.pair(nu, mu);
        double v2;
        if (be == ga) {
          v2 = t.entries(r2, t.pair(be, be));
        } else {
          v2 = (t.entries(r2, t.pair(be, ga)) + t.entries(r2, t.pair(ga, be))) / std::sqrt(2.0);
        }
        v = (v + v2) / std::sqrt(2.0);
      }
      sym(p, q) = sp * v * sq;
    }
  }
  Matrix symmetrized = 0.5 * (sym + sym.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrized, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("transfer eigensolve failed");
  radius = std::max(radius, solver.eigenvalues().cwiseAbs().maxCoeff());
  return radius;
}

}  // namespace

Matrix coupling_matrix(const Matrix& eigenvectors) {
  if (eigenvectors.rows() != eigenvectors.cols())
    throw InvalidArgument("coupling_matrix needs a square orthonormal matrix");
  const Matrix sq = eigenvectors.cwiseAbs2();
  return sq.transpose() * sq;
}

Matrix TransferOperator::apply(const Matrix& s) const {
  const Index d = dim();
  if (s.rows() != d || s.cols() != d) throw InvalidArgument("covariance has wrong shape");
  Vector flat(d * d);
  for (Index b = 0; b < d; ++b)
    for (Index g = 0; g < d; ++g) flat(pair(b, g)) = s(b, g);
  const Vector out = entries * flat;
  Matrix r(d, d);
  for (Index mu = 0; mu < d; ++mu)
    for (Index nu = 0; nu < d; ++nu) r(mu, nu) = out(pair(mu, nu));
  return r;
}

TransferOperator build_transfer_operator(const SpectrumDecomposition& spectrum, double eta,
                                         Index batch, Index size_guard) {
  check_eta(eta);
  const Index d = spectrum.dim();
  if (d > size_guard)
    throw InvalidArgument("transfer operator size guard exceeded: D = " + std::to_string(d) +
                          " > " + std::to_string(size_guard));
  TransferOperator t;
  t.spectrum = spectrum;
  t.eta = eta;
  t.fractions = BatchFractions::of(batch, d);
  const double r = t.fractions.correlated_weight();
  const double c = t.fractions.noise_weight();
  const auto& lam = spectrum.eigenvalues;
  const auto& v = spectrum.eigenvectors;

  // U_{a,(mn)} = V_{am} V_{an}
  Matrix u(d, d * d);
  for (Index mu = 0; mu < d; ++mu)
    for (Index nu = 0; nu < d; ++nu) u.col(mu * d + nu) = v.col(mu).cwiseProduct(v.col(nu));
  t.entries.noalias() = u.transpose() * u;
  for (Index mu = 0; mu < d; ++mu)
    for (Index nu = 0; nu < d; ++nu) {
      const Index p = mu * d + nu;
      const double l = lam(mu) * lam(nu);
      t.entries.row(p) *= c * eta * eta * l;
      t.entries(p, p) += 1.0 - eta * (lam(mu) + lam(nu)) + r * eta * eta * l;
    }
  return t;
}

double max_abs_eigenvalue(const TransferOperator& t) { return radius_from_dense(t); }

Matrix covariance_step_kernel(const Matrix& sigma, const Matrix& theta, double eta, Index batch) {
  check_eta(eta);
  const Index d = theta.rows();
  if (theta.cols() != d || sigma.rows() != d || sigma.cols() != d)
    throw InvalidArgument("covariance_step dimension mismatch");
  const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8) throw InvalidArgument("covariance input is not symmetric");
  const auto f = BatchFractions::of(batch, d);

  const Matrix ts = theta * sigma;
  Matrix out = sigma - eta * (ts + ts.transpose());
  out.noalias() += (f.correlated_weight() * eta * eta) * (ts * theta);
  const Matrix diag = sigma.diagonal().asDiagonal();
  out.noalias() += (f.noise_weight() * eta * eta) * (theta * diag * theta);
  return out;
}

Matrix covariance_step(const Matrix& sigma, const SpectrumDecomposition& spectrum, double eta,
                       Index batch) {
  return covariance_step_kernel(sigma, spectrum.reconstruct(), eta, batch);
}

Matrix covariance_step_jacobian(const Matrix& sigma, const Matrix& jacobian, double eta,
                                Index batch) {
  return covariance_step_kernel(sigma, empirical_ntk(jacobian), eta, batch);
}

Matrix DiagonalDynamics::evolution() const {
  Matrix e = b;
  e.diagonal() += a;
  return e;
}

Vector DiagonalDynamics::step(const Vector& p_tilde) const {
  if (p_tilde.size() != dim()) throw InvalidArgument("state has wrong length");
  return a.cwiseProduct(p_tilde) + b * p_tilde;
}

std::vector<Index> DiagonalDynamics::active_modes() const {
  std::vector<Index> idx;
  for (Index i = 0; i < dim(); ++i)
    if (active[static_cast<std::size_t>(i)]) idx.push_back(i);
  return idx;
}

bool DiagonalDynamics::symmetric_noise() const {
  const double scale = std::max(1e-300, b.cwiseAbs().maxCoeff());
  return (b - b.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

DiagonalDynamics build_diagonal_dynamics(const Vector& eigenvalues, const Matrix& coupling,
                                         double eta, const BatchFractions& fractions) {
  check_eta(eta);
  const Index d = eigenvalues.size();
  if (coupling.rows() != d || coupling.cols() != d)
    throw InvalidArgument("coupling matrix has wrong shape");

  DiagonalDynamics dyn;
  dyn.eta = eta;
  dyn.fractions = fractions;
  dyn.coupling = coupling;
  const double lmax = d ? eigenvalues.maxCoeff() : 0.0;
  dyn.active = active_mask(eigenvalues, kPseudoInverseCutoff * std::max(0.0, lmax));
  dyn.eigenvalues = eigenvalues;
  for (Index i = 0; i < d; ++i)
    if (!dyn.active[static_cast<std::size_t>(i)]) dyn.eigenvalues(i) = 0.0;

  const Vector& lam = dyn.eigenvalues;
  const double r = fractions.correlated_weight();
  dyn.a.resize(d);
  dyn.gap.resize(d);
  for (Index i = 0; i < d; ++i) {
    const double x = eta * lam(i);
    dyn.a(i) = (1.0 - x) * (1.0 - x) + (r - 1.0) * x * x;
    dyn.gap(i) = x * (2.0 - r * x);
  }
  const double c = fractions.noise_weight() * eta * eta;
  dyn.b = c * (lam.asDiagonal() * coupling * lam.asDiagonal());
  if (fractions.beta_tilde == 1.0) dyn.b.setZero();
  return dyn;
}

DiagonalDynamics build_diagonal_dynamics(const SpectrumDecomposition& spectrum, double eta,
                                         Index batch) {
  return build_diagonal_dynamics(spectrum.eigenvalues, coupling_matrix(spectrum.eigenvectors),
                                 eta, BatchFractions::of(batch, spectrum.dim()));
}

Matrix restrict_to(const Matrix& m, const std::vector<Index>& idx) {
  const Index n = static_cast<Index>(idx.size());
  Matrix r(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      r(i, j) = m(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  return r;
}

Vector restrict_to(const Vector& v, const std::vector<Index>& idx) {
  Vector r(static_cast<Index>(idx.size()));
  for (Index i = 0; i < r.size(); ++i) r(i) = v(idx[static_cast<std::size_t>(i)]);
  return r;
}

double deterministic_operator_norm(const DiagonalDynamics& dyn) {
  const auto idx = dyn.active_modes();
  if (idx.empty()) return 0.0;
  return restrict_to(dyn.a, idx).maxCoeff();
}

bool deterministic_critical(const DiagonalDynamics& dyn, double margin) {
  const double r = dyn.fractions.correlated_weight();
  for (Index i : dyn.active_modes()) {
    const double x = dyn.eta * dyn.eigenvalues(i);
    if (dyn.gap(i) <= 0.0 || (r * x >= 1.0 && dyn.gap(i) < margin)) return true;
  }
  return false;
}

double evolution_max_abs_eigenvalue(const DiagonalDynamics& dyn) {
  const auto idx = dyn.active_modes();
  if (idx.empty()) return 0.0;
  Matrix e = restrict_to(dyn.evolution(), idx);
  if (dyn.symmetric_noise()) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (e + e.transpose()), Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("evolution eigensolve failed");
    return solver.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::EigenSolver<Matrix> solver(e, false);
  if (solver.info() != Eigen::Success) throw NumericalError("evolution eigensolve failed");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace seos
