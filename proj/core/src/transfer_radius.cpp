#include "seos/second_moment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

// After the similarity L^{-1/2} T L^{1/2} the symmetric-pair block of T reads
//   diag(d) + k S^T S,   S_{a,p} = w_p V_{a mu} V_{a nu} sqrt(lam_mu lam_nu),
// so its top eigenvalue nu* > max d solves lambda_max(k S diag(1/(nu - d)) S^T) = 1.
// T maps PSD matrices to PSD matrices, hence its spectral radius is that top eigenvalue.

namespace seos {

namespace {

struct Secular {
  Matrix s;  // D x m
  Vector d;  // m
  double k = 0.0;

  // returns lambda_max(F(nu)) and its derivative
  std::pair<double, double> eval(double nu, Matrix& scratch) const {
    const Vector w = (nu - d.array()).inverse().matrix();
    scratch = s * w.cwiseSqrt().asDiagonal();
    Matrix f = Matrix::Zero(s.rows(), s.rows());
    f.selfadjointView<Eigen::Lower>().rankUpdate(scratch, k);
    Eigen::SelfAdjointEigenSolver<Matrix> solver(f);  // reads the lower triangle
    if (solver.info() != Eigen::Success) throw NumericalError("secular eigensolve failed");
    const Index top = s.rows() - 1;
    const double value = solver.eigenvalues()(top);
    const Vector u = solver.eigenvectors().col(top);
    const Vector proj = s.transpose() * u;
    const double deriv = -k * (proj.array().square() * w.array().square()).sum();
    return {value, deriv};
  }
};

}  // namespace

double transfer_spectral_radius(const SpectrumDecomposition& spectrum, double eta, Index batch,
                                Index size_guard) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("learning rate must be positive");
  const Index dsz = spectrum.dim();
  if (dsz > size_guard)
    throw InvalidArgument("matrix-free transfer size guard exceeded: D = " + std::to_string(dsz));
  const auto f = BatchFractions::of(batch, dsz);
  const double r = f.correlated_weight();
  const auto& lam = spectrum.eigenvalues;
  const auto& v = spectrum.eigenvectors;
  const double threshold = active_threshold(spectrum);

  std::vector<Index> modes;
  for (Index i = 0; i < dsz; ++i)
    if (lam(i) > threshold && lam(i) > 0.0) modes.push_back(i);
  const Index n = static_cast<Index>(modes.size());
  if (n == 0) return 1.0;

  auto diag_entry = [&](double a, double b) { return 1.0 - eta * (a + b) + r * eta * eta * a * b; };

  double radius = 0.0;
  if (n < dsz)  // mixed active/frozen pairs
    for (Index i : modes) radius = std::max(radius, std::abs(1.0 - eta * lam(i)));

  Secular sec;
  const Index m = n * (n + 1) / 2;
  sec.s.resize(dsz, m);
  sec.d.resize(m);
  sec.k = f.noise_weight() * eta * eta;
  Index p = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j, ++p) {
      const Index mu = modes[static_cast<std::size_t>(i)];
      const Index nu = modes[static_cast<std::size_t>(j)];
      const double w = (i == j ? 1.0 : std::sqrt(2.0)) * std::sqrt(lam(mu) * lam(nu));
      sec.s.col(p) = w * v.col(mu).cwiseProduct(v.col(nu));
      sec.d(p) = diag_entry(lam(mu), lam(nu));
      // antisymmetric pairs see only the diagonal part
      if (i != j) radius = std::max(radius, std::abs(sec.d(p)));
    }
  if (sec.k == 0.0) return std::max(radius, sec.d.cwiseAbs().maxCoeff());

  const double dmax = sec.d.maxCoeff();
  Eigen::SelfAdjointEigenSolver<Matrix> gram(sec.s * sec.s.transpose(), Eigen::EigenvaluesOnly);
  const double spread = sec.k * gram.eigenvalues().maxCoeff();
  const double scale = std::max({1.0, std::abs(dmax), spread});

  Matrix scratch;
  double lo = dmax + 1e-15 * scale;
  double hi = dmax + spread * (1.0 + 1e-12) + 1e-15 * scale;
  auto [flo, dlo] = sec.eval(lo, scratch);
  if (flo <= 1.0) return std::max(radius, dmax);

  // h(nu) = 1 - 1/lambda_max(F(nu)) is decreasing with a simple root and stays close to linear
  // near the pole at dmax, where Newton on lambda_max(F) - 1 barely moves. Bracketed Newton with
  // a bisection whenever the bracket fails to halve.
  double x = lo;
  double hx = 1.0 - 1.0 / flo;
  double dhx = dlo / (flo * flo);
  double width = hi - lo;
  for (int iter = 0; iter < 300 && (hi - lo) > 1e-15 * scale; ++iter) {
    double next = dhx < 0.0 ? x - hx / dhx : 0.5 * (lo + hi);
    if (!(next > lo && next < hi) || (hi - lo) > 0.5 * width) next = 0.5 * (lo + hi);
    width = hi - lo;
    auto [fv, dv] = sec.eval(next, scratch);
    if (fv > 1.0) lo = next; else hi = next;
    x = next;
    if (!(fv > 0.0)) {
      dhx = 0.0;  // forces a bisection
      continue;
    }
    hx = 1.0 - 1.0 / fv;
    dhx = dv / (fv * fv);
    if (std::abs(hx) <= 1e-15) break;
  }
  return std::max(radius, x);
}

}  // namespace seos
