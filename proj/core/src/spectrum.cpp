#include "seos/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace seos {

namespace {

constexpr double kNegativeTolerance = 1e-10;
constexpr double kOrthonormalTolerance = 1e-8;

SpectrumDecomposition sort_and_clip(const Vector& values, const Matrix& vectors) {
  const Index d = values.size();
  std::vector<Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return values(a) > values(b); });

  SpectrumDecomposition s;
  s.eigenvalues.resize(d);
  s.eigenvectors.resize(vectors.rows(), d);
  for (Index k = 0; k < d; ++k) {
    s.eigenvalues(k) = values(order[static_cast<std::size_t>(k)]);
    s.eigenvectors.col(k) = vectors.col(order[static_cast<std::size_t>(k)]);
  }

  const double scale = std::max(1.0, d ? std::abs(s.eigenvalues(0)) : 0.0);
  for (Index k = 0; k < d; ++k) {
    double& l = s.eigenvalues(k);
    if (!std::isfinite(l)) throw NumericalError("non-finite eigenvalue");
    if (l < 0.0) {
      if (l < -kNegativeTolerance * scale)
        throw NumericalError("kernel has a negative eigenvalue; input is not PSD");
      l = 0.0;
    }
  }
  return s;
}

}  // namespace

Matrix SpectrumDecomposition::reconstruct() const {
  return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
}

Matrix empirical_ntk(const Matrix& jacobian) {
  const double d = static_cast<double>(jacobian.rows());
  Matrix theta(jacobian.rows(), jacobian.rows());
  theta.setZero();
  theta.selfadjointView<Eigen::Lower>().rankUpdate(jacobian, 1.0 / d);
  theta.triangularView<Eigen::StrictlyUpper>() = theta.transpose();
  return theta;
}

SpectrumDecomposition decompose_symmetric(const Matrix& theta) {
  if (theta.rows() != theta.cols() || theta.rows() == 0)
    throw InvalidArgument("kernel must be a non-empty square matrix");
  if (!theta.allFinite()) throw InvalidArgument("kernel has non-finite entries");
  const double asym = (theta - theta.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-8 * std::max(1.0, theta.cwiseAbs().maxCoeff()))
    throw InvalidArgument("kernel is not symmetric");

  Eigen::SelfAdjointEigenSolver<Matrix> solver(theta);
  if (solver.info() != Eigen::Success) throw NumericalError("eigensolver did not converge");
  return sort_and_clip(solver.eigenvalues(), solver.eigenvectors());
}

SpectrumDecomposition decompose_ntk(const Matrix& jacobian) {
  if (!jacobian.allFinite()) throw InvalidArgument("jacobian has non-finite entries");
  return decompose_symmetric(empirical_ntk(jacobian));
}

SpectrumDecomposition make_spectrum(Vector eigenvalues, Matrix eigenvectors) {
  const Index d = eigenvalues.size();
  if (eigenvectors.rows() != d || eigenvectors.cols() != d)
    throw InvalidArgument("eigenvector matrix must be D x D");
  const Matrix gram = eigenvectors.transpose() * eigenvectors;
  if ((gram - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() > kOrthonormalTolerance)
    throw InvalidArgument("eigenvectors are not orthonormal");
  return sort_and_clip(eigenvalues, eigenvectors);
}

double active_threshold(const SpectrumDecomposition& s) {
  return kPseudoInverseCutoff * std::max(0.0, s.max_eigenvalue());
}

}  // namespace seos
