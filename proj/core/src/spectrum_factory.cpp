#include "seos/spectrum_factory.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace seos {

std::string to_string(SpectrumFamily f) {
  switch (f) {
    case SpectrumFamily::IidGaussianJacobian: return "iid_gaussian";
    case SpectrumFamily::Dispersed: return "dispersed";
    case SpectrumFamily::LocalizedEigenvectors: return "localized";
  }
  return "unknown";
}

std::optional<SpectrumFamily> parse_family(const std::string& s) {
  if (s == "iid_gaussian" || s == "flat") return SpectrumFamily::IidGaussianJacobian;
  if (s == "dispersed") return SpectrumFamily::Dispersed;
  if (s == "localized") return SpectrumFamily::LocalizedEigenvectors;
  return std::nullopt;
}

void SpectrumSpec::validate() const {
  if (dataset < 2) throw InvalidArgument("spectrum family needs D >= 2");
  if (family != SpectrumFamily::Dispersed && parameters < 1)
    throw InvalidArgument("spectrum family needs P >= 1");
  if (family == SpectrumFamily::LocalizedEigenvectors) {
    if (!(sigma_s > 0.0)) throw InvalidArgument("sigma_s must be positive");
    if (jacobian_std && !(*jacobian_std >= 0.0))
      throw InvalidArgument("jacobian_std must be non-negative");
  }
}

std::string SpectrumSpec::describe() const {
  std::ostringstream os;
  os << to_string(family) << "(D=" << dataset;
  if (family != SpectrumFamily::Dispersed) os << ",P=" << parameters;
  if (family == SpectrumFamily::Dispersed) os << ",alpha_start=1";
  if (family == SpectrumFamily::LocalizedEigenvectors) {
    os.precision(17);
    os << ",sigma_s=" << sigma_s << ",jacobian_std="
       << (jacobian_std ? *jacobian_std : localized_jacobian_std(*this))
       << (jacobian_std ? "" : "(trace-matched)");
  }
  os << ",seed=" << seed << ")";
  return os.str();
}

Matrix GeneratedSpectrum::jacobian_factor() const {
  if (jacobian) return *jacobian;
  const double d = static_cast<double>(spectrum.dim());
  return spectrum.eigenvectors * (spectrum.eigenvalues * d).cwiseSqrt().asDiagonal();
}

double localized_jacobian_std(const SpectrumSpec& spec) {
  const double d = static_cast<double>(spec.dataset);
  const double p = static_cast<double>(spec.parameters);
  return std::sqrt(spec.sigma_s * std::sqrt(2.0 / std::numbers::pi) * d / p);
}

Matrix haar_orthogonal(Index d, Rng& rng) {
  if (d < 1) throw InvalidArgument("haar_orthogonal needs D >= 1");
  const Matrix g = gaussian_matrix(d, d, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix& r = qr.matrixQR();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  return q;
}

GeneratedSpectrum generate(const SpectrumSpec& spec, Rng& rng) {
  spec.validate();
  GeneratedSpectrum out;
  const Index d = spec.dataset;
  switch (spec.family) {
    case SpectrumFamily::IidGaussianJacobian: {
      Matrix j = gaussian_matrix(d, spec.parameters, rng);
      out.spectrum = decompose_ntk(j);
      out.jacobian = std::move(j);
      break;
    }
    case SpectrumFamily::Dispersed: {
      Vector lam(d);
      for (Index k = 0; k < d; ++k) {
        const double alpha = static_cast<double>(k + 1);
        lam(k) = 1.0 / (alpha * alpha + 1.0);
      }
      out.spectrum = make_spectrum(lam, haar_orthogonal(d, rng));
      break;
    }
    case SpectrumFamily::LocalizedEigenvectors: {
      const double std_j = spec.jacobian_std ? *spec.jacobian_std : localized_jacobian_std(spec);
      const Vector s = gaussian_vector(d, rng, spec.sigma_s);
      const Matrix j0 = gaussian_matrix(d, spec.parameters, rng, std_j > 0.0 ? std_j : 1.0) *
                        (std_j > 0.0 ? 1.0 : 0.0);
      Matrix theta = empirical_ntk(j0);
      theta.diagonal() += s.cwiseAbs();
      out.spectrum = decompose_symmetric(theta);
      break;
    }
  }
  return out;
}

GeneratedSpectrum generate(const SpectrumSpec& spec) {
  Rng rng = make_stream(spec.seed, 0);
  return generate(spec, rng);
}

}  // namespace seos
