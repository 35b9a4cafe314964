#pragma once

#include "seos/rng.hpp"
#include "seos/spectrum.hpp"
#include "seos/types.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace seos {

enum class SpectrumFamily { IidGaussianJacobian, Dispersed, LocalizedEigenvectors };

std::string to_string(SpectrumFamily f);
std::optional<SpectrumFamily> parse_family(const std::string& s);

struct SpectrumSpec {
  SpectrumFamily family = SpectrumFamily::IidGaussianJacobian;
  Index dataset = 100;     // D
  Index parameters = 120;  // P (unused by Dispersed)
  double sigma_s = 0.1;    // LocalizedEigenvectors diagonal scale
  // LocalizedEigenvectors entry std of J0; empty means trace-matched (see localized_jacobian_std)
  std::optional<double> jacobian_std;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

struct GeneratedSpectrum {
  SpectrumDecomposition spectrum;
  std::optional<Matrix> jacobian;  // present for IidGaussianJacobian

  // Any J with J J^T / D equal to the kernel; the actual jacobian when one exists.
  Matrix jacobian_factor() const;
};

// Entry std making E|s_i| match the mean eigenvalue of J0 J0^T / D:
// sqrt(sigma_s * sqrt(2/pi) * D / P).
double localized_jacobian_std(const SpectrumSpec& spec);

GeneratedSpectrum generate(const SpectrumSpec& spec, Rng& rng);
GeneratedSpectrum generate(const SpectrumSpec& spec);  // uses spec.seed

Matrix haar_orthogonal(Index d, Rng& rng);

}  // namespace seos
