#pragma once

#include "seos/csv.hpp"
#include "seos/noise_kernel_norm.hpp"
#include "seos/quadratic_regression.hpp"
#include "seos/spectrum_factory.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace seos {

enum class Measure { K, KHD, KTr, KMom, KL2, MaxAbsEigT, MaxEigAB, EtaLambdaMax, FinalLoss };

std::string measure_name(Measure m);
std::optional<Measure> parse_measure(const std::string& s);
std::vector<Measure> parse_measure_list(const std::string& comma_separated);

struct StabilitySweepConfig {
  SpectrumSpec spectrum;
  std::optional<double> eta_min;  // default 1e-3 / lambda_max
  std::optional<double> eta_max;  // default 1e1 / lambda_max
  Index eta_points = 200;
  std::vector<Index> batch_sizes{5};
  Index steps = 10000;
  Index seeds = 1;
  std::vector<Measure> measures{Measure::K, Measure::KHD, Measure::KTr, Measure::EtaLambdaMax};
  double momentum = 0.9;    // for K_mom
  double l2 = 1e-3;         // for K_L2
  double loss_cap = 1e3;    // reporting ceiling for final_loss
  std::string output;
  std::uint64_t root_seed = 0;
  int threads = 1;

  void validate() const;
};

enum class SharpeningMode { Curves, Derivatives };

struct SharpeningRunConfig {
  Index dataset = 100;
  Index parameters = 150;
  VarianceProfile profile = VarianceProfile::flat();
  double residual_variance = 1.0;
  double eta = 0.1;
  std::vector<Index> batch_sizes{16, 64};
  Index steps = 50;
  Index seeds = 10;
  Index tracked_modes = 8;
  bool resample_model = true;
  SharpeningMode mode = SharpeningMode::Curves;
  Index replicates = 64;  // derivatives mode, per (seed, batch)
  std::string output;
  std::uint64_t root_seed = 0;
  int threads = 1;

  void validate() const;
};

// JSON text -> config; unknown keys are rejected.
StabilitySweepConfig parse_stability_config(const std::string& json_text);
SharpeningRunConfig parse_sharpening_config(const std::string& json_text);
SpectrumSpec parse_spectrum_spec(const std::string& text);  // JSON object or "family:k=v,..."

std::string canonical_json(const StabilitySweepConfig& c);
std::string canonical_json(const SharpeningRunConfig& c);
std::string config_hash(const std::string& canonical);  // 16 hex digits, FNV-1a 64

std::vector<double> log_grid(double lo, double hi, Index points);

struct SweepResult {
  Table table;
  double wall_seconds = 0.0;
};

// Analytic measures for one (spectrum, eta, B) cell. Undefined quantities become +inf
// with a note in `status`.
struct CellMeasures {
  StabilityReport report;
  double k_mom = 0.0, k_l2 = 0.0, max_eig_ab = 0.0;
  std::string status = "ok";
};

CellMeasures evaluate_cell(const SpectrumDecomposition& spectrum, double eta, Index batch,
                           const std::vector<Measure>& measures, double momentum, double l2);

SweepResult run_stability_sweep(const StabilitySweepConfig& config);
SweepResult run_sharpening_experiment(const SharpeningRunConfig& config);

// Columns always present in stability sweep output besides the requested measures.
bool verdict_matches_row(const Table& table, std::size_t row);

// Single-shot validation input: either {"spectrum": spec}, {"jacobian": [[...]]},
// {"kernel": [[...]]} or {"eigenvalues": [...], "eigenvectors": [[...]]}, plus "eta",
// "batch_size" and optional "transfer": true.
struct ValidateInput {
  SpectrumDecomposition spectrum;
  double eta = 0.0;
  Index batch = 1;
  bool with_transfer = false;
};

ValidateInput parse_validate_input(const std::string& json_text);
StabilityReport validate_instance(const ValidateInput& input);
std::string report_json(const StabilityReport& r);

}  // namespace seos
