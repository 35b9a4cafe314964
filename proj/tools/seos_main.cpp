#include "seos/experiment.hpp"
#include "seos/parallel.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw seos::InvalidArgument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<seos::Index> parse_index_list(const std::string& s) {
  std::vector<seos::Index> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoll(item));
  if (out.empty()) throw seos::InvalidArgument("empty list: " + s);
  return out;
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> measures;
  std::optional<double> eta_min, eta_max;
  std::optional<seos::Index> eta_points;
  std::optional<std::string> batch_sizes;
  std::optional<seos::Index> steps;
  std::optional<std::string> spectrum;
  std::optional<seos::Index> seeds;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON config file");
  cmd->add_option("--seed", o.seed, "root seed");
  cmd->add_option("--out", o.out, "output CSV path ('-' for stdout)");
  cmd->add_option("--batch-sizes", o.batch_sizes, "comma-separated batch sizes");
  cmd->add_option("--steps", o.steps, "SGD steps per trajectory");
  cmd->add_option("--seeds", o.seeds, "number of seeds");
}

void emit(const seos::SweepResult& r, const std::string& out) {
  if (out.empty() || out == "-") r.table.write(std::cout);
  else std::cerr << "wrote " << r.table.rows.size() << " rows to " << out << " in "
                 << r.wall_seconds << " s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic edge-of-stability experiments"};
  app.require_subcommand(1);

  Overrides sweep;
  auto* sweep_cmd = app.add_subcommand("stability-sweep", "noise kernel norm sweep over (eta, B, seed)");
  add_common(sweep_cmd, sweep);
  sweep_cmd->add_option("--measures", sweep.measures,
                        "comma list of K,K_HD,K_tr,K_mom,K_L2,maxAbsEig_T,maxEig_AB,eta_lambda_max,final_loss");
  sweep_cmd->add_option("--eta-min", sweep.eta_min, "smallest learning rate");
  sweep_cmd->add_option("--eta-max", sweep.eta_max, "largest learning rate");
  sweep_cmd->add_option("--eta-points", sweep.eta_points, "grid points (log-spaced)");
  sweep_cmd->add_option("--spectrum", sweep.spectrum,
                        "family:key=value,... e.g. dispersed:D=100,seed=1 (or a JSON object)");

  Overrides sharp;
  auto* sharp_cmd = app.add_subcommand("sharpening", "quadratic regression sharpening ensembles");
  add_common(sharp_cmd, sharp);
  std::optional<double> sharp_eta;
  std::optional<std::string> sharp_mode, sharp_profile;
  sharp_cmd->add_option("--eta", sharp_eta, "learning rate");
  sharp_cmd->add_option("--mode", sharp_mode, "curves | derivatives");
  sharp_cmd->add_option("--profile", sharp_profile, "flat | linear");

  std::string validate_path;
  auto* val_cmd = app.add_subcommand("validate", "stability report for one instance (JSON input)");
  val_cmd->add_option("input", validate_path, "input JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const int threads = seos::default_thread_count();
  try {
    if (*sweep_cmd) {
      auto c = sweep.config.empty() ? seos::StabilitySweepConfig{}
                                    : seos::parse_stability_config(slurp(sweep.config));
      if (sweep.seed) c.root_seed = *sweep.seed;
      if (sweep.out) c.output = *sweep.out;
      if (sweep.measures) c.measures = seos::parse_measure_list(*sweep.measures);
      if (sweep.eta_min) c.eta_min = *sweep.eta_min;
      if (sweep.eta_max) c.eta_max = *sweep.eta_max;
      if (sweep.eta_points) c.eta_points = *sweep.eta_points;
      if (sweep.batch_sizes) c.batch_sizes = parse_index_list(*sweep.batch_sizes);
      if (sweep.steps) c.steps = *sweep.steps;
      if (sweep.seeds) c.seeds = *sweep.seeds;
      if (sweep.spectrum) c.spectrum = seos::parse_spectrum_spec(*sweep.spectrum);
      c.threads = threads;
      const std::string out = c.output;
      if (out == "-") c.output.clear();
      emit(seos::run_stability_sweep(c), out);
      return 0;
    }
    if (*sharp_cmd) {
      auto c = sharp.config.empty() ? seos::SharpeningRunConfig{}
                                    : seos::parse_sharpening_config(slurp(sharp.config));
      if (sharp.seed) c.root_seed = *sharp.seed;
      if (sharp.out) c.output = *sharp.out;
      if (sharp.batch_sizes) c.batch_sizes = parse_index_list(*sharp.batch_sizes);
      if (sharp.steps) c.steps = *sharp.steps;
      if (sharp.seeds) c.seeds = *sharp.seeds;
      if (sharp_eta) c.eta = *sharp_eta;
      if (sharp_mode) {
        if (*sharp_mode == "curves") c.mode = seos::SharpeningMode::Curves;
        else if (*sharp_mode == "derivatives") c.mode = seos::SharpeningMode::Derivatives;
        else throw seos::InvalidArgument("mode must be curves or derivatives");
      }
      if (sharp_profile) {
        if (*sharp_profile == "flat") c.profile = seos::VarianceProfile::flat();
        else if (*sharp_profile == "linear") c.profile = seos::VarianceProfile::linear();
        else throw seos::InvalidArgument("profile must be flat or linear");
      }
      c.threads = threads;
      const std::string out = c.output;
      if (out == "-") c.output.clear();
      emit(seos::run_sharpening_experiment(c), out);
      return 0;
    }
    if (*val_cmd) {
      const auto input = seos::parse_validate_input(slurp(validate_path));
      const auto report = seos::validate_instance(input);
      std::cout << seos::report_json(report) << '\n';
      return report.verdict == seos::Verdict::Stable ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
