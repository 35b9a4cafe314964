#include "seos/experiment.hpp"

#include "seos/linear_sgd.hpp"
#include "seos/parallel.hpp"
#include "seos/second_moment.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

namespace seos {

using json = nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr const char* kVersion = "0.1.0";

const std::vector<std::pair<Measure, std::string>>& measure_names() {
  static const std::vector<std::pair<Measure, std::string>> names{
      {Measure::K, "K"},
      {Measure::KHD, "K_HD"},
      {Measure::KTr, "K_tr"},
      {Measure::KMom, "K_mom"},
      {Measure::KL2, "K_L2"},
      {Measure::MaxAbsEigT, "maxAbsEig_T"},
      {Measure::MaxEigAB, "maxEig_AB"},
      {Measure::EtaLambdaMax, "eta_lambda_max"},
      {Measure::FinalLoss, "final_loss"}};
  return names;
}

bool has(const std::vector<Measure>& ms, Measure m) {
  return std::find(ms.begin(), ms.end(), m) != ms.end();
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* what) {
  if (!j.is_object()) throw InvalidArgument(std::string(what) + " must be a JSON object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key()))
      throw InvalidArgument(std::string("unknown key '") + it.key() + "' in " + what);
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("bad value for '") + key + "': " + e.what());
  }
}

SpectrumSpec spectrum_from_json(const json& j) {
  reject_unknown(j, {"family", "D", "P", "sigma_s", "jacobian_std", "seed"}, "spectrum");
  SpectrumSpec s;
  const auto fam = get_or<std::string>(j, "family", "iid_gaussian");
  const auto parsed = parse_family(fam);
  if (!parsed) throw InvalidArgument("unknown spectrum family: " + fam);
  s.family = *parsed;
  s.dataset = get_or<Index>(j, "D", s.dataset);
  s.parameters = get_or<Index>(j, "P", s.parameters);
  s.sigma_s = get_or<double>(j, "sigma_s", s.sigma_s);
  if (j.contains("jacobian_std") && !j.at("jacobian_std").is_null())
    s.jacobian_std = j.at("jacobian_std").get<double>();
  s.seed = get_or<std::uint64_t>(j, "seed", 0);
  s.validate();
  return s;
}

json spectrum_to_json(const SpectrumSpec& s) {
  json j{{"family", to_string(s.family)}, {"D", s.dataset}, {"P", s.parameters},
         {"sigma_s", s.sigma_s}, {"seed", s.seed}};
  j["jacobian_std"] = s.jacobian_std ? json(*s.jacobian_std) : json(nullptr);
  return j;
}

VarianceProfile profile_from_json(const json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "flat") return VarianceProfile::flat();
    if (s == "linear") return VarianceProfile::linear();
    throw InvalidArgument("unknown variance profile: " + s);
  }
  if (j.is_object() && j.contains("table")) {
    std::vector<double> sig, val;
    for (const auto& pr : j.at("table")) {
      if (!pr.is_array() || pr.size() != 2) throw InvalidArgument("table rows are [sigma, V]");
      sig.push_back(pr[0].get<double>());
      val.push_back(pr[1].get<double>());
    }
    return VarianceProfile::table(std::move(sig), std::move(val));
  }
  throw InvalidArgument("variance profile must be \"flat\", \"linear\" or {\"table\": [...]}");
}

std::vector<Index> index_list(const json& j, const char* key) {
  std::vector<Index> out;
  for (const auto& x : j.at(key)) out.push_back(x.get<Index>());
  return out;
}

std::string json_dump_sorted(const json& j) { return j.dump(); }  // nlohmann orders keys

std::string format_index(Index i) { return std::to_string(i); }

Rng spectrum_stream(std::uint64_t root, std::uint64_t spectrum_seed) {
  return make_stream(splitmix64(root) ^ 0x7370656374ULL, spectrum_seed);
}

Rng residual_stream(std::uint64_t root, Index seed) {
  return make_stream(splitmix64(root) ^ 0x7a30ULL, static_cast<std::uint64_t>(seed));
}

double parse_cell(const std::string& s) {
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

}  // namespace

std::string measure_name(Measure m) {
  for (const auto& [k, v] : measure_names())
    if (k == m) return v;
  return "?";
}

std::optional<Measure> parse_measure(const std::string& s) {
  for (const auto& [k, v] : measure_names())
    if (v == s) return k;
  return std::nullopt;
}

std::vector<Measure> parse_measure_list(const std::string& comma_separated) {
  std::vector<Measure> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    const auto m = parse_measure(item);
    if (!m) throw InvalidArgument("unknown measure: " + item);
    if (!has(out, *m)) out.push_back(*m);
  }
  return out;
}

void StabilitySweepConfig::validate() const {
  spectrum.validate();
  if (eta_points < 1) throw InvalidArgument("eta grid must be non-empty");
  if (eta_min && !(*eta_min > 0.0)) throw InvalidArgument("eta_min must be positive");
  if (eta_max && !(*eta_max > 0.0)) throw InvalidArgument("eta_max must be positive");
  if (eta_min && eta_max && *eta_max < *eta_min) throw InvalidArgument("eta_max < eta_min");
  if (batch_sizes.empty()) throw InvalidArgument("need at least one batch size");
  for (Index b : batch_sizes)
    if (b < 1 || b > spectrum.dataset) throw InvalidArgument("batch size outside [1, D]");
  if (seeds < 1) throw InvalidArgument("seeds must be at least 1");
  if (has(measures, Measure::FinalLoss) && steps < 1) throw InvalidArgument("steps must be >= 1");
  if (has(measures, Measure::MaxAbsEigT) && spectrum.dataset > kMatrixFreeSizeGuard)
    throw InvalidArgument("maxAbsEig_T requires D <= " + std::to_string(kMatrixFreeSizeGuard));
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(l2 >= 0.0)) throw InvalidArgument("l2 must be non-negative");
  if (!(loss_cap > 0.0)) throw InvalidArgument("loss_cap must be positive");
}

void SharpeningRunConfig::validate() const {
  if (dataset < 2 || parameters < 1) throw InvalidArgument("need D >= 2 and P >= 1");
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (batch_sizes.empty()) throw InvalidArgument("need at least one batch size");
  for (Index b : batch_sizes)
    if (b < 1 || b > dataset) throw InvalidArgument("batch size outside [1, D]");
  if (seeds < 1) throw InvalidArgument("seeds must be at least 1");
  if (mode == SharpeningMode::Curves && steps < 1) throw InvalidArgument("steps must be >= 1");
  if (mode == SharpeningMode::Derivatives && replicates < 1)
    throw InvalidArgument("replicates must be >= 1");
  if (tracked_modes < 1) throw InvalidArgument("tracked_modes must be >= 1");
}

StabilitySweepConfig parse_stability_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config JSON: ") + e.what());
  }
  reject_unknown(j, {"spectrum", "eta", "batch_sizes", "steps", "seeds", "measures", "momentum",
                     "l2", "loss_cap", "output", "root_seed"},
                 "stability config");
  StabilitySweepConfig c;
  if (j.contains("spectrum")) c.spectrum = spectrum_from_json(j.at("spectrum"));
  if (j.contains("eta")) {
    const auto& e = j.at("eta");
    reject_unknown(e, {"min", "max", "points"}, "eta");
    if (e.contains("min") && !e.at("min").is_null()) c.eta_min = e.at("min").get<double>();
    if (e.contains("max") && !e.at("max").is_null()) c.eta_max = e.at("max").get<double>();
    c.eta_points = get_or<Index>(e, "points", c.eta_points);
  }
  if (j.contains("batch_sizes")) c.batch_sizes = index_list(j, "batch_sizes");
  c.steps = get_or<Index>(j, "steps", c.steps);
  c.seeds = get_or<Index>(j, "seeds", c.seeds);
  if (j.contains("measures")) {
    c.measures.clear();
    for (const auto& m : j.at("measures")) {
      const auto pm = parse_measure(m.get<std::string>());
      if (!pm) throw InvalidArgument("unknown measure: " + m.get<std::string>());
      if (!has(c.measures, *pm)) c.measures.push_back(*pm);
    }
  }
  c.momentum = get_or<double>(j, "momentum", c.momentum);
  c.l2 = get_or<double>(j, "l2", c.l2);
  c.loss_cap = get_or<double>(j, "loss_cap", c.loss_cap);
  c.output = get_or<std::string>(j, "output", c.output);
  c.root_seed = get_or<std::uint64_t>(j, "root_seed", c.root_seed);
  return c;
}

SharpeningRunConfig parse_sharpening_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed config JSON: ") + e.what());
  }
  reject_unknown(j, {"D", "P", "profile", "residual_variance", "eta", "batch_sizes", "steps",
                     "seeds", "tracked_modes", "resample_model", "mode", "replicates", "output",
                     "root_seed"},
                 "sharpening config");
  SharpeningRunConfig c;
  c.dataset = get_or<Index>(j, "D", c.dataset);
  c.parameters = get_or<Index>(j, "P", c.parameters);
  if (j.contains("profile")) c.profile = profile_from_json(j.at("profile"));
  c.residual_variance = get_or<double>(j, "residual_variance", c.residual_variance);
  c.eta = get_or<double>(j, "eta", c.eta);
  if (j.contains("batch_sizes")) c.batch_sizes = index_list(j, "batch_sizes");
  c.steps = get_or<Index>(j, "steps", c.steps);
  c.seeds = get_or<Index>(j, "seeds", c.seeds);
  c.tracked_modes = get_or<Index>(j, "tracked_modes", c.tracked_modes);
  c.resample_model = get_or<bool>(j, "resample_model", c.resample_model);
  const auto mode = get_or<std::string>(j, "mode", "curves");
  if (mode == "curves") c.mode = SharpeningMode::Curves;
  else if (mode == "derivatives") c.mode = SharpeningMode::Derivatives;
  else throw InvalidArgument("mode must be \"curves\" or \"derivatives\"");
  c.replicates = get_or<Index>(j, "replicates", c.replicates);
  c.output = get_or<std::string>(j, "output", c.output);
  c.root_seed = get_or<std::uint64_t>(j, "root_seed", c.root_seed);
  return c;
}

SpectrumSpec parse_spectrum_spec(const std::string& text) {
  const auto first = text.find_first_not_of(" \t\n");
  if (first != std::string::npos && text[first] == '{') {
    try {
      return spectrum_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw InvalidArgument(std::string("malformed spectrum JSON: ") + e.what());
    }
  }
  // family:key=value,key=value
  json j;
  const auto colon = text.find(':');
  j["family"] = text.substr(0, colon);
  if (colon != std::string::npos) {
    std::stringstream ss(text.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw InvalidArgument("spectrum options are key=value: " + kv);
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      try {
        if (key == "D" || key == "P") j[key] = std::stoll(val);
        else if (key == "seed") j[key] = std::stoull(val);
        else j[key] = std::stod(val);
      } catch (const std::exception&) {
        throw InvalidArgument("bad spectrum option value: " + kv);
      }
    }
  }
  return spectrum_from_json(j);
}

std::string canonical_json(const StabilitySweepConfig& c) {
  json j;
  j["spectrum"] = spectrum_to_json(c.spectrum);
  j["eta"] = {{"min", c.eta_min ? json(*c.eta_min) : json(nullptr)},
              {"max", c.eta_max ? json(*c.eta_max) : json(nullptr)},
              {"points", c.eta_points}};
  j["batch_sizes"] = c.batch_sizes;
  j["steps"] = c.steps;
  j["seeds"] = c.seeds;
  std::vector<std::string> ms;
  for (auto m : c.measures) ms.push_back(measure_name(m));
  j["measures"] = ms;
  j["momentum"] = c.momentum;
  j["l2"] = c.l2;
  j["loss_cap"] = c.loss_cap;
  j["root_seed"] = c.root_seed;
  return json_dump_sorted(j);
}

std::string canonical_json(const SharpeningRunConfig& c) {
  json j{{"D", c.dataset},
         {"P", c.parameters},
         {"profile", c.profile.name()},
         {"residual_variance", c.residual_variance},
         {"eta", c.eta},
         {"batch_sizes", c.batch_sizes},
         {"steps", c.steps},
         {"seeds", c.seeds},
         {"tracked_modes", c.tracked_modes},
         {"resample_model", c.resample_model},
         {"mode", c.mode == SharpeningMode::Curves ? "curves" : "derivatives"},
         {"replicates", c.replicates},
         {"root_seed", c.root_seed}};
  return json_dump_sorted(j);
}

std::string config_hash(const std::string& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<double> log_grid(double lo, double hi, Index points) {
  if (points < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("bad log grid");
  std::vector<double> g(static_cast<std::size_t>(points));
  if (points == 1) {
    g[0] = lo;
    return g;
  }
  const double a = std::log(lo), b = std::log(hi);
  for (Index i = 0; i < points; ++i)
    g[static_cast<std::size_t>(i)] =
        std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(points - 1));
  return g;
}

CellMeasures evaluate_cell(const SpectrumDecomposition& spectrum, double eta, Index batch,
                           const std::vector<Measure>& measures, double momentum, double l2) {
  CellMeasures c;
  std::vector<std::string> notes;
  const auto dyn = build_diagonal_dynamics(spectrum, eta, batch);

  std::optional<double> t;
  if (has(measures, Measure::MaxAbsEigT)) {
    try {
      t = transfer_spectral_radius(spectrum, eta, batch);
    } catch (const std::exception& e) {
      t = kInf;
      notes.push_back("maxAbsEig_T:failed");
    }
  }
  c.report = stability_verdict(dyn, eta, spectrum, t);
  if (std::isinf(c.report.knorm)) notes.push_back("K:deterministic-edge");
  if (std::isinf(c.report.knorm_hd) && has(measures, Measure::KHD))
    notes.push_back("K_HD:eta*lambda>=2");
  if (has(measures, Measure::KMom)) {
    try {
      c.k_mom = knorm_momentum_hd(spectrum.eigenvalues, eta, batch, spectrum.dim(),
                                  MomentumParams::from_mu(momentum));
    } catch (const InvalidArgument&) {
      c.k_mom = kInf;
      notes.push_back("K_mom:divergent");
    }
  }
  if (has(measures, Measure::KL2)) {
    try {
      c.k_l2 = knorm_l2_hd(spectrum.eigenvalues, eta, batch, spectrum.dim(), l2);
    } catch (const InvalidArgument&) {
      c.k_l2 = kInf;
      notes.push_back("K_L2:divergent");
    }
  }
  if (has(measures, Measure::MaxEigAB)) c.max_eig_ab = evolution_max_abs_eigenvalue(dyn);
  if (!notes.empty()) {
    c.status.clear();
    for (std::size_t i = 0; i < notes.size(); ++i) c.status += (i ? ";" : "") + notes[i];
  }
  return c;
}

SweepResult run_stability_sweep(const StabilitySweepConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  Rng srng = spectrum_stream(config.root_seed, config.spectrum.seed);
  const auto gen = generate(config.spectrum, srng);
  const auto& spectrum = gen.spectrum;
  const double lmax = spectrum.max_eigenvalue();
  if (!(lmax > 0.0)) throw InvalidArgument("spectrum has no positive eigenvalue");

  const double lo = config.eta_min.value_or(1e-3 / lmax);
  const double hi = config.eta_max.value_or(1e1 / lmax);
  const auto etas = log_grid(lo, hi, config.eta_points);
  const Index ne = static_cast<Index>(etas.size());
  const Index nb = static_cast<Index>(config.batch_sizes.size());
  const auto& ms = config.measures;

  std::vector<CellMeasures> analytic(static_cast<std::size_t>(ne * nb));
  parallel_for(ne * nb, config.threads, [&](Index k) {
    const double eta = etas[static_cast<std::size_t>(k / nb)];
    const Index batch = config.batch_sizes[static_cast<std::size_t>(k % nb)];
    analytic[static_cast<std::size_t>(k)] =
        evaluate_cell(spectrum, eta, batch, ms, config.momentum, config.l2);
  });

  const bool trajectories = has(ms, Measure::FinalLoss);
  const Index ncells = ne * nb * config.seeds;
  std::vector<LossTrace> traces(trajectories ? static_cast<std::size_t>(ncells) : 0);
  if (trajectories) {
    const Matrix jac = gen.jacobian_factor();
    std::vector<Vector> residuals;
    for (Index s = 0; s < config.seeds; ++s) {
      Rng zr = residual_stream(config.root_seed, s);
      residuals.push_back(gaussian_vector(spectrum.dim(), zr));
    }
    parallel_for(ncells, config.threads, [&](Index cell) {
      const Index k = cell / config.seeds;
      const Index s = cell % config.seeds;
      const double eta = etas[static_cast<std::size_t>(k / nb)];
      const Index batch = config.batch_sizes[static_cast<std::size_t>(k % nb)];
      Rng rng = make_stream(config.root_seed, static_cast<std::uint64_t>(cell));
      LinearModel model{jac, residuals[static_cast<std::size_t>(s)]};
      traces[static_cast<std::size_t>(cell)] =
          simulate_trajectory(model, eta, batch, config.steps, config.loss_cap, rng);
    });
  }

  SweepResult res;
  auto& tb = res.table;
  tb.metadata = {"seos stability-sweep version=" + std::string(kVersion),
                 "config_hash=" + config_hash(canonical_json(config)),
                 "root_seed=" + std::to_string(config.root_seed),
                 "spectrum=" + config.spectrum.describe(),
                 "lambda_max=" + format_double(lmax),
                 "eta_grid=log-spaced min=" + format_double(lo) + " max=" + format_double(hi) +
                     " points=" + std::to_string(ne) +
                     (config.eta_min || config.eta_max ? "" : " (default [1e-3,1e1]/lambda_max)"),
                 "z0=iid standard normal, one draw per seed",
                 "divergence=loss > 1e6 * L0 or non-finite",
                 "config=" + canonical_json(config)};
  tb.columns = {"eta", "batch_size", "seed", "K", "a_op_norm", "eta_lambda_max"};
  if (has(ms, Measure::KHD)) tb.columns.push_back("K_HD");
  if (has(ms, Measure::KTr)) tb.columns.push_back("K_tr");
  if (has(ms, Measure::KMom)) tb.columns.push_back("K_mom");
  if (has(ms, Measure::KL2)) tb.columns.push_back("K_L2");
  if (has(ms, Measure::MaxAbsEigT)) tb.columns.push_back("maxAbsEig_T");
  if (has(ms, Measure::MaxEigAB)) tb.columns.push_back("maxEig_AB");
  if (trajectories) {
    tb.columns.push_back("final_loss");
    tb.columns.push_back("diverged");
  }
  tb.columns.push_back("verdict");
  tb.columns.push_back("status");

  for (Index k = 0; k < ne * nb; ++k) {
    const auto& c = analytic[static_cast<std::size_t>(k)];
    for (Index s = 0; s < config.seeds; ++s) {
      std::vector<std::string> row{format_double(etas[static_cast<std::size_t>(k / nb)]),
                                   format_index(config.batch_sizes[static_cast<std::size_t>(k % nb)]),
                                   format_index(s), format_double(c.report.knorm),
                                   format_double(c.report.a_op_norm),
                                   format_double(c.report.eta_lambda_max)};
      if (has(ms, Measure::KHD)) row.push_back(format_double(c.report.knorm_hd));
      if (has(ms, Measure::KTr)) row.push_back(format_double(c.report.knorm_tr));
      if (has(ms, Measure::KMom)) row.push_back(format_double(c.k_mom));
      if (has(ms, Measure::KL2)) row.push_back(format_double(c.k_l2));
      if (has(ms, Measure::MaxAbsEigT)) row.push_back(format_double(*c.report.t_max_abs_eig));
      if (has(ms, Measure::MaxEigAB)) row.push_back(format_double(c.max_eig_ab));
      if (trajectories) {
        const auto& tr = traces[static_cast<std::size_t>(k * config.seeds + s)];
        row.push_back(format_double(tr.final_loss()));
        row.push_back(tr.diverged ? "1" : "0");
      }
      row.emplace_back(to_string(c.report.verdict));
      row.push_back(c.status);
      tb.rows.push_back(std::move(row));
    }
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  tb.metadata.push_back("timing wall_seconds=" + format_double(res.wall_seconds));
  if (!config.output.empty()) tb.write_file(config.output);
  return res;
}

SweepResult run_sharpening_experiment(const SharpeningRunConfig& config) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  SweepResult res;
  auto& tb = res.table;
  tb.metadata = {"seos sharpening version=" + std::string(kVersion),
                 "config_hash=" + config_hash(canonical_json(config)),
                 "root_seed=" + std::to_string(config.root_seed),
                 "model=quadratic regression D=" + std::to_string(config.dataset) +
                     " P=" + std::to_string(config.parameters) + " profile=" + config.profile.name() +
                     " resample_model=" + (config.resample_model ? "true" : "false"),
                 "tracked=top singular triple of J0",
                 "config=" + canonical_json(config)};

  if (config.mode == SharpeningMode::Curves) {
    SharpeningConfig sc;
    sc.dataset = config.dataset;
    sc.parameters = config.parameters;
    sc.profile = config.profile;
    sc.residual_variance = config.residual_variance;
    sc.eta = config.eta;
    sc.batch_sizes = config.batch_sizes;
    sc.steps = config.steps;
    sc.seeds = config.seeds;
    sc.tracked_modes = config.tracked_modes;
    sc.resample_model = config.resample_model;
    sc.root_seed = config.root_seed;
    sc.threads = config.threads;
    const auto ens = monte_carlo_sharpening(sc);
    tb.metadata.push_back("derivative columns are empty where the step has no forward difference");
    tb.columns = {"eta", "batch_size", "step", "lambda_hat_mean", "lambda_hat_se",
                  "d1_lambda_mean", "d1_lambda_se", "d2_sigma_mean", "d2_sigma_se",
                  "d1_theory", "d2_stochastic_theory"};
    for (const auto& sm : ens.summaries)
      for (Index t = 0; t <= config.steps; ++t) {
        const auto u = static_cast<std::size_t>(t);
        auto opt = [](const std::vector<double>& v, std::size_t i) {
          return i < v.size() ? format_double(v[i]) : std::string();
        };
        tb.rows.push_back({format_double(config.eta), format_index(sm.batch), format_index(t),
                           format_double(sm.lambda_mean[u]), format_double(sm.lambda_se[u]),
                           opt(sm.d1_mean, u), opt(sm.d1_se, u), opt(sm.d2_mean, u),
                           opt(sm.d2_se, u), format_double(sm.theory_d1),
                           format_double(sm.theory_d2_stochastic)});
      }
  } else {
    DerivativeStudyConfig dc;
    dc.dataset = config.dataset;
    dc.parameters = config.parameters;
    dc.profile = config.profile;
    dc.residual_variance = config.residual_variance;
    dc.eta = config.eta;
    dc.batch_sizes = config.batch_sizes;
    dc.replicates.assign(config.batch_sizes.size(), config.replicates);
    dc.seeds = config.seeds;
    dc.root_seed = config.root_seed;
    dc.threads = config.threads;
    const auto cells = derivative_study(dc);
    tb.metadata.push_back("d2_stochastic = d2_mean - d2_full_batch (same model, B = D)");
    tb.columns = {"eta", "batch_size", "seed", "replicates", "d1_mean", "d1_se", "d1_theory",
                  "d2_mean", "d2_se", "d2_full_batch", "d2_stochastic", "d2_stochastic_theory"};
    for (const auto& c : cells)
      tb.rows.push_back({format_double(config.eta), format_index(c.batch), format_index(c.seed),
                         format_index(c.replicates), format_double(c.d1_mean),
                         format_double(c.d1_se), format_double(c.d1_theory),
                         format_double(c.d2_mean), format_double(c.d2_se),
                         format_double(c.d2_full_batch),
                         format_double(c.d2_mean - c.d2_full_batch),
                         format_double(c.d2_stochastic_theory)});
  }
  res.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  tb.metadata.push_back("timing wall_seconds=" + format_double(res.wall_seconds));
  if (!config.output.empty()) tb.write_file(config.output);
  return res;
}

bool verdict_matches_row(const Table& table, std::size_t row) {
  auto col = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < table.columns.size(); ++i)
      if (table.columns[i] == name) return i;
    return std::nullopt;
  };
  const auto& r = table.rows.at(row);
  const auto k = col("K"), a = col("a_op_norm"), e = col("eta_lambda_max"), v = col("verdict");
  if (!k || !a || !e || !v) return false;
  std::optional<double> t;
  if (const auto tc = col("maxAbsEig_T")) t = parse_cell(r[*tc]);
  const auto verdict = classify(parse_cell(r[*a]), parse_cell(r[*k]), parse_cell(r[*e]), t);
  return std::string(to_string(verdict)) == r[*v];
}

ValidateInput parse_validate_input(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed input JSON: ") + e.what());
  }
  reject_unknown(j, {"spectrum", "jacobian", "kernel", "eigenvalues", "eigenvectors", "eta",
                     "batch_size", "transfer", "root_seed"},
                 "validate input");
  auto matrix = [](const json& m) {
    if (!m.is_array() || m.empty()) throw InvalidArgument("matrix must be a non-empty array");
    const Index rows = static_cast<Index>(m.size());
    const Index cols = static_cast<Index>(m.at(0).size());
    Matrix out(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      const auto& row = m.at(static_cast<std::size_t>(i));
      if (!row.is_array() || static_cast<Index>(row.size()) != cols)
        throw InvalidArgument("matrix rows must have equal length");
      for (Index c = 0; c < cols; ++c) out(i, c) = row.at(static_cast<std::size_t>(c)).get<double>();
    }
    return out;
  };
  ValidateInput in;
  try {
    if (j.contains("spectrum")) {
      const auto spec = spectrum_from_json(j.at("spectrum"));
      Rng rng = spectrum_stream(get_or<std::uint64_t>(j, "root_seed", 0), spec.seed);
      in.spectrum = generate(spec, rng).spectrum;
    } else if (j.contains("jacobian")) {
      in.spectrum = decompose_ntk(matrix(j.at("jacobian")));
    } else if (j.contains("kernel")) {
      in.spectrum = decompose_symmetric(matrix(j.at("kernel")));
    } else if (j.contains("eigenvalues")) {
      Vector lam(static_cast<Index>(j.at("eigenvalues").size()));
      for (Index i = 0; i < lam.size(); ++i)
        lam(i) = j.at("eigenvalues").at(static_cast<std::size_t>(i)).get<double>();
      const Matrix v = j.contains("eigenvectors") ? matrix(j.at("eigenvectors"))
                                                  : Matrix::Identity(lam.size(), lam.size());
      in.spectrum = make_spectrum(lam, v);
    } else {
      throw InvalidArgument("input needs one of spectrum, jacobian, kernel, eigenvalues");
    }
    if (!j.contains("eta")) throw InvalidArgument("input needs eta");
    in.eta = j.at("eta").get<double>();
    in.batch = j.at("batch_size").get<Index>();
    in.with_transfer = get_or<bool>(j, "transfer", false);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed input: ") + e.what());
  }
  return in;
}

StabilityReport validate_instance(const ValidateInput& input) {
  const auto dyn = build_diagonal_dynamics(input.spectrum, input.eta, input.batch);
  std::optional<double> t;
  if (input.with_transfer) t = transfer_spectral_radius(input.spectrum, input.eta, input.batch);
  return stability_verdict(dyn, input.eta, input.spectrum, t);
}

std::string report_json(const StabilityReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(format_double(x)); };
  json j{{"knorm", num(r.knorm)},
         {"a_op_norm", num(r.a_op_norm)},
         {"knorm_hd", num(r.knorm_hd)},
         {"knorm_tr", num(r.knorm_tr)},
         {"eta_lambda_max", num(r.eta_lambda_max)},
         {"t_max_abs_eig", r.t_max_abs_eig ? num(*r.t_max_abs_eig) : json(nullptr)},
         {"verdict", std::string(to_string(r.verdict))}};
  return j.dump(2);
}

}  // namespace seos
