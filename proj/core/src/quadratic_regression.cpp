#include "seos/quadratic_regression.hpp"

#include "seos/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace seos {

VarianceProfile VarianceProfile::flat() { return VarianceProfile{}; }

VarianceProfile VarianceProfile::linear() {
  VarianceProfile p;
  p.kind_ = Kind::Linear;
  return p;
}

VarianceProfile VarianceProfile::table(std::vector<double> sigmas, std::vector<double> values) {
  if (sigmas.empty() || sigmas.size() != values.size())
    throw InvalidArgument("variance table needs matching, non-empty sigma and value lists");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!std::isfinite(sigmas[i]) || !(values[i] >= 0.0) || !std::isfinite(values[i]))
      throw InvalidArgument("variance table entries must be finite with non-negative values");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1]))
      throw InvalidArgument("variance table sigmas must be strictly increasing");
  }
  VarianceProfile p;
  p.kind_ = Kind::Table;
  p.sigmas_ = std::move(sigmas);
  p.values_ = std::move(values);
  return p;
}

double VarianceProfile::operator()(double sigma) const {
  switch (kind_) {
    case Kind::Flat: return 1.0;
    case Kind::Linear: return sigma;
    case Kind::Table: {
      if (sigma <= sigmas_.front()) return values_.front();
      if (sigma >= sigmas_.back()) return values_.back();
      const auto it = std::upper_bound(sigmas_.begin(), sigmas_.end(), sigma);
      const std::size_t k = static_cast<std::size_t>(it - sigmas_.begin());
      const double t = (sigma - sigmas_[k - 1]) / (sigmas_[k] - sigmas_[k - 1]);
      return values_[k - 1] + t * (values_[k] - values_[k - 1]);
    }
  }
  return 1.0;
}

std::string VarianceProfile::name() const {
  switch (kind_) {
    case Kind::Flat: return "flat";
    case Kind::Linear: return "linear";
    case Kind::Table: {
      std::ostringstream os;
      os.precision(17);
      os << "table[";
      for (std::size_t i = 0; i < sigmas_.size(); ++i)
        os << (i ? ";" : "") << sigmas_[i] << ":" << values_[i];
      os << "]";
      return os.str();
    }
  }
  return "flat";
}

Eigen::Map<const Matrix> QuadraticModel::block(Index a) const {
  const Index p = parameter_count();
  return Eigen::Map<const Matrix>(curvature.data() + a * p * p, p, p);
}

SingularTriple QuadraticModel::triple(Index a) const {
  if (a < 0 || a >= triple_count()) throw InvalidArgument("singular triple index out of range");
  return SingularTriple{left.col(a), right.col(a), singular(a)};
}

std::vector<SingularTriple> QuadraticModel::top_triples(Index k) const {
  std::vector<SingularTriple> out;
  for (Index a = 0; a < std::min(k, triple_count()); ++a) out.push_back(triple(a));
  return out;
}

Matrix QuadraticModel::contract(const Vector& u) const {
  const Vector h = curvature.transpose() * u;
  return Eigen::Map<const Matrix>(h.data(), parameter_count(), modes());
}

Vector QuadraticModel::second_order(const Vector& u) const {
  const Matrix h = contract(u);
  return left * (h.transpose() * u);
}

QuadraticModel build_quadratic_model(Index dataset, Index parameters, const VarianceProfile& profile,
                                     double residual_variance, Rng& rng) {
  if (dataset < 2) throw InvalidArgument("quadratic model needs D >= 2");
  if (parameters < 1) throw InvalidArgument("quadratic model needs P >= 1");
  if (!(residual_variance >= 0.0)) throw InvalidArgument("residual variance must be non-negative");

  QuadraticModel model;
  model.profile = profile;
  model.residual_variance = residual_variance;
  model.residual0 = gaussian_vector(dataset, rng, std::sqrt(residual_variance));
  model.jacobian0 = gaussian_matrix(dataset, parameters, rng);

  const Index k = std::min(dataset, parameters);
  const unsigned opts =
      (dataset > parameters ? Eigen::ComputeFullU : Eigen::ComputeThinU) | Eigen::ComputeThinV;
  Eigen::BDCSVD<Matrix> svd(model.jacobian0, opts);
  if (svd.info() != Eigen::Success) throw NumericalError("SVD of the initial jacobian failed");
  model.left = svd.matrixU();
  model.right = svd.matrixV().leftCols(k);
  model.singular = Vector::Zero(model.left.cols());
  model.singular.head(k) = svd.singularValues().head(k);

  const Index m = model.left.cols();
  const Index p = parameters;
  model.curvature.resize(p, m * p);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Index a = 0; a < m; ++a) {
    const double sd = std::sqrt(profile(model.singular(a)));
    double* base = model.curvature.data() + a * p * p;
    for (Index j = 0; j < p; ++j)
      for (Index i = 0; i <= j; ++i) {
        const double x = sd * normal(rng);
        base[i + j * p] = x;
        base[j + i * p] = x;
      }
  }
  return model;
}

QrmState qrm_step(const QrmState& state, const QuadraticModel& model, const MinibatchMask& mask,
                  double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  const auto& j = state.jacobian;
  if (state.z.size() != model.dataset_size() || j.rows() != model.dataset_size() ||
      j.cols() != model.parameter_count() || mask.dataset_size() != state.z.size())
    throw InvalidArgument("qrm_step dimension mismatch");
  if (!state.z.allFinite()) throw InvalidArgument("qrm_step received a non-finite residual");

  Vector grad = Vector::Zero(j.cols());
  for (Index i : mask.indices()) grad.noalias() += state.z(i) * j.row(i).transpose();
  const double scale = eta / static_cast<double>(mask.batch_size());

  const Matrix h = model.contract(grad);
  const Vector b = h.transpose() * grad;

  QrmState next;
  Vector jg = j * grad;
  next.z = state.z - scale * jg;
  next.z.noalias() += (0.5 * scale * scale) * (model.left * b);
  next.jacobian = j;
  next.jacobian.noalias() -= scale * (model.left * h.transpose());
  return next;
}

Estimates estimators(const Matrix& jacobian, const std::vector<SingularTriple>& triples) {
  Estimates e;
  const Index k = static_cast<Index>(triples.size());
  e.sigma_hat.resize(k);
  e.lambda_hat.resize(k);
  for (Index a = 0; a < k; ++a) {
    const auto& t = triples[static_cast<std::size_t>(a)];
    if (t.w.size() != jacobian.rows() || t.v.size() != jacobian.cols())
      throw InvalidArgument("singular triple does not match the jacobian shape");
    const Vector row = jacobian.transpose() * t.w;
    e.sigma_hat(a) = row.dot(t.v);
    e.lambda_hat(a) = row.squaredNorm();
  }
  return e;
}

DiscreteDerivatives discrete_derivatives(const std::vector<double>& series) {
  if (series.size() < 2) throw InvalidArgument("discrete derivatives need at least two points");
  DiscreteDerivatives d;
  for (std::size_t t = 0; t + 1 < series.size(); ++t) d.first.push_back(series[t + 1] - series[t]);
  for (std::size_t t = 0; t + 2 < series.size(); ++t)
    d.second.push_back(series[t + 2] - 2.0 * series[t + 1] + series[t]);
  return d;
}

double theory_first_derivative(const QuadraticModel& model, double eta, Index batch, Index mode) {
  const double d = static_cast<double>(model.dataset_size());
  const double p = static_cast<double>(model.parameter_count());
  const double trace = model.jacobian0.squaredNorm() / d;
  const double v = model.profile(model.singular(mode));
  return eta * eta * p * model.residual_variance * trace * v / static_cast<double>(batch);
}

double theory_second_derivative_stochastic_part(const QuadraticModel& model, double eta,
                                                Index batch, Index mode) {
  const double d = static_cast<double>(model.dataset_size());
  const double p = static_cast<double>(model.parameter_count());
  const double s = model.singular(mode);
  const double v = model.profile(s);
  return -eta * eta * eta * s * s * s * v * p * model.residual_variance /
         (static_cast<double>(batch) * d * d);
}

EarlyDerivatives early_derivatives(const QuadraticModel& model, double eta, Index batch,
                                   Index mode, Index replicates, Rng& rng) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (replicates < 1) throw InvalidArgument("need at least one replicate");
  if (mode < 0 || mode >= model.triple_count()) throw InvalidArgument("mode index out of range");

  const Index d = model.dataset_size();
  const Index p = model.parameter_count();
  const Index m = model.modes();
  const auto& j0 = model.jacobian0;
  const auto& z0 = model.residual0;
  const auto& w_all = model.left;
  const double s = eta / static_cast<double>(batch);

  const Vector w = w_all.col(mode);
  const Vector v = model.right.col(mode);
  const Vector r0 = j0.transpose() * w;
  const double lambda0 = r0.squaredNorm();
  const Vector c = w_all.transpose() * w;  // e_mode up to rounding
  Vector uc = Vector::Zero(p);             // sum_g c_g M_g v
  for (Index g = 0; g < m; ++g) uc.noalias() += c(g) * (model.block(g) * v);

  EarlyDerivatives out;
  out.first.resize(replicates);
  out.second.resize(replicates);

  constexpr Index kChunk = 16;
  for (Index start = 0; start < replicates; start += kChunk) {
    const Index n = std::min(kChunk, replicates - start);
    std::vector<MinibatchMask> first_masks, second_masks;
    Matrix g0(p, n);
    for (Index r = 0; r < n; ++r) {
      first_masks.push_back(sample_mask(d, batch, rng));
      second_masks.push_back(sample_mask(d, batch, rng));
      Vector g = Vector::Zero(p);
      for (Index i : first_masks.back().indices()) g.noalias() += z0(i) * j0.row(i).transpose();
      g0.col(r) = g;
    }
    const Matrix hs = model.curvature.transpose() * g0;  // (m p) x n

    for (Index r = 0; r < n; ++r) {
      const Eigen::Map<const Matrix> h(hs.col(r).data(), p, m);
      const Vector g = g0.col(r);
      const Vector b = h.transpose() * g;
      Vector z1 = z0 - s * (j0 * g);
      z1.noalias() += (0.5 * s * s) * (w_all * b);

      const Vector row1 = r0 - s * (h * c);
      out.first(start + r) = row1.squaredNorm() - lambda0;

      Vector gj = Vector::Zero(p);
      Vector wz = Vector::Zero(m);
      for (Index i : second_masks[static_cast<std::size_t>(r)].indices()) {
        gj.noalias() += z1(i) * j0.row(i).transpose();
        wz.noalias() += z1(i) * w_all.row(i).transpose();
      }
      const Vector g1 = gj - s * (h * wz);
      out.second(start + r) = -s * (g1 - g).dot(uc);
    }
  }
  return out;
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  const double n = static_cast<double>(xs.size());
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= n;
  if (xs.size() < 2) return r;
  double ss = 0.0;
  for (double x : xs) ss += (x - r.mean) * (x - r.mean);
  r.se = std::sqrt(ss / (n - 1.0) / n);
  return r;
}

Rng sharpening_model_stream(std::uint64_t root, Index seed) {
  return make_stream(root, 2 * static_cast<std::uint64_t>(seed));
}

Rng sharpening_mask_stream(std::uint64_t root, Index seed, Index batch) {
  return make_stream(splitmix64(root) ^ static_cast<std::uint64_t>(batch),
                     2 * static_cast<std::uint64_t>(seed) + 1);
}

SharpeningEnsemble monte_carlo_sharpening(const SharpeningConfig& config) {
  if (config.seeds < 1 || config.steps < 0 || config.batch_sizes.empty())
    throw InvalidArgument("sharpening needs seeds >= 1, steps >= 0 and a batch size");
  if (!(config.eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  for (Index b : config.batch_sizes)
    if (b < 1 || b > config.dataset) throw InvalidArgument("batch size outside [1, D]");

  const Index nb = static_cast<Index>(config.batch_sizes.size());
  SharpeningEnsemble ens;
  ens.traces.resize(static_cast<std::size_t>(config.seeds * nb));

  auto run_seed = [&](Index seed, const QuadraticModel& model) {
    const auto triples = model.top_triples(config.tracked_modes);
    const Index k = static_cast<Index>(triples.size());
    for (Index bi = 0; bi < nb; ++bi) {
      const Index batch = config.batch_sizes[static_cast<std::size_t>(bi)];
      Rng rng = sharpening_mask_stream(config.root_seed, seed, batch);
      SharpeningTrace tr;
      tr.seed = seed;
      tr.batch = batch;
      tr.eta = config.eta;
      tr.sigma_hat.resize(config.steps + 1, k);
      tr.lambda_hat.resize(config.steps + 1, k);
      QrmState st{model.residual0, model.jacobian0};
      for (Index t = 0; t <= config.steps; ++t) {
        const auto e = estimators(st.jacobian, triples);
        tr.sigma_hat.row(t) = e.sigma_hat.transpose();
        tr.lambda_hat.row(t) = e.lambda_hat.transpose();
        if (t == config.steps) break;
        st = qrm_step(st, model, sample_mask(config.dataset, batch, rng), config.eta);
      }
      std::vector<double> lam(static_cast<std::size_t>(config.steps + 1));
      std::vector<double> sig(lam.size());
      for (Index t = 0; t <= config.steps; ++t) {
        lam[static_cast<std::size_t>(t)] = tr.lambda_hat(t, 0);
        sig[static_cast<std::size_t>(t)] = tr.sigma_hat(t, 0);
      }
      if (lam.size() >= 2) tr.d1_lambda = discrete_derivatives(lam).first;
      if (sig.size() >= 3) tr.d2_sigma = discrete_derivatives(sig).second;
      tr.theory_d1 = theory_first_derivative(model, config.eta, batch, 0);
      tr.theory_d2_stochastic = theory_second_derivative_stochastic_part(model, config.eta, batch, 0);
      ens.traces[static_cast<std::size_t>(seed * nb + bi)] = std::move(tr);
    }
  };

  if (config.resample_model) {
    parallel_for(config.seeds, config.threads, [&](Index seed) {
      Rng rng = sharpening_model_stream(config.root_seed, seed);
      const auto model = build_quadratic_model(config.dataset, config.parameters, config.profile,
                                               config.residual_variance, rng);
      run_seed(seed, model);
    });
  } else {
    Rng rng = sharpening_model_stream(config.root_seed, -1);
    const auto model = build_quadratic_model(config.dataset, config.parameters, config.profile,
                                             config.residual_variance, rng);
    parallel_for(config.seeds, config.threads, [&](Index seed) { run_seed(seed, model); });
  }

  for (Index bi = 0; bi < nb; ++bi) {
    SharpeningSummary sm;
    sm.batch = config.batch_sizes[static_cast<std::size_t>(bi)];
    auto column = [&](auto pick, std::size_t len, std::vector<double>& mean,
                      std::vector<double>& se) {
      for (std::size_t t = 0; t < len; ++t) {
        std::vector<double> xs;
        for (Index seed = 0; seed < config.seeds; ++seed)
          xs.push_back(pick(ens.traces[static_cast<std::size_t>(seed * nb + bi)], t));
        const auto ms = mean_stderr(xs);
        mean.push_back(ms.mean);
        se.push_back(ms.se);
      }
    };
    const auto& first = ens.traces[static_cast<std::size_t>(bi)];
    column([](const SharpeningTrace& tr, std::size_t t) { return tr.lambda_hat(static_cast<Index>(t), 0); },
           static_cast<std::size_t>(config.steps + 1), sm.lambda_mean, sm.lambda_se);
    column([](const SharpeningTrace& tr, std::size_t t) { return tr.d1_lambda[t]; },
           first.d1_lambda.size(), sm.d1_mean, sm.d1_se);
    column([](const SharpeningTrace& tr, std::size_t t) { return tr.d2_sigma[t]; },
           first.d2_sigma.size(), sm.d2_mean, sm.d2_se);
    for (Index seed = 0; seed < config.seeds; ++seed) {
      const auto& tr = ens.traces[static_cast<std::size_t>(seed * nb + bi)];
      sm.theory_d1 += tr.theory_d1 / static_cast<double>(config.seeds);
      sm.theory_d2_stochastic += tr.theory_d2_stochastic / static_cast<double>(config.seeds);
    }
    ens.summaries.push_back(std::move(sm));
  }
  return ens;
}

std::vector<DerivativeCell> derivative_study(const DerivativeStudyConfig& config) {
  const Index nb = static_cast<Index>(config.batch_sizes.size());
  if (nb == 0 || config.replicates.size() != config.batch_sizes.size())
    throw InvalidArgument("derivative study needs one replicate count per batch size");
  if (config.seeds < 1) throw InvalidArgument("derivative study needs at least one seed");

  std::vector<DerivativeCell> cells(static_cast<std::size_t>(config.seeds * nb));
  parallel_for(config.seeds, config.threads, [&](Index seed) {
    Rng model_rng = sharpening_model_stream(config.root_seed, seed);
    const auto model = build_quadratic_model(config.dataset, config.parameters, config.profile,
                                             config.residual_variance, model_rng);
    double baseline = std::numeric_limits<double>::quiet_NaN();
    if (config.full_batch_baseline) {
      Rng rng = sharpening_mask_stream(config.root_seed, seed, config.dataset);
      baseline = early_derivatives(model, config.eta, config.dataset, config.mode, 1, rng).second(0);
    }
    for (Index bi = 0; bi < nb; ++bi) {
      const Index batch = config.batch_sizes[static_cast<std::size_t>(bi)];
      const Index reps = config.replicates[static_cast<std::size_t>(bi)];
      Rng rng = sharpening_mask_stream(config.root_seed, seed, batch);
      const auto ed = early_derivatives(model, config.eta, batch, config.mode, reps, rng);
      const auto d1 = mean_stderr(std::vector<double>(ed.first.data(), ed.first.data() + reps));
      const auto d2 = mean_stderr(std::vector<double>(ed.second.data(), ed.second.data() + reps));
      DerivativeCell c;
      c.seed = seed;
      c.batch = batch;
      c.replicates = reps;
      c.d1_mean = d1.mean;
      c.d1_se = d1.se;
      c.d2_mean = d2.mean;
      c.d2_se = d2.se;
      c.d2_full_batch = baseline;
      c.d1_theory = theory_first_derivative(model, config.eta, batch, config.mode);
      c.d2_stochastic_theory =
          theory_second_derivative_stochastic_part(model, config.eta, batch, config.mode);
      cells[static_cast<std::size_t>(seed * nb + bi)] = c;
    }
  });
  return cells;
}

}  // namespace seos
