#include "seos/linear_sgd.hpp"

#include <algorithm>
#include <cmath>

namespace seos {

void LinearModel::validate() const {
  if (jacobian.rows() < 2) throw InvalidArgument("linear model needs at least two datapoints");
  if (residual0.size() != jacobian.rows())
    throw InvalidArgument("residual length does not match jacobian rows");
  if (!jacobian.allFinite() || !residual0.allFinite())
    throw InvalidArgument("linear model has non-finite entries");
}

double residual_loss(const Vector& z) {
  return z.squaredNorm() / (2.0 * static_cast<double>(z.size()));
}

Vector sgd_step(const Vector& z, const Matrix& jacobian, const MinibatchMask& mask, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (z.size() != jacobian.rows() || mask.dataset_size() != z.size())
    throw InvalidArgument("sgd_step dimension mismatch");
  if (!z.allFinite()) throw InvalidArgument("sgd_step received a non-finite residual");

  Vector grad = Vector::Zero(jacobian.cols());
  for (Index i : mask.indices()) grad.noalias() += z(i) * jacobian.row(i).transpose();
  const double scale = eta / static_cast<double>(mask.batch_size());
  Vector jg = jacobian * grad;
  return z - scale * jg;
}

LossTrace simulate_trajectory(const LinearModel& model, double eta, Index batch, Index steps,
                              double cap, Rng& rng) {
  model.validate();
  if (steps < 1) throw InvalidArgument("steps must be at least 1");
  if (!(cap > 0.0)) throw InvalidArgument("saturation cap must be positive");

  LossTrace trace;
  trace.saturation_cap = cap;
  trace.initial_loss = residual_loss(model.residual0);
  trace.losses.reserve(static_cast<std::size_t>(steps) + 1);
  trace.losses.push_back(std::min(trace.initial_loss, cap));

  const double limit = kDivergenceFactor * trace.initial_loss;
  Vector z = model.residual0;
  for (Index t = 0; t < steps; ++t) {
    const auto mask = sample_mask(model.dataset_size(), batch, rng);
    z = sgd_step(z, model.jacobian, mask, eta);
    const double loss = residual_loss(z);
    if (!std::isfinite(loss) || loss > limit) {
      trace.diverged = true;
      trace.losses.push_back(std::isfinite(loss) ? std::min(loss, cap) : cap);
      break;
    }
    trace.losses.push_back(std::min(loss, cap));
  }
  return trace;
}

double deterministic_eos_margin(const SpectrumDecomposition& spectrum, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("learning rate must be positive");
  return eta * spectrum.max_eigenvalue();
}

}  // namespace seos
