#include "seos/minibatch.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace seos {

namespace {

void check_sizes(Index batch, Index dataset) {
  if (dataset < 2) throw InvalidArgument("dataset size must be at least 2");
  if (batch < 1 || batch > dataset)
    throw InvalidArgument("batch size " + std::to_string(batch) + " outside [1, " +
                          std::to_string(dataset) + "]");
}

void check_square(const Matrix& m, Index dataset) {
  if (m.rows() != dataset || m.cols() != dataset)
    throw InvalidArgument("matrix must be square with side equal to the dataset size");
}

}  // namespace

BatchFractions BatchFractions::of(Index batch, Index dataset) {
  check_sizes(batch, dataset);
  BatchFractions f;
  f.beta = static_cast<double>(batch) / static_cast<double>(dataset);
  f.beta_tilde = static_cast<double>(batch - 1) / static_cast<double>(dataset - 1);
  return f;
}

MinibatchMask::MinibatchMask(std::vector<Index> indices, Index dataset)
    : indices_(std::move(indices)), dataset_(dataset) {
  check_sizes(static_cast<Index>(indices_.size()), dataset_);
  std::sort(indices_.begin(), indices_.end());
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    if (indices_[k] < 0 || indices_[k] >= dataset_)
      throw InvalidArgument("mask index out of range");
    if (k > 0 && indices_[k] == indices_[k - 1])
      throw InvalidArgument("mask indices must be distinct");
  }
}

Vector MinibatchMask::apply(const Vector& z) const {
  if (z.size() != dataset_) throw InvalidArgument("vector length does not match mask");
  Vector out = Vector::Zero(dataset_);
  for (Index i : indices_) out(i) = z(i);
  return out;
}

Matrix MinibatchMask::as_matrix() const {
  Matrix p = Matrix::Zero(dataset_, dataset_);
  for (Index i : indices_) p(i, i) = 1.0;
  return p;
}

MinibatchMask sample_mask(Index dataset, Index batch, Rng& rng) {
  check_sizes(batch, dataset);
  std::vector<Index> perm(static_cast<std::size_t>(dataset));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index i = 0; i < batch; ++i) {
    std::uniform_int_distribution<Index> pick(i, dataset - 1);
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(pick(rng))]);
  }
  perm.resize(static_cast<std::size_t>(batch));
  return MinibatchMask(std::move(perm), dataset);
}

Matrix mask_second_moment(const Matrix& m, Index batch, Index dataset) {
  check_sizes(batch, dataset);
  check_square(m, dataset);
  const auto f = BatchFractions::of(batch, dataset);
  Matrix out = (f.beta * f.beta_tilde) * m;
  out.diagonal() = f.beta * m.diagonal();
  return out;
}

Matrix mask_cross_moment(const Matrix& m, Index batch, Index dataset) {
  check_sizes(batch, dataset);
  check_square(m, dataset);
  const auto f = BatchFractions::of(batch, dataset);
  return (f.beta * f.beta) * m;
}

}  // namespace seos
