#include "oracles.hpp"
#include "seos/minibatch.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace seos;

TEST(BatchFractions, Values) {
  const auto f = BatchFractions::of(5, 100);
  EXPECT_DOUBLE_EQ(f.beta, 0.05);
  EXPECT_DOUBLE_EQ(f.beta_tilde, 4.0 / 99.0);
  EXPECT_LE(f.beta_tilde, f.beta);
  const auto full = BatchFractions::of(7, 7);
  EXPECT_EQ(full.beta, 1.0);
  EXPECT_EQ(full.beta_tilde, 1.0);
  EXPECT_EQ(BatchFractions::of(1, 9).beta_tilde, 0.0);
}

TEST(BatchFractions, RejectsBadSizes) {
  EXPECT_THROW(BatchFractions::of(0, 10), InvalidArgument);
  EXPECT_THROW(BatchFractions::of(11, 10), InvalidArgument);
  EXPECT_THROW(BatchFractions::of(1, 1), InvalidArgument);
}

TEST(MinibatchMask, ValidatesAndSorts) {
  MinibatchMask m({4, 1, 2}, 6);
  EXPECT_EQ(m.indices(), (std::vector<Index>{1, 2, 4}));
  EXPECT_THROW(MinibatchMask({1, 1}, 4), InvalidArgument);
  EXPECT_THROW(MinibatchMask({0, 4}, 4), InvalidArgument);
  EXPECT_THROW(MinibatchMask({}, 4), InvalidArgument);
  Vector z = Vector::LinSpaced(6, 1.0, 6.0);
  const Vector pz = m.apply(z);
  EXPECT_EQ(pz(0), 0.0);
  EXPECT_EQ(pz(1), 2.0);
  EXPECT_EQ(pz(4), 5.0);
}

TEST(SampleMask, SizesAndDistinctness) {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const auto m = sample_mask(10, 4, rng);
    std::set<Index> s(m.indices().begin(), m.indices().end());
    EXPECT_EQ(s.size(), 4u);
    EXPECT_GE(*s.begin(), 0);
    EXPECT_LT(*s.rbegin(), 10);
  }
  EXPECT_EQ(sample_mask(5, 5, rng).indices(), (std::vector<Index>{0, 1, 2, 3, 4}));
  EXPECT_THROW(sample_mask(1, 1, rng), InvalidArgument);
  EXPECT_THROW(sample_mask(5, 6, rng), InvalidArgument);
}

TEST(SampleMask, UniformInclusion) {
  // every index appears with probability B/D
  Rng rng(7);
  const Index d = 8, b = 3, n = 200000;
  std::vector<double> counts(d, 0.0);
  for (Index k = 0; k < n; ++k) {
    const auto mask = sample_mask(d, b, rng);
    for (Index i : mask.indices()) counts[static_cast<std::size_t>(i)] += 1.0;
  }
  const double p = static_cast<double>(b) / d;
  const double sd = std::sqrt(p * (1 - p) / n);
  for (double c : counts) EXPECT_NEAR(c / n, p, 5 * sd);
}

TEST(SampleMask, DeterministicGivenSeed) {
  Rng a(99), b(99);
  for (int k = 0; k < 50; ++k) EXPECT_EQ(sample_mask(30, 7, a).indices(), sample_mask(30, 7, b).indices());
}

TEST(MaskSecondMoment, TwoByTwoSingleSample) {
  Matrix m(2, 2);
  m << 3.0, 5.0, 5.0, 7.0;
  const Matrix r = mask_second_moment(m, 1, 2);
  EXPECT_DOUBLE_EQ(r(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(r(1, 1), 3.5);
  EXPECT_EQ(r(0, 1), 0.0);
  EXPECT_EQ(r(1, 0), 0.0);
}

TEST(MaskSecondMoment, FullBatchIsIdentityMap) {
  Rng rng(3);
  const Matrix m = gaussian_matrix(6, 6, rng);
  EXPECT_TRUE(mask_second_moment(m, 6, 6).isApprox(m, 1e-15));
  EXPECT_TRUE(mask_cross_moment(m, 6, 6).isApprox(m, 1e-15));
}

TEST(MaskSecondMoment, IdentityGivesBetaIdentity) {
  const Matrix r = mask_second_moment(Matrix::Identity(9, 9), 4, 9);
  EXPECT_TRUE(r.isApprox(Matrix::Identity(9, 9) * (4.0 / 9.0), 1e-15));
}

TEST(MaskSecondMoment, Linear) {
  Rng rng(5);
  const Matrix a = gaussian_matrix(7, 7, rng), b = gaussian_matrix(7, 7, rng);
  const Matrix lhs = mask_second_moment(2.0 * a - 3.0 * b, 3, 7);
  const Matrix rhs = 2.0 * mask_second_moment(a, 3, 7) - 3.0 * mask_second_moment(b, 3, 7);
  EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(MaskSecondMoment, MatchesEnumeration) {
  Rng rng(11);
  for (Index d = 2; d <= 6; ++d)
    for (Index b = 1; b <= d; ++b) {
      const Matrix m = gaussian_matrix(d, d, rng);
      const Matrix exact = oracle::enumerate_second_moment(m, b);
      EXPECT_LT((mask_second_moment(m, b, d) - exact).cwiseAbs().maxCoeff(), 1e-13)
          << "D=" << d << " B=" << b;
    }
}

TEST(MaskCrossMoment, BetaSquared) {
  Matrix m(2, 2);
  m << 1.0, 2.0, 3.0, 4.0;
  EXPECT_TRUE(mask_cross_moment(m, 1, 2).isApprox(m * 0.25, 1e-15));
  EXPECT_THROW(mask_cross_moment(m, 1, 3), InvalidArgument);
}

TEST(MaskSecondMoment, DimensionMismatch) {
  EXPECT_THROW(mask_second_moment(Matrix::Zero(3, 2), 1, 3), InvalidArgument);
  EXPECT_THROW(mask_second_moment(Matrix::Zero(3, 3), 1, 4), InvalidArgument);
}
