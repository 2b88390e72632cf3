#include "smaui/swd.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "smaui/errors.hpp"
#include "test_util.hpp"

namespace smaui {
namespace {

using testing::random_matrix;

TEST(Wasserstein1d, HandExamples) {
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{1, 3}, std::vector<double>{2, 4}), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{3, 1}, std::vector<double>{4, 2}), 1.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0}, std::vector<double>{5}), 25.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0}, std::vector<double>{5}, 1.0), 5.0);
}

TEST(Wasserstein1d, LengthMismatchIsContractError) {
  EXPECT_THROW(wasserstein_1d(std::vector<double>{1, 2}, std::vector<double>{1}), ContractError);
}

TEST(SortedOrder, StableOnTies) {
  EXPECT_EQ(sorted_order(std::vector<double>{2, 1, 2, 1}), (std::vector<std::size_t>{1, 3, 0, 2}));
}

TEST(Directions, OneDimensionalAreSigns) {
  const SliceSet s = sample_unit_directions(50, 1, 3);
  for (std::size_t l = 0; l < s.count(); ++l) EXPECT_EQ(std::abs(s.directions(l, 0)), 1.0);
}

TEST(Directions, UnitNormAndSeedRecorded) {
  const SliceSet s = sample_unit_directions(200, 5, 11);
  ASSERT_TRUE(s.seed.has_value());
  EXPECT_EQ(*s.seed, 11u);
  for (std::size_t l = 0; l < s.count(); ++l) {
    double n2 = 0.0;
    for (double v : s.directions.row(l)) n2 += v * v;
    EXPECT_NEAR(n2, 1.0, 1e-12);
  }
}

TEST(Directions, IsotropicMeanVanishes) {
  const SliceSet s = sample_unit_directions(100000, 3, 5);
  std::vector<double> mean(3, 0.0);
  for (std::size_t l = 0; l < s.count(); ++l)
    for (std::size_t c = 0; c < 3; ++c) mean[c] += s.directions(l, c) / 100000.0;
  EXPECT_LT(std::hypot(mean[0], mean[1], mean[2]), 0.02);
}

TEST(Directions, SameSeedSameSlices) {
  EXPECT_EQ(sample_unit_directions(10, 4, 9).directions, sample_unit_directions(10, 4, 9).directions);
}

TEST(Swd2, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(1);
  const Matrix x = random_matrix(20, 4, rng);
  EXPECT_EQ(swd2(x, x, sample_unit_directions(64, 4, 2)), 0.0);
}

TEST(Swd2, OneDimensionalEqualsExactW2) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(6, 1, rng);
    const Matrix y = random_matrix(6, 1, rng);
    EXPECT_NEAR(swd2(x, y, sample_unit_directions(7, 1, rng)), exact_w2_small(x, y), 1e-12);
  }
}

TEST(Swd2, BoundedByExactW2) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix x = random_matrix(5, 2, rng);
    const Matrix y = random_matrix(5, 2, rng, 2.0);
    EXPECT_LE(swd2(x, y, sample_unit_directions(2000, 2, rng)), exact_w2_small(x, y) + 1e-9);
  }
}

TEST(Swd2, SymmetricAndQuadraticInScale) {
  std::mt19937_64 rng(4);
  const Matrix x = random_matrix(15, 3, rng);
  const Matrix y = random_matrix(15, 3, rng);
  const SliceSet s = sample_unit_directions(100, 3, 6);
  const double base = swd2(x, y, s);
  EXPECT_NEAR(swd2(y, x, s), base, 1e-12);
  Matrix x3 = x, y3 = y;
  x3 *= 3.0;
  y3 *= 3.0;
  EXPECT_NEAR(swd2(x3, y3, s), 9.0 * base, 1e-10);
}

TEST(Swd2, TranslatingBothSetsChangesNothing) {
  std::mt19937_64 rng(5);
  const Matrix x = random_matrix(12, 2, rng);
  const Matrix y = random_matrix(12, 2, rng);
  const SliceSet s = sample_unit_directions(50, 2, 8);
  const Matrix shift = add_row_bias(Matrix(12, 2), Matrix{{7.5, -3.0}});
  Matrix xs = x, ys = y;
  xs += shift;
  ys += shift;
  EXPECT_NEAR(swd2(xs, ys, s), swd2(x, y, s), 1e-10);
}

TEST(Swd2, ShapePreconditions) {
  const SliceSet s = sample_unit_directions(4, 2, 1);
  EXPECT_THROW(swd2(Matrix(3, 2), Matrix(4, 2), s), ContractError);
  EXPECT_THROW(swd2(Matrix(3, 3), Matrix(3, 3), s), ContractError);
}

TEST(ExactW2, HandExamples) {
  EXPECT_DOUBLE_EQ(exact_w2_small(Matrix{{0, 0}}, Matrix{{3, 4}}), 25.0);
  // Optimal assignment swaps the pairing.
  EXPECT_DOUBLE_EQ(exact_w2_small(Matrix{{0, 0}, {1, 0}}, Matrix{{2, 0}, {1, 0}}), 1.0);
}

TEST(ExactW2, RejectsLargeSets) { EXPECT_THROW(exact_w2_small(Matrix(9, 2), Matrix(9, 2)), ContractError); }

TEST(Swd2Tape, ValueMatchesPlain) {
  std::mt19937_64 rng(6);
  const Matrix x = random_matrix(10, 3, rng);
  const Matrix y = random_matrix(10, 3, rng);
  const SliceSet s = sample_unit_directions(30, 3, 1);
  Tape tape;
  Var v = swd2(tape.leaf(x), tape.leaf(y), s);
  EXPECT_NEAR(v.value()(0, 0), swd2(x, y, s), 1e-14);
}

// Smallest gap between consecutive sorted projections over all slices, for
// both sets; finite differences are only valid when it exceeds the step.
double min_projection_gap(const Matrix& m, const SliceSet& s) {
  const Matrix proj = matmul(m, s.directions.transpose());
  double gap = INFINITY;
  for (std::size_t l = 0; l < s.count(); ++l) {
    std::vector<double> col(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) col[i] = proj(i, l);
    std::sort(col.begin(), col.end());
    for (std::size_t i = 1; i < col.size(); ++i) gap = std::min(gap, col[i] - col[i - 1]);
  }
  return gap;
}

TEST(Swd2Tape, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int trial = 0; trial < 20 && checked < 10; ++trial) {
    const Matrix x = random_matrix(6, 3, rng);
    const Matrix y = random_matrix(6, 3, rng);
    const SliceSet s = sample_unit_directions(16, 3, rng);
    if (std::min(min_projection_gap(x, s), min_projection_gap(y, s)) < 1e-4) continue;
    ++checked;
    Tape tape;
    Var vx = tape.leaf(x), vy = tape.leaf(y);
    const Gradients g = tape.backward(swd2(vx, vy, s));
    EXPECT_LT(testing::relative_error(g.wrt(vx), testing::finite_difference(
                                                     [&](const Matrix& m) { return swd2(m, y, s); }, x)),
              1e-6);
    EXPECT_LT(testing::relative_error(g.wrt(vy), testing::finite_difference(
                                                     [&](const Matrix& m) { return swd2(x, m, s); }, y)),
              1e-6);
  }
  EXPECT_GE(checked, 5);
}

}  // namespace
}  // namespace smaui
