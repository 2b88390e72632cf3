#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "smaui/matrix.hpp"
#include "smaui/nn.hpp"
#include "smaui/tape.hpp"

namespace smaui {

// L projection directions on the unit sphere S^{p-1}, one per row.
struct SliceSet {
  Matrix directions;  // L x p
  std::optional<std::uint64_t> seed;

  std::size_t count() const { return directions.rows(); }
  std::size_t dim() const { return directions.cols(); }
};

// Standard-normal vectors normalised to unit length.
SliceSet sample_unit_directions(std::size_t count, std::size_t dim, Rng& rng);
SliceSet sample_unit_directions(std::size_t count, std::size_t dim, std::uint64_t seed);

// Empirical 1-D Wasserstein cost between equal-size samples:
// mean_i |sort(a)[i] - sort(b)[i]|^power.
double wasserstein_1d(std::span<const double> a, std::span<const double> b, double power = 2.0);

// Indices that sort `values` ascending; ties keep original index order.
std::vector<std::size_t> sorted_order(std::span<const double> values);

// Sliced Wasserstein estimate (squared for power 2):
// (1/L) sum_l wasserstein_1d(X gamma_l, Y gamma_l).
double swd2(const Matrix& x, const Matrix& y, const SliceSet& slices, double power = 2.0);

// Same quantity recorded on a tape. The sorted assignment of each slice is
// held fixed in the backward pass.
Var swd2(Var x, Var y, const SliceSet& slices, double power = 2.0);

// Exact squared-Euclidean transport cost between two equal-weight point
// sets by enumerating all n! assignments. Test oracle; n <= 8.
double exact_w2_small(const Matrix& x, const Matrix& y);

}  // namespace smaui
