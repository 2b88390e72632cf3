#include "smaui/swd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <limits>

#include "smaui/errors.hpp"

namespace smaui {

namespace {

constexpr std::size_t kMaxExactPoints = 8;

void check_pair(const Matrix& x, const Matrix& y, const SliceSet& slices) {
  if (x.rows() != y.rows()) {
    throw ContractError("swd2: sample counts differ, " + x.shape_string() + " vs " + y.shape_string());
  }
  if (x.rows() == 0) throw ContractError("swd2: empty sample set");
  if (x.cols() != y.cols() || x.cols() != slices.dim()) {
    throw ContractError("swd2: dimension mismatch, " + x.shape_string() + ", " + y.shape_string() +
                        ", slices of dim " + std::to_string(slices.dim()));
  }
  if (slices.count() == 0) throw ContractError("swd2: empty slice set");
}

std::vector<double> project(const Matrix& x, std::span<const double> direction) {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    double s = 0.0;
    for (std::size_t c = 0; c < r.size(); ++c) s += r[c] * direction[c];
    out[i] = s;
  }
  return out;
}

double cost(double diff, double power) {
  const double a = std::abs(diff);
  return power == 2.0 ? a * a : std::pow(a, power);
}

// d cost / d diff
double cost_slope(double diff, double power) {
  if (power == 2.0) return 2.0 * diff;
  if (diff == 0.0) return 0.0;
  return power * std::pow(std::abs(diff), power - 1.0) * (diff > 0 ? 1.0 : -1.0);
}

}  // namespace

SliceSet sample_unit_directions(std::size_t count, std::size_t dim, Rng& rng) {
  if (count < 1 || dim < 1) throw ContractError("sample_unit_directions: need L >= 1 and p >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  SliceSet s{Matrix(count, dim), std::nullopt};
  for (std::size_t l = 0; l < count; ++l) {
    auto row = s.directions.row(l);
    double norm2 = 0.0;
    // Resample the (probability zero) all-zero draw.
    while (norm2 == 0.0) {
      norm2 = 0.0;
      for (double& v : row) {
        v = normal(rng);
        norm2 += v * v;
      }
    }
    if (dim == 1) {
      row[0] = row[0] < 0.0 ? -1.0 : 1.0;  // avoid x / |x| rounding off +-1
      continue;
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : row) v *= inv;
  }
  return s;
}

SliceSet sample_unit_directions(std::size_t count, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  SliceSet s = sample_unit_directions(count, dim, rng);
  s.seed = seed;
  return s;
}

std::vector<std::size_t> sorted_order(std::span<const double> values) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  return idx;
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b, double power) {
  if (a.size() != b.size()) {
    throw ContractError("wasserstein_1d: lengths differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw ContractError("wasserstein_1d: empty samples");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  double total = 0.0;
  for (std::size_t i = 0; i < sa.size(); ++i) total += cost(sa[i] - sb[i], power);
  return total / static_cast<double>(sa.size());
}

double swd2(const Matrix& x, const Matrix& y, const SliceSet& slices, double power) {
  check_pair(x, y, slices);
  double total = 0.0;
  for (std::size_t l = 0; l < slices.count(); ++l) {
    const auto dir = slices.directions.row(l);
    total += wasserstein_1d(project(x, dir), project(y, dir), power);
  }
  return total / static_cast<double>(slices.count());
}

Var swd2(Var x, Var y, const SliceSet& slices, double power) {
  if (x.tape == nullptr || x.tape != y.tape) throw ContractError("swd2: vars belong to different tapes");
  const Matrix& xv = x.value();
  const Matrix& yv = y.value();
  check_pair(xv, yv, slices);

  const std::size_t n = xv.rows();
  const std::size_t count = slices.count();
  // Matched pairs per slice: (x row, y row, projected difference).
  struct Pairing {
    std::vector<std::size_t> xs, ys;
    std::vector<double> diff;
  };
  std::vector<Pairing> pairings(count);
  double total = 0.0;
  for (std::size_t l = 0; l < count; ++l) {
    const auto dir = slices.directions.row(l);
    const auto px = project(xv, dir);
    const auto py = project(yv, dir);
    Pairing& pr = pairings[l];
    pr.xs = sorted_order(px);
    pr.ys = sorted_order(py);
    pr.diff.resize(n);
    double slice_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pr.diff[i] = px[pr.xs[i]] - py[pr.ys[i]];
      slice_sum += cost(pr.diff[i], power);
    }
    total += slice_sum / static_cast<double>(n);
  }
  const double norm = 1.0 / (static_cast<double>(count) * static_cast<double>(n));
  Matrix dirs = slices.directions;
  return x.tape->record(
      Matrix(1, 1, total / static_cast<double>(count)), {x.id, y.id},
      [x, y, pairings = std::move(pairings), dirs = std::move(dirs), norm, power](Tape& tp,
                                                                                 const Matrix& g) {
        Matrix* gx = tp.grad_slot(x.id);
        Matrix* gy = tp.grad_slot(y.id);
        const double scale = g(0, 0) * norm;
        for (std::size_t l = 0; l < pairings.size(); ++l) {
          const auto dir = dirs.row(l);
          const Pairing& pr = pairings[l];
          for (std::size_t i = 0; i < pr.diff.size(); ++i) {
            const double s = scale * cost_slope(pr.diff[i], power);
            if (s == 0.0) continue;
            if (gx != nullptr) {
              auto row = gx->row(pr.xs[i]);
              for (std::size_t c = 0; c < row.size(); ++c) row[c] += s * dir[c];
            }
            if (gy != nullptr) {
              auto row = gy->row(pr.ys[i]);
              for (std::size_t c = 0; c < row.size(); ++c) row[c] -= s * dir[c];
            }
          }
        }
      });
}

double exact_w2_small(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ContractError("exact_w2_small: shape mismatch " + x.shape_string() + " vs " + y.shape_string());
  }
  if (x.rows() == 0) throw ContractError("exact_w2_small: empty point sets");
  if (x.rows() > kMaxExactPoints) {
    throw ContractError("exact_w2_small: n = " + std::to_string(x.rows()) +
                        " exceeds enumeration limit of " + std::to_string(kMaxExactPoints));
  }
  const std::size_t n = x.rows();
  Matrix cost_matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double d = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        const double t = x(i, c) - y(j, c);
        d += t * t;
      }
      cost_matrix(i, j) = d;
    }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += cost_matrix(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(n);
}

}  // namespace smaui
