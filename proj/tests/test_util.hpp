#pragma once

// Helpers shared by the test binaries: seeded random inputs and a central
// finite-difference oracle that never touches the tape.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "smaui/matrix.hpp"
#include "smaui/nn.hpp"

namespace smaui::testing {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = normal(rng);
  return m;
}

// Central differences of a scalar function of one matrix argument.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                double step = 1e-6) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(probe);
    probe.data()[i] = orig - step;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a.data()[i], y = b.data()[i];
    diff += (x - y) * (x - y);
    na += x * x;
    nb += y * y;
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

// Two well separated Gaussian blobs in 2-D; points closer than `margin` to
// the separating line x0 = 0 are redrawn, so the classes are linearly
// separable with a gap of 2 * margin.
inline Dataset separable_blobs(std::size_t n, double sigma, double margin, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  Dataset ds;
  ds.name = "blobs";
  ds.features = Matrix(n, 2);
  ds.labels = std::vector<int>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double cx = y == 0 ? -1.0 : 1.0;
    double x0 = 0.0;
    do {
      x0 = cx + normal(rng);
    } while ((y == 0 && x0 > -margin) || (y == 1 && x0 < margin));
    ds.features(i, 0) = x0;
    ds.features(i, 1) = normal(rng);
    (*ds.labels)[i] = y;
  }
  return ds;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("smaui_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace smaui::testing
