#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smaui {

// Dense row-major matrix of doubles. Samples are stored as rows, so a set of
// N points in R^d is an N x d matrix (the transpose of the column-per-sample
// convention).
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  std::string shape_string() const;

  Matrix transpose() const;
  Matrix select_rows(std::span<const std::size_t> indices) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);
Matrix operator*(double s, Matrix a);

Matrix matmul(const Matrix& a, const Matrix& b);
// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& z);
Matrix tanh(const Matrix& z);
// z + bias broadcast over rows; bias must be 1 x z.cols().
Matrix add_row_bias(const Matrix& z, const Matrix& bias);

double sum(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

// Index of the largest entry in each row; ties go to the lowest index.
std::vector<int> argmax_rows(const Matrix& m);

void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

}  // namespace smaui
