#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lll {

/// Raised for contract violations (bad shapes, invalid arguments, bad input files).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a computation produces a non-finite value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

using Vec = std::vector<double>;

/// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, Vec values);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const Mat& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  void fill(double v);
  /// Appends a row; the first row fixes the column count of an empty matrix.
  void append_row(std::span<const double> r);

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vec values_;
};

std::string shape_str(const Mat& m);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> v);
bool all_finite(std::span<const double> v);

/// log(sum(exp(v))) shifted by max(v). Throws Error("empty reduction") on empty input.
double logsumexp(std::span<const double> v);
Vec softmax(std::span<const double> v);

inline constexpr double kNormEps = 1e-12;

/// v / max(||v||, eps).
Vec l2_normalize(std::span<const double> v, double eps = kNormEps);

/// Vector-Jacobian product of l2_normalize at v for upstream gradient g.
Vec l2_normalize_backward(std::span<const double> v, std::span<const double> g,
                          double eps = kNormEps);

/// a (n x k) * b (k x m)
Mat matmul(const Mat& a, const Mat& b);
/// a^T (k x n)^T * b (k x m) -> n x m
Mat matmul_at_b(const Mat& a, const Mat& b);
/// a (n x k) * b^T (m x k)^T -> n x m
Mat matmul_a_bt(const Mat& a, const Mat& b);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate.
Vec finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h = 1e-5);

/// ||a - b|| / max(||a||, ||b||); 0 when both norms are below `floor`.
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-10);

}  // namespace lll
