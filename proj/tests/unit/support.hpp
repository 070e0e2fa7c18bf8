#pragma once

#include <cmath>
#include <random>
#include <span>

#include <doctest.h>

#include "lll/numerics.hpp"

namespace lll::test {

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Mat& a, const Mat& b) {
  REQUIRE(a.same_shape(b));
  return max_abs_diff(a.values(), b.values());
}

inline Mat unit_rows(Mat m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const Vec u = l2_normalize(m.row(r));
    std::copy(u.begin(), u.end(), m.row(r).begin());
  }
  return m;
}

inline Mat random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Mat m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

}  // namespace lll::test
