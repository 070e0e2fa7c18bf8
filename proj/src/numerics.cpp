#include "lll/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lll {

Mat::Mat(std::size_t rows, std::size_t cols, Vec values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw Error("Mat: " + std::to_string(values_.size()) + " values do not fill " +
                std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  for (const auto& r : rows) {
    append_row(Vec(r));
  }
}

void Mat::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

void Mat::append_row(std::span<const double> r) {
  if (rows_ == 0 && values_.empty()) {
    cols_ = r.size();
  } else if (r.size() != cols_) {
    throw Error("Mat::append_row: row of length " + std::to_string(r.size()) +
                " into matrix with " + std::to_string(cols_) + " columns");
  }
  values_.insert(values_.end(), r.begin(), r.end());
  ++rows_;
}

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double logsumexp(std::span<const double> v) {
  if (v.empty()) throw Error("empty reduction");
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Vec softmax(std::span<const double> v) {
  const double lse = logsumexp(v);
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::exp(v[i] - lse);
  return out;
}

Vec l2_normalize(std::span<const double> v, double eps) {
  const double denom = std::max(norm2(v), eps);
  Vec out(v.begin(), v.end());
  for (double& x : out) x /= denom;
  return out;
}

Vec l2_normalize_backward(std::span<const double> v, std::span<const double> g, double eps) {
  const double n = norm2(v);
  Vec out(g.begin(), g.end());
  if (n < eps) {
    for (double& x : out) x /= eps;
    return out;
  }
  // (I - u u^T) g / ||v||
  double gu = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) gu += g[i] * v[i] / n;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (g[i] - gu * v[i] / n) / n;
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw Error("matmul: shape mismatch " + shape_str(a) + " * " + shape_str(b));
  }
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Mat matmul_at_b(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw Error("matmul_at_b: shape mismatch " + shape_str(a) + "^T * " + shape_str(b));
  }
  Mat out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Mat matmul_a_bt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw Error("matmul_a_bt: shape mismatch " + shape_str(a) + " * " + shape_str(b) + "^T");
  }
  Mat out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(arow, b.row(j));
  }
  return out;
}

Vec finite_diff_grad(const ScalarFn& f, std::span<const double> x, double h) {
  if (!(h > 0.0)) throw Error("finite_diff_grad: step must be positive");
  Vec probe(x.begin(), x.end());
  Vec grad(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double fp = f(probe);
    probe[k] = orig - h;
    const double fm = f(probe);
    probe[k] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericalError("finite_diff_grad: non-finite evaluation at coordinate " +
                           std::to_string(k));
    }
    grad[k] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw Error("relative_error: length mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max(norm2(a), norm2(b));
  if (scale < floor) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace lll
