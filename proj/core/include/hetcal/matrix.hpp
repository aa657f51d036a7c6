#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hetcal/errors.hpp"

namespace hetcal {

// Dense row-major matrix of doubles. Everything in this project is float64;
// the datasets are small enough that numerical fidelity wins over speed.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  static Mat full(std::size_t rows, std::size_t cols, double v) {
    Mat m(rows, cols);
    for (double& x : m.data_) x = v;
    return m;
  }

  static Mat column(const std::vector<double>& v) {
    Mat m(v.size(), 1);
    m.data_ = v;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  void fill(double v) {
    for (double& x : data_) x = v;
  }
  void zero() { fill(0.0); }

  // Reshape without touching existing contents (grows with zeros if needed).
  void resize(std::size_t rows, std::size_t cols) {
    if (rows * cols != data_.size()) data_.resize(rows * cols);
    rows_ = rows;
    cols_ = cols;
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  std::string shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// c = a (m x k) * b (k x n); c is resized and overwritten
inline void matmul_into(Mat& c, const Mat& a, const Mat& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions disagree: " + a.shape_str() + " * " + b.shape_str());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  c.resize(m, n);
  c.zero();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = pb + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c;
  matmul_into(c, a, b);
  return c;
}

// c += a (m x k) * b^T with b (n x k)
inline void add_matmul_nt(Mat& c, const Mat& a, const Mat& b) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw ShapeError("matmul_nt: shape mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    double* crow = pc + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] += s;
    }
  }
}

// c += a^T * b with a (m x k), b (m x n), c (k x n)
inline void add_matmul_tn(Mat& c, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw ShapeError("matmul_tn: shape mismatch");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    const double* brow = pb + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      double* crow = pc + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace hetcal
