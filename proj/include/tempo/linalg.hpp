#pragma once

// Row-major double matrices sized for desk-scale MLPs. Single-threaded
// and allocation-simple; training determinism matters more than peak
// throughput here.

#include <cmath>
#include <cstddef>
#include <vector>

#include "tempo/errors.hpp"

namespace tempo {

struct Matrix {
  size_t rows = 0, cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row(size_t r) { return data.data() + r * cols; }
  const double* row(size_t r) const { return data.data() + r * cols; }
};

// C = A * B
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw ShapeMismatch("matmul: inner dims differ");
  Matrix c(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      double av = ar[k];
      if (av == 0.0) continue;
      const double* br = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

// C = A^T * B
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw ShapeMismatch("matmul_tn: row counts differ");
  Matrix c(a.cols, b.cols);
  for (size_t k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (size_t i = 0; i < a.cols; ++i) {
      double av = ar[i];
      if (av == 0.0) continue;
      double* cr = c.row(i);
      for (size_t j = 0; j < b.cols; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

// C = A * B^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw ShapeMismatch("matmul_nt: col counts differ");
  Matrix c(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* cr = c.row(i);
    for (size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      cr[j] = s;
    }
  }
  return c;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

}  // namespace tempo
