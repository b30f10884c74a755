#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace semkd {

// Row-major dense matrix of doubles. Just enough linear algebra for the
// network engine and the feature-map pipeline; nothing clever.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return a[r * cols + c];
  }

  double* row(std::size_t r) { return a.data() + r * cols; }
  const double* row(std::size_t r) const { return a.data() + r * cols; }

  bool operator==(const Matrix&) const = default;
};

// Y = X * W^T + b, with X (n x in), W (out x in), b (out).
inline Matrix affine(const Matrix& x, const Matrix& w,
                     const std::vector<double>& b) {
  if (x.cols != w.cols || w.rows != b.size())
    throw std::invalid_argument("affine: shape mismatch");
  Matrix y(x.rows, w.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    double* yr = y.row(r);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double* wo = w.row(o);
      double acc = b[o];
      for (std::size_t i = 0; i < x.cols; ++i) acc += xr[i] * wo[i];
      yr[o] = acc;
    }
  }
  return y;
}

// dX = dY * W, with dY (n x out), W (out x in).
inline Matrix affine_backward_input(const Matrix& dy, const Matrix& w) {
  if (dy.cols != w.rows)
    throw std::invalid_argument("affine_backward_input: shape mismatch");
  Matrix dx(dy.rows, w.cols);
  for (std::size_t r = 0; r < dy.rows; ++r) {
    const double* dyr = dy.row(r);
    double* dxr = dx.row(r);
    for (std::size_t o = 0; o < w.rows; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wo = w.row(o);
      for (std::size_t i = 0; i < w.cols; ++i) dxr[i] += g * wo[i];
    }
  }
  return dx;
}

// dW = dY^T * X accumulated into flat (out x in) storage, db = column sums.
inline void affine_backward_params(const Matrix& x, const Matrix& dy,
                                   double* dw, double* db) {
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double* xr = x.row(r);
    const double* dyr = dy.row(r);
    for (std::size_t o = 0; o < dy.cols; ++o) {
      const double g = dyr[o];
      db[o] += g;
      if (g == 0.0) continue;
      double* dwo = dw + o * x.cols;
      for (std::size_t i = 0; i < x.cols; ++i) dwo[i] += g * xr[i];
    }
  }
}

}  // namespace semkd
