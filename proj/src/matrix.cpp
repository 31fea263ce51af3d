// SPDX-License-Identifier: Apache-2.0
#include "fedlodrop/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedlodrop {

Matrix::Matrix(int rows, int cols, double fill)
    : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, fill) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (static_cast<size_t>(a.cols()) != x.size())
    throw std::invalid_argument("matvec: dimension mismatch");
  Vector y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  return y;
}

Vector tmatvec(const Matrix& a, const Vector& x) {
  if (static_cast<size_t>(a.rows()) != x.size())
    throw std::invalid_argument("tmatvec: dimension mismatch");
  Vector y(a.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    const double xi = x[i];
    for (int j = 0; j < a.cols(); ++j) y[j] += a(i, j) * xi;
  }
  return y;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
  Matrix c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Matrix outer(const Vector& u, const Vector& v) {
  Matrix c(static_cast<int>(u.size()), static_cast<int>(v.size()));
  for (size_t i = 0; i < u.size(); ++i)
    for (size_t j = 0; j < v.size(); ++j)
      c(static_cast<int>(i), static_cast<int>(j)) = u[i] * v[j];
  return c;
}

void axpy(double alpha, const Matrix& x, Matrix& y) {
  if (!x.same_shape(y)) throw std::invalid_argument("axpy: shape mismatch");
  for (size_t i = 0; i < x.size(); ++i) y.data()[i] += alpha * x.data()[i];
}

Matrix scale_columns(const Matrix& a, const Vector& d) {
  if (static_cast<size_t>(a.cols()) != d.size())
    throw std::invalid_argument("scale_columns: dimension mismatch");
  Matrix c = a;
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) c(i, j) *= d[j];
  return c;
}

Matrix scale_rows(const Vector& d, const Matrix& a) {
  if (static_cast<size_t>(a.rows()) != d.size())
    throw std::invalid_argument("scale_rows: dimension mismatch");
  Matrix c = a;
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j) c(i, j) *= d[i];
  return c;
}

double dot(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("dot: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double fro_norm_sq(const Matrix& a) {
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) acc += a.data()[i] * a.data()[i];
  return acc;
}

double fro_norm(const Matrix& a) { return std::sqrt(fro_norm_sq(a)); }

double norm_sq(const Vector& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return acc;
}

std::vector<double> symmetric_eigenvalues(Matrix a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("symmetric_eigenvalues: not square");
  const int n = a.rows();
  // Cyclic Jacobi sweeps; plenty for the n <= 8 matrices we feed it.
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a(p, i), aqi = a(q, i);
          a(p, i) = c * api - s * aqi;
          a(q, i) = s * api + c * aqi;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (int i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

bool solve_linear(Matrix a, Vector b, Vector& x) {
  if (a.rows() != a.cols() || static_cast<size_t>(a.rows()) != b.size()) return false;
  const int n = a.rows();
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int i = col + 1; i < n; ++i)
      if (std::abs(a(i, col)) > std::abs(a(pivot, col))) pivot = i;
    if (std::abs(a(pivot, col)) < 1e-300) return false;
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(a(col, j), a(pivot, j));
      std::swap(b[col], b[pivot]);
    }
    for (int i = col + 1; i < n; ++i) {
      const double f = a(i, col) / a(col, col);
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) a(i, j) -= f * a(col, j);
      b[i] -= f * b[col];
    }
  }
  x.assign(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double acc = b[i];
    for (int j = i + 1; j < n; ++j) acc -= a(i, j) * x[j];
    x[i] = acc / a(i, i);
  }
  return true;
}

}  // namespace fedlodrop
