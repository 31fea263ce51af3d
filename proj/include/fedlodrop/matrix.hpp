// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

namespace fedlodrop {

using Vector = std::vector<double>;

// Dense row-major matrix. Everything in this project is desk scale, so the
// representation stays dense and dropped entries are stored as explicit zeros.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double fill = 0.0);

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) { return data_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<size_t>(i) * cols_ + j]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  size_t size() const { return data_.size(); }

  bool same_shape(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ && data_ == other.data_;
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// y = A x
Vector matvec(const Matrix& a, const Vector& x);
// y = A^T x
Vector tmatvec(const Matrix& a, const Vector& x);
// C = A B
Matrix matmul(const Matrix& a, const Matrix& b);
// C = u v^T
Matrix outer(const Vector& u, const Vector& v);
// y += alpha * x (shape-checked)
void axpy(double alpha, const Matrix& x, Matrix& y);

// A * diag(d), scales the columns of A
Matrix scale_columns(const Matrix& a, const Vector& d);
// diag(d) * A, scales the rows of A
Matrix scale_rows(const Vector& d, const Matrix& a);

double dot(const Vector& x, const Vector& y);
double fro_norm_sq(const Matrix& a);
double fro_norm(const Matrix& a);
double norm_sq(const Vector& x);

// Eigenvalues of a small symmetric matrix by the cyclic Jacobi method,
// returned in ascending order. Intended for the tiny Hessians that show up in
// the allocator (K <= 8 or so).
std::vector<double> symmetric_eigenvalues(Matrix a);

// Gaussian elimination with partial pivoting; returns false on a (near-)
// singular system. Sized for the allocator's K x K Newton systems.
bool solve_linear(Matrix a, Vector b, Vector& x);

}  // namespace fedlodrop
