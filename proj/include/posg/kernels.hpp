#pragma once

#include <cstddef>
#include <vector>

namespace posg {

// Dense row-major double matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

namespace kernels {

// All kernels parallelize over independent output cells only: every cell is
// accumulated by exactly one thread in a fixed index order, so results are
// identical for any thread count.

// out = a * b                      (a: M x K, b: K x N)
void matmul(Matrix& out, const Matrix& a, const Matrix& b);

// out += a^T * b                   (a: K x M, b: K x N, out: M x N)
void matmul_at_b_accum(Matrix& out, const Matrix& a, const Matrix& b);

// out = a * b^T                    (a: M x K, b: N x K, out: M x N)
void matmul_a_bt(Matrix& out, const Matrix& a, const Matrix& b);

// out += a * b^T
void matmul_a_bt_accum(Matrix& out, const Matrix& a, const Matrix& b);

// out[i] += bias (broadcast over rows)
void add_row_bias(Matrix& out, const std::vector<double>& bias);

}  // namespace kernels
}  // namespace posg
