#include "posg/kernels.hpp"

#include <cassert>

namespace posg::kernels {

void matmul(Matrix& out, const Matrix& a, const Matrix& b) {
  assert(a.cols == b.rows);
  out.rows = a.rows;
  out.cols = b.cols;
  out.data.assign(out.rows * out.cols, 0.0);
  const auto m = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const double* arow = a.row(static_cast<std::size_t>(i));
    double* orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
}

void matmul_at_b_accum(Matrix& out, const Matrix& a, const Matrix& b) {
  assert(a.rows == b.rows);
  assert(out.rows == a.cols && out.cols == b.cols);
  const auto m = static_cast<std::ptrdiff_t>(out.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double aki = a.at(k, static_cast<std::size_t>(i));
      if (aki == 0.0) continue;
      const double* brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
}

void matmul_a_bt(Matrix& out, const Matrix& a, const Matrix& b) {
  assert(a.cols == b.cols);
  out.rows = a.rows;
  out.cols = b.rows;
  out.data.assign(out.rows * out.cols, 0.0);
  matmul_a_bt_accum(out, a, b);
}

void matmul_a_bt_accum(Matrix& out, const Matrix& a, const Matrix& b) {
  assert(a.cols == b.cols);
  assert(out.rows == a.rows && out.cols == b.rows);
  const auto m = static_cast<std::ptrdiff_t>(a.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    const double* arow = a.row(static_cast<std::size_t>(i));
    double* orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      orow[j] += acc;
    }
  }
}

void add_row_bias(Matrix& out, const std::vector<double>& bias) {
  assert(bias.size() == out.cols);
  const auto m = static_cast<std::ptrdiff_t>(out.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < m; ++i) {
    double* orow = out.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < out.cols; ++j) orow[j] += bias[j];
  }
}

}  // namespace posg::kernels
