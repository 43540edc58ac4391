#pragma once

// Per-output-row kernels shared by the OpenMP and serial matmul drivers.
// Each output row is produced by exactly one call, so the drivers only differ
// in how rows are distributed across threads.

#include <cstddef>

#include "pfcl/linalg.hpp"

namespace pfcl::detail {

// out.row(i) = a.row(i) · b
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const std::size_t n = b.cols();
  double* o = out.row(i).data();
  const double* ai = a.row(i).data();
  const double* bd = b.data().data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double aik = ai[k];
    const double* bk = bd + k * n;
    for (std::size_t j = 0; j < n; ++j) o[j] += aik * bk[j];
  }
}

// out.row(i) = column i of a, dotted against b: Σ_k a[k][i] · b.row(k)
inline void matmul_tn_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.rows();
  const std::size_t n = b.cols();
  double* o = out.row(i).data();
  for (std::size_t k = 0; k < inner; ++k) {
    const double aki = a(k, i);
    const double* bk = b.row(k).data();
    for (std::size_t j = 0; j < n; ++j) o[j] += aki * bk[j];
  }
}

// out(i, j) = a.row(i) · b.row(j)
inline void matmul_nt_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const std::size_t inner = a.cols();
  const double* ai = a.row(i).data();
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const double* bj = b.row(j).data();
    double acc = 0.0;
    for (std::size_t k = 0; k < inner; ++k) acc += ai[k] * bj[k];
    out(i, j) = acc;
  }
}

}  // namespace pfcl::detail
