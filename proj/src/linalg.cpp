#include "pfcl/linalg.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels.hpp"
#include "pfcl/errors.hpp"

namespace pfcl {

namespace {

// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1u << 15;

std::string pair_shapes(const Matrix& a, const Matrix& b) {
  return a.shape_string() + " and " + b.shape_string();
}

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

template <typename RowKernel>
Matrix run_rows_parallel(std::size_t out_rows, std::size_t out_cols, std::size_t work, RowKernel kernel) {
  Matrix out(out_rows, out_cols);
  const auto n = static_cast<std::ptrdiff_t>(out_rows);
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) kernel(out, static_cast<std::size_t>(i));
  return out;
}

template <typename RowKernel>
Matrix run_rows_serial(std::size_t out_rows, std::size_t out_cols, RowKernel kernel) {
  Matrix out(out_rows, out_cols);
  for (std::size_t i = 0; i < out_rows; ++i) kernel(out, i);
  return out;
}

void check_matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul of " + pair_shapes(a, b));
}
void check_matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn of " + pair_shapes(a, b));
}
void check_matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt of " + pair_shapes(a, b));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " values for " + shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

Matrix Matrix::gather_rows(std::span<const std::size_t> indices) const {
  Matrix out(indices.size(), cols_);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows_) throw ShapeError("row index " + std::to_string(indices[i]) + " into " + shape_string());
    auto src = row(indices[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

bool Matrix::all_finite() const noexcept {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Matrix::shape_string() const {
  std::ostringstream os;
  os << rows_ << "x" << cols_;
  return os.str();
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  if (a.cols() != b.cols()) throw ShapeError("vstack of " + pair_shapes(a, b));
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

Rng::Rng(std::uint64_t seed) {
  std::uint64_t x = seed;
  for (auto& s : s_) s = splitmix64(x);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Lemire's nearly-divisionless rejection keeps the draw unbiased.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
  auto low = static_cast<std::uint64_t>(m);
  if (low < n) {
    const std::uint64_t threshold = (0 - n) % n;
    while (low < threshold) {
      m = static_cast<unsigned __int128>(next_u64()) * n;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u, v, s;
  do {
    u = uniform(-1.0, 1.0);
    v = uniform(-1.0, 1.0);
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  const double f = std::sqrt(-2.0 * std::log(s) / s);
  spare_normal_ = v * f;
  has_spare_ = true;
  return u * f;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b);
  return run_rows_parallel(a.rows(), b.cols(), a.rows() * a.cols() * b.cols(),
                           [&](Matrix& out, std::size_t i) { detail::matmul_row(a, b, out, i); });
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_matmul_tn(a, b);
  return run_rows_parallel(a.cols(), b.cols(), a.rows() * a.cols() * b.cols(),
                           [&](Matrix& out, std::size_t i) { detail::matmul_tn_row(a, b, out, i); });
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_matmul_nt(a, b);
  return run_rows_parallel(a.rows(), b.rows(), a.rows() * a.cols() * b.rows(),
                           [&](Matrix& out, std::size_t i) { detail::matmul_nt_row(a, b, out, i); });
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b);
  return run_rows_serial(a.rows(), b.cols(), [&](Matrix& out, std::size_t i) { detail::matmul_row(a, b, out, i); });
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check_matmul_tn(a, b);
  return run_rows_serial(a.cols(), b.cols(),
                         [&](Matrix& out, std::size_t i) { detail::matmul_tn_row(a, b, out, i); });
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  check_matmul_nt(a, b);
  return run_rows_serial(a.rows(), b.rows(),
                         [&](Matrix& out, std::size_t i) { detail::matmul_nt_row(a, b, out, i); });
}

}  // namespace serial

Matrix elementwise(const Matrix& a, const Matrix& b, ElementwiseOp op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("elementwise on " + pair_shapes(a, b));
  Matrix out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto o = out.data();
  switch (op) {
    case ElementwiseOp::add:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
      break;
    case ElementwiseOp::sub:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
      break;
    case ElementwiseOp::mul:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
      break;
  }
  return out;
}

Matrix init_uniform_scaled(std::size_t rows, std::size_t cols, Rng& rng) {
  if (rows == 0 || cols == 0) throw ShapeError("cannot initialize a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
  const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.uniform(-s, s);
  return m;
}

int kernel_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace pfcl
