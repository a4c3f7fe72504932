#pragma once

// Dense row-major matrix plus the few factorizations the solvers need.
// Deliberately small: the pipeline never sees matrices beyond a few
// thousand rows and a few hundred columns.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

namespace agepred {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> cells)
      : rows(r), cols(c), data(std::move(cells)) {
    if (data.size() != rows * cols)
      throw std::invalid_argument("Matrix: storage size does not match rows*cols");
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool operator==(const Matrix& other) const = default;
};

namespace linalg {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// In-place Cholesky of a symmetric matrix. Returns false when a pivot falls
// below rel_tol relative to the largest original diagonal entry, which is how
// singular and numerically rank-deficient systems are detected.
inline bool cholesky(Matrix& a, double rel_tol = 1e-11) {
  const std::size_t n = a.rows;
  if (n != a.cols) throw std::invalid_argument("cholesky: matrix not square");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(a(i, i)));
  const double floor = rel_tol * std::max(max_diag, 1e-300);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > floor)) return false;
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  return true;
}

// Solves L L^T x = b given the factor produced by cholesky().
inline std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  const std::size_t n = l.rows;
  std::vector<double> x(b.begin(), b.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = x[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x[k];
    x[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
    x[ii] = s / l(ii, ii);
  }
  return x;
}

struct SymmetricSolveResult {
  std::vector<double> solution;
  double jitter_used = 0.0;  // 0 when the plain factorization succeeded
};

// Solves a symmetric positive semidefinite system, escalating a diagonal
// jitter from initial_jitter until the factorization goes through.
inline SymmetricSolveResult solve_spd_with_jitter(const Matrix& a,
                                                  std::span<const double> b,
                                                  double initial_jitter = 1e-10) {
  Matrix work = a;
  if (cholesky(work)) return {cholesky_solve(work, b), 0.0};
  double jitter = initial_jitter;
  for (int attempt = 0; attempt < 8; ++attempt) {
    work = a;
    for (std::size_t i = 0; i < work.rows; ++i) work(i, i) += jitter;
    if (cholesky(work)) return {cholesky_solve(work, b), jitter};
    jitter *= 100.0;
  }
  throw std::runtime_error("solve_spd_with_jitter: system unsolvable even with jitter");
}

// FNV-1a over the raw bytes of a double sequence; used to fingerprint the
// exact data a set of preprocessing parameters was fitted on.
inline std::uint64_t fnv1a_hash(std::span<const double> values) {
  std::uint64_t h = 1469598103934665603ull;
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 1099511628211ull;
    }
  }
  return h;
}

inline std::uint64_t matrix_fingerprint(const Matrix& m) {
  std::uint64_t h = fnv1a_hash(m.data);
  h ^= 0x9e3779b97f4a7c15ull + m.rows + (h << 6) + (h >> 2);
  h ^= 0x9e3779b97f4a7c15ull + m.cols + (h << 6) + (h >> 2);
  return h;
}

}  // namespace linalg
}  // namespace agepred
