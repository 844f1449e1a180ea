#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

namespace dvol {

// Small dense systems only (model dimensions are ~10); matrices are flat
// row-major with explicit order n.

// Cholesky solve for symmetric positive definite A; nullopt when A is not PD.
inline std::optional<std::vector<double>> solve_cholesky(std::vector<double> a,
                                                         std::vector<double> b,
                                                         std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
  }
  // forward then back substitution
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= a[i * n + k] * b[k];
    b[i] = s / a[i * n + i];
  }
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double s = b[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[k * n + i] * b[k];
    b[i] = s / a[i * n + i];
  }
  return b;
}

// LU with partial pivoting; nullopt when singular.
inline std::optional<std::vector<double>> solve_lu(std::vector<double> a,
                                                   std::vector<double> b,
                                                   std::size_t n) {
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::fabs(a[perm[col] * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[perm[r] * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (!(best > 1e-300) || !std::isfinite(best)) return std::nullopt;
    std::swap(perm[col], perm[pivot]);
    const double diag = a[perm[col] * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[perm[r] * n + col] / diag;
      a[perm[r] * n + col] = f;
      for (std::size_t c = col + 1; c < n; ++c)
        a[perm[r] * n + c] -= f * a[perm[col] * n + c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[perm[i]];
    for (std::size_t k = 0; k < i; ++k) s -= a[perm[i] * n + k] * x[k];
    x[i] = s;
  }
  for (std::size_t ii = n; ii > 0; --ii) {
    const std::size_t i = ii - 1;
    double s = x[i];
    for (std::size_t k = i + 1; k < n; ++k) s -= a[perm[i] * n + k] * x[k];
    x[i] = s / a[perm[i] * n + i];
  }
  return x;
}

// Inverse via LU column solves; nullopt when singular.
inline std::optional<std::vector<double>> invert(const std::vector<double>& a,
                                                 std::size_t n) {
  std::vector<double> inv(n * n);
  for (std::size_t c = 0; c < n; ++c) {
    std::vector<double> e(n, 0.0);
    e[c] = 1.0;
    const auto col = solve_lu(a, std::move(e), n);
    if (!col) return std::nullopt;
    for (std::size_t r = 0; r < n; ++r) inv[r * n + c] = (*col)[r];
  }
  return inv;
}

}  // namespace dvol
