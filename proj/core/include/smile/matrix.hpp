#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "smile/rng.hpp"

namespace smile {

/// Dense row-major matrix of doubles. All model parameters in this project
/// (embeddings, gates, policy weights) are small enough that a flat vector
/// beats a linear-algebra dependency.
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(size_t i) { return data.data() + i * cols; }
  const double* row(size_t i) const { return data.data() + i * cols; }
  std::span<const double> row_span(size_t i) const {
    return {row(i), cols};
  }
  double& at(size_t i, size_t j) { return data[i * cols + j]; }
  double at(size_t i, size_t j) const { return data[i * cols + j]; }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : data) x = rng.uniform(lo, hi);
  }

  bool operator==(const Matrix& o) const = default;
};

inline double dot(const double* a, const double* b, size_t n) {
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return dot(a.data(), b.data(), a.size());
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

/// Largest row L2 norm; used as a divergence tripwire after training.
inline double max_row_norm(const Matrix& m) {
  double worst = 0.0;
  for (size_t i = 0; i < m.rows; ++i) {
    double s = dot(m.row(i), m.row(i), m.cols);
    if (s > worst) worst = s;
  }
  return std::sqrt(worst);
}

}  // namespace smile
