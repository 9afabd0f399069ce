// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/kernels.hpp"

#include <cmath>
#include <algorithm>
#include <cstdint>
#include <vector>

namespace gm::kernels {
namespace {

constexpr std::size_t kParallelWork = 1 << 15;

constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 256;

// Rows [i0, i0 + rows) of a * b, both row-major with no transposes. Every
// c[i][j] is summed over p in increasing order, whatever the blocking, so the
// serial and parallel paths agree bit for bit.
inline void gemm_rows(const double* a, const double* b, double* c, std::size_t i0,
                      std::size_t rows, std::size_t n, std::size_t k) {
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t j1 = std::min(n, j0 + kColBlock);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = j0; j < j1; ++j) c[(i0 + r) * n + j] = 0.0;
    if (rows == kRowBlock) {
      double* c0 = c + i0 * n;
      double* c1 = c0 + n;
      double* c2 = c1 + n;
      double* c3 = c2 + n;
      const double* a0 = a + i0 * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double v0 = a0[p], v1 = a0[k + p], v2 = a0[2 * k + p], v3 = a0[3 * k + p];
        const double* b_row = b + p * n;
        for (std::size_t j = j0; j < j1; ++j) {
          const double bv = b_row[j];
          c0[j] += v0 * bv;
          c1[j] += v1 * bv;
          c2[j] += v2 * bv;
          c3[j] += v3 * bv;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        double* cr = c + (i0 + r) * n;
        const double* ar = a + (i0 + r) * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double v = ar[p];
          const double* b_row = b + p * n;
          for (std::size_t j = j0; j < j1; ++j) cr[j] += v * b_row[j];
        }
      }
    }
  }
}

// rows x cols -> cols x rows
std::vector<double> transposed(const double* x, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile)
      for (std::size_t r = r0; r < std::min(rows, r0 + kTile); ++r)
        for (std::size_t c = c0; c < std::min(cols, c0 + kTile); ++c) t[c * rows + r] = x[r * cols + c];
  return t;
}

inline double sq_norm(const double* a, std::size_t d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d; ++i) s += a[i] * a[i];
  return s;
}

// |a - b|^2 with four independent partial sums so long rows vectorise.
inline double sq_diff(const double* a, const double* b, std::size_t d) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= d; i += 4)
    for (std::size_t l = 0; l < 4; ++l) {
      const double t = a[i + l] - b[i + l];
      s[l] += t * t;
    }
  for (; i < d; ++i) {
    const double t = a[i] - b[i];
    s[0] += t * t;
  }
  return (s[0] + s[1]) + (s[2] + s[3]);
}

}  // namespace

double distance(Geometry g, const double* a, const double* b, std::size_t d) {
  const double diff2 = sq_diff(a, b, d);
  switch (g) {
    case Geometry::sphere: {
      // 2 atan2(|a-b|, |a+b|) equals arccos(<a,b>) on the unit sphere and
      // stays accurate for nearly coincident or antipodal points.
      double sum2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] + b[i];
        sum2 += t * t;
      }
      return 2.0 * std::atan2(std::sqrt(diff2), std::sqrt(sum2));
    }
    case Geometry::poincare: {
      const double alpha = 1.0 - sq_norm(a, d);
      const double beta = 1.0 - sq_norm(b, d);
      const double delta = 2.0 * diff2 / (alpha * beta);
      // arcosh(1 + delta) without cancellation
      return std::log1p(delta + std::sqrt(delta * (delta + 2.0)));
    }
    case Geometry::euclidean:
      return std::sqrt(diff2);
  }
  return 0.0;
}

void distance_grad_first(Geometry g, const double* a, const double* b, std::size_t d,
                         double scale, double* grad_a) {
  if (scale == 0.0) return;
  const double diff2 = sq_diff(a, b, d);
  if (diff2 == 0.0) return;
  switch (g) {
    case Geometry::sphere: {
      double sum2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double t = a[i] + b[i];
        sum2 += t * t;
      }
      const double p = std::sqrt(diff2);
      const double q = std::sqrt(sum2);
      const double denom = diff2 + sum2;
      const double dp = 2.0 * q / denom;
      const double dq = -2.0 * p / denom;
      for (std::size_t i = 0; i < d; ++i) {
        double gi = dp * (a[i] - b[i]) / p;
        if (q > 0.0) gi += dq * (a[i] + b[i]) / q;
        grad_a[i] += scale * gi;
      }
      return;
    }
    case Geometry::poincare: {
      const double alpha = 1.0 - sq_norm(a, d);
      const double beta = 1.0 - sq_norm(b, d);
      const double delta = 2.0 * diff2 / (alpha * beta);
      const double dd = 1.0 / std::sqrt(delta * (delta + 2.0));
      const double c1 = 4.0 / (alpha * beta);
      const double c2 = 4.0 * diff2 / (alpha * alpha * beta);
      for (std::size_t i = 0; i < d; ++i)
        grad_a[i] += scale * dd * (c1 * (a[i] - b[i]) + c2 * a[i]);
      return;
    }
    case Geometry::euclidean: {
      const double p = std::sqrt(diff2);
      for (std::size_t i = 0; i < d; ++i) grad_a[i] += scale * (a[i] - b[i]) / p;
      return;
    }
  }
}

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool trans_a, bool trans_b) {
  // Transposed operands are materialised so the inner loop is always a
  // contiguous axpy; the sum over p keeps its order either way.
  std::vector<double> at, bt;
  if (trans_a) {
    at = transposed(a, k, m);
    a = at.data();
  }
  if (trans_b) {
    bt = transposed(b, n, k);
    b = bt.data();
  }
  const std::size_t blocks = (m + kRowBlock - 1) / kRowBlock;
  const bool parallel = blocks > 1 && m * n * k >= kParallelWork;
#pragma omp parallel for schedule(static) if (parallel)
  for (std::int64_t ib = 0; ib < static_cast<std::int64_t>(blocks); ++ib) {
    const std::size_t i0 = static_cast<std::size_t>(ib) * kRowBlock;
    gemm_rows(a, b, c, i0, std::min(kRowBlock, m - i0), n, k);
  }
}

void pairwise_distance(Geometry g, const double* points, std::size_t n, std::size_t d,
                       double* out) {
  const bool parallel = n * n * d >= kParallelWork;
  // Upper triangle first, then mirrored, so the matrix is exactly symmetric.
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    out[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) out[i * n + j] = distance(g, points + i * d, points + j * d, d);
  }
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) out[i * n + j] = out[j * n + i];
}

void pairwise_distance_backward(Geometry g, const double* points, const double* upstream,
                                std::size_t n, std::size_t d, double* grad) {
  const bool parallel = n * n * d >= kParallelWork;
#pragma omp parallel for schedule(dynamic, 8) if (parallel)
  for (std::int64_t ii = 0; ii < static_cast<std::int64_t>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = upstream[i * n + j] + upstream[j * n + i];
      distance_grad_first(g, points + i * d, points + j * d, d, w, grad + i * d);
    }
  }
}

namespace serial {

void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool trans_a, bool trans_b) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
}

void pairwise_distance(Geometry g, const double* points, std::size_t n, std::size_t d,
                       double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    out[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = distance(g, points + i * d, points + j * d, d);
      out[i * n + j] = v;
      out[j * n + i] = v;
    }
  }
}

void pairwise_distance_backward(Geometry g, const double* points, const double* upstream,
                                std::size_t n, std::size_t d, double* grad) {
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double w = upstream[i * n + j] + upstream[j * n + i];
      distance_grad_first(g, points + i * d, points + j * d, d, w, grad + i * d);
    }
}

}  // namespace serial
}  // namespace gm::kernels
