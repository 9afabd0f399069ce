// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel hot loops. Every kernel has an OpenMP version and a serial
// reference in kernels::serial with the same per-element summation order, so
// results are bit-identical regardless of the thread count.

#include <cstddef>

namespace gm {

/// Distance geometry of a point cloud. euclidean only appears when the latent
/// manifold projection is ablated.
enum class Geometry { sphere, poincare, euclidean };

namespace kernels {

/// c[m x n] = op(a) * op(b), row-major, with op(a) of shape m x k.
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool trans_a, bool trans_b);

/// out[n x n] with out[i][j] = distance(points[i], points[j]); zero diagonal.
void pairwise_distance(Geometry g, const double* points, std::size_t n, std::size_t d,
                       double* out);

/// grad[i] = sum_j (G[i][j] + G[j][i]) * d distance(p_i, p_j) / d p_i
void pairwise_distance_backward(Geometry g, const double* points, const double* upstream,
                                std::size_t n, std::size_t d, double* grad);

double distance(Geometry g, const double* a, const double* b, std::size_t d);

/// Accumulates scale * d distance(a, b) / d a into grad_a. Coincident points
/// contribute nothing (subgradient 0).
void distance_grad_first(Geometry g, const double* a, const double* b, std::size_t d,
                         double scale, double* grad_a);

namespace serial {
void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
          std::size_t k, bool trans_a, bool trans_b);
void pairwise_distance(Geometry g, const double* points, std::size_t n, std::size_t d,
                       double* out);
void pairwise_distance_backward(Geometry g, const double* points, const double* upstream,
                                std::size_t n, std::size_t d, double* grad);
}  // namespace serial

}  // namespace kernels
}  // namespace gm
