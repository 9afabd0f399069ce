// SPDX-License-Identifier: Apache-2.0
#pragma once

// Latent manifolds: the unit hypersphere S^{d-1} and the Poincare ball of
// curvature -1. Everything here is pure; the differentiable counterparts used
// during training are project_rows / pairwise_distance / row_distance in
// autograd.hpp and share the distance kernels.

#include <cstddef>
#include <span>
#include <vector>

#include "geomanifold/kernels.hpp"
#include "geomanifold/tensor.hpp"

namespace gm {

enum class ManifoldType { hypersphere, poincare_ball };

struct ManifoldKind {
  ManifoldType type = ManifoldType::hypersphere;
  std::size_t dim = 2;
  /// Poincare only: points are kept at norm <= 1 - boundary_margin.
  double boundary_margin = 1e-5;

  /// Throws UsageError unless dim >= 2 and 0 < boundary_margin < 1e-2.
  void validate() const;
  Geometry geometry() const;
  double max_norm() const { return 1.0 - boundary_margin; }
  bool operator==(const ManifoldKind&) const = default;
};

const char* to_string(ManifoldType t);
ManifoldType manifold_type_from_string(const std::string& s);

class ManifoldPoint {
 public:
  const ManifoldKind& manifold() const { return kind_; }
  std::span<const double> coords() const { return coords_; }
  std::size_t dim() const { return coords_.size(); }

  /// Wraps coordinates that already satisfy the manifold invariant; throws
  /// UsageError otherwise. Use project() for arbitrary vectors.
  static ManifoldPoint from_coords(const ManifoldKind& kind, std::vector<double> coords);

 private:
  ManifoldPoint(ManifoldKind kind, std::vector<double> coords)
      : kind_(kind), coords_(std::move(coords)) {}
  friend ManifoldPoint project(const ManifoldKind&, std::span<const double>);

  ManifoldKind kind_;
  std::vector<double> coords_;
};

/// True when coords satisfy the invariant of kind (unit norm within 1e-9 for
/// the sphere, norm <= 1 - margin for the ball).
bool on_manifold(const ManifoldKind& kind, std::span<const double> coords);

/// Hypersphere: v / |v|, DegenerateInputError when |v| < 1e-12. Poincare:
/// v itself if |v| <= 1 - margin, otherwise rescaled onto that radius.
/// Idempotent: bit-exact for the sphere.
ManifoldPoint project(const ManifoldKind& kind, std::span<const double> v);

/// Great-circle angle on the sphere, hyperbolic distance in the ball.
double geodesic_distance(const ManifoldPoint& a, const ManifoldPoint& b);

/// Sphere tangents are orthogonalised against base first.
ManifoldPoint exp_map(const ManifoldPoint& base, std::span<const double> tangent);
/// Inverse of exp_map. Throws SingularityError for antipodal sphere points.
std::vector<double> log_map(const ManifoldPoint& base, const ManifoldPoint& target);
/// Riemannian length of a tangent vector at base (lambda_x |v| in the ball,
/// |v| on the sphere), so |log_map(x, y)|_x == geodesic_distance(x, y).
double tangent_norm(const ManifoldPoint& base, std::span<const double> tangent);

/// Symmetric n x n matrix of geodesic distances with zero diagonal.
Tensor pairwise_geodesic(std::span<const ManifoldPoint> points);

}  // namespace gm
