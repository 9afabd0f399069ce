// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/manifold.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "geomanifold/error.hpp"

namespace gm {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Mobius addition in the unit ball.
std::vector<double> mobius_add(std::span<const double> x, std::span<const double> y) {
  const double xy = dot(x, y), xx = dot(x, x), yy = dot(y, y);
  const double den = 1.0 + 2.0 * xy + xx * yy;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = ((1.0 + 2.0 * xy + yy) * x[i] + (1.0 - xx) * y[i]) / den;
  return out;
}

void check_same(const ManifoldPoint& a, const ManifoldPoint& b, const char* op) {
  if (!(a.manifold() == b.manifold()))
    throw UsageError(std::string(op) + ": points live on different manifolds");
}

}  // namespace

void ManifoldKind::validate() const {
  if (dim < 2) throw UsageError("manifold dim must be >= 2, got " + std::to_string(dim));
  if (!(boundary_margin > 0.0 && boundary_margin < 1e-2))
    throw UsageError("boundary margin must lie in (0, 1e-2)");
}

Geometry ManifoldKind::geometry() const {
  return type == ManifoldType::hypersphere ? Geometry::sphere : Geometry::poincare;
}

const char* to_string(ManifoldType t) {
  return t == ManifoldType::hypersphere ? "hypersphere" : "poincare";
}

ManifoldType manifold_type_from_string(const std::string& s) {
  if (s == "hypersphere" || s == "sphere") return ManifoldType::hypersphere;
  if (s == "poincare" || s == "poincare_ball") return ManifoldType::poincare_ball;
  throw UsageError("unknown manifold '" + s + "' (expected hypersphere or poincare)");
}

bool on_manifold(const ManifoldKind& kind, std::span<const double> coords) {
  if (coords.size() != kind.dim) return false;
  const double n = norm(coords);
  if (kind.type == ManifoldType::hypersphere) return std::abs(n - 1.0) <= 1e-9;
  return n <= kind.max_norm();
}

ManifoldPoint ManifoldPoint::from_coords(const ManifoldKind& kind, std::vector<double> coords) {
  if (!on_manifold(kind, coords)) throw UsageError("coordinates are not on the manifold");
  return ManifoldPoint(kind, std::move(coords));
}

ManifoldPoint project(const ManifoldKind& kind, std::span<const double> v) {
  kind.validate();
  if (v.size() != kind.dim)
    throw ShapeError("project: vector of length " + std::to_string(v.size()) +
                     " for manifold of dim " + std::to_string(kind.dim));
  for (double x : v)
    if (!std::isfinite(x)) throw UsageError("project: non-finite input");
  std::vector<double> out(v.begin(), v.end());
  const double sq = dot(v, v);
  if (kind.type == ManifoldType::hypersphere) {
    const double n = std::sqrt(sq);
    if (n < 1e-12) throw DegenerateInputError("project: hypersphere direction of a zero vector");
    // Vectors already unit up to rounding are returned untouched, which makes
    // the projection exactly idempotent.
    if (std::abs(sq - 1.0) > 1e-12)
      for (double& x : out) x /= n;
  } else {
    const double r = kind.max_norm();
    const double n = std::sqrt(sq);
    if (n > r) {
      for (double& x : out) x *= r / n;
      while (norm(out) > r)
        for (double& x : out) x *= 1.0 - 0x1.0p-52;
    }
  }
  return ManifoldPoint(kind, std::move(out));
}

double geodesic_distance(const ManifoldPoint& a, const ManifoldPoint& b) {
  check_same(a, b, "geodesic_distance");
  return kernels::distance(a.manifold().geometry(), a.coords().data(), b.coords().data(),
                           a.dim());
}

ManifoldPoint exp_map(const ManifoldPoint& base, std::span<const double> tangent) {
  const ManifoldKind& kind = base.manifold();
  if (tangent.size() != kind.dim) throw ShapeError("exp_map: tangent length mismatch");
  auto x = base.coords();
  std::vector<double> v(tangent.begin(), tangent.end());
  std::vector<double> out(kind.dim);
  if (kind.type == ManifoldType::hypersphere) {
    const double along = dot(v, x);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= along * x[i];
    const double theta = norm(v);
    if (theta == 0.0) return base;
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = std::cos(theta) * x[i] + std::sin(theta) * v[i] / theta;
    return project(kind, out);
  }
  const double vn = norm(v);
  if (vn == 0.0) return base;
  const double lambda = 2.0 / (1.0 - dot(x, x));
  const double s = std::tanh(lambda * vn / 2.0) / vn;
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= s;
  return project(kind, mobius_add(x, v));
}

std::vector<double> log_map(const ManifoldPoint& base, const ManifoldPoint& target) {
  check_same(base, target, "log_map");
  const ManifoldKind& kind = base.manifold();
  auto x = base.coords();
  auto y = target.coords();
  std::vector<double> out(kind.dim, 0.0);
  if (kind.type == ManifoldType::hypersphere) {
    std::vector<double> sum(kind.dim);
    for (std::size_t i = 0; i < kind.dim; ++i) sum[i] = x[i] + y[i];
    if (norm(sum) < 1e-9) throw SingularityError("log_map: antipodal points on the hypersphere");
    const double c = dot(x, y);
    std::vector<double> u(kind.dim);
    for (std::size_t i = 0; i < kind.dim; ++i) u[i] = y[i] - c * x[i];
    const double un = norm(u);
    if (un == 0.0) return out;
    const double theta = geodesic_distance(base, target);
    for (std::size_t i = 0; i < kind.dim; ++i) out[i] = theta * u[i] / un;
    return out;
  }
  std::vector<double> neg_x(x.begin(), x.end());
  for (double& v : neg_x) v = -v;
  const std::vector<double> w = mobius_add(neg_x, y);
  const double wn = norm(w);
  if (wn == 0.0) return out;
  const double lambda = 2.0 / (1.0 - dot(x, x));
  const double s = 2.0 / lambda * std::atanh(wn) / wn;
  for (std::size_t i = 0; i < kind.dim; ++i) out[i] = s * w[i];
  return out;
}

double tangent_norm(const ManifoldPoint& base, std::span<const double> tangent) {
  const double n = norm(tangent);
  if (base.manifold().type == ManifoldType::hypersphere) return n;
  return 2.0 / (1.0 - dot(base.coords(), base.coords())) * n;
}

Tensor pairwise_geodesic(std::span<const ManifoldPoint> points) {
  if (points.empty()) throw UsageError("pairwise_geodesic: no points");
  const std::size_t n = points.size();
  const std::size_t d = points[0].dim();
  std::vector<double> flat(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    check_same(points[0], points[i], "pairwise_geodesic");
    std::copy(points[i].coords().begin(), points[i].coords().end(), flat.begin() + i * d);
  }
  Tensor out = Tensor::zeros(n, n);
  kernels::pairwise_distance(points[0].manifold().geometry(), flat.data(), n, d, out.data());
  return out;
}

}  // namespace gm
