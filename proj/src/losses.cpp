// SPDX-License-Identifier: Apache-2.0
#include "geomanifold/losses.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "geomanifold/error.hpp"
#include "geomanifold/kernels.hpp"

namespace gm {

void LossWeights::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0) || !(gamma >= 0.0))
    throw UsageError("loss weights must be >= 0");
  if (!(tau > 0.0)) throw UsageError("loss.tau must be > 0");
  if (!(geo_target > 0.0)) throw UsageError("loss.geo_target must be > 0");
}

namespace {

Tensor input_distances(const Tensor& x) {
  const std::size_t n = x.rows();
  Tensor d = Tensor::zeros(n, n);
  kernels::pairwise_distance(Geometry::euclidean, x.data(), n, x.cols(), d.data());
  return d;
}

double scale_of(const Tensor& dx, double target_mean) {
  const std::size_t n = dx.rows();
  double total = 0.0;
  for (double v : dx.values()) total += v;
  const double mean_dist = total / static_cast<double>(n * (n - 1));
  return mean_dist > 0.0 ? mean_dist / target_mean : 1.0;
}

Var geo_loss_from(Var z, Tensor dx, Geometry g, double s) {
  const std::size_t n = z.rows();
  if (!(s > 0.0)) throw UsageError("geo_loss: scale must be positive");
  for (auto& v : dx.values()) v /= s;
  Var diff = sub(pairwise_distance(z, g), z.tape().constant(std::move(dx)));
  // symmetric with zero diagonal, so the full sum counts each pair twice
  return scale(sum(square(diff)), 1.0 / static_cast<double>(n * (n - 1)));
}

void check_points(std::size_t z_rows, std::size_t x_rows) {
  if (z_rows < 2) throw UsageError("geo_loss: need at least 2 points");
  if (x_rows != z_rows) throw ShapeError("geo_loss: point counts differ");
}

}  // namespace

double geo_scale(const Tensor& x, double target_mean) {
  if (x.rows() < 2) throw UsageError("geo_scale: need at least 2 points");
  return scale_of(input_distances(x), target_mean);
}

Var geo_loss(Var z, const Tensor& x, Geometry g, double s) {
  check_points(z.rows(), x.rows());
  return geo_loss_from(z, input_distances(x), g, s);
}

Var geo_loss_auto(Var z, const Tensor& x, Geometry g, double target_mean) {
  check_points(z.rows(), x.rows());
  Tensor dx = input_distances(x);
  const double s = scale_of(dx, target_mean);
  return geo_loss_from(z, std::move(dx), g, s);
}

Var align_loss(Var view1, Var view2, double tau) {
  if (!(tau > 0.0)) throw UsageError("align_loss: tau must be > 0");
  if (view1.rows() != view2.rows() || view1.cols() != view2.cols())
    throw ShapeError("align_loss: views differ in shape");
  Tape& tape = view1.tape();
  const std::size_t n = view1.rows();
  Var u1 = div(view1, norm_rows(view1));
  Var u2 = div(view2, norm_rows(view2));
  Var logp = log_softmax_rows(scale(matmul_nt(u1, u2), 1.0 / tau));
  Tensor eye = Tensor::zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) eye.at(i, i) = 1.0;
  return scale(sum(mul(logp, tape.constant(std::move(eye)))), -1.0 / static_cast<double>(n));
}

Var total_loss(Var recon, Var geo, Var align, const LossWeights& w) {
  return add(add(recon, scale(geo, w.alpha)), scale(align, w.beta));
}

// ---- Procrustes ----------------------------------------------------------------

namespace {

using Mat = Eigen::MatrixXd;

Mat to_eigen(const Tensor& t) {
  Mat m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

Tensor from_eigen(const Mat& m) {
  Tensor t = Tensor::zeros(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.at(i, j) = m(i, j);
  return t;
}

}  // namespace

AlignmentMap AlignmentMap::identity(std::size_t d) {
  AlignmentMap m;
  m.rotation = Tensor::zeros(d, d);
  for (std::size_t i = 0; i < d; ++i) m.rotation.at(i, i) = 1.0;
  m.source_centroid.assign(d, 0.0);
  m.target_centroid.assign(d, 0.0);
  return m;
}

AlignmentMap kabsch_align(const Tensor& source, const Tensor& target) {
  if (source.rows() != target.rows() || source.cols() != target.cols())
    throw ShapeError("kabsch: clouds differ in shape (" + source.shape_str() + " vs " +
                     target.shape_str() + ")");
  const std::size_t n = source.rows(), d = source.cols();
  if (n < d)
    throw UsageError("kabsch: " + std::to_string(n) + " points cannot fix a rotation in " +
                     std::to_string(d) + " dimensions");
  Mat s = to_eigen(source), t = to_eigen(target);
  const Eigen::RowVectorXd sc = s.colwise().mean(), tc = t.colwise().mean();
  s.rowwise() -= sc;
  t.rowwise() -= tc;
  const Mat h = s.transpose() * t;
  Eigen::JacobiSVD<Mat> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat& u = svd.matrixU();
  const Mat& v = svd.matrixV();
  Eigen::VectorXd diag = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(d));
  diag(static_cast<Eigen::Index>(d) - 1) = (v * u.transpose()).determinant() < 0 ? -1.0 : 1.0;
  const Mat r = v * diag.asDiagonal() * u.transpose();

  AlignmentMap m;
  m.rotation = from_eigen(r);
  m.source_centroid.assign(sc.data(), sc.data() + d);
  m.target_centroid.assign(tc.data(), tc.data() + d);
  const auto& sv = svd.singularValues();
  m.degenerate = d > 1 && sv(static_cast<Eigen::Index>(d) - 2) <= 1e-12 * std::max(sv(0), 1e-300);
  return m;
}

Tensor apply_alignment(const AlignmentMap& map, const Tensor& points, const ManifoldKind* kind) {
  const std::size_t d = map.dim();
  if (points.cols() != d) throw ShapeError("apply_alignment: point width mismatch");
  Tensor out = Tensor::zeros(points.rows(), d);
  std::vector<double> centred(d);
  for (std::size_t r = 0; r < points.rows(); ++r) {
    for (std::size_t j = 0; j < d; ++j) centred[j] = points.at(r, j) - map.source_centroid[j];
    for (std::size_t i = 0; i < d; ++i) {
      double v = map.target_centroid[i];
      for (std::size_t j = 0; j < d; ++j) v += map.rotation.at(i, j) * centred[j];
      out.at(r, i) = v;
    }
    if (kind != nullptr) {
      const auto p = project(*kind, out.row(r));
      std::copy(p.coords().begin(), p.coords().end(), out.row(r).begin());
    }
  }
  return out;
}

double alignment_residual(const Tensor& rotation, const Tensor& source, const Tensor& target) {
  Mat s = to_eigen(source), t = to_eigen(target);
  s.rowwise() -= s.colwise().mean();
  t.rowwise() -= t.colwise().mean();
  return ((s * to_eigen(rotation).transpose()) - t).squaredNorm();
}

double determinant(const Tensor& square) {
  if (square.rows() != square.cols()) throw ShapeError("determinant: matrix is not square");
  return to_eigen(square).determinant();
}

}  // namespace gm
