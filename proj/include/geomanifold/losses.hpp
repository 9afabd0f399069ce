// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "geomanifold/autograd.hpp"
#include "geomanifold/manifold.hpp"

namespace gm {

struct LossWeights {
  double alpha = 0.1;
  double beta = 0.1;
  double tau = 0.1;
  double gamma = 1e-3;
  /// Target mean latent distance the input distances are scaled to.
  double geo_target = 1.5707963267948966;

  void validate() const;
};

/// Scale s such that the mean off-diagonal input distance divided by s equals
/// target_mean. Rows of x are points.
double geo_scale(const Tensor& x, double target_mean);

/// Mean over pairs i < j of (d_M(z_i, z_j) - ||x_i - x_j|| / s)^2.
Var geo_loss(Var z, const Tensor& x, Geometry g, double s);
/// Same with s = geo_scale(x, target_mean).
Var geo_loss_auto(Var z, const Tensor& x, Geometry g, double target_mean);

/// InfoNCE over cosine similarities: row i of view1 is the positive of row i
/// of view2, every other row a negative.
Var align_loss(Var view1, Var view2, double tau);

/// recon + alpha * geo + beta * align.
Var total_loss(Var recon, Var geo, Var align, const LossWeights& w);

/// p -> R (p - source_centroid) + target_centroid.
struct AlignmentMap {
  Tensor rotation;  // d x d, proper
  std::vector<double> source_centroid;
  std::vector<double> target_centroid;
  /// Cross-covariance was rank deficient; the rotation is one of several.
  bool degenerate = false;

  static AlignmentMap identity(std::size_t d);
  std::size_t dim() const { return source_centroid.size(); }
};

/// Rows of source and target are matched points. Throws UsageError when there
/// are fewer points than dimensions.
AlignmentMap kabsch_align(const Tensor& source, const Tensor& target);
/// Maps every row, optionally projecting back onto a manifold.
Tensor apply_alignment(const AlignmentMap& map, const Tensor& points, const ManifoldKind* kind);
/// Sum of squared distances between R (s - s_bar) and t - t_bar.
double alignment_residual(const Tensor& rotation, const Tensor& source, const Tensor& target);
double determinant(const Tensor& square);

}  // namespace gm
