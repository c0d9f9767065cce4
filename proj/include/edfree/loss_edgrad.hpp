#pragma once

#include <cstddef>
#include <string_view>

#include "edfree/loss_edfree.hpp"

namespace edfree {

struct EdGradConfig {
  double denom_guard = 0.0;  // minimum |lambda_0 - lambda_j|; 0 disables clamping
  bool record_switches = true;

  void validate() const;
};

struct EdGradDiagnostics {
  double max_k = 0.0;             // largest |1 / (lambda_0 - lambda_j)| used
  std::size_t nearest_index = 0;  // eigenvector index with largest |u_k . e_gt|
  bool clamped = false;
  Vec eigenvalues;
  Vec e_min;  // smallest eigenvector, canonical sign
};

struct EdGradResult {
  double loss = 0.0;
  Vec d_weights;
  Vec d_logits;
  EdGradDiagnostics diag;
};

/// min over s in {+1,-1} of ||e_min - s e_gt||^2, e_min the smallest eigenvector of X^T W X.
double eig_l2_loss(const Mat& x, const FitState& state, const LossTarget& target);

/// Gradient of eig_l2_loss through the eigenvector perturbation formula.
/// Throws DegenerateEigengap when an eigengap vanishes and no guard is set.
EdGradResult eig_l2_grad(const Mat& x, const FitState& state, const LossTarget& target, const EdGradConfig& cfg);

/// Plane variant: rows are the points centred on their weighted mean.
double eig_l2_loss_plane(const Mat& points, const FitState& state, const LossTarget& target);
EdGradResult eig_l2_grad_plane(const Mat& points, const FitState& state, const LossTarget& target,
                               const EdGradConfig& cfg);

/// Method labels "svd", "eigh" and "edgrad" all select this single symmetric-ED path.
bool is_edgrad_label(std::string_view label);

}  // namespace edfree
