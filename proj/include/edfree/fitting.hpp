#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "edfree/geometry.hpp"

namespace edfree {

/// A fitted model in the coordinates of the instance measurements:
///   Plane   [n_x, n_y, n_z, d] with n . x + d = 0
///   Ellipse conic coefficients [A, B, C, D, E, F]
///   Pnp     row-major 3x4 projection in normalized camera coordinates
///   Stereo  row-major essential matrix in normalized camera coordinates
struct Model {
  Variant variant = Variant::Plane;
  Vec v;
};

/// Weighted DLT fit. Displacements (N x 2) shift the noisy coordinates of ellipse/PnP measurements.
Model fit_model(const TaskInstance& inst, const FitProblem& prob, std::span<const double> weights,
                const Mat* displacements = nullptr);

/// Uniform-weight DLT fit on a subset of measurement indices.
Model fit_model_subset(const TaskInstance& inst, const FitProblem& prob, std::span<const std::size_t> idx);

/// Plane distance, conic Sampson distance, reprojection error or symmetric epipolar
/// distance, all in normalized units.
double model_residual(const Model& m, const TaskInstance& inst, std::size_t i);
Vec model_residuals(const Model& m, const TaskInstance& inst);

/// Converts a model to an evaluable estimate. `weights` picks the PnP depth witness and the
/// stereo matches used for cheirality (w > 0.5; all matches when none qualify).
Estimate model_estimate(const Model& m, const TaskInstance& inst, std::span<const double> weights,
                        std::vector<std::uint8_t> inliers = {});

/// Inlier mask w > 0.5.
std::vector<std::uint8_t> threshold_weights(std::span<const double> weights, double thr = 0.5);

}  // namespace edfree
