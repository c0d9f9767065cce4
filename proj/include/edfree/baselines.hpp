#pragma once

#include <cstdint>
#include <vector>

#include "edfree/fitting.hpp"

namespace edfree {

struct RansacConfig {
  double threshold = 0.01;  // normalized residual units
  std::size_t max_iters = 1000;
  std::size_t min_sample = 0;  // 0: minimal sample of the variant
  std::uint64_t seed = 0;

  static RansacConfig defaults(Variant v);
  void validate() const;
};

struct RobustResult {
  Model model;
  std::vector<std::uint8_t> inliers;
  std::size_t best_iteration = 0;
};

/// Plain RANSAC over minimal DLT solves; the best consensus set is refit with uniform weights.
RobustResult ransac_fit(const TaskInstance& inst, const RansacConfig& cfg);

/// Least median of squares; inliers are residuals within 2.5 robust standard deviations.
RobustResult lmeds_fit(const TaskInstance& inst, const RansacConfig& cfg);

struct IrlsResult {
  EllipseParams ellipse;
  Vec weights;
  std::size_t iterations = 0;
};

/// Iteratively reweighted conic fit with Cauchy weights 1 / (1 + (r / c)^2) on algebraic residuals r, c = 2.3849 * median |r|.
IrlsResult irls_cauchy_ellipse(const Mat& points, std::size_t iters = 20);

}  // namespace edfree
