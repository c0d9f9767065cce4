#include "edfree/fitting.hpp"

#include <algorithm>
#include <cmath>

namespace edfree {

Model fit_model(const TaskInstance& inst, const FitProblem& prob, std::span<const double> weights,
                const Mat* displacements) {
  require(weights.size() == inst.size(), ErrorCode::InvalidInput, "fit_model: weight count mismatch");
  Model m;
  m.variant = inst.variant;
  if (inst.variant == Variant::Plane) {
    const PlaneMatrix pm = build_plane_matrix(prob.measurements, weights);
    Vec n = solve_dlt(pm.x, weights).e;
    n.push_back(-dot(n, pm.mu));
    m.v = std::move(n);
    return m;
  }
  const DataMatrixBuilder builder(inst.variant);
  const Mat x = displacements && !displacements->empty() ? builder.build(prob.measurements, *displacements)
                                                         : builder.build(prob.measurements);
  m.v = solve_dlt(x, weights).e;
  if (inst.variant == Variant::Stereo) {
    const EssentialMat e = denormalize_essential(m.v, prob.t1, prob.t2);
    m.v.assign(e.e.data().begin(), e.e.data().end());
  }
  return m;
}

Model fit_model_subset(const TaskInstance& inst, const FitProblem& prob, std::span<const std::size_t> idx) {
  Vec w(inst.size(), 0.0);
  for (std::size_t i : idx) {
    require(i < inst.size(), ErrorCode::InvalidInput, "fit_model_subset: index out of range");
    w[i] = 1.0;
  }
  return fit_model(inst, prob, w);
}

double model_residual(const Model& m, const TaskInstance& inst, std::size_t i) {
  const auto q = inst.measurements.row(i);
  switch (m.variant) {
    case Variant::Plane: return std::abs(m.v[0] * q[0] + m.v[1] * q[1] + m.v[2] * q[2] + m.v[3]);
    case Variant::Ellipse: return conic_sampson_distance(m.v, q[0], q[1]);
    case Variant::Pnp: return dlt_reprojection_error(m.v, q);
    case Variant::Stereo: return symmetric_epipolar_distance(Mat(3, 3, m.v), q);
  }
  return 0.0;
}

Vec model_residuals(const Model& m, const TaskInstance& inst) {
  Vec r(inst.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = model_residual(m, inst, i);
  return r;
}

std::vector<std::uint8_t> threshold_weights(std::span<const double> weights, double thr) {
  std::vector<std::uint8_t> mask(weights.size());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = weights[i] > thr;
  return mask;
}

Estimate model_estimate(const Model& m, const TaskInstance& inst, std::span<const double> weights,
                        std::vector<std::uint8_t> inliers) {
  require(weights.size() == inst.size(), ErrorCode::InvalidInput, "model_estimate: weight count mismatch");
  Estimate est;
  est.variant = m.variant;
  est.inliers = std::move(inliers);
  switch (m.variant) {
    case Variant::Plane: est.normal = Vec(m.v.begin(), m.v.begin() + 3); break;
    case Variant::Ellipse: {
      EllipseParams p;
      std::ranges::copy(m.v, p.coeffs.begin());
      est.ellipse = p;
      break;
    }
    case Variant::Pnp: {
      const auto best = std::ranges::max_element(weights) - weights.begin();
      est.pose = pose_from_dlt(m.v, inst.measurements.row(static_cast<std::size_t>(best)));
      break;
    }
    case Variant::Stereo: {
      std::vector<std::size_t> keep;
      for (std::size_t i = 0; i < weights.size(); ++i)
        if (weights[i] > 0.5) keep.push_back(i);
      if (keep.empty())
        for (std::size_t i = 0; i < weights.size(); ++i) keep.push_back(i);
      Mat matches(keep.size(), 4);
      for (std::size_t k = 0; k < keep.size(); ++k)
        std::ranges::copy(inst.measurements.row(keep[k]), matches.row(k).begin());
      est.pose = decompose_essential(EssentialMat{Mat(3, 3, m.v)}, matches);
      break;
    }
  }
  return est;
}

}  // namespace edfree
