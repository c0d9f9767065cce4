#pragma once

#include <span>

#include "edfree/geometry.hpp"
#include "edfree/linalg.hpp"

namespace edfree {

/// alpha scales the trace regularizer, beta sets its decay, gamma weighs
/// the displacement penalty. All must be finite and non-negative.
struct LossParams {
  double alpha = 1.0;
  double beta = 1e-3;
  double gamma = 0.0;

  void validate() const;
};

/// Ground-truth null vector of the data matrix.
class LossTarget {
 public:
  explicit LossTarget(Vec e_gt);
  const Vec& e() const noexcept { return e_; }
  std::size_t dim() const noexcept { return e_.size(); }

 private:
  Vec e_;
};

struct LossValue {
  double total = 0.0;
  double eig_term = 0.0;
  double aux_term = 0.0;
  double disp_term = 0.0;
  double trace = 0.0;  // tr(Xbar^T W Xbar), kept for diagnostics
};

/// Sigmoid weights, or exact unit weights that are held fixed (denoise-only fits).
enum class WeightMode { Sigmoid, Unit };

struct FitState {
  Vec logits;
  Mat displacements;  // N x k, k = 0 when the fit has no displacements
  WeightMode weight_mode = WeightMode::Sigmoid;

  static FitState make(std::size_t n, std::size_t k, double logit, WeightMode mode = WeightMode::Sigmoid);

  std::size_t size() const noexcept { return logits.size(); }
  Vec weights() const;
  /// dw/dlogit per measurement; zero for unit weights.
  Vec weight_slopes() const;
};

double sigmoid(double x);

// ---- generic: the network emits A directly ---------------------------------

LossValue loss_generic(const Mat& a, const LossTarget& target, const LossParams& params);

struct GenericGrad {
  Mat eig;    // 2 A e e^T
  Mat aux;    // -2 alpha beta Abar exp(-beta tr(Abar^T Abar))
  Mat total;
};

GenericGrad grad_generic(const Mat& a, const LossTarget& target, const LossParams& params);

// ---- weighted model fitting ------------------------------------------------

/// Rows of x are grouped per measurement: x.rows() must be a multiple of state.size().
LossValue loss_weighted(const Mat& x, const FitState& state, const LossTarget& target, const LossParams& params);

struct WeightedGrad {
  Vec d_weights;
  Vec d_logits;
};

WeightedGrad grad_weighted(const Mat& x, const FitState& state, const LossTarget& target, const LossParams& params);

/// How gradients treat the weighted mean used to center plane points.
enum class MeanGradient { Full, Stop };

/// Plane fitting: rows are the points centered on their weighted mean.
LossValue loss_plane(const Mat& points, const FitState& state, const LossTarget& target, const LossParams& params);

WeightedGrad grad_plane(const Mat& points, const FitState& state, const LossTarget& target, const LossParams& params,
                        MeanGradient mode = MeanGradient::Full);

// ---- denoising and joint fitting -------------------------------------------

/// Data term on rows built from displaced measurements, regularizer on the
/// original rows, plus gamma * mean ||displacement||.
LossValue loss_denoise(const Mat& measurements, const FitState& state, const DataMatrixBuilder& builder,
                       const LossTarget& target, const LossParams& params);
LossValue loss_denoise(const TaskInstance& inst, const FitState& state, const DataMatrixBuilder& builder,
                       const LossTarget& target, const LossParams& params);

struct DenoiseGrad {
  Vec d_weights;
  Vec d_logits;
  Mat d_displacements;
};

DenoiseGrad grad_denoise(const Mat& measurements, const FitState& state, const DataMatrixBuilder& builder,
                         const LossTarget& target, const LossParams& params);
DenoiseGrad grad_denoise(const TaskInstance& inst, const FitState& state, const DataMatrixBuilder& builder,
                         const LossTarget& target, const LossParams& params);

/// Mean of per-instance losses.
LossValue batch_mean(std::span<const LossValue> values);

}  // namespace edfree
