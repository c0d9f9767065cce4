#include "edfree/loss_edfree.hpp"

#include <algorithm>
#include <cmath>

namespace edfree {

namespace {

struct RowTerms {
  double residual;     // x . e
  double proj_sq;      // ||x - (x . e) e||^2
};

RowTerms row_terms(std::span<const double> x, std::span<const double> e) {
  const double r = dot(x, e);
  double p = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double d = x[k] - r * e[k];
    p += d * d;
  }
  return {r, p};
}

std::size_t rows_per(const Mat& x, const FitState& state) {
  require(state.size() > 0 && x.rows() % state.size() == 0, ErrorCode::InvalidInput,
          "loss: data rows are not a multiple of the measurement count");
  return x.rows() / state.size();
}

void check_dims(const Mat& x, const LossTarget& target) {
  require(x.cols() == target.dim(), ErrorCode::InvalidInput, "loss: target dimension mismatch");
}

}  // namespace

void LossParams::validate() const {
  const bool ok = std::isfinite(alpha) && std::isfinite(beta) && std::isfinite(gamma) && alpha >= 0.0 &&
                  beta >= 0.0 && gamma >= 0.0;
  require(ok, ErrorCode::InvalidInput, "LossParams: alpha, beta, gamma must be finite and >= 0");
}

LossTarget::LossTarget(Vec e_gt) : e_(std::move(e_gt)) {
  require(!e_.empty() && all_finite(e_), ErrorCode::InvalidInput, "LossTarget: empty or non-finite vector");
  require(std::abs(norm(e_) - 1.0) <= 1e-12, ErrorCode::InvalidInput, "LossTarget: vector is not unit norm");
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double z = std::exp(x);
  return z / (1.0 + z);
}

FitState FitState::make(std::size_t n, std::size_t k, double logit, WeightMode mode) {
  FitState s;
  s.logits.assign(n, logit);
  s.displacements = Mat(n, k);
  s.weight_mode = mode;
  return s;
}

Vec FitState::weights() const {
  Vec w(logits.size(), 1.0);
  if (weight_mode == WeightMode::Sigmoid)
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = sigmoid(logits[i]);
  return w;
}

Vec FitState::weight_slopes() const {
  Vec s(logits.size(), 0.0);
  if (weight_mode == WeightMode::Sigmoid)
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = sigmoid(logits[i]) * sigmoid(-logits[i]);
  return s;
}

LossValue loss_generic(const Mat& a, const LossTarget& target, const LossParams& params) {
  check_dims(a, target);
  params.validate();
  LossValue v;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const RowTerms t = row_terms(a.row(r), target.e());
    v.eig_term += t.residual * t.residual;
    v.trace += t.proj_sq;
  }
  v.aux_term = params.alpha * std::exp(-params.beta * v.trace);
  v.total = v.eig_term + v.aux_term;
  return v;
}

GenericGrad grad_generic(const Mat& a, const LossTarget& target, const LossParams& params) {
  check_dims(a, target);
  params.validate();
  const auto& e = target.e();
  const std::size_t d = e.size();
  GenericGrad g{Mat(a.rows(), d), Mat(a.rows(), d), Mat(a.rows(), d)};
  double tr = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) tr += row_terms(a.row(r), e).proj_sq;
  const double c = -2.0 * params.alpha * params.beta * std::exp(-params.beta * tr);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double ae = dot(a.row(r), e);
    for (std::size_t k = 0; k < d; ++k) {
      g.eig(r, k) = 2.0 * ae * e[k];
      g.aux(r, k) = c * (a(r, k) - ae * e[k]);
      g.total(r, k) = g.eig(r, k) + g.aux(r, k);
    }
  }
  return g;
}

LossValue loss_weighted(const Mat& x, const FitState& state, const LossTarget& target, const LossParams& params) {
  check_dims(x, target);
  params.validate();
  const std::size_t per = rows_per(x, state);
  const Vec w = state.weights();
  LossValue v;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const RowTerms t = row_terms(x.row(r), target.e());
    v.eig_term += w[r / per] * t.residual * t.residual;
    v.trace += w[r / per] * t.proj_sq;
  }
  v.aux_term = params.alpha * std::exp(-params.beta * v.trace);
  v.total = v.eig_term + v.aux_term;
  return v;
}

WeightedGrad grad_weighted(const Mat& x, const FitState& state, const LossTarget& target, const LossParams& params) {
  check_dims(x, target);
  params.validate();
  const std::size_t per = rows_per(x, state);
  const Vec w = state.weights();
  const std::size_t n = state.size();
  Vec d_eig(n, 0.0), d_tr(n, 0.0);
  double tr = 0.0;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const RowTerms t = row_terms(x.row(r), target.e());
    d_eig[r / per] += t.residual * t.residual;
    d_tr[r / per] += t.proj_sq;
    tr += w[r / per] * t.proj_sq;
  }
  const double c = params.alpha * params.beta * std::exp(-params.beta * tr);
  const Vec slope = state.weight_slopes();
  WeightedGrad g{Vec(n), Vec(n)};
  for (std::size_t i = 0; i < n; ++i) {
    g.d_weights[i] = d_eig[i] - c * d_tr[i];
    g.d_logits[i] = g.d_weights[i] * slope[i];
  }
  return g;
}

LossValue loss_plane(const Mat& points, const FitState& state, const LossTarget& target, const LossParams& params) {
  require(points.rows() == state.size(), ErrorCode::InvalidInput, "loss_plane: point count mismatch");
  const PlaneMatrix pm = build_plane_matrix(points, state.weights());
  return loss_weighted(pm.x, state, target, params);
}

WeightedGrad grad_plane(const Mat& points, const FitState& state, const LossTarget& target, const LossParams& params,
                        MeanGradient mode) {
  require(points.rows() == state.size(), ErrorCode::InvalidInput, "grad_plane: point count mismatch");
  const Vec w = state.weights();
  const PlaneMatrix pm = build_plane_matrix(points, w);
  WeightedGrad g = grad_weighted(pm.x, state, target, params);
  if (mode == MeanGradient::Stop) return g;

  // dL/dmu, then dmu/dw_k = (x_k - mu) / sum(w).
  const auto& e = target.e();
  double tr = 0.0, wsum = 0.0;
  Vec sum_res(3, 0.0), sum_proj(3, 0.0);
  for (std::size_t i = 0; i < pm.x.rows(); ++i) {
    const auto xi = pm.x.row(i);
    const RowTerms t = row_terms(xi, e);
    tr += w[i] * t.proj_sq;
    wsum += w[i];
    for (std::size_t k = 0; k < 3; ++k) {
      sum_res[k] += w[i] * t.residual * e[k];
      sum_proj[k] += w[i] * (xi[k] - t.residual * e[k]);
    }
  }
  const double c = params.alpha * params.beta * std::exp(-params.beta * tr);
  Vec dmu(3);
  for (std::size_t k = 0; k < 3; ++k) dmu[k] = -2.0 * sum_res[k] + 2.0 * c * sum_proj[k];
  const Vec slope = state.weight_slopes();
  for (std::size_t i = 0; i < pm.x.rows(); ++i) {
    const double extra = dot(dmu, pm.x.row(i)) / wsum;
    g.d_weights[i] += extra;
    g.d_logits[i] = g.d_weights[i] * slope[i];
  }
  return g;
}

namespace {

void check_denoise(const Mat& measurements, const FitState& state, const DataMatrixBuilder& builder,
                   const LossTarget& target) {
  require(measurements.cols() == builder.measurement_width(), ErrorCode::InvalidInput,
          "denoise: builder and measurements disagree");
  require(measurements.rows() == state.size(), ErrorCode::InvalidInput, "denoise: state size mismatch");
  require(state.displacements.rows() == state.size() && state.displacements.cols() == builder.noisy_count(),
          ErrorCode::InvalidInput, "denoise: displacement shape mismatch");
  require(builder.noisy_count() > 0, ErrorCode::InvalidInput, "denoise: variant has no noisy coordinates");
  require(builder.dim() == target.dim(), ErrorCode::InvalidInput, "denoise: target dimension mismatch");
  require(all_finite(state.displacements), ErrorCode::InvalidInput, "denoise: non-finite displacements");
}

double mean_displacement_norm(const Mat& d) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.rows(); ++i) s += norm(d.row(i));
  return d.rows() ? s / static_cast<double>(d.rows()) : 0.0;
}

}  // namespace

LossValue loss_denoise(const Mat& measurements, const FitState& state, const DataMatrixBuilder& builder,
                       const LossTarget& target, const LossParams& params) {
  check_denoise(measurements, state, builder, target);
  params.validate();
  const Mat x_orig = builder.build(measurements);
  const Mat x_den = builder.build(measurements, state.displacements);
  const std::size_t per = builder.rows_per_measurement();
  const Vec w = state.weights();
  LossValue v;
  for (std::size_t r = 0; r < x_orig.rows(); ++r) {
    const double res = dot(x_den.row(r), target.e());
    v.eig_term += w[r / per] * res * res;
    v.trace += w[r / per] * row_terms(x_orig.row(r), target.e()).proj_sq;
  }
  v.aux_term = params.alpha * std::exp(-params.beta * v.trace);
  v.disp_term = params.gamma * mean_displacement_norm(state.displacements);
  v.total = v.eig_term + v.aux_term + v.disp_term;
  return v;
}

LossValue loss_denoise(const TaskInstance& inst, const FitState& state, const DataMatrixBuilder& builder,
                       const LossTarget& target, const LossParams& params) {
  require(inst.variant == builder.variant(), ErrorCode::InvalidInput, "denoise: builder/instance variant mismatch");
  return loss_denoise(inst.measurements, state, builder, target, params);
}

DenoiseGrad grad_denoise(const Mat& measurements, const FitState& state, const DataMatrixBuilder& builder,
                         const LossTarget& target, const LossParams& params) {
  check_denoise(measurements, state, builder, target);
  params.validate();
  const auto& e = target.e();
  const std::size_t n = state.size();
  const std::size_t k = builder.noisy_count();
  const std::size_t per = builder.rows_per_measurement();
  const Vec w = state.weights();

  Vec d_eig(n, 0.0), d_tr(n, 0.0);
  double tr = 0.0;
  DenoiseGrad g{Vec(n), Vec(n), Mat(n, k)};
  Vec shifted(builder.measurement_width());
  for (std::size_t i = 0; i < n; ++i) {
    std::ranges::copy(measurements.row(i), shifted.begin());
    for (std::size_t c = 0; c < k; ++c) shifted[builder.noisy_offset() + c] += state.displacements(i, c);
    const Mat rows_den = builder.rows(shifted);
    const Mat rows_orig = builder.rows(measurements.row(i));
    const std::vector<Mat> jac = builder.jacobian(shifted);
    for (std::size_t r = 0; r < per; ++r) {
      const double res = dot(rows_den.row(r), e);
      d_eig[i] += res * res;
      const double p = row_terms(rows_orig.row(r), e).proj_sq;
      d_tr[i] += p;
      tr += w[i] * p;
      for (std::size_t c = 0; c < k; ++c) g.d_displacements(i, c) += 2.0 * w[i] * res * dot(jac[c].row(r), e);
    }
    const double dn = norm(state.displacements.row(i));
    if (dn > 0.0)
      for (std::size_t c = 0; c < k; ++c)
        g.d_displacements(i, c) += params.gamma / static_cast<double>(n) * state.displacements(i, c) / dn;
  }
  const double cc = params.alpha * params.beta * std::exp(-params.beta * tr);
  const Vec slope = state.weight_slopes();
  for (std::size_t i = 0; i < n; ++i) {
    g.d_weights[i] = d_eig[i] - cc * d_tr[i];
    g.d_logits[i] = g.d_weights[i] * slope[i];
  }
  return g;
}

DenoiseGrad grad_denoise(const TaskInstance& inst, const FitState& state, const DataMatrixBuilder& builder,
                         const LossTarget& target, const LossParams& params) {
  require(inst.variant == builder.variant(), ErrorCode::InvalidInput, "denoise: builder/instance variant mismatch");
  return grad_denoise(inst.measurements, state, builder, target, params);
}

LossValue batch_mean(std::span<const LossValue> values) {
  require(!values.empty(), ErrorCode::InvalidInput, "batch_mean: empty batch");
  LossValue m;
  for (const auto& v : values) {
    m.total += v.total;
    m.eig_term += v.eig_term;
    m.aux_term += v.aux_term;
    m.disp_term += v.disp_term;
    m.trace += v.trace;
  }
  const double n = static_cast<double>(values.size());
  m.total /= n;
  m.eig_term /= n;
  m.aux_term /= n;
  m.disp_term /= n;
  m.trace /= n;
  return m;
}

}  // namespace edfree
