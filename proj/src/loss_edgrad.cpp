#include "edfree/loss_edgrad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace edfree {

namespace {

Mat weighted_gram(const Mat& x, std::span<const double> w, std::size_t per) {
  const std::size_t d = x.cols();
  Mat m(d, d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const double wi = w[r / per];
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i; j < d; ++j) m(i, j) += wi * row[i] * row[j];
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  return m;
}

std::size_t rows_per(const Mat& x, const FitState& state, const LossTarget& target) {
  require(x.cols() == target.dim(), ErrorCode::InvalidInput, "edgrad: target dimension mismatch");
  require(state.size() > 0 && x.rows() % state.size() == 0, ErrorCode::InvalidInput,
          "edgrad: data rows are not a multiple of the measurement count");
  return x.rows() / state.size();
}

double sign_loss(const Vec& u0, const Vec& e, double& s) {
  s = dot(u0, e) >= 0.0 ? 1.0 : -1.0;
  double l = 0.0;
  for (std::size_t k = 0; k < e.size(); ++k) {
    const double d = u0[k] - s * e[k];
    l += d * d;
  }
  return l;
}

}  // namespace

void EdGradConfig::validate() const {
  require(std::isfinite(denom_guard) && denom_guard >= 0.0, ErrorCode::InvalidInput,
          "EdGradConfig: denom_guard must be finite and >= 0");
}

bool is_edgrad_label(std::string_view label) { return label == "edgrad" || label == "svd" || label == "eigh"; }

double eig_l2_loss(const Mat& x, const FitState& state, const LossTarget& target) {
  const std::size_t per = rows_per(x, state, target);
  const SymEigResult eig = sym_eig(weighted_gram(x, state.weights(), per));
  double s = 1.0;
  return sign_loss(eig.vectors.col(0), target.e(), s);
}

EdGradResult eig_l2_grad(const Mat& x, const FitState& state, const LossTarget& target, const EdGradConfig& cfg) {
  cfg.validate();
  const std::size_t per = rows_per(x, state, target);
  const std::size_t d = x.cols();
  const std::size_t n = state.size();
  const auto& e = target.e();
  const SymEigResult eig = sym_eig(weighted_gram(x, state.weights(), per));

  EdGradResult out;
  out.diag.eigenvalues = eig.values;
  const Vec u0 = eig.vectors.col(0);
  out.diag.e_min = u0;
  double s = 1.0;
  out.loss = sign_loss(u0, e, s);

  double scale = 0.0;
  for (double l : eig.values) scale = std::max(scale, std::abs(l));
  const double tiny = 4.0 * std::numeric_limits<double>::epsilon() * scale;

  // coef_j = (g . u_j) / (lambda_0 - lambda_j), g = dL/du_0 = 2 (u_0 - s e).
  Vec coef(d, 0.0);
  for (std::size_t j = 1; j < d; ++j) {
    double gap = eig.values[j] - eig.values[0];
    if (cfg.denom_guard > 0.0 && gap < cfg.denom_guard) {
      gap = cfg.denom_guard;
      out.diag.clamped = true;
    } else if (gap <= tiny) {
      throw Error(ErrorCode::DegenerateEigengap, "eig_l2_grad: smallest eigenvalue is not simple");
    }
    const Vec uj = eig.vectors.col(j);
    double g_uj = 0.0;
    for (std::size_t k = 0; k < d; ++k) g_uj += 2.0 * (u0[k] - s * e[k]) * uj[k];
    coef[j] = -g_uj / gap;
    out.diag.max_k = std::max(out.diag.max_k, 1.0 / gap);
  }

  if (cfg.record_switches) {
    double best = -1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double c = std::abs(dot(eig.vectors.col(k), e));
      if (c > best) {
        best = c;
        out.diag.nearest_index = k;
      }
    }
  }

  // dL/dw_i = sum_{rows r of i} sum_j coef_j (x_r . u_j)(x_r . u_0)
  const Mat proj = x * eig.vectors;
  out.d_weights.assign(n, 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (std::size_t j = 1; j < d; ++j) acc += coef[j] * proj(r, j);
    out.d_weights[r / per] += acc * proj(r, 0);
  }
  const Vec slope = state.weight_slopes();
  out.d_logits.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.d_logits[i] = out.d_weights[i] * slope[i];
  return out;
}

double eig_l2_loss_plane(const Mat& points, const FitState& state, const LossTarget& target) {
  require(points.rows() == state.size(), ErrorCode::InvalidInput, "edgrad plane: point count mismatch");
  return eig_l2_loss(build_plane_matrix(points, state.weights()).x, state, target);
}

EdGradResult eig_l2_grad_plane(const Mat& points, const FitState& state, const LossTarget& target,
                               const EdGradConfig& cfg) {
  require(points.rows() == state.size(), ErrorCode::InvalidInput, "edgrad plane: point count mismatch");
  return eig_l2_grad(build_plane_matrix(points, state.weights()).x, state, target, cfg);
}

}  // namespace edfree
