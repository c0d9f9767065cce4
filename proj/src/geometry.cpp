#include "edfree/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace edfree {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;


}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Plane: return "plane";
    case Variant::Ellipse: return "ellipse";
    case Variant::Pnp: return "pnp";
    case Variant::Stereo: return "stereo";
  }
  return "unknown";
}

Variant variant_from_string(std::string_view name) {
  if (name == "plane") return Variant::Plane;
  if (name == "ellipse") return Variant::Ellipse;
  if (name == "pnp") return Variant::Pnp;
  if (name == "stereo") return Variant::Stereo;
  throw Error(ErrorCode::InvalidInput, "unknown variant: " + std::string(name));
}

std::size_t minimal_sample(Variant v) {
  switch (v) {
    case Variant::Plane: return 3;
    case Variant::Ellipse: return 5;
    case Variant::Pnp: return 6;
    case Variant::Stereo: return 8;
  }
  return 0;
}

std::size_t measurement_width(Variant v) {
  switch (v) {
    case Variant::Plane: return 3;
    case Variant::Ellipse: return 2;
    case Variant::Pnp: return 5;
    case Variant::Stereo: return 4;
  }
  return 0;
}

Vec build_ellipse_row(std::span<const double> p) {
  require(p.size() >= 2, ErrorCode::InvalidInput, "ellipse row: need a 2D point");
  const double x = p[0], y = p[1];
  return {x * x, 2.0 * x * y, y * y, 2.0 * x, 2.0 * y, 1.0};
}

Mat build_pnp_rows(std::span<const double> q) {
  require(q.size() >= 5, ErrorCode::InvalidInput, "pnp rows: need (x y z u v)");
  const double x = q[0], y = q[1], z = q[2], u = q[3], v = q[4];
  return Mat{{x, y, z, 1.0, 0.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u * z, -u},
             {0.0, 0.0, 0.0, 0.0, x, y, z, 1.0, -v * x, -v * y, -v * z, -v}};
}

Vec build_essential_row(std::span<const double> q) {
  require(q.size() >= 4, ErrorCode::InvalidInput, "essential row: need (u v u' v')");
  const double u = q[0], v = q[1], up = q[2], vp = q[3];
  return {up * u, up * v, up, vp * u, vp * v, vp, u, v, 1.0};
}

std::vector<Mat> builder_jacobian(Variant variant, std::span<const double> m) {
  switch (variant) {
    case Variant::Ellipse: {
      require(m.size() >= 2, ErrorCode::InvalidInput, "ellipse jacobian: need a 2D point");
      const double x = m[0], y = m[1];
      return {Mat{{2.0 * x, 2.0 * y, 0.0, 2.0, 0.0, 0.0}}, Mat{{0.0, 2.0 * x, 2.0 * y, 0.0, 2.0, 0.0}}};
    }
    case Variant::Pnp: {
      require(m.size() >= 5, ErrorCode::InvalidInput, "pnp jacobian: need (x y z u v)");
      const double x = m[0], y = m[1], z = m[2];
      Mat du(2, 12), dv(2, 12);
      du(0, 8) = -x, du(0, 9) = -y, du(0, 10) = -z, du(0, 11) = -1.0;
      dv(1, 8) = -x, dv(1, 9) = -y, dv(1, 10) = -z, dv(1, 11) = -1.0;
      return {du, dv};
    }
    default:
      throw Error(ErrorCode::InvalidInput, "builder_jacobian: variant has no noisy coordinates");
  }
}

PlaneMatrix build_plane_matrix(const Mat& points, std::span<const double> weights) {
  require(points.cols() == 3, ErrorCode::InvalidInput, "plane matrix: points must be N x 3");
  require(weights.size() == points.rows(), ErrorCode::InvalidInput, "plane matrix: weight count mismatch");
  double wsum = 0.0;
  Vec mu(3, 0.0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    wsum += weights[i];
    for (std::size_t k = 0; k < 3; ++k) mu[k] += weights[i] * points(i, k);
  }
  if (!(wsum > 0.0)) throw Error(ErrorCode::DegenerateWeights, "plane matrix: weights sum to zero");
  for (auto& m : mu) m /= wsum;
  PlaneMatrix out{Mat(points.rows(), 3), mu};
  for (std::size_t i = 0; i < points.rows(); ++i)
    for (std::size_t k = 0; k < 3; ++k) out.x(i, k) = points(i, k) - mu[k];
  return out;
}

DataMatrixBuilder::DataMatrixBuilder(Variant v) : variant_(v) {
  require(v != Variant::Plane, ErrorCode::InvalidInput,
          "DataMatrixBuilder: plane rows depend on weights, use build_plane_matrix");
}

std::size_t DataMatrixBuilder::dim() const noexcept {
  switch (variant_) {
    case Variant::Ellipse: return 6;
    case Variant::Pnp: return 12;
    case Variant::Stereo: return 9;
    default: return 3;
  }
}

std::size_t DataMatrixBuilder::rows_per_measurement() const noexcept { return variant_ == Variant::Pnp ? 2 : 1; }

std::size_t DataMatrixBuilder::measurement_width() const noexcept { return edfree::measurement_width(variant_); }

std::size_t DataMatrixBuilder::noisy_offset() const noexcept { return variant_ == Variant::Pnp ? 3 : 0; }

std::size_t DataMatrixBuilder::noisy_count() const noexcept { return variant_ == Variant::Stereo ? 0 : 2; }

Mat DataMatrixBuilder::rows(std::span<const double> m) const {
  require(m.size() == measurement_width(), ErrorCode::InvalidInput, "builder: measurement width mismatch");
  switch (variant_) {
    case Variant::Ellipse: return Mat(1, 6, build_ellipse_row(m));
    case Variant::Pnp: return build_pnp_rows(m);
    case Variant::Stereo: return Mat(1, 9, build_essential_row(m));
    default: throw Error(ErrorCode::InvalidInput, "builder: unsupported variant");
  }
}

std::vector<Mat> DataMatrixBuilder::jacobian(std::span<const double> m) const {
  require(m.size() == measurement_width(), ErrorCode::InvalidInput, "builder: measurement width mismatch");
  return builder_jacobian(variant_, m);
}

Mat DataMatrixBuilder::build(const Mat& measurements) const {
  require(measurements.cols() == measurement_width(), ErrorCode::InvalidInput,
          "builder: measurement width mismatch");
  const std::size_t r = rows_per_measurement();
  Mat x(measurements.rows() * r, dim());
  for (std::size_t i = 0; i < measurements.rows(); ++i) {
    const Mat block = rows(measurements.row(i));
    for (std::size_t k = 0; k < r; ++k) std::ranges::copy(block.row(k), x.row(i * r + k).begin());
  }
  return x;
}

Mat DataMatrixBuilder::build(const Mat& measurements, const Mat& displacements) const {
  require(noisy_count() > 0, ErrorCode::InvalidInput, "builder: variant takes no displacements");
  require(displacements.rows() == measurements.rows() && displacements.cols() == noisy_count(),
          ErrorCode::InvalidInput, "builder: displacement shape mismatch");
  Mat shifted = measurements;
  for (std::size_t i = 0; i < shifted.rows(); ++i)
    for (std::size_t k = 0; k < noisy_count(); ++k) shifted(i, noisy_offset() + k) += displacements(i, k);
  return build(shifted);
}

Normalized2D hartley_normalize(const Mat& points) {
  require(points.cols() == 2 && points.rows() >= 2, ErrorCode::InvalidInput, "hartley: need N >= 2 2D points");
  const double n = static_cast<double>(points.rows());
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    cx += points(i, 0);
    cy += points(i, 1);
  }
  cx /= n;
  cy /= n;
  double ms = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) {
    const double dx = points(i, 0) - cx, dy = points(i, 1) - cy;
    ms += dx * dx + dy * dy;
  }
  const double rms = std::sqrt(ms / n);
  if (!(rms > 0.0)) throw Error(ErrorCode::DegenerateInput, "hartley: all points coincide");
  const double s = std::numbers::sqrt2 / rms;
  Normalized2D out{Mat(points.rows(), 2), {}};
  out.transform.t = Mat{{s, 0.0, -s * cx}, {0.0, s, -s * cy}, {0.0, 0.0, 1.0}};
  for (std::size_t i = 0; i < points.rows(); ++i) {
    out.points(i, 0) = s * (points(i, 0) - cx);
    out.points(i, 1) = s * (points(i, 1) - cy);
  }
  return out;
}

Vec transform_gt_essential(const EssentialMat& e_gt, const NormTransform& t1, const NormTransform& t2) {
  const Mat t1_inv = inverse3(t1.t);
  const Mat t2_inv = inverse3(t2.t);
  const Mat e = transpose(t2_inv) * e_gt.e * t1_inv;
  return normalized(e.data());
}

Vec ground_truth_vector(const TaskInstance& inst) {
  switch (inst.variant) {
    case Variant::Plane: return normalized(std::get<PlaneModel>(inst.ground_truth).normal);
    case Variant::Ellipse: {
      const auto& c = std::get<EllipseParams>(inst.ground_truth).coeffs;
      return normalized(c);
    }
    case Variant::Pnp: {
      const auto& pose = std::get<Pose>(inst.ground_truth);
      Vec p(12);
      for (std::size_t r = 0; r < 3; ++r) {
        for (std::size_t c = 0; c < 3; ++c) p[r * 4 + c] = pose.r(r, c);
        p[r * 4 + 3] = pose.t[r];
      }
      return normalized(p);
    }
    case Variant::Stereo: return normalized(std::get<StereoTruth>(inst.ground_truth).essential.e.data());
  }
  return {};
}

FitProblem make_fit_problem(const TaskInstance& inst) {
  require(inst.measurements.cols() == measurement_width(inst.variant), ErrorCode::InvalidInput,
          "fit problem: measurement width mismatch");
  FitProblem p;
  p.variant = inst.variant;
  if (inst.variant != Variant::Stereo) {
    p.measurements = inst.measurements;
    p.target = ground_truth_vector(inst);
    return p;
  }
  const std::size_t n = inst.size();
  Mat a(n, 2), b(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, 0) = inst.measurements(i, 0);
    a(i, 1) = inst.measurements(i, 1);
    b(i, 0) = inst.measurements(i, 2);
    b(i, 1) = inst.measurements(i, 3);
  }
  const Normalized2D na = hartley_normalize(a);
  const Normalized2D nb = hartley_normalize(b);
  p.measurements = Mat(n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    p.measurements(i, 0) = na.points(i, 0);
    p.measurements(i, 1) = na.points(i, 1);
    p.measurements(i, 2) = nb.points(i, 0);
    p.measurements(i, 3) = nb.points(i, 1);
  }
  p.t1 = na.transform;
  p.t2 = nb.transform;
  p.target = transform_gt_essential(std::get<StereoTruth>(inst.ground_truth).essential, p.t1, p.t2);
  return p;
}

DltSolution solve_dlt(const Mat& x, std::span<const double> weights) {
  require(!weights.empty() && x.rows() % weights.size() == 0, ErrorCode::InvalidInput,
          "solve_dlt: rows not a multiple of the weight count");
  const std::size_t per = x.rows() / weights.size();
  const std::size_t d = x.cols();
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  if (!(wsum > 0.0)) throw Error(ErrorCode::DegenerateWeights, "solve_dlt: weights sum to zero");
  Mat m(d, d);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const double w = weights[r / per];
    if (w == 0.0) continue;
    const auto row = x.row(r);
    for (std::size_t i = 0; i < d; ++i) {
      const double wi = w * row[i];
      for (std::size_t j = i; j < d; ++j) m(i, j) += wi * row[j];
    }
  }
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < i; ++j) m(i, j) = m(j, i);
  const SymEigResult eig = sym_eig(m);
  DltSolution out;
  out.e = eig.vectors.col(0);
  out.eigenvalues = eig.values;
  const double scale = std::max(std::abs(eig.values.back()), 1e-300);
  out.unique = d < 2 || (eig.values[1] - eig.values[0]) > 1e-10 * scale;
  return out;
}

Pose pose_from_dlt(std::span<const double> p, std::span<const double> sample) {
  require(p.size() == 12, ErrorCode::InvalidInput, "pose_from_dlt: need a 12-vector");
  require(sample.size() >= 3, ErrorCode::InvalidInput, "pose_from_dlt: witness needs a 3D point");
  Mat m(3, 3);
  Vec t(3);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 3; ++c) m(r, c) = p[r * 4 + c];
    t[r] = p[r * 4 + 3];
  }
  const double d = det(m);
  const double fro = frobenius_norm(m);
  if (!std::isfinite(d) || std::abs(d) <= 1e-12 * fro * fro * fro || fro == 0.0)
    throw Error(ErrorCode::DegeneratePose, "pose_from_dlt: singular rotation block");
  double scale = 1.0 / std::cbrt(std::abs(d));
  const double depth = m(2, 0) * sample[0] + m(2, 1) * sample[1] + m(2, 2) * sample[2] + t[2];
  if (depth < 0.0) scale = -scale;
  Pose out;
  out.r = procrustes_to_rotation(m * scale);
  for (std::size_t r = 0; r < 3; ++r) out.t[r] = t[r] * scale;
  return out;
}

std::array<double, 2> ellipse_center(const EllipseParams& params) {
  const auto& c = params.coeffs;
  const double a = c[0], b = c[1], cc = c[2];
  const double det2 = a * cc - b * b;
  if (!(std::abs(det2) > 1e-12 * (a * a + b * b + cc * cc)))
    throw Error(ErrorCode::DegenerateConic, "ellipse_center: singular quadratic block");
  const double x = (-c[3] * cc + b * c[4]) / det2;
  const double y = (-a * c[4] + b * c[3]) / det2;
  return {x, y};
}

EllipseParams ellipse_from_geometry(double cx, double cy, double a, double b, double angle) {
  require(a > 0.0 && b > 0.0, ErrorCode::InvalidInput, "ellipse: axes must be positive");
  const double cs = std::cos(angle), sn = std::sin(angle);
  const double ia = 1.0 / (a * a), ib = 1.0 / (b * b);
  // Q = R diag(1/a^2, 1/b^2) R^T
  const double q11 = cs * cs * ia + sn * sn * ib;
  const double q12 = cs * sn * (ia - ib);
  const double q22 = sn * sn * ia + cs * cs * ib;
  const double d = -(q11 * cx + q12 * cy);
  const double e = -(q12 * cx + q22 * cy);
  const double f = q11 * cx * cx + 2.0 * q12 * cx * cy + q22 * cy * cy - 1.0;
  EllipseParams out{{q11, q12, q22, d, e, f}};
  const Vec n = normalized(out.coeffs);
  std::ranges::copy(n, out.coeffs.begin());
  return out;
}

Mat rotation_from_axis_angle(std::span<const double> axis, double angle) {
  const Vec k = normalized(axis);
  const Mat kx = skew(k);
  return Mat::identity(3) + kx * std::sin(angle) + (kx * kx) * (1.0 - std::cos(angle));
}

namespace {

// Midpoint triangulation; returns false when the rays are parallel.
bool positive_depth(const Mat& r, std::span<const double> t, std::span<const double> m) {
  const Vec d1 = {m[0], m[1], 1.0};
  const Vec x2 = {m[2], m[3], 1.0};
  const Mat rt = transpose(r);
  const Vec d2 = rt * x2;
  Vec c2 = rt * t;
  for (auto& x : c2) x = -x;
  const double a = dot(d1, d1), b = dot(d1, d2), c = dot(d2, d2);
  const double p = dot(d1, c2), q = dot(d2, c2);
  const double den = b * b - a * c;
  if (std::abs(den) <= 1e-12 * a * c) return false;
  const double l1 = (-c * p + b * q) / den;
  const double l2 = (-b * p + a * q) / den;
  Vec x(3);
  for (std::size_t k = 0; k < 3; ++k) x[k] = 0.5 * (l1 * d1[k] + c2[k] + l2 * d2[k]);
  const Vec x_cam2 = r * x;
  return x[2] > 0.0 && x_cam2[2] + t[2] > 0.0;
}

}  // namespace

Pose decompose_essential(const EssentialMat& e, const Mat& matches) {
  require(matches.cols() == 4 && matches.rows() >= 1, ErrorCode::InvalidInput,
          "decompose_essential: need N >= 1 matches (u v u' v')");
  SvdResult svd = svd_small(e.e);
  if (det(svd.u) < 0.0) svd.u *= -1.0;
  if (det(svd.v) < 0.0) svd.v *= -1.0;
  const Mat w{{0.0, -1.0, 0.0}, {1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}};
  const Mat vt = transpose(svd.v);
  const Mat r1 = svd.u * w * vt;
  const Mat r2 = svd.u * transpose(w) * vt;
  const Vec t = svd.u.col(2);
  const Vec tn = {-t[0], -t[1], -t[2]};
  const std::array<Pose, 4> candidates = {Pose{r1, t}, Pose{r1, tn}, Pose{r2, t}, Pose{r2, tn}};
  std::size_t best = 0, best_count = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < matches.rows(); ++i)
      if (positive_depth(candidates[c].r, candidates[c].t, matches.row(i))) ++count;
    if (count > best_count) {
      best = c;
      best_count = count;
    }
  }
  if (best_count == 0) throw Error(ErrorCode::DegenerateGeometry, "decompose_essential: no candidate in front");
  return candidates[best];
}

double conic_sampson_distance(std::span<const double> c, double x, double y) {
  require(c.size() == 6, ErrorCode::InvalidInput, "conic: need 6 coefficients");
  const double r = c[0] * x * x + 2.0 * c[1] * x * y + c[2] * y * y + 2.0 * c[3] * x + 2.0 * c[4] * y + c[5];
  const double gx = 2.0 * (c[0] * x + c[1] * y + c[3]);
  const double gy = 2.0 * (c[1] * x + c[2] * y + c[4]);
  const double g = std::hypot(gx, gy);
  if (g == 0.0) return r == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::abs(r) / g;
}

double dlt_reprojection_error(std::span<const double> p, std::span<const double> m) {
  require(p.size() == 12 && m.size() >= 5, ErrorCode::InvalidInput, "reprojection: bad input sizes");
  const double w = p[8] * m[0] + p[9] * m[1] + p[10] * m[2] + p[11];
  if (w == 0.0) return std::numeric_limits<double>::infinity();
  const double u = (p[0] * m[0] + p[1] * m[1] + p[2] * m[2] + p[3]) / w;
  const double v = (p[4] * m[0] + p[5] * m[1] + p[6] * m[2] + p[7]) / w;
  return std::hypot(u - m[3], v - m[4]);
}

double symmetric_epipolar_distance(const Mat& e, std::span<const double> m) {
  require(e.rows() == 3 && e.cols() == 3 && m.size() == 4, ErrorCode::InvalidInput, "epipolar: bad input sizes");
  const Vec x1 = {m[0], m[1], 1.0};
  const Vec x2 = {m[2], m[3], 1.0};
  const Vec l2 = e * x1;
  const Vec l1 = transpose(e) * x2;
  const double r = dot(x2, l2);
  const double n1 = l1[0] * l1[0] + l1[1] * l1[1];
  const double n2 = l2[0] * l2[0] + l2[1] * l2[1];
  if (n1 == 0.0 || n2 == 0.0) return r == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return std::sqrt(r * r * (1.0 / n1 + 1.0 / n2));
}

EssentialMat denormalize_essential(std::span<const double> e_norm, const NormTransform& t1, const NormTransform& t2) {
  require(e_norm.size() == 9, ErrorCode::InvalidInput, "denormalize_essential: need a 9-vector");
  const Mat en(3, 3, Vec(e_norm.begin(), e_norm.end()));
  const Mat e = transpose(t2.t) * en * t1.t;
  const Vec n = normalized(e.data());
  return EssentialMat{Mat(3, 3, n)};
}

double rotation_error_deg(const Mat& r_gt, const Mat& r_est) {
  const Mat q = transpose(r_gt) * r_est;
  const double c = (trace(q) - 1.0) / 2.0;
  const double s = 0.5 * std::hypot(q(2, 1) - q(1, 2), q(0, 2) - q(2, 0), q(1, 0) - q(0, 1));
  return std::atan2(s, c) * kRadToDeg;
}

double angle_between_deg(std::span<const double> a, std::span<const double> b) {
  const Vec ua = normalized(a), ub = normalized(b);
  double dm = 0.0, dp = 0.0;
  for (std::size_t i = 0; i < ua.size(); ++i) {
    dm += (ua[i] - ub[i]) * (ua[i] - ub[i]);
    dp += (ua[i] + ub[i]) * (ua[i] + ub[i]);
  }
  return 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp)) * kRadToDeg;
}

MetricRecord metrics(const Estimate& est, const TaskInstance& gt) {
  require(est.variant == gt.variant, ErrorCode::InvalidInput, "metrics: variant mismatch");
  MetricRecord rec;
  switch (gt.variant) {
    case Variant::Plane: {
      require(est.normal.has_value(), ErrorCode::InvalidInput, "metrics: plane estimate lacks a normal");
      const auto& n = std::get<PlaneModel>(gt.ground_truth).normal;
      const double a = angle_between_deg(*est.normal, n);
      rec.normal_angle_deg = std::min(a, 180.0 - a);
      break;
    }
    case Variant::Ellipse: {
      require(est.ellipse.has_value(), ErrorCode::InvalidInput, "metrics: ellipse estimate lacks parameters");
      const auto c_gt = ellipse_center(std::get<EllipseParams>(gt.ground_truth));
      try {
        const auto c = ellipse_center(*est.ellipse);
        rec.center_err = std::hypot(c[0] - c_gt[0], c[1] - c_gt[1]);
      } catch (const Error&) {
        rec.center_err = std::numeric_limits<double>::infinity();
      }
      break;
    }
    case Variant::Pnp: {
      require(est.pose.has_value(), ErrorCode::InvalidInput, "metrics: pnp estimate lacks a pose");
      const auto& p = std::get<Pose>(gt.ground_truth);
      rec.rotation_err_deg = rotation_error_deg(p.r, est.pose->r);
      Vec d(3);
      for (std::size_t k = 0; k < 3; ++k) d[k] = est.pose->t[k] - p.t[k];
      rec.translation_err = norm(d);
      break;
    }
    case Variant::Stereo: {
      require(est.pose.has_value(), ErrorCode::InvalidInput, "metrics: stereo estimate lacks a pose");
      const auto& p = std::get<StereoTruth>(gt.ground_truth).relative;
      rec.rotation_err_deg = rotation_error_deg(p.r, est.pose->r);
      rec.translation_err = angle_between_deg(est.pose->t, p.t);
      break;
    }
  }
  if (!est.inliers.empty()) {
    require(est.inliers.size() == gt.inlier_mask.size(), ErrorCode::InvalidInput, "metrics: mask length mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < est.inliers.size(); ++i) {
      const bool p = est.inliers[i] != 0, g = gt.inlier_mask[i] != 0;
      tp += p && g;
      fp += p && !g;
      fn += !p && g;
    }
    rec.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    rec.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 1.0;
  }
  return rec;
}

double map_score(std::span<const double> errors, double max_threshold, double step) {
  require(!errors.empty(), ErrorCode::InvalidInput, "map_score: empty error list");
  require(max_threshold > 0.0 && step > 0.0 && step <= max_threshold, ErrorCode::InvalidInput,
          "map_score: thresholds must be positive and ascending");
  const auto count = static_cast<std::size_t>(std::floor(max_threshold / step + 1e-9));
  double acc = 0.0;
  for (std::size_t k = 1; k <= count; ++k) {
    const double thr = step * static_cast<double>(k);
    const auto ok = std::ranges::count_if(errors, [thr](double e) { return e <= thr; });
    acc += static_cast<double>(ok) / static_cast<double>(errors.size());
  }
  return acc / static_cast<double>(count);
}

}  // namespace edfree
