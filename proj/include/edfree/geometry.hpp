#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "edfree/linalg.hpp"

namespace edfree {

enum class Variant { Plane, Ellipse, Pnp, Stereo };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view name);

/// Minimal sample size: 3 plane, 5 ellipse, 6 PnP, 8 stereo.
std::size_t minimal_sample(Variant v);

/// Conic A x^2 + 2B xy + C y^2 + 2D x + 2E y + F = 0 with unit-norm coefficients.
struct EllipseParams {
  std::array<double, 6> coeffs{};
};

struct Pose {
  Mat r = Mat::identity(3);
  Vec t = Vec(3, 0.0);
};

/// Unit Frobenius-norm essential matrix, x2^T E x1 = 0.
struct EssentialMat {
  Mat e = Mat(3, 3);
};

struct PlaneModel {
  Vec normal = {0.0, 0.0, 1.0};
  Vec point = {0.0, 0.0, 0.0};
};

struct StereoTruth {
  EssentialMat essential;
  Pose relative;  // second camera: x2 = R x1 + t
};

using GroundTruth = std::variant<PlaneModel, EllipseParams, Pose, StereoTruth>;

/// Pinhole camera used to move between pixels and normalized coordinates.
struct Camera {
  double focal = 800.0;
  double cx = 320.0;
  double cy = 240.0;
  double width = 640.0;
  double height = 480.0;
};

/// Raw measurements of one task. Column layout per variant:
///   Plane   x y z
///   Ellipse x y
///   Pnp     X Y Z u v   (u, v normalized image coordinates)
///   Stereo  u v u' v'   (normalized image coordinates, both views)
struct TaskInstance {
  Variant variant = Variant::Plane;
  Mat measurements;
  Mat pixels;  // Pnp: N x 2, Stereo: N x 4, otherwise empty
  std::vector<std::uint8_t> inlier_mask;
  GroundTruth ground_truth;
  Camera camera;

  std::size_t size() const noexcept { return measurements.rows(); }
};

std::size_t measurement_width(Variant v);

/// Isotropic 2D similarity in homogeneous form.
struct NormTransform {
  Mat t = Mat::identity(3);
};

// ---- data-matrix rows ------------------------------------------------------

Vec build_ellipse_row(std::span<const double> p);
Mat build_pnp_rows(std::span<const double> q);
/// Row r with r . vec(E) = x2^T E x1 for row-major vec(E), q = (u, v, u', v').
Vec build_essential_row(std::span<const double> q);

/// Per noisy coordinate, the derivative of the rows of one measurement.
/// Ellipse: noisy coords (x, y); Pnp: (u, v). Other variants are rejected.
std::vector<Mat> builder_jacobian(Variant v, std::span<const double> measurement);

struct PlaneMatrix {
  Mat x;   // N x 3, mean-subtracted points
  Vec mu;  // weighted mean
};

PlaneMatrix build_plane_matrix(const Mat& points, std::span<const double> weights);

/// Builds data matrices for the weight-independent variants.
class DataMatrixBuilder {
 public:
  explicit DataMatrixBuilder(Variant v);

  Variant variant() const noexcept { return variant_; }
  std::size_t dim() const noexcept;
  std::size_t rows_per_measurement() const noexcept;
  std::size_t measurement_width() const noexcept;
  /// Index of the first noisy coordinate within a measurement and their count.
  std::size_t noisy_offset() const noexcept;
  std::size_t noisy_count() const noexcept;

  Mat rows(std::span<const double> measurement) const;
  std::vector<Mat> jacobian(std::span<const double> measurement) const;

  Mat build(const Mat& measurements) const;
  /// Rows from measurements whose noisy coordinates are shifted by displacements (N x noisy_count).
  Mat build(const Mat& measurements, const Mat& displacements) const;

 private:
  Variant variant_;
};

// ---- normalization ---------------------------------------------------------

struct Normalized2D {
  Mat points;
  NormTransform transform;
};

/// Centroid to the origin, RMS distance sqrt(2).
Normalized2D hartley_normalize(const Mat& points);

/// E' proportional to T2^-T E T1^-1, unit norm, flattened row-major.
Vec transform_gt_essential(const EssentialMat& e_gt, const NormTransform& t1, const NormTransform& t2);

/// A task prepared for direct fitting: the measurements rows are built from and the target vector.
struct FitProblem {
  Variant variant = Variant::Plane;
  Mat measurements;
  Vec target;
  NormTransform t1, t2;  // stereo only
};

FitProblem make_fit_problem(const TaskInstance& inst);

/// Unit target vector for an instance: plane normal, conic coefficients,
/// vec([R|t]) normalized, or vec(E).
Vec ground_truth_vector(const TaskInstance& inst);

// ---- solving ---------------------------------------------------------------

struct DltSolution {
  Vec e;
  bool unique = true;  // false when the two smallest eigenvalues coincide
  Vec eigenvalues;
};

/// Smallest eigenvector of X^T W X; rows_per_measurement rows share a weight.
DltSolution solve_dlt(const Mat& x, std::span<const double> weights);

/// Recovers a proper pose from a DLT 12-vector; `sample` is one (X Y Z u v)
/// correspondence used as a positive-depth witness.
Pose pose_from_dlt(std::span<const double> p, std::span<const double> sample);

std::array<double, 2> ellipse_center(const EllipseParams& params);

/// Picks the candidate (R, t) with most positive-depth midpoint triangulations.
/// `matches` is N x 4 of normalized (u, v, u', v').
Pose decompose_essential(const EssentialMat& e, const Mat& matches);

/// Conic coefficients for center (cx, cy), semi-axes (a, b) and rotation angle, unit norm.
EllipseParams ellipse_from_geometry(double cx, double cy, double a, double b, double angle);

/// Rotation matrix from axis (need not be unit) and angle in radians.
Mat rotation_from_axis_angle(std::span<const double> axis, double angle);

// ---- residuals -------------------------------------------------------------

/// First-order geometric distance of (x, y) to the conic with coefficients [A, B, C, D, E, F].
double conic_sampson_distance(std::span<const double> coeffs, double x, double y);

/// Image distance between (u, v) and the projection of (X, Y, Z) under the 3x4 matrix p (row-major).
double dlt_reprojection_error(std::span<const double> p, std::span<const double> measurement);

/// sqrt of the symmetric epipolar distance of one (u, v, u', v') match.
double symmetric_epipolar_distance(const Mat& e, std::span<const double> match);

/// Undoes Hartley normalization: E proportional to T2^T E' T1, unit norm.
EssentialMat denormalize_essential(std::span<const double> e_norm, const NormTransform& t1, const NormTransform& t2);

// ---- metrics ---------------------------------------------------------------

struct Estimate {
  Variant variant = Variant::Plane;
  std::optional<Vec> normal;
  std::optional<EllipseParams> ellipse;
  std::optional<Pose> pose;
  std::vector<std::uint8_t> inliers;  // predicted mask; empty when not available
};

struct MetricRecord {
  std::optional<double> rotation_err_deg;
  std::optional<double> translation_err;
  std::optional<double> center_err;
  std::optional<double> normal_angle_deg;
  std::optional<double> precision;
  std::optional<double> recall;
};

double rotation_error_deg(const Mat& r_gt, const Mat& r_est);
double angle_between_deg(std::span<const double> a, std::span<const double> b);

MetricRecord metrics(const Estimate& est, const TaskInstance& gt);

/// Mean over thresholds step, 2 step, ..., max_threshold of fraction(err <= threshold).
double map_score(std::span<const double> errors, double max_threshold, double step);

}  // namespace edfree
