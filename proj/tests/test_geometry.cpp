#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "edfree/geometry.hpp"
#include "edfree/synth.hpp"
#include "test_util.hpp"

using namespace edfree;

namespace {

// Rotation angle from the quaternion of R (Shepperd's method), independent of the trace formula.
double quaternion_angle_deg(const Mat& r) {
  const double tr = trace(r);
  double w;
  if (tr > 0) {
    w = 0.5 * std::sqrt(1 + tr);
  } else {
    int i = 0;
    if (r(1, 1) > r(0, 0)) i = 1;
    if (r(2, 2) > r(i, i)) i = 2;
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const double s = std::sqrt(1 + r(i, i) - r(j, j) - r(k, k)) * 2;
    w = (r(k, j) - r(j, k)) / s;
  }
  return 2 * std::acos(std::min(1.0, std::abs(w))) * 180 / M_PI;
}

}  // namespace

TEST_CASE("plane matrix") {
  const Mat same{{1, 2, 3}, {1, 2, 3}, {1, 2, 3}};
  const Vec w{0.2, 0.5, 0.9};
  CHECK(frobenius_norm(build_plane_matrix(same, w).x) < 1e-15);
  const Mat sym{{1, 2, 3}, {-1, -2, -3}};
  const PlaneMatrix pm = build_plane_matrix(sym, Vec{1, 1});
  CHECK(pm.mu == Vec{0, 0, 0});
  CHECK(pm.x == sym);
  CHECK_THROWS_AS(build_plane_matrix(sym, Vec{0, 0}), Error);

  CounterRng rng(41);
  const Mat p = tu::random_mat(rng, 20, 3);
  Vec wr(20);
  for (double& v : wr) v = rng.uniform();
  const PlaneMatrix r = build_plane_matrix(p, wr);
  double sw = 0;
  Vec mean(3, 0);
  for (std::size_t i = 0; i < 20; ++i) {
    sw += wr[i];
    for (int k = 0; k < 3; ++k) mean[k] += wr[i] * p(i, k);
  }
  for (double& m : mean) m /= sw;
  Mat cov(3, 3);
  for (std::size_t i = 0; i < 20; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov(a, b) += wr[i] * (p(i, a) - mean[a]) * (p(i, b) - mean[b]);
  Mat xtwx(3, 3);
  for (std::size_t i = 0; i < 20; ++i)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) xtwx(a, b) += wr[i] * r.x(i, a) * r.x(i, b);
  CHECK(tu::max_abs_diff(xtwx, cov) < 1e-12);
}

TEST_CASE("ellipse rows") {
  CHECK(build_ellipse_row(Vec{0, 0}) == Vec{0, 0, 0, 0, 0, 1});
  CHECK(build_ellipse_row(Vec{1, 1}) == Vec{1, 2, 1, 2, 2, 1});
  const EllipseParams e = ellipse_from_geometry(0.2, -0.1, 0.8, 0.3, 0.7);
  for (double th = 0; th < 6.28; th += 0.3) {
    const double x = 0.2 + 0.8 * std::cos(th) * std::cos(0.7) - 0.3 * std::sin(th) * std::sin(0.7);
    const double y = -0.1 + 0.8 * std::cos(th) * std::sin(0.7) + 0.3 * std::sin(th) * std::cos(0.7);
    CHECK(std::abs(dot(build_ellipse_row(Vec{x, y}), e.coeffs)) < 1e-12);
  }
}

TEST_CASE("pnp rows") {
  const Mat r0 = build_pnp_rows(Vec{0, 0, 0, 0.3, -0.2});
  const Mat expect{{0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0, -0.3}, {0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0.2}};
  CHECK(r0 == expect);
  CounterRng rng(42);
  const Mat rot = tu::random_rotation(rng);
  const Vec t{0.1, -0.3, 5};
  Vec p(12);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) p[4 * i + j] = rot(i, j);
    p[4 * i + 3] = t[i];
  }
  for (int k = 0; k < 10; ++k) {
    const Vec X{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    Vec c = rot * X;
    for (int i = 0; i < 3; ++i) c[i] += t[i];
    const Mat rows = build_pnp_rows(Vec{X[0], X[1], X[2], c[0] / c[2], c[1] / c[2]});
    const Vec res = rows * p;
    CHECK(std::abs(res[0]) < 1e-10);
    CHECK(std::abs(res[1]) < 1e-10);
  }
  const Mat a = build_pnp_rows(Vec{1, 2, 3, 0.5, 0.25});
  const Mat b = build_pnp_rows(Vec{2, 4, 6, 0.5, 0.25});
  for (std::size_t j = 0; j < 12; ++j) {
    const bool scales = j < 3 || (j >= 4 && j < 7) || (j >= 8 && j < 11);
    for (std::size_t i = 0; i < 2; ++i) CHECK(b(i, j) == (scales ? 2 * a(i, j) : a(i, j)));
  }
}

TEST_CASE("essential rows") {
  CHECK(build_essential_row(Vec{0, 0, 0, 0}) == Vec{0, 0, 0, 0, 0, 0, 0, 0, 1});
  GenConfig g;
  g.variant = Variant::Stereo;
  g.noise_sigma = 0.0;
  g.seed = 4;
  const TaskInstance inst = generate(g);
  const Vec e = tu::to_vec(std::get<StereoTruth>(inst.ground_truth).essential.e);
  for (std::size_t i = 0; i < inst.size(); ++i) CHECK(std::abs(dot(build_essential_row(inst.measurements.row(i)), e)) < 1e-10);
  const Vec q{0.3, -0.2, 0.1, 0.4}, q2{0.6, -0.4, 0.2, 0.8};
  const Vec r1 = build_essential_row(q), r2 = build_essential_row(q2);
  for (int j : {0, 1, 3, 4}) CHECK(r2[j] == doctest::Approx(4 * r1[j]));
  for (int j : {2, 5, 6, 7}) CHECK(r2[j] == doctest::Approx(2 * r1[j]));
  CHECK(r2[8] == 1.0);
}

TEST_CASE("builder jacobians") {
  const auto je = builder_jacobian(Variant::Ellipse, Vec{0, 0});
  CHECK(tu::to_vec(je[0]) == Vec{0, 0, 0, 2, 0, 0});
  const auto jp = builder_jacobian(Variant::Pnp, Vec{1, 2, 3, 0.1, 0.2});
  CHECK(jp[0].row(0)[8] == -1);
  CHECK(jp[0].row(0)[9] == -2);
  CHECK(jp[0].row(0)[10] == -3);
  CHECK(jp[0].row(0)[11] == -1);
  CHECK_THROWS_AS(builder_jacobian(Variant::Plane, Vec{1, 2, 3}), Error);
  CHECK_THROWS_AS(builder_jacobian(Variant::Stereo, Vec{1, 2, 3, 4}), Error);

  CounterRng rng(43);
  for (Variant v : {Variant::Ellipse, Variant::Pnp}) {
    const DataMatrixBuilder b(v);
    Vec m(b.measurement_width());
    for (double& x : m) x = rng.normal();
    const auto jac = b.jacobian(m);
    for (std::size_t c = 0; c < b.noisy_count(); ++c) {
      const std::size_t idx = b.noisy_offset() + c;
      const double h = 1e-6;
      Vec mp = m, mm = m;
      mp[idx] += h;
      mm[idx] -= h;
      const Mat fd = (1.0 / (2 * h)) * (b.rows(mp) - b.rows(mm));
      CHECK(tu::max_abs_diff(fd, jac[c]) < 1e-7);
    }
  }
}

TEST_CASE("hartley normalization") {
  const Mat two{{0, 0}, {2, 0}};
  const Normalized2D n = hartley_normalize(two);
  CHECK(n.points(0, 0) == doctest::Approx(-std::sqrt(2.0)));
  CHECK(n.points(1, 0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(n.points(0, 1) == 0.0);
  CHECK_THROWS_AS(hartley_normalize(Mat{{1, 1}, {1, 1}}), Error);
  CounterRng rng(44);
  const Mat p = tu::random_mat(rng, 30, 2) * 3.0;
  const Normalized2D a = hartley_normalize(p);
  double cx = 0, cy = 0, rms = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    cx += a.points(i, 0);
    cy += a.points(i, 1);
    rms += a.points(i, 0) * a.points(i, 0) + a.points(i, 1) * a.points(i, 1);
  }
  CHECK(std::abs(cx / 30) < 1e-12);
  CHECK(std::abs(cy / 30) < 1e-12);
  CHECK(std::abs(std::sqrt(rms / 30) - std::sqrt(2.0)) < 1e-12);
  const Normalized2D b = hartley_normalize(a.points);
  CHECK(tu::max_abs_diff(b.transform.t, Mat::identity(3)) < 1e-12);
}

TEST_CASE("essential target transform") {
  GenConfig g;
  g.variant = Variant::Stereo;
  g.noise_sigma = 0.0;
  g.seed = 5;
  const TaskInstance inst = generate(g);
  const auto& e = std::get<StereoTruth>(inst.ground_truth).essential;
  const Vec same = transform_gt_essential(e, NormTransform{}, NormTransform{});
  const Vec orig = tu::to_vec(e.e);
  const double s = dot(same, orig);
  CHECK(std::abs(std::abs(s) - 1) < 1e-12);

  const FitProblem prob = make_fit_problem(inst);
  const Mat x = DataMatrixBuilder(Variant::Stereo).build(prob.measurements);
  const Vec r = x * prob.target;
  for (double v : r) CHECK(std::abs(v) < 1e-10);

  NormTransform t1, t2;
  t1.t = Mat::diagonal(Vec{2, 2, 1});
  t2.t = Mat::diagonal(Vec{2, 2, 1});
  NormTransform u1, u2;
  u1.t = Mat::diagonal(Vec{5, 5, 1});
  u2.t = Mat::diagonal(Vec{5, 5, 1});
  const Vec a = transform_gt_essential(e, t1, t2), b = transform_gt_essential(e, u1, u2);
  CHECK(norm(a) == doctest::Approx(1.0));
  CHECK(norm(b) == doctest::Approx(1.0));
  // Entry (i, j) of T^-T E T^-1 picks up 1/s for every image-coordinate index.
  Vec manual(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) manual[3 * i + j] = orig[3 * i + j] * (i < 2 ? 0.5 : 1) * (j < 2 ? 0.5 : 1);
  const Vec mn = normalized(manual);
  CHECK(std::abs(std::abs(dot(mn, a)) - 1) < 1e-12);
  NormTransform singular;
  singular.t = Mat(3, 3);
  CHECK_THROWS_AS(transform_gt_essential(e, singular, t2), Error);
}

TEST_CASE("solve_dlt") {
  GenConfig g;
  g.variant = Variant::Ellipse;
  g.noise_sigma = 0.0;
  g.seed = 6;
  const TaskInstance inst = generate(g);
  const Mat x = DataMatrixBuilder(Variant::Ellipse).build(inst.measurements);
  const Vec w(inst.size(), 1.0);
  const DltSolution s = solve_dlt(x, w);
  CHECK(std::abs(dot(s.e, std::get<EllipseParams>(inst.ground_truth).coeffs)) >= 1 - 1e-9);
  Vec w3 = w;
  for (double& v : w3) v *= 7.5;
  CHECK(std::abs(dot(solve_dlt(x, w3).e, s.e)) == doctest::Approx(1.0).epsilon(1e-12));

  const Mat deg{{0, 0, 1}, {0, 0, -1}};
  CHECK_FALSE(solve_dlt(deg, Vec{1, 1}).unique);

  const Mat plane{{-1, 0, 0}, {1, 0, 0}, {0, -1, 0}, {0, 1, 0}, {0, 0, 49}};
  const DltSolution p = solve_dlt(plane, Vec{1, 1, 1, 1, 0});
  CHECK(std::abs(p.e[2]) == doctest::Approx(1.0));
}

TEST_CASE("pose from dlt") {
  Vec id{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  const Pose p0 = pose_from_dlt(id, Vec{0, 0, 1, 0, 0});
  CHECK(tu::max_abs_diff(p0.r, Mat::identity(3)) < 1e-12);
  CHECK(norm(p0.t) < 1e-12);

  CounterRng rng(45);
  const Mat rot = tu::random_rotation(rng);
  const Vec t{0.3, -0.1, 6};
  Vec p(12);
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) p[4 * i + j] = -3 * rot(i, j);
    p[4 * i + 3] = -3 * t[i];
  }
  const Pose r = pose_from_dlt(p, Vec{0, 0, 0, 0.05, -0.02});
  CHECK(tu::max_abs_diff(r.r, rot) < 1e-10);
  for (int i = 0; i < 3; ++i) CHECK(r.t[i] == doctest::Approx(t[i]));

  GenConfig g;
  g.variant = Variant::Pnp;
  g.noise_sigma = 0.0;
  g.seed = 7;
  const TaskInstance inst = generate(g);
  const Mat x = DataMatrixBuilder(Variant::Pnp).build(inst.measurements);
  const DltSolution s = solve_dlt(x, Vec(inst.size(), 1.0));
  const Pose est = pose_from_dlt(s.e, inst.measurements.row(0));
  CHECK(rotation_error_deg(std::get<Pose>(inst.ground_truth).r, est.r) < 1e-6);
  CHECK_THROWS_AS(pose_from_dlt(Vec(12, 0.0), Vec{0, 0, 1, 0, 0}), Error);
}

TEST_CASE("ellipse center") {
  const Vec c = normalized(Vec{1, 0, 1, 0, 0, -1});
  EllipseParams circle;
  std::copy(c.begin(), c.end(), circle.coeffs.begin());
  const auto z = ellipse_center(circle);
  CHECK(std::abs(z[0]) < 1e-15);
  CHECK(std::abs(z[1]) < 1e-15);
  // (x - 0.3)^2 + (y + 0.2)^2 = 0.25
  const Vec c2 = normalized(Vec{1, 0, 1, -0.3, 0.2, 0.09 + 0.04 - 0.25});
  EllipseParams shifted;
  std::copy(c2.begin(), c2.end(), shifted.coeffs.begin());
  const auto s = ellipse_center(shifted);
  CHECK(std::abs(s[0] - 0.3) < 1e-12);
  CHECK(std::abs(s[1] + 0.2) < 1e-12);
  EllipseParams parabola;
  parabola.coeffs = {1, 0, 0, 0, -0.5, 0};
  CHECK_THROWS_AS(ellipse_center(parabola), Error);
}

TEST_CASE("essential decomposition") {
  CounterRng rng(46);
  const Mat rot = rotation_from_axis_angle(Vec{0.2, 1, 0.1}, 0.3);
  const Vec t = normalized(Vec{1, 0.2, -0.1});
  Mat matches(40, 4);
  for (std::size_t i = 0; i < 40; ++i) {
    const Vec X{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(4, 8)};
    Vec y = rot * X;
    for (int k = 0; k < 3; ++k) y[k] += t[k];
    matches(i, 0) = X[0] / X[2];
    matches(i, 1) = X[1] / X[2];
    matches(i, 2) = y[0] / y[2];
    matches(i, 3) = y[1] / y[2];
  }
  EssentialMat e;
  e.e = skew(t) * rot;
  e.e *= 1.0 / frobenius_norm(e.e);
  const Pose p = decompose_essential(e, matches);
  CHECK(rotation_error_deg(rot, p.r) < 1e-6);
  CHECK(angle_between_deg(p.t, t) < 1e-6);

  EssentialMat ez;
  ez.e = skew(Vec{0, 0, 1});
  ez.e *= 1.0 / frobenius_norm(ez.e);
  CHECK_THROWS_AS(decompose_essential(ez, Mat(10, 4)), Error);

  // Noisy matches: the chosen candidate has the most positive-depth DLT triangulations.
  Mat noisy = matches;
  for (double& v : noisy.data()) v += 0.002 * rng.normal();
  Eigen::Matrix3d em;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) em(i, j) = e.e(i, j);
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(em, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU(), v = svd.matrixV();
  if (u.determinant() < 0) u = -u;
  if (v.determinant() < 0) v = -v;
  Eigen::Matrix3d w;
  w << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  int best = -1;
  Eigen::Matrix3d best_r;
  for (int c = 0; c < 4; ++c) {
    const Eigen::Matrix3d r = u * (c < 2 ? Eigen::Matrix3d(w) : Eigen::Matrix3d(w.transpose())) * v.transpose();
    const Eigen::Vector3d tc = (c % 2 ? -1.0 : 1.0) * u.col(2);
    int count = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      Eigen::Matrix<double, 4, 4> a;
      Eigen::Matrix<double, 3, 4> p1 = Eigen::Matrix<double, 3, 4>::Zero(), p2;
      p1.block<3, 3>(0, 0).setIdentity();
      p2.block<3, 3>(0, 0) = r;
      p2.col(3) = tc;
      a.row(0) = noisy(i, 0) * p1.row(2) - p1.row(0);
      a.row(1) = noisy(i, 1) * p1.row(2) - p1.row(1);
      a.row(2) = noisy(i, 2) * p2.row(2) - p2.row(0);
      a.row(3) = noisy(i, 3) * p2.row(2) - p2.row(1);
      Eigen::JacobiSVD<Eigen::Matrix4d> s(a, Eigen::ComputeFullV);
      Eigen::Vector4d X = s.matrixV().col(3);
      X /= X[3];
      const double z2 = (r * X.head<3>() + tc)[2];
      count += X[2] > 0 && z2 > 0;
    }
    if (count > best) {
      best = count;
      best_r = r;
    }
  }
  const Pose pn = decompose_essential(e, noisy);
  Mat br(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) br(i, j) = best_r(i, j);
  CHECK(rotation_error_deg(br, pn.r) < 1e-9);
}

TEST_CASE("metrics") {
  CounterRng rng(47);
  GenConfig g;
  g.variant = Variant::Pnp;
  g.seed = 8;
  g.n_outliers = 20;
  const TaskInstance inst = generate(g);
  Estimate est;
  est.variant = Variant::Pnp;
  est.pose = std::get<Pose>(inst.ground_truth);
  est.inliers = inst.inlier_mask;
  const MetricRecord m = metrics(est, inst);
  CHECK(*m.rotation_err_deg == 0.0);
  CHECK(*m.translation_err == 0.0);
  CHECK(*m.precision == 1.0);
  CHECK(*m.recall == 1.0);

  const Mat rz = rotation_from_axis_angle(Vec{0, 0, 1}, 10 * M_PI / 180);
  CHECK(rotation_error_deg(Mat::identity(3), rz) == doctest::Approx(10.0).epsilon(1e-12));
  for (int k = 0; k < 100; ++k) {
    const Mat a = tu::random_rotation(rng), b = tu::random_rotation(rng);
    CHECK(std::abs(rotation_error_deg(a, b) - quaternion_angle_deg(transpose(a) * b)) < 1e-9);
  }

  Estimate plane;
  plane.variant = Variant::Plane;
  plane.normal = Vec{0, 0, -1};
  GenConfig gp;
  gp.variant = Variant::Plane;
  CHECK(*metrics(plane, generate(gp)).normal_angle_deg == 0.0);
  CHECK_THROWS_AS(metrics(plane, inst), Error);
}

TEST_CASE("map score") {
  CHECK(map_score(Vec{0, 0, 0}, 20, 5) == 1.0);
  CHECK(map_score(Vec{25, 30}, 20, 5) == 0.0);
  CHECK(map_score(Vec{5, 15}, 20, 10) == 0.75);
  CHECK_THROWS_AS(map_score(Vec{}, 20, 5), Error);
}
