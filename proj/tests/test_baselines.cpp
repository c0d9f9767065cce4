#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "edfree/baselines.hpp"
#include "edfree/synth.hpp"
#include "test_util.hpp"

using namespace edfree;

namespace {

TaskInstance make(Variant v, std::uint64_t seed, std::size_t outliers, std::optional<double> noise = std::nullopt) {
  GenConfig g;
  g.variant = v;
  g.seed = seed;
  g.n_outliers = outliers;
  g.noise_sigma = noise;
  return generate(g);
}

double sorted_median(Vec v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double center_error(const EllipseParams& e, const TaskInstance& inst) {
  const auto a = ellipse_center(e), b = ellipse_center(std::get<EllipseParams>(inst.ground_truth));
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

}  // namespace

TEST_CASE("fit_model helpers") {
  const TaskInstance inst = make(Variant::Plane, 1, 0, 0.0);
  const FitProblem prob = make_fit_problem(inst);
  const Model m = fit_model(inst, prob, Vec(inst.size(), 1.0));
  CHECK(std::abs(std::abs(m.v[2]) - 1) < 1e-12);
  for (double r : model_residuals(m, inst)) CHECK(r < 1e-12);
  CHECK(threshold_weights(Vec{0.2, 0.5, 0.51}) == std::vector<std::uint8_t>{0, 0, 1});
  CHECK_THROWS_AS(fit_model(inst, prob, Vec(3, 1.0)), Error);
}

TEST_CASE("ransac on clean data matches DLT") {
  for (Variant v : {Variant::Plane, Variant::Ellipse, Variant::Pnp, Variant::Stereo}) {
    const TaskInstance inst = make(v, 2, 0, 0.0);
    RansacConfig cfg = RansacConfig::defaults(v);
    cfg.max_iters = 50;
    const RobustResult r = ransac_fit(inst, cfg);
    CHECK(std::ranges::count(r.inliers, 1) == static_cast<long>(inst.size()));
    const Model dlt = fit_model(inst, make_fit_problem(inst), Vec(inst.size(), 1.0));
    CHECK(std::abs(std::abs(dot(r.model.v, dlt.v)) - norm(dlt.v) * norm(r.model.v)) < 1e-9);
  }
}

TEST_CASE("ransac plane with outliers") {
  const TaskInstance inst = make(Variant::Plane, 3, 20);
  const RobustResult r = ransac_fit(inst, RansacConfig::defaults(Variant::Plane));
  CHECK(angle_between_deg(Vec(r.model.v.begin(), r.model.v.begin() + 3), Vec{0, 0, 1}) < 1.0);
  const RobustResult again = ransac_fit(inst, RansacConfig::defaults(Variant::Plane));
  CHECK(again.model.v == r.model.v);
  CHECK(again.inliers == r.inliers);
}

TEST_CASE("ransac threshold monotonicity for the winning sample") {
  const TaskInstance inst = make(Variant::Ellipse, 4, 50);
  RansacConfig lo = RansacConfig::defaults(Variant::Ellipse);
  const RobustResult a = ransac_fit(inst, lo);
  RansacConfig hi = lo;
  hi.threshold = 2 * lo.threshold;
  const Vec r = model_residuals(a.model, inst);
  std::size_t small = 0, big = 0;
  for (double x : r) {
    small += x <= lo.threshold;
    big += x <= hi.threshold;
  }
  CHECK(big >= small);
  CHECK(static_cast<std::size_t>(std::ranges::count(a.inliers, 1)) >= minimal_sample(Variant::Ellipse));
}

TEST_CASE("lmeds") {
  const TaskInstance clean = make(Variant::Ellipse, 5, 0, 0.0);
  RansacConfig cfg = RansacConfig::defaults(Variant::Ellipse);
  cfg.max_iters = 50;
  const RobustResult c = lmeds_fit(clean, cfg);
  CHECK(std::abs(std::abs(dot(c.model.v, std::get<EllipseParams>(clean.ground_truth).coeffs)) - 1) < 1e-9);

  GenConfig g;
  g.variant = Variant::Plane;
  g.seed = 6;
  g.n_points = 60;
  g.n_outliers = 40;
  const TaskInstance plane = generate(g);
  const RobustResult r = lmeds_fit(plane, RansacConfig::defaults(Variant::Plane));
  Model truth{Variant::Plane, {0, 0, 1, -1}};
  Vec rr = model_residuals(r.model, plane), rt = model_residuals(truth, plane);
  for (double& x : rr) x *= x;
  for (double& x : rt) x *= x;
  CHECK(sorted_median(rr) <= 1.5 * sorted_median(rt));
  const RobustResult again = lmeds_fit(plane, RansacConfig::defaults(Variant::Plane));
  CHECK(again.model.v == r.model.v);
}

TEST_CASE("irls cauchy") {
  const TaskInstance clean = make(Variant::Ellipse, 7, 0, 0.0);
  const IrlsResult one = irls_cauchy_ellipse(clean.measurements, 1);
  const Vec dlt = solve_dlt(DataMatrixBuilder(Variant::Ellipse).build(clean.measurements), Vec(clean.size(), 1.0)).e;
  for (int k = 0; k < 6; ++k) CHECK(std::abs(one.ellipse.coeffs[k] - dlt[k]) < 1e-10);

  int wins = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const TaskInstance inst = make(Variant::Ellipse, 100 + s, 20);
    const IrlsResult ir = irls_cauchy_ellipse(inst.measurements);
    for (double w : ir.weights) {
      CHECK(w > 0.0);
      CHECK(w <= 1.0);
    }
    EllipseParams plain;
    const Vec d = solve_dlt(DataMatrixBuilder(Variant::Ellipse).build(inst.measurements), Vec(inst.size(), 1.0)).e;
    std::copy(d.begin(), d.end(), plain.coeffs.begin());
    wins += center_error(ir.ellipse, inst) < center_error(plain, inst);
  }
  CHECK(wins >= 18);
  CHECK_THROWS_AS(irls_cauchy_ellipse(Mat(5, 2), 3), Error);
  CHECK_THROWS_AS(irls_cauchy_ellipse(Mat(10, 2), 3), Error);
}

TEST_CASE("config validation and no consensus") {
  CHECK_THROWS_AS((RansacConfig{0.0, 10, 0, 0}.validate()), Error);
  CHECK_THROWS_AS((RansacConfig{0.1, 0, 0, 0}.validate()), Error);
  const TaskInstance inst = make(Variant::Ellipse, 8, 30);
  RansacConfig cfg = RansacConfig::defaults(Variant::Ellipse);
  cfg.min_sample = inst.size();
  cfg.threshold = 1e-12;
  cfg.max_iters = 1;
  try {
    ransac_fit(inst, cfg);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NoConsensus);
  }
}
