#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "edfree/loss_edgrad.hpp"
#include "edfree/optim.hpp"
#include "edfree/synth.hpp"
#include "test_util.hpp"

using namespace edfree;

namespace {

FitState random_state(CounterRng& rng, std::size_t n) {
  FitState s = FitState::make(n, 0, 0.0);
  for (double& l : s.logits) l = rng.normal();
  return s;
}

// Smallest eigenvector of X^T W X by Eigen, compared against both signs of e_gt.
double oracle_loss(const Mat& x, const Vec& w, const Vec& e) {
  const std::size_t d = x.cols();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) m(a, b) += w[i] * x(i, a) * x(i, b);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd v = es.eigenvectors().col(0);
  double plus = 0, minus = 0;
  for (std::size_t k = 0; k < d; ++k) {
    plus += std::pow(v[k] - e[k], 2);
    minus += std::pow(v[k] + e[k], 2);
  }
  return std::min(plus, minus);
}

}  // namespace

TEST_CASE("noiseless inlier selection gives zero loss") {
  Mat pts{{0, 0, 1}, {1, 0, 1}, {0, 1, 1}, {2, 3, 1}, {5, 1, 40}};
  FitState s = FitState::make(5, 0, 30.0);
  s.logits[4] = -800;
  const LossTarget t(Vec{0, 0, 1});
  CHECK(eig_l2_loss_plane(pts, s, t) < 1e-20);
}

TEST_CASE("sign ambiguity handled") {
  const Mat x{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
  const FitState u = FitState::make(3, 0, 0, WeightMode::Unit);
  CHECK(eig_l2_loss(x, u, LossTarget(Vec{1, 0, 0})) == 0.0);
  CHECK(eig_l2_loss(x, u, LossTarget(Vec{-1, 0, 0})) == 0.0);
  CHECK(eig_l2_loss(x, u, LossTarget(Vec{0, 1, 0})) == doctest::Approx(2.0));
}

TEST_CASE("loss equals sign-enumeration oracle") {
  CounterRng rng(31);
  for (int k = 0; k < 20; ++k) {
    const Mat x = tu::random_mat(rng, 12, 4);
    const Vec e = tu::random_unit(rng, 4);
    const FitState s = random_state(rng, 12);
    CHECK(eig_l2_loss(x, s, LossTarget(e)) == doctest::Approx(oracle_loss(x, s.weights(), e)).epsilon(1e-10));
  }
}

TEST_CASE("gradient matches finite differences on separated spectra") {
  CounterRng rng(32);
  int checked = 0;
  while (checked < 20) {
    const Mat x = tu::random_mat(rng, 10, 4);
    const LossTarget t(tu::random_unit(rng, 4));
    const FitState s = random_state(rng, 10);
    const EdGradResult g = eig_l2_grad(x, s, t, {});
    const Vec& ev = g.diag.eigenvalues;
    double gap = INFINITY;
    for (std::size_t i = 1; i < ev.size(); ++i) gap = std::min(gap, ev[i] - ev[i - 1]);
    if (gap < 1e-3 * ev.back()) continue;
    ++checked;
    const Vec fd = tu::fd_grad(s.logits, [&](const Vec& l) {
      FitState c = s;
      c.logits = l;
      return eig_l2_loss(x, c, t);
    });
    CHECK(tu::rel_err(g.d_logits, fd) < 1e-5);
    CHECK(g.loss == doctest::Approx(eig_l2_loss(x, s, t)));
    CHECK(g.diag.max_k > 0);
    CHECK_FALSE(g.diag.clamped);
  }
}

TEST_CASE("equal eigenvalues: error without guard, clamp with guard") {
  const Mat x{{1, 0, 0}, {0, 1, 0}, {0, 0, 2}};
  const FitState u = FitState::make(3, 0, 0, WeightMode::Unit);
  FitState s = FitState::make(3, 0, 0.0);
  const LossTarget t(Vec{1, 0, 0});
  try {
    eig_l2_grad(x, s, t, {});
    FAIL("expected DegenerateEigengap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateEigengap);
  }
  const EdGradResult g = eig_l2_grad(x, s, t, {1e-12, true});
  CHECK(g.diag.clamped);
  CHECK(g.diag.max_k == doctest::Approx(1e12));
  CHECK_THROWS_AS((EdGradConfig{-1, true}.validate()), Error);
  (void)u;
}

TEST_CASE("nearest index tracks the eigenvector closest to the target") {
  const Mat x{{1, 0, 0}, {0, 2, 0}, {0, 0, 3}};
  const FitState s = FitState::make(3, 0, 0.0);
  CHECK(eig_l2_grad(x, s, LossTarget(Vec{0, 0, 1}), {}).diag.nearest_index == 2);
  CHECK(eig_l2_grad(x, s, LossTarget(Vec{1, 0, 0}), {}).diag.nearest_index == 0);
}

TEST_CASE("method labels") {
  CHECK(is_edgrad_label("svd"));
  CHECK(is_edgrad_label("eigh"));
  CHECK(is_edgrad_label("edgrad"));
  CHECK_FALSE(is_edgrad_label("edfree"));
}

TEST_CASE("plane multi-outlier runs include a gradient jump at a switch") {
  std::size_t hits = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GenConfig g;
    g.variant = Variant::Plane;
    g.seed = seed;
    g.n_outliers = 20;
    DirectFitConfig cfg;
    cfg.loss = LossKind::EdGrad;
    cfg.params = {1e5, 1e-4, 0};
    cfg.lr = 0.1;
    cfg.iters = 20000;
    const auto r = run_direct_fit(generate(g), cfg);
    const auto& rec = r.log.records;
    for (std::size_t i = 1; i < rec.size(); ++i) {
      const bool sw = rec[i].min_vector_switched || rec[i].nearest_index != rec[i - 1].nearest_index;
      if (!sw) continue;
      for (std::size_t j : {i, i + 1}) {
        if (j >= rec.size() || rec[j].grad_norm == 0 || rec[j - 1].grad_norm == 0) continue;
        const double a = rec[j].grad_norm, b = rec[j - 1].grad_norm;
        if (std::max(a, b) / std::min(a, b) >= 10) {
          ++hits;
          goto next;
        }
      }
    }
  next:;
  }
  CHECK(hits >= 1);
}
