#include "edfree/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edfree/synth.hpp"

namespace edfree {

namespace {

std::vector<std::size_t> draw_sample(CounterRng& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(k);
  return idx;
}

double median_of(Vec v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

template <class Score>
RobustResult sample_and_score(const TaskInstance& inst, const RansacConfig& cfg, Score score) {
  cfg.validate();
  const std::size_t k = cfg.min_sample ? cfg.min_sample : minimal_sample(inst.variant);
  require(inst.size() >= k, ErrorCode::InvalidInput, "robust fit: fewer measurements than the minimal sample");
  const FitProblem prob = make_fit_problem(inst);
  CounterRng rng(cfg.seed, 0x5A4D);
  RobustResult best;
  double best_score = 0.0;
  bool have = false;
  for (std::size_t it = 0; it < cfg.max_iters; ++it) {
    const std::vector<std::size_t> sample = draw_sample(rng, inst.size(), k);
    Model m;
    try {
      m = fit_model_subset(inst, prob, sample);
    } catch (const Error&) {
      continue;
    }
    const Vec r = model_residuals(m, inst);
    const double s = score(r);
    if (!have || s < best_score) {
      have = true;
      best_score = s;
      best.model = std::move(m);
      best.best_iteration = it;
    }
  }
  if (!have) throw Error(ErrorCode::NoConsensus, "robust fit: every minimal sample was degenerate");
  return best;
}

RobustResult refit(const TaskInstance& inst, RobustResult res, const std::vector<std::uint8_t>& mask) {
  const FitProblem prob = make_fit_problem(inst);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  res.model = fit_model_subset(inst, prob, idx);
  res.inliers = mask;
  return res;
}

}  // namespace

RansacConfig RansacConfig::defaults(Variant v) {
  RansacConfig c;
  switch (v) {
    case Variant::Plane: c.threshold = 0.01; break;
    case Variant::Ellipse: c.threshold = 0.025; break;
    case Variant::Pnp: c.threshold = 0.01; break;
    case Variant::Stereo: c.threshold = 0.01; break;
  }
  return c;
}

void RansacConfig::validate() const {
  require(std::isfinite(threshold) && threshold > 0.0, ErrorCode::InvalidInput, "RansacConfig: threshold must be > 0");
  require(max_iters >= 1, ErrorCode::InvalidInput, "RansacConfig: max_iters must be >= 1");
}

RobustResult ransac_fit(const TaskInstance& inst, const RansacConfig& cfg) {
  // Scored as minus the consensus size so that the earliest best sample wins ties.
  RobustResult best = sample_and_score(inst, cfg, [&](const Vec& r) {
    return -static_cast<double>(std::ranges::count_if(r, [&](double x) { return x <= cfg.threshold; }));
  });
  const Vec r = model_residuals(best.model, inst);
  std::vector<std::uint8_t> mask(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) mask[i] = r[i] <= cfg.threshold;
  const std::size_t k = cfg.min_sample ? cfg.min_sample : minimal_sample(inst.variant);
  if (static_cast<std::size_t>(std::ranges::count(mask, 1)) < k)
    throw Error(ErrorCode::NoConsensus, "ransac_fit: best consensus is smaller than the minimal sample");
  return refit(inst, std::move(best), mask);
}

RobustResult lmeds_fit(const TaskInstance& inst, const RansacConfig& cfg) {
  RobustResult best = sample_and_score(inst, cfg, [](const Vec& r) {
    Vec sq(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) sq[i] = r[i] * r[i];
    return median_of(std::move(sq));
  });
  const Vec r = model_residuals(best.model, inst);
  Vec sq(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) sq[i] = r[i] * r[i];
  const std::size_t n = inst.size();
  const std::size_t p = cfg.min_sample ? cfg.min_sample : minimal_sample(inst.variant);
  const double corr = n > p ? 1.0 + 5.0 / static_cast<double>(n - p) : 1.0;
  const double sigma = std::max(1.4826 * corr * std::sqrt(median_of(sq)), 1e-12);
  std::vector<std::uint8_t> mask(n);
  for (std::size_t i = 0; i < n; ++i) mask[i] = r[i] <= 2.5 * sigma;
  if (static_cast<std::size_t>(std::ranges::count(mask, 1)) < p)
    throw Error(ErrorCode::NoConsensus, "lmeds_fit: too few inliers under the robust scale");
  return refit(inst, std::move(best), mask);
}

IrlsResult irls_cauchy_ellipse(const Mat& points, std::size_t iters) {
  require(points.cols() == 2 && points.rows() >= 6, ErrorCode::InvalidInput, "irls: need N >= 6 2D points");
  require(iters >= 1, ErrorCode::InvalidInput, "irls: need at least one iteration");
  const DataMatrixBuilder builder(Variant::Ellipse);
  const Mat x = builder.build(points);
  const std::size_t n = points.rows();
  IrlsResult out;
  out.weights.assign(n, 1.0);
  Vec e;
  for (std::size_t it = 0; it < iters; ++it) {
    DltSolution sol;
    try {
      sol = solve_dlt(x, out.weights);
    } catch (const Error& err) {
      throw Error(ErrorCode::DegenerateInput, std::string("irls: degenerate weighted system: ") + err.what());
    }
    require(sol.unique, ErrorCode::DegenerateInput, "irls: weighted system has no unique null vector");
    e = std::move(sol.e);
    out.iterations = it + 1;
    Vec r(n);
    for (std::size_t i = 0; i < n; ++i) r[i] = std::abs(dot(x.row(i), e));
    const double mad = median_of(r);
    if (!(mad > 0.0) || !std::isfinite(mad)) break;
    const double c = 2.3849 * mad;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = r[i] / c;
      out.weights[i] = 1.0 / (1.0 + u * u);
    }
  }
  std::ranges::copy(e, out.ellipse.coeffs.begin());
  return out;
}

}  // namespace edfree
