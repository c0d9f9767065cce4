#include "edfree/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <thread>

#include "edfree/baselines.hpp"
#include "edfree/fitting.hpp"
#include "edfree/loss_edgrad.hpp"
#include "edfree/plot.hpp"
#include "edfree/synth.hpp"

namespace edfree {

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names = {
      "plane-single", "plane-multi", "ellipse-outliers", "ellipse-denoise", "ellipse-joint",
      "pnp-outliers", "pnp-denoise", "pnp-joint",        "stereo-synth",    "gradcheck"};
  return names;
}

ExperimentSpec ExperimentSpec::defaults(const std::string& name) {
  ExperimentSpec s;
  s.name = name;
  if (name == "plane-single") {
    s.methods = {"edfree"};
    s.sweep = {1};
    s.loss = {1e5, 1e-4, 0.0};
    s.lr = 1e-2;
    s.iters = 2000;
  } else if (name == "plane-multi") {
    s.methods = {"edfree", "edgrad"};
    s.sweep = {20};
    s.loss = {1e5, 1e-4, 0.0};
    s.lr = 0.1;
    s.iters = 20000;
  } else if (name == "ellipse-outliers") {
    s.methods = {"edfree", "dlt", "irls", "ransac"};
    s.sweep = {50};
    s.noise = 1e-2;
    s.loss = {1.0, 5e-3, 0.0};
    s.lr = 0.1;
  } else if (name == "ellipse-denoise") {
    s.methods = {"edfree", "dlt"};
    s.sweep_variable = "noise";
    s.sweep = {3e-2};
    s.loss = {0.0, 0.0, 1e-2};
    s.lr = 1e-3;
  } else if (name == "ellipse-joint") {
    s.methods = {"edfree", "edfree-weights", "dlt", "irls"};
    s.sweep = {50};
    s.noise = 3e-2;
    s.loss = {1.0, 5e-3, 1e-2};
    s.lr = 1e-2;
  } else if (name == "pnp-outliers") {
    s.methods = {"edfree", "ransac", "dlt"};
    s.sweep = {10, 30, 50, 70, 90, 110, 130, 150};
    s.noise = 5.0;
    s.loss = {10.0, 5e-3, 0.0};
    s.lr = 0.1;
  } else if (name == "pnp-denoise") {
    s.methods = {"edfree", "dlt"};
    s.sweep_variable = "noise";
    s.sweep = {20.0};
    s.loss = {0.0, 0.0, 1e-2};
    s.lr = 1e-3;
  } else if (name == "pnp-joint") {
    s.methods = {"edfree", "edfree-weights", "ransac"};
    s.sweep = {50};
    s.noise = 20.0;
    s.loss = {10.0, 5e-2, 1e-2};
    s.lr = 0.1;
  } else if (name == "stereo-synth") {
    s.methods = {"edfree", "edgrad", "ransac", "lmeds", "dlt"};
    s.sweep = {40};
    s.noise = 1.0;
    s.loss = {10.0, 1e-3, 0.0};
    s.lr = 0.1;
  } else if (name == "gradcheck") {
    s.methods = {"generic", "weighted", "denoise", "edgrad"};
    s.sweep_variable = "none";
    s.sweep = {0};
  } else {
    throw Error(ErrorCode::InvalidSpec, "unknown experiment '" + name + "'");
  }
  return s;
}

Variant ExperimentSpec::variant() const {
  if (name.starts_with("plane")) return Variant::Plane;
  if (name.starts_with("ellipse")) return Variant::Ellipse;
  if (name.starts_with("pnp")) return Variant::Pnp;
  if (name.starts_with("stereo")) return Variant::Stereo;
  throw Error(ErrorCode::InvalidSpec, "experiment '" + name + "' has no task variant");
}

FitMode ExperimentSpec::edfree_mode() const {
  if (name.ends_with("-denoise")) return FitMode::Displacements;
  if (name.ends_with("-joint")) return FitMode::Joint;
  return FitMode::Weights;
}

namespace {

bool known_method(const std::string& name, const std::string& m) {
  if (name == "gradcheck") return m == "generic" || m == "weighted" || m == "denoise" || m == "edgrad";
  if (m == "irls") return name.starts_with("ellipse");
  return m == "edfree" || m == "edfree-weights" || is_edgrad_label(m) || m == "dlt" || m == "ransac" || m == "lmeds";
}

}  // namespace

void ExperimentSpec::validate() const {
  const auto& names = experiment_names();
  require(std::find(names.begin(), names.end(), name) != names.end(), ErrorCode::InvalidSpec,
          ("unknown experiment '" + name + "'").c_str());
  require(trials >= 1, ErrorCode::InvalidSpec, "trials must be >= 1");
  require(!sweep.empty(), ErrorCode::InvalidSpec, "sweep range is empty");
  require(!methods.empty(), ErrorCode::InvalidSpec, "method list is empty");
  for (const auto& m : methods)
    require(known_method(name, m), ErrorCode::InvalidSpec, ("method '" + m + "' not valid for " + name).c_str());
  require(iters >= 1, ErrorCode::InvalidSpec, "iters must be >= 1");
  require(std::isfinite(lr) && lr > 0.0, ErrorCode::InvalidSpec, "lr must be positive");
  try {
    loss.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::InvalidSpec, e.what());
  }
  if (name == "gradcheck") return;
  require(sweep_variable == "outliers" || sweep_variable == "noise", ErrorCode::InvalidSpec,
          "sweep variable must be outliers or noise");
  for (double v : sweep) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::InvalidSpec, "sweep values must be finite and >= 0");
    if (sweep_variable == "outliers")
      require(v == std::floor(v), ErrorCode::InvalidSpec, "outlier counts must be integers");
  }
}

// ---- gradient checking -----------------------------------------------------

std::string_view to_string(GradCheckKind k) {
  switch (k) {
    case GradCheckKind::Generic: return "generic";
    case GradCheckKind::Weighted: return "weighted";
    case GradCheckKind::Denoise: return "denoise";
    case GradCheckKind::EdGrad: return "edgrad";
  }
  return "?";
}

namespace {

double rel_error(const Vec& analytic, const Vec& fd) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - fd[i]));
    scale = std::max(scale, std::abs(analytic[i]));
  }
  return diff / std::max(scale, 1e-12);
}

template <class F>
Vec central_fd(Vec x, F&& f, double h) {
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

Vec random_unit(CounterRng& rng, std::size_t d) {
  Vec v(d);
  for (double& x : v) x = rng.normal();
  return normalized(v);
}

}  // namespace

double gradcheck_max_rel_error(GradCheckKind kind, std::uint64_t seed, double step) {
  CounterRng rng(seed, 0x47524144);
  switch (kind) {
    case GradCheckKind::Generic: {
      const std::size_t n = 6 + rng.below(10), d = 3 + rng.below(6);
      Mat a(n, d);
      for (double& v : a.data()) v = rng.normal();
      const LossTarget target(random_unit(rng, d));
      const LossParams lp{rng.uniform(0.5, 2.0), rng.uniform(1e-3, 1e-1), 0.0};
      const GenericGrad gg = grad_generic(a, target, lp);
      const Vec analytic(gg.total.data().begin(), gg.total.data().end());
      const Vec x0(a.data().begin(), a.data().end());
      const Vec fd = central_fd(
          x0, [&](const Vec& x) { return loss_generic(Mat(n, d, x), target, lp).total; }, step);
      return rel_error(analytic, fd);
    }
    case GradCheckKind::Weighted: {
      const std::size_t n = 8 + rng.below(10), rpm = 1 + rng.below(2), d = 3 + rng.below(5);
      Mat x(n * rpm, d);
      for (double& v : x.data()) v = rng.normal();
      const LossTarget target(random_unit(rng, d));
      const LossParams lp{rng.uniform(0.5, 2.0), rng.uniform(1e-3, 1e-1), 0.0};
      FitState st = FitState::make(n, 0, 0.0);
      for (double& l : st.logits) l = rng.normal();
      const Vec analytic = grad_weighted(x, st, target, lp).d_logits;
      const Vec fd = central_fd(
          st.logits,
          [&](const Vec& l) {
            FitState s = st;
            s.logits = l;
            return loss_weighted(x, s, target, lp).total;
          },
          step);
      return rel_error(analytic, fd);
    }
    case GradCheckKind::Denoise: {
      GenConfig g;
      g.variant = rng.below(2) ? Variant::Ellipse : Variant::Pnp;
      g.seed = seed;
      g.n_points = 20 + rng.below(20);
      g.n_outliers = rng.below(5);
      const TaskInstance inst = generate(g);
      const FitProblem prob = make_fit_problem(inst);
      const DataMatrixBuilder builder(inst.variant);
      const LossTarget target(prob.target);
      const LossParams lp{rng.uniform(0.5, 2.0), rng.uniform(1e-3, 1e-1), rng.uniform(1e-3, 1e-1)};
      const std::size_t n = inst.size();
      FitState st = FitState::make(n, 2, 0.0);
      for (double& l : st.logits) l = rng.normal();
      for (double& v : st.displacements.data()) v = 0.01 * rng.normal();
      const DenoiseGrad dg = grad_denoise(prob.measurements, st, builder, target, lp);
      Vec analytic = dg.d_logits;
      analytic.insert(analytic.end(), dg.d_displacements.data().begin(), dg.d_displacements.data().end());
      Vec x0 = st.logits;
      x0.insert(x0.end(), st.displacements.data().begin(), st.displacements.data().end());
      const Vec fd = central_fd(
          x0,
          [&](const Vec& x) {
            FitState s = st;
            std::copy(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(n), s.logits.begin());
            std::copy(x.begin() + static_cast<std::ptrdiff_t>(n), x.end(), s.displacements.data().begin());
            return loss_denoise(prob.measurements, s, builder, target, lp).total;
          },
          step);
      return rel_error(analytic, fd);
    }
    case GradCheckKind::EdGrad: {
      const std::size_t n = 8 + rng.below(10), d = 3 + rng.below(4);
      Mat x(n, d);
      for (double& v : x.data()) v = rng.normal();
      const LossTarget target(random_unit(rng, d));
      FitState st = FitState::make(n, 0, 0.0);
      for (double& l : st.logits) l = rng.normal();
      const Vec analytic = eig_l2_grad(x, st, target, EdGradConfig{}).d_logits;
      const Vec fd = central_fd(
          st.logits,
          [&](const Vec& l) {
            FitState s = st;
            s.logits = l;
            return eig_l2_loss(x, s, target);
          },
          step);
      return rel_error(analytic, fd);
    }
  }
  return 0.0;
}

// ---- trials ----------------------------------------------------------------

namespace {

struct JobOutput {
  std::vector<ResultRow> rows;
  std::vector<TrialFailure> failures;
  std::vector<ConvergenceLog> logs;
  std::vector<GradCheckRow> gradcheck;
};

ResultRow base_row(const ExperimentSpec& spec, std::size_t trial, std::uint64_t seed, const std::string& method,
                   double sweep_value) {
  ResultRow r;
  r.experiment = spec.name;
  r.trial = trial;
  r.seed = seed;
  r.method = method;
  r.sweep_value = sweep_value;
  return r;
}

void fill_metrics(ResultRow& row, const MetricRecord& m) {
  row.rot_err_deg = m.rotation_err_deg;
  row.trans_err = m.translation_err;
  row.center_err = m.center_err;
  row.normal_angle_deg = m.normal_angle_deg;
  row.precision = m.precision;
  row.recall = m.recall;
  if (m.rotation_err_deg && std::isfinite(*m.rotation_err_deg)) {
    const double e = *m.rotation_err_deg;
    row.map = map_score(std::span<const double>(&e, 1), 20.0, 5.0);
  }
}

Vec mask_weights(const std::vector<std::uint8_t>& mask) {
  Vec w(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 : 0.0;
  return w;
}

void run_method(const ExperimentSpec& spec, const TaskInstance& inst, const std::string& method, ResultRow& row,
                JobOutput& out) {
  auto fail = [&](const std::string& reason) {
    out.failures.push_back({row.trial, method, row.sweep_value, reason});
  };
  const bool is_edfree = method == "edfree" || method == "edfree-weights";
  if (is_edfree || is_edgrad_label(method)) {
    DirectFitConfig cfg;
    cfg.loss = is_edfree ? LossKind::EdFree : LossKind::EdGrad;
    cfg.mode = method == "edfree" ? spec.edfree_mode() : FitMode::Weights;
    cfg.params = spec.loss;
    if (cfg.mode == FitMode::Weights) cfg.params.gamma = 0.0;
    cfg.lr = spec.lr;
    cfg.iters = spec.iters;
    DirectFitResult r = run_direct_fit(inst, cfg);
    if (r.log.aborted()) fail(*r.log.abort_reason);
    row.jump_ratio = detect_gradient_jump(r.log).max_ratio;
    const Vec w = r.state.weights();
    const bool has_disp = cfg.mode != FitMode::Weights;
    std::vector<std::uint8_t> mask;
    if (cfg.mode != FitMode::Displacements) mask = threshold_weights(w);
    try {
      const Model m = fit_model(inst, r.problem, w, has_disp ? &r.state.displacements : nullptr);
      fill_metrics(row, metrics(model_estimate(m, inst, w, mask), inst));
    } catch (const Error& e) {
      if (!r.log.aborted()) fail(e.what());
    }
    if (spec.variant() == Variant::Plane) out.logs.push_back({row.trial, method, row.sweep_value, std::move(r.log)});
    return;
  }
  try {
    const FitProblem prob = make_fit_problem(inst);
    if (method == "dlt") {
      const Vec w(inst.size(), 1.0);
      fill_metrics(row, metrics(model_estimate(fit_model(inst, prob, w), inst, w), inst));
    } else if (method == "ransac" || method == "lmeds") {
      RansacConfig rc = RansacConfig::defaults(inst.variant);
      rc.seed = row.seed;
      const RobustResult rr = method == "ransac" ? ransac_fit(inst, rc) : lmeds_fit(inst, rc);
      const Vec w = mask_weights(rr.inliers);
      fill_metrics(row, metrics(model_estimate(rr.model, inst, w, rr.inliers), inst));
    } else if (method == "irls") {
      const IrlsResult ir = irls_cauchy_ellipse(inst.measurements);
      Estimate est;
      est.variant = Variant::Ellipse;
      est.ellipse = ir.ellipse;
      fill_metrics(row, metrics(est, inst));
    }
  } catch (const Error& e) {
    fail(e.what());
  }
}

}  // namespace

GenConfig instance_config(const ExperimentSpec& spec, std::size_t sweep_index, std::size_t trial) {
  require(sweep_index < spec.sweep.size(), ErrorCode::InvalidInput, "sweep index out of range");
  GenConfig g;
  g.variant = spec.variant();
  g.seed = spec.seed + trial;
  const double sv = spec.sweep[sweep_index];
  if (spec.sweep_variable == "outliers") {
    g.n_outliers = static_cast<std::size_t>(sv);
    g.noise_sigma = spec.noise;
  } else {
    g.n_outliers = spec.outliers;
    g.noise_sigma = sv;
  }
  return g;
}

namespace {

JobOutput run_job(const ExperimentSpec& spec, std::size_t sweep_index, std::size_t trial) {
  JobOutput out;
  const std::uint64_t seed = spec.seed + trial;
  const double sv = spec.sweep[sweep_index];

  if (spec.name == "gradcheck") {
    for (const std::string& m : spec.methods) {
      const GradCheckKind kind = m == "generic"    ? GradCheckKind::Generic
                                 : m == "weighted" ? GradCheckKind::Weighted
                                 : m == "denoise"  ? GradCheckKind::Denoise
                                                   : GradCheckKind::EdGrad;
      ResultRow row = base_row(spec, trial, seed, m, sv);
      try {
        out.gradcheck.push_back({trial, seed, m, gradcheck_max_rel_error(kind, seed)});
      } catch (const Error& e) {
        out.failures.push_back({trial, m, sv, e.what()});
      }
      out.rows.push_back(std::move(row));
    }
    return out;
  }

  const GenConfig g = instance_config(spec, sweep_index, trial);
  TaskInstance inst;
  try {
    inst = generate(g);
  } catch (const Error& e) {
    for (const std::string& m : spec.methods) {
      out.rows.push_back(base_row(spec, trial, seed, m, sv));
      out.failures.push_back({trial, m, sv, e.what()});
    }
    return out;
  }
  for (const std::string& m : spec.methods) {
    ResultRow row = base_row(spec, trial, seed, m, sv);
    const auto t0 = std::chrono::steady_clock::now();
    run_method(spec, inst, m, row, out);
    if (spec.timing)
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const std::size_t jobs = spec.sweep.size() * spec.trials;
  std::vector<JobOutput> outputs(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs;) outputs[j] = run_job(spec, j / spec.trials, j % spec.trials);
  };
  std::size_t nthreads = spec.threads ? spec.threads : std::max(1u, std::thread::hardware_concurrency());
  nthreads = std::min(nthreads, jobs);
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  ExperimentResult res;
  res.spec = spec;
  for (JobOutput& o : outputs) {
    std::move(o.rows.begin(), o.rows.end(), std::back_inserter(res.rows));
    std::move(o.failures.begin(), o.failures.end(), std::back_inserter(res.failures));
    std::move(o.logs.begin(), o.logs.end(), std::back_inserter(res.logs));
    std::move(o.gradcheck.begin(), o.gradcheck.end(), std::back_inserter(res.gradcheck));
  }
  return res;
}

// ---- output ----------------------------------------------------------------

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  os << kResultsHeader << '\n';
  for (const ResultRow& r : rows) {
    os << r.experiment << ',' << r.trial << ',' << r.seed << ',' << r.method << ',' << fmt(r.sweep_value) << ','
       << cell(r.rot_err_deg) << ',' << cell(r.trans_err) << ',' << cell(r.center_err) << ','
       << cell(r.normal_angle_deg) << ',' << cell(r.precision) << ',' << cell(r.recall) << ',' << cell(r.map) << ','
       << cell(r.jump_ratio) << ',' << cell(r.wall_ms) << '\n';
  }
}

void write_gradcheck_csv(std::ostream& os, const std::vector<GradCheckRow>& rows) {
  os << "trial,seed,loss,max_rel_err\n";
  for (const GradCheckRow& r : rows) os << r.trial << ',' << r.seed << ',' << r.loss << ',' << fmt(r.max_rel_err) << '\n';
}

void write_run_log(std::ostream& os, const ExperimentResult& result) {
  const ExperimentSpec& s = result.spec;
  os << "experiment " << s.name << "\ntrials " << s.trials << "\nseed " << s.seed << "\nmethods";
  for (const auto& m : s.methods) os << ' ' << m;
  os << "\nsweep " << s.sweep_variable;
  for (double v : s.sweep) os << ' ' << fmt(v);
  os << "\nalpha " << fmt(s.loss.alpha) << "\nbeta " << fmt(s.loss.beta) << "\ngamma " << fmt(s.loss.gamma)
     << "\nlr " << fmt(s.lr) << "\niters " << s.iters << "\nrows " << result.rows.size() << "\nfailures "
     << result.failures.size() << '\n';
  for (const TrialFailure& f : result.failures)
    os << "trial " << f.trial << " method " << f.method << " sweep " << fmt(f.sweep_value) << ": " << f.reason << '\n';
}

void write_artifacts(const ExperimentResult& result, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  auto open = [&](const fs::path& p) {
    std::ofstream f(p, std::ios::binary);
    require(static_cast<bool>(f), ErrorCode::InvalidInput, ("cannot write " + p.string()).c_str());
    return f;
  };
  {
    auto f = open(root / "results.csv");
    write_results_csv(f, result.rows);
  }
  {
    auto f = open(root / "run.log");
    write_run_log(f, result);
  }
  if (!result.gradcheck.empty()) {
    auto f = open(root / "gradcheck.csv");
    write_gradcheck_csv(f, result.gradcheck);
  }
  if (!result.logs.empty()) {
    fs::create_directories(root / "logs");
    for (const ConvergenceLog& l : result.logs) {
      auto f = open(root / "logs" / (l.method + "_trial" + std::to_string(l.trial) + ".csv"));
      l.log.write_csv(f);
    }
    auto f = open(root / "loss_vs_iteration.svg");
    f << render_svg(loss_plot(result.logs, result.logs.front().trial));
  }
  for (const auto& [name, plot] : sweep_plots(result.rows)) {
    auto f = open(root / (name + ".svg"));
    f << render_svg(plot);
  }
}

}  // namespace edfree
