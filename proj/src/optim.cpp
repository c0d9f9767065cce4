#include "edfree/optim.hpp"

#include <cmath>
#include <algorithm>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace edfree {

AdamState AdamState::make(std::size_t n, double lr) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.lr = lr;
  return s;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grad) {
  require(params.size() == grad.size() && s.m.size() == grad.size() && s.v.size() == grad.size(),
          ErrorCode::InvalidInput, "adam_step: shape mismatch");
  if (!all_finite(grad)) throw Error(ErrorCode::AbortNonFinite, "adam_step: non-finite gradient");
  ++s.t;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] -= s.lr * mh / (std::sqrt(vh) + s.eps);
  }
  if (!all_finite(std::span<const double>(params.data(), params.size())))
    throw Error(ErrorCode::AbortNonFinite, "adam_step: non-finite parameters");
}

void gd_step(std::span<double> params, std::span<const double> grad, double lr) {
  require(params.size() == grad.size(), ErrorCode::InvalidInput, "gd_step: shape mismatch");
  if (!all_finite(grad) || !std::isfinite(lr)) throw Error(ErrorCode::AbortNonFinite, "gd_step: non-finite input");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
  if (!all_finite(std::span<const double>(params.data(), params.size())))
    throw Error(ErrorCode::AbortNonFinite, "gd_step: non-finite parameters");
}

void RunLog::write_csv(std::ostream& os) const {
  os << "iter,loss_total,eig,aux,disp,grad_norm\n";
  char buf[256];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.iter, r.loss_total, r.eig, r.aux, r.disp,
                  r.grad_norm);
    os << buf;
  }
}

RunLog RunLog::read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "iter,loss_total,eig,aux,disp,grad_norm")
    throw Error(ErrorCode::InvalidInput, "RunLog: bad CSV header");
  RunLog log;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 6) throw Error(ErrorCode::InvalidInput, "RunLog: expected 6 columns");
    RunRecord r;
    r.iter = std::stoull(cells[0]);
    r.loss_total = std::stod(cells[1]);
    r.eig = std::stod(cells[2]);
    r.aux = std::stod(cells[3]);
    r.disp = std::stod(cells[4]);
    r.grad_norm = std::stod(cells[5]);
    log.records.push_back(r);
  }
  return log;
}

namespace {

struct Evaluation {
  LossValue value;
  Vec d_weights;
  Vec d_logits;
  Mat d_disp;
  std::optional<std::size_t> nearest;
  Vec e_min;
};

class Stepper {
 public:
  Stepper(OptimizerKind kind, double lr, std::size_t n) : kind_(kind), lr_(lr), adam_(AdamState::make(n, lr)) {}

  void step(std::span<double> params, std::span<const double> grad) {
    if (kind_ == OptimizerKind::Adam)
      adam_step(adam_, params, grad);
    else
      gd_step(params, grad, lr_);
  }

 private:
  OptimizerKind kind_;
  double lr_;
  AdamState adam_;
};

}  // namespace

DirectFitResult run_direct_fit(const TaskInstance& inst, const DirectFitConfig& cfg) {
  cfg.params.validate();
  require(std::isfinite(cfg.lr) && cfg.lr >= 0.0, ErrorCode::InvalidInput, "run_direct_fit: bad learning rate");
  const bool uses_disp = cfg.mode != FitMode::Weights;
  const bool uses_weights = cfg.mode != FitMode::Displacements;
  if (uses_disp) {
    require(inst.variant == Variant::Ellipse || inst.variant == Variant::Pnp, ErrorCode::InvalidInput,
            "run_direct_fit: displacements require an ellipse or PnP instance");
    require(cfg.loss == LossKind::EdFree, ErrorCode::InvalidInput,
            "run_direct_fit: displacement fitting is only defined for the ED-free loss");
  }

  DirectFitResult out;
  out.problem = make_fit_problem(inst);
  const FitProblem& prob = out.problem;
  const LossTarget target(prob.target);
  const std::size_t n = inst.size();
  const std::optional<DataMatrixBuilder> builder =
      inst.variant == Variant::Plane ? std::nullopt : std::optional<DataMatrixBuilder>(inst.variant);
  const std::size_t k = uses_disp ? builder->noisy_count() : 0;
  out.state = FitState::make(n, k, cfg.init_logit, uses_weights ? WeightMode::Sigmoid : WeightMode::Unit);
  FitState& state = out.state;
  const Mat x = builder ? builder->build(prob.measurements) : Mat();

  auto evaluate = [&]() {
    Evaluation ev;
    if (cfg.loss == LossKind::EdGrad) {
      const EdGradResult r = inst.variant == Variant::Plane
                                 ? eig_l2_grad_plane(prob.measurements, state, target, cfg.edgrad)
                                 : eig_l2_grad(x, state, target, cfg.edgrad);
      ev.value.total = r.loss;
      ev.value.eig_term = r.loss;
      ev.d_weights = r.d_weights;
      ev.d_logits = r.d_logits;
      ev.nearest = r.diag.nearest_index;
      ev.e_min = r.diag.e_min;
      return ev;
    }
    if (inst.variant == Variant::Plane) {
      ev.value = loss_plane(prob.measurements, state, target, cfg.params);
      WeightedGrad g = grad_plane(prob.measurements, state, target, cfg.params, cfg.mean_gradient);
      ev.d_weights = std::move(g.d_weights);
      ev.d_logits = std::move(g.d_logits);
    } else if (!uses_disp) {
      ev.value = loss_weighted(x, state, target, cfg.params);
      WeightedGrad g = grad_weighted(x, state, target, cfg.params);
      ev.d_weights = std::move(g.d_weights);
      ev.d_logits = std::move(g.d_logits);
    } else {
      ev.value = loss_denoise(prob.measurements, state, *builder, target, cfg.params);
      DenoiseGrad g = grad_denoise(prob.measurements, state, *builder, target, cfg.params);
      ev.d_weights = std::move(g.d_weights);
      ev.d_logits = std::move(g.d_logits);
      ev.d_disp = std::move(g.d_displacements);
    }
    return ev;
  };

  Vec prev_e_min;
  Stepper logit_opt(cfg.optimizer, cfg.lr, n);
  Stepper disp_opt(cfg.optimizer, cfg.lr, n * k);
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    try {
      const Evaluation ev = evaluate();
      RunRecord rec;
      rec.iter = it;
      rec.loss_total = ev.value.total;
      rec.eig = ev.value.eig_term;
      rec.aux = ev.value.aux_term;
      rec.disp = ev.value.disp_term;
      double g2 = 0.0;
      if (uses_weights)
        for (double g : ev.d_weights) g2 += g * g;
      if (uses_disp)
        for (double g : ev.d_disp.data()) g2 += g * g;
      rec.grad_norm = std::sqrt(g2);
      rec.nearest_index = ev.nearest;
      if (!ev.e_min.empty()) {
        rec.min_vector_switched = !prev_e_min.empty() && std::abs(dot(prev_e_min, ev.e_min)) < std::sqrt(0.5);
        prev_e_min = ev.e_min;
      }
      if (cfg.snapshot_stride > 0 && it % cfg.snapshot_stride == 0) rec.weights = state.weights();
      out.log.records.push_back(std::move(rec));
      const auto& last = out.log.records.back();
      if (!std::isfinite(last.loss_total) || !std::isfinite(last.grad_norm))
        throw Error(ErrorCode::AbortNonFinite, "run_direct_fit: non-finite loss or gradient");
      if (uses_weights) logit_opt.step(state.logits, ev.d_logits);
      if (uses_disp) disp_opt.step(state.displacements.data(), ev.d_disp.data());
    } catch (const Error& e) {
      out.log.abort_reason = std::string(to_string(e.code())) + " at iteration " + std::to_string(it) + ": " + e.what();
      break;
    }
  }
  return out;
}

GradientJump detect_gradient_jump(const RunLog& log) {
  require(log.records.size() >= 2, ErrorCode::InvalidInput, "detect_gradient_jump: need at least two records");
  GradientJump out;
  out.index = 1;
  out.iter = log.records[1].iter;
  for (std::size_t i = 1; i < log.records.size(); ++i) {
    const double a = log.records[i - 1].grad_norm;
    const double b = log.records[i].grad_norm;
    const double hi = std::max(a, b), lo = std::min(a, b);
    if (lo == 0.0) continue;
    const double ratio = hi / lo;
    if (ratio > out.max_ratio) {
      out.max_ratio = ratio;
      out.index = i;
      out.iter = log.records[i].iter;
    }
  }
  return out;
}

}  // namespace edfree
