#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edfree/geometry.hpp"
#include "edfree/loss_edfree.hpp"
#include "edfree/loss_edgrad.hpp"

namespace edfree {

struct AdamState {
  Vec m;
  Vec v;
  std::uint64_t t = 0;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState make(std::size_t n, double lr);
};

/// Bias-corrected Adam update in place. Throws AbortNonFinite on a non-finite gradient.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grad);

/// params -= lr * grad. Throws AbortNonFinite on non-finite input.
void gd_step(std::span<double> params, std::span<const double> grad, double lr);

struct RunRecord {
  std::size_t iter = 0;
  double loss_total = 0.0;
  double eig = 0.0;
  double aux = 0.0;
  double disp = 0.0;
  double grad_norm = 0.0;  // norm of dL/d(weights, displacements) over the optimized blocks
  std::optional<std::size_t> nearest_index;  // edgrad runs only
  bool min_vector_switched = false;          // edgrad: |e_min(t) . e_min(t-1)| < 1/sqrt(2)
  std::optional<Vec> weights;                // strided snapshots
};

struct RunLog {
  std::vector<RunRecord> records;
  std::optional<std::string> abort_reason;

  bool aborted() const noexcept { return abort_reason.has_value(); }
  /// CSV with header iter,loss_total,eig,aux,disp,grad_norm.
  void write_csv(std::ostream& os) const;
  static RunLog read_csv(std::istream& is);
};

enum class LossKind { EdFree, EdGrad };
enum class FitMode { Weights, Displacements, Joint };
enum class OptimizerKind { Adam, Gd };

struct DirectFitConfig {
  LossKind loss = LossKind::EdFree;
  FitMode mode = FitMode::Weights;
  LossParams params;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 1e-2;
  std::size_t iters = 1000;
  double init_logit = 4.0;
  EdGradConfig edgrad;
  MeanGradient mean_gradient = MeanGradient::Full;
  std::size_t snapshot_stride = 0;  // 0 disables weight snapshots
};

struct DirectFitResult {
  FitState state;
  RunLog log;
  FitProblem problem;
};

/// Optimizes per-measurement weights and/or displacements of one instance against its ground truth.
/// Loss or optimizer failures end the run early with an abort record; the last state is returned.
DirectFitResult run_direct_fit(const TaskInstance& inst, const DirectFitConfig& cfg);

struct GradientJump {
  double max_ratio = 1.0;
  std::size_t index = 0;  // record index of the later of the two iterations
  std::size_t iter = 0;
};

/// Largest larger/smaller ratio of consecutive gradient norms. Pairs with an
/// exactly zero norm have no defined ratio and are skipped.
GradientJump detect_gradient_jump(const RunLog& log);

}  // namespace edfree
