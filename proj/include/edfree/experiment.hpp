#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "edfree/geometry.hpp"
#include "edfree/loss_edfree.hpp"
#include "edfree/optim.hpp"

namespace edfree {

/// Names accepted by ExperimentSpec::name.
const std::vector<std::string>& experiment_names();

struct ExperimentSpec {
  std::string name;
  std::size_t trials = 20;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;
  std::string sweep_variable = "outliers";  // "outliers" or "noise"
  std::vector<double> sweep;   // values of the sweep variable; one value when not sweeping
  LossParams loss;
  double lr = 1e-2;
  std::size_t iters = 1000;
  std::size_t outliers = 0;     // used when the sweep variable is noise
  std::optional<double> noise;  // used when the sweep variable is outliers; unset: generator default
  std::size_t threads = 0;      // 0: hardware concurrency
  bool timing = false;          // fill wall_ms; off keeps output byte-stable

  /// Per-experiment defaults for methods, sweep, loss parameters, lr and iterations.
  static ExperimentSpec defaults(const std::string& name);
  void validate() const;
  Variant variant() const;
  FitMode edfree_mode() const;
};

struct ResultRow {
  std::string experiment;
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string method;
  double sweep_value = 0.0;
  std::optional<double> rot_err_deg, trans_err, center_err, normal_angle_deg, precision, recall, map, jump_ratio,
      wall_ms;
};

struct TrialFailure {
  std::size_t trial = 0;
  std::string method;
  double sweep_value = 0.0;
  std::string reason;
};

struct ConvergenceLog {
  std::size_t trial = 0;
  std::string method;
  double sweep_value = 0.0;
  RunLog log;
};

struct GradCheckRow {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  std::string loss;
  double max_rel_err = 0.0;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<ResultRow> rows;          // ordered by sweep value, trial, method list position
  std::vector<TrialFailure> failures;
  std::vector<ConvergenceLog> logs;     // plane experiments only
  std::vector<GradCheckRow> gradcheck;  // gradcheck experiment only

  bool any_aborted() const noexcept { return !failures.empty(); }
};

ExperimentResult run_experiment(const ExperimentSpec& spec);

/// Generator settings of one (sweep value, trial) cell; not meaningful for gradcheck.
struct GenConfig;
GenConfig instance_config(const ExperimentSpec& spec, std::size_t sweep_index, std::size_t trial);

inline constexpr const char* kResultsHeader =
    "experiment,trial,seed,method,sweep_value,rot_err_deg,trans_err,center_err,normal_angle_deg,precision,recall,map,"
    "jump_ratio,wall_ms";

void write_results_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_gradcheck_csv(std::ostream& os, const std::vector<GradCheckRow>& rows);
void write_run_log(std::ostream& os, const ExperimentResult& result);

/// Writes results.csv, run.log, convergence CSVs, gradcheck.csv and SVG plots into `dir`.
void write_artifacts(const ExperimentResult& result, const std::string& dir);

// ---- gradient checking -----------------------------------------------------

enum class GradCheckKind { Generic, Weighted, Denoise, EdGrad };

std::string_view to_string(GradCheckKind k);

/// Random problem of the given kind drawn from `seed`; returns
/// max |analytic - central FD| / max(max |analytic|, 1e-12).
double gradcheck_max_rel_error(GradCheckKind kind, std::uint64_t seed, double step = 1e-6);

}  // namespace edfree
