#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edfree/experiment.hpp"

namespace edfree {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

/// True when the positive finite values span more than three decades.
bool use_log_scale(std::span<const double> values);

/// One polyline per series plus a legend. Throws InvalidInput when there is nothing to draw.
std::string render_svg(const PlotSpec& plot);

/// Error-vs-sweep plots, one per metric column with data: mean over trials per method.
std::vector<std::pair<std::string, PlotSpec>> sweep_plots(const std::vector<ResultRow>& rows);

/// Loss-vs-iteration plot of one trial's convergence logs, one series per method.
PlotSpec loss_plot(const std::vector<ConvergenceLog>& logs, std::size_t trial);

}  // namespace edfree
