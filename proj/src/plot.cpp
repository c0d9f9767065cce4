#include "edfree/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

namespace edfree {

bool use_log_scale(std::span<const double> values) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v <= 0.0) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return hi > 0.0 && hi / lo > 1e3;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

}  // namespace

std::string render_svg(const PlotSpec& plot) {
  std::vector<double> ys, xs;
  for (const Series& s : plot.series) {
    require(s.x.size() == s.y.size(), ErrorCode::InvalidInput, "series x and y lengths differ");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xs.push_back(s.x[i]);
      ys.push_back(s.y[i]);
    }
  }
  require(!xs.empty(), ErrorCode::InvalidInput, "nothing to plot");

  const bool logy = use_log_scale(ys);
  auto ty = [&](double y) { return logy ? std::log10(y) : y; };
  double x0 = *std::min_element(xs.begin(), xs.end()), x1 = *std::max_element(xs.begin(), xs.end());
  double y0 = std::numeric_limits<double>::infinity(), y1 = -y0;
  for (double y : ys) {
    if (logy && y <= 0.0) continue;
    y0 = std::min(y0, ty(y));
    y1 = std::max(y1, ty(y));
  }
  if (x1 == x0) {
    x0 -= 0.5;
    x1 += 0.5;
  }
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }

  const double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (ty(y) - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(plot.title)
     << "</text>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  os << "<text class=\"x-label\" x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
     << "\" text-anchor=\"middle\" font-size=\"13\">" << escape(plot.x_label) << "</text>\n";
  os << "<text class=\"y-label\" x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"13\" "
     << "transform=\"rotate(-90 16 " << (T + H - B) / 2 << ")\">" << escape(plot.y_label)
     << (logy ? " (log scale)" : "") << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0;
    const double fy = y0 + (y1 - y0) * k / 4.0;
    const double yl = logy ? std::pow(10.0, fy) : fy;
    os << "<text x=\"" << px(fx) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
       << num(fx) << "</text>\n";
    os << "<text x=\"" << L - 6 << "\" y=\"" << H - B - (fy - y0) / (y1 - y0) * (H - T - B) + 3
       << "\" text-anchor=\"end\" font-size=\"10\">" << num(yl) << "</text>\n";
  }

  for (std::size_t si = 0; si < plot.series.size(); ++si) {
    const Series& s = plot.series[si];
    const char* color = kColors[si % std::size(kColors)];
    os << "<polyline class=\"series\" data-name=\"" << escape(s.name) << "\" fill=\"none\" stroke=\"" << color
       << "\" stroke-width=\"1.5\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || (logy && s.y[i] <= 0.0)) continue;
      os << (first ? "" : " ") << num(px(s.x[i])) << ',' << num(py(s.y[i]));
      first = false;
    }
    os << "\"/>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(si);
    os << "<g class=\"legend\"><line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << color << "\" stroke-width=\"2\"/><text x=\"" << W - R + 35 << "\" y=\"" << ly + 4
       << "\" font-size=\"12\">" << escape(s.name) << "</text></g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::pair<std::string, PlotSpec>> sweep_plots(const std::vector<ResultRow>& rows) {
  require(!rows.empty(), ErrorCode::InvalidInput, "empty result table");
  using Getter = std::optional<double> ResultRow::*;
  const std::pair<const char*, Getter> columns[] = {
      {"rot_err_deg", &ResultRow::rot_err_deg},   {"trans_err", &ResultRow::trans_err},
      {"center_err", &ResultRow::center_err},     {"normal_angle_deg", &ResultRow::normal_angle_deg},
      {"precision", &ResultRow::precision},       {"recall", &ResultRow::recall},
      {"map", &ResultRow::map},                   {"jump_ratio", &ResultRow::jump_ratio}};

  std::vector<std::string> methods;
  for (const ResultRow& r : rows)
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);

  std::vector<std::pair<std::string, PlotSpec>> out;
  for (const auto& [col, get] : columns) {
    PlotSpec p;
    p.title = rows.front().experiment + ": " + col;
    p.x_label = "sweep_value";
    p.y_label = col;
    for (const std::string& m : methods) {
      std::map<double, std::pair<double, std::size_t>> acc;
      for (const ResultRow& r : rows) {
        const auto& v = r.*get;
        if (r.method != m || !v || !std::isfinite(*v)) continue;
        auto& a = acc[r.sweep_value];
        a.first += *v;
        a.second += 1;
      }
      if (acc.empty()) continue;
      Series s{m, {}, {}};
      for (const auto& [x, a] : acc) {
        s.x.push_back(x);
        s.y.push_back(a.first / static_cast<double>(a.second));
      }
      p.series.push_back(std::move(s));
    }
    if (!p.series.empty()) out.emplace_back(std::string(col) + "_vs_sweep", std::move(p));
  }
  return out;
}

PlotSpec loss_plot(const std::vector<ConvergenceLog>& logs, std::size_t trial) {
  PlotSpec p;
  p.title = "loss vs iteration, trial " + std::to_string(trial);
  p.x_label = "iter";
  p.y_label = "loss_total";
  for (const ConvergenceLog& l : logs) {
    if (l.trial != trial) continue;
    Series s{l.method, {}, {}};
    for (const RunRecord& r : l.log.records) {
      s.x.push_back(static_cast<double>(r.iter));
      s.y.push_back(r.loss_total);
    }
    p.series.push_back(std::move(s));
  }
  require(!p.series.empty(), ErrorCode::InvalidInput, "no convergence logs for trial");
  return p;
}

}  // namespace edfree
