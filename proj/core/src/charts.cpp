#include "gmmddpm/charts.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include <fmt/format.h>

#include "gmmddpm/error.hpp"
#include "gmmddpm/io.hpp"

namespace gmmddpm {

namespace {

constexpr double kWidth = 640.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 180.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 50.0;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> points;
  // Optional fitted curve sampled at its two x extremes (straight in chart space).
  std::vector<std::pair<double, double>> fit;
  std::string note;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<Series> series;
};

double transform(double v, bool log) { return log ? std::log10(v) : v; }

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

std::string render(const Chart& chart) {
  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  auto extend = [&](double x, double y) {
    if (chart.log_x && !(x > 0.0)) return;
    if (chart.log_y && !(y > 0.0)) return;
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x_lo = std::min(x_lo, transform(x, chart.log_x));
    x_hi = std::max(x_hi, transform(x, chart.log_x));
    y_lo = std::min(y_lo, transform(y, chart.log_y));
    y_hi = std::max(y_hi, transform(y, chart.log_y));
  };
  for (const auto& s : chart.series) {
    for (const auto& [x, y] : s.points) extend(x, y);
    for (const auto& [x, y] : s.fit) extend(x, y);
  }
  if (!std::isfinite(x_lo)) {
    x_lo = 0.0, x_hi = 1.0, y_lo = 0.0, y_hi = 1.0;
  }
  auto pad = [](double& lo, double& hi) {
    const double span = hi - lo;
    const double p = span > 0.0 ? 0.06 * span : (lo != 0.0 ? 0.1 * std::abs(lo) : 0.5);
    lo -= p;
    hi += p;
  };
  pad(x_lo, x_hi);
  pad(y_lo, y_hi);

  const double pw = kWidth - kLeft - kRight;
  const double ph = kHeight - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (transform(x, chart.log_x) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double y) { return kTop + ph - (transform(y, chart.log_y) - y_lo) / (y_hi - y_lo) * ph; };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n",
      kWidth, kHeight);
  svg += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  svg += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"15\">{}</text>\n", kLeft, escape(chart.title));
  svg += fmt::format(
      "<rect class=\"plot-area\" x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"none\" "
      "stroke=\"#444\"/>\n",
      kLeft, kTop, pw, ph);

  constexpr int kTicks = 5;
  for (int i = 0; i <= kTicks; ++i) {
    const double fx = x_lo + (x_hi - x_lo) * i / kTicks;
    const double fy = y_lo + (y_hi - y_lo) * i / kTicks;
    const double vx = chart.log_x ? std::pow(10.0, fx) : fx;
    const double vy = chart.log_y ? std::pow(10.0, fy) : fy;
    const double sx = kLeft + pw * i / kTicks;
    const double sy = kTop + ph - ph * i / kTicks;
    svg += fmt::format("<line x1=\"{0:.2f}\" y1=\"{1:.2f}\" x2=\"{0:.2f}\" y2=\"{2:.2f}\" stroke=\"#ddd\"/>\n", sx,
                       kTop, kTop + ph);
    svg += fmt::format("<line x1=\"{1:.2f}\" y1=\"{0:.2f}\" x2=\"{2:.2f}\" y2=\"{0:.2f}\" stroke=\"#ddd\"/>\n", sy,
                       kLeft, kLeft + pw);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{:.3g}</text>\n", sx,
                       kTop + ph + 16, vx);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"end\">{:.3g}</text>\n", kLeft - 6, sy + 4,
                       vy);
  }
  svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2,
                     kHeight - 12, escape(chart.x_label));
  svg += fmt::format(
      "<text x=\"16\" y=\"{0:.2f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.2f})\">{1}</text>\n",
      kTop + ph / 2, escape(chart.y_label));

  double legend_y = kTop + 10;
  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    const char* colour = kPalette[si % std::size(kPalette)];
    std::vector<std::pair<double, double>> shown;
    for (const auto& [x, y] : s.points) {
      if ((chart.log_x && !(x > 0.0)) || (chart.log_y && !(y > 0.0)) || !std::isfinite(x) || !std::isfinite(y)) {
        continue;
      }
      shown.emplace_back(x, y);
    }
    if (shown.size() >= 2 && s.fit.empty()) {
      std::string path;
      for (const auto& [x, y] : shown) path += fmt::format("{}{:.2f},{:.2f}", path.empty() ? "" : " ", px(x), py(y));
      svg += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"/>\n", path, colour);
    }
    if (s.fit.size() == 2) {
      svg += fmt::format(
          "<line class=\"fit\" x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
          "stroke-dasharray=\"6 4\"/>\n",
          px(s.fit[0].first), py(s.fit[0].second), px(s.fit[1].first), py(s.fit[1].second), colour);
    }
    for (const auto& [x, y] : shown) {
      svg += fmt::format(
          "<circle cx=\"{:.2f}\" cy=\"{:.2f}\" r=\"3.5\" fill=\"{}\" data-x=\"{:.17g}\" data-y=\"{:.17g}\"/>\n", px(x),
          py(y), colour, x, y);
    }
    const double lx = kLeft + pw + 12;
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"10\" height=\"10\" fill=\"{}\"/>\n", lx, legend_y - 9,
                       colour);
    svg += fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", lx + 14, legend_y, escape(s.label));
    legend_y += 16;
    if (!s.note.empty()) {
      svg += fmt::format("<text class=\"annotation\" x=\"{:.2f}\" y=\"{:.2f}\">{}</text>\n", lx + 14, legend_y,
                         escape(s.note));
      legend_y += 16;
    }
  }
  svg += "</svg>\n";
  return svg;
}

double num(const nlohmann::json& v) {
  return v.is_number() ? v.get<double>() : std::numeric_limits<double>::quiet_NaN();
}

std::string fixed_label(const nlohmann::json& fixed) {
  std::string s;
  for (const auto& [k, v] : fixed.items()) {
    s += fmt::format("{}{}={}", s.empty() ? "" : " ", k, v.is_number_float() ? fmt::format("{:g}", v.get<double>())
                                                                              : v.dump());
  }
  return s;
}

Chart rate_chart(const nlohmann::json& groups) {
  Chart chart{"Sliced TV vs T", "T (log scale)", "sliced TV (log scale)", true, true, {}};
  for (const auto& g : groups) {
    Series s;
    s.label = fmt::format("d={} K={} a={:g} delta={:g}", g["d"].get<std::size_t>(), g["K"].get<std::size_t>(),
                          g["amplitude"].get<double>(), g["delta"].get<double>());
    for (const auto& p : g["points"]) s.points.emplace_back(num(p[0]), num(p[1]));
    if (g.contains("b") && !s.points.empty()) {
      const double a = g["a"].get<double>();
      const double b = g["b"].get<double>();
      const double t0 = s.points.front().first;
      const double t1 = s.points.back().first;
      s.fit = {{t0, a * std::pow(t0, -b)}, {t1, a * std::pow(t1, -b)}};
      s.note = fmt::format("b = {:.3f}", b);
    }
    chart.series.push_back(std::move(s));
  }
  return chart;
}

Chart spread_chart(const nlohmann::json& groups, const std::string& axis) {
  Chart chart{fmt::format("Sliced TV vs {}", axis), fmt::format("{} (log scale)", axis), "sliced TV", true, false, {}};
  for (const auto& g : groups) {
    Series s;
    s.label = fixed_label(g["fixed"]);
    for (const auto& p : g["points"]) s.points.emplace_back(num(p[0]), num(p[1]));
    if (g.contains("ratio") && g["ratio"].is_number()) s.note = fmt::format("max/min = {:.3f}", g["ratio"].get<double>());
    chart.series.push_back(std::move(s));
  }
  return chart;
}

Chart amplitude_chart(const nlohmann::json& groups) {
  bool have_eps = true;
  for (const auto& g : groups) {
    for (const auto& p : g["points"]) have_eps = have_eps && p[1].is_number();
  }
  Chart chart{"Sliced TV vs score error", have_eps ? "measured epsilon_score" : "amplitude", "sliced TV", false, false,
              {}};
  for (const auto& g : groups) {
    Series s;
    s.label = fixed_label(g["fixed"]);
    for (const auto& p : g["points"]) s.points.emplace_back(have_eps ? num(p[1]) : num(p[0]), num(p[2]));
    if (have_eps && g.contains("slope") && !s.points.empty()) {
      const double m = g["slope"].get<double>();
      const double c = g["intercept"].get<double>();
      const auto [lo, hi] = std::minmax_element(s.points.begin(), s.points.end());
      s.fit = {{lo->first, c + m * lo->first}, {hi->first, c + m * hi->first}};
      s.note = fmt::format("slope = {:.3f}, r2 = {:.3f}", m, g["r2"].get<double>());
    } else {
      // Scatter only; keep points in x order for the connecting line.
      std::sort(s.points.begin(), s.points.end());
    }
    chart.series.push_back(std::move(s));
  }
  return chart;
}

Chart delta_chart(const nlohmann::json& groups) {
  Chart chart{"Sliced TV vs contamination", "delta", "sliced TV", false, false, {}};
  for (const auto& g : groups) {
    Series s;
    s.label = fixed_label(g["fixed"]);
    for (const auto& p : g["points"]) s.points.emplace_back(num(p[0]), num(p[1]));
    chart.series.push_back(std::move(s));
  }
  return chart;
}

}  // namespace

std::vector<ChartFile> render_charts(const nlohmann::json& report) {
  if (!report.is_object() || !report.contains("fits")) throw Error(ErrorCode::kEmptyReport, "report has no fits");
  const auto& fits = report["fits"];
  std::vector<ChartFile> out;
  auto has = [&](const char* axis) { return fits.contains(axis) && !fits[axis].empty(); };
  if (has("T")) out.push_back({"tv_vs_T.svg", render(rate_chart(fits["T"]))});
  if (has("d")) out.push_back({"tv_vs_d.svg", render(spread_chart(fits["d"], "d"))});
  if (has("K")) out.push_back({"tv_vs_K.svg", render(spread_chart(fits["K"], "K"))});
  if (has("amplitude")) out.push_back({"tv_vs_epsilon.svg", render(amplitude_chart(fits["amplitude"]))});
  if (has("delta")) out.push_back({"tv_vs_delta.svg", render(delta_chart(fits["delta"]))});
  if (out.empty()) throw Error(ErrorCode::kEmptyReport, "report has no swept axis to chart");
  return out;
}

std::vector<ChartFile> render_charts(const ExperimentReport& report) { return render_charts(report_json(report)); }

std::vector<std::string> write_charts(const std::vector<ChartFile>& charts, const std::string& dir) {
  std::vector<std::string> paths;
  for (const auto& c : charts) {
    const std::string path = (std::filesystem::path(dir) / c.name).string();
    write_text_file(path, c.svg);
    paths.push_back(path);
  }
  return paths;
}

}  // namespace gmmddpm
