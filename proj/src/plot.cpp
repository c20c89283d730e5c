#include "trident/plot.hpp"

#include "trident/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace trident {

namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 420;
constexpr int kMarginLeft = 70;
constexpr int kMarginRight = 30;
constexpr int kMarginTop = 50;
constexpr int kMarginBottom = 60;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

std::string svg_header(const std::string& title) {
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\""
      << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << kWidth / 2 << "\" y=\"28\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  return out.str();
}

std::string axis_labels(const std::string& x_label, const std::string& y_label) {
  std::ostringstream out;
  out << "<text x=\"" << (kMarginLeft + kWidth - kMarginRight) / 2 << "\" y=\"" << kHeight - 14
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" << x_label
      << "</text>\n";
  if (!y_label.empty())
    out << "<text x=\"18\" y=\"" << (kMarginTop + kHeight - kMarginBottom) / 2
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
        << "transform=\"rotate(-90 18 " << (kMarginTop + kHeight - kMarginBottom) / 2 << ")\">"
        << y_label << "</text>\n";
  return out.str();
}

std::string frame() {
  std::ostringstream out;
  out << "<rect x=\"" << kMarginLeft << "\" y=\"" << kMarginTop << "\" width=\""
      << kWidth - kMarginLeft - kMarginRight << "\" height=\""
      << kHeight - kMarginTop - kMarginBottom << "\" fill=\"none\" stroke=\"#444\"/>\n";
  return out.str();
}

std::string tick_text(double x, double y, const std::string& text, const char* anchor) {
  std::ostringstream out;
  out << "<text x=\"" << x << "\" y=\"" << y << "\" text-anchor=\"" << anchor
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << text << "</text>\n";
  return out.str();
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

}  // namespace

void write_histogram_svg(const std::string& path, const Histogram& hist,
                         const std::string& title, const std::string& x_label) {
  require(!hist.counts.empty(), "write_histogram_svg: empty histogram");
  long max_count = 1;
  for (long c : hist.counts) max_count = std::max(max_count, c);

  const double x0 = hist.edges.front();
  const double x1 = hist.edges.back();
  const double span = x1 > x0 ? x1 - x0 : 1.0;
  const double plot_w = kWidth - kMarginLeft - kMarginRight;
  const double plot_h = kHeight - kMarginTop - kMarginBottom;

  std::ostringstream out;
  out << svg_header(title);
  for (std::size_t b = 0; b < hist.counts.size(); ++b) {
    const double left = kMarginLeft + (hist.edges[b] - x0) / span * plot_w;
    const double right = kMarginLeft + (hist.edges[b + 1] - x0) / span * plot_w;
    const double height = plot_h * static_cast<double>(hist.counts[b]) / static_cast<double>(max_count);
    out << "<rect x=\"" << left << "\" y=\"" << kMarginTop + plot_h - height << "\" width=\""
        << std::max(1.0, right - left - 1.0) << "\" height=\"" << height
        << "\" fill=\"#1f77b4\"/>\n";
  }
  out << frame();
  out << tick_text(kMarginLeft, kHeight - kMarginBottom + 16, fmt(x0), "middle");
  out << tick_text(kWidth - kMarginRight, kHeight - kMarginBottom + 16, fmt(x1), "middle");
  out << tick_text(kMarginLeft - 6, kMarginTop + 4, std::to_string(max_count), "end");
  out << tick_text(kMarginLeft - 6, kHeight - kMarginBottom, "0", "end");
  out << axis_labels(x_label, "genes");
  out << "</svg>\n";
  write_text_file(path, out.str());
}

void write_line_chart_svg(const std::string& path, const std::vector<PlotSeries>& series,
                          const std::string& title, const std::string& x_label,
                          const std::string& y_label, bool log_x) {
  require(!series.empty(), "write_line_chart_svg: no series");
  double x_min = 1e300, x_max = -1e300, y_min = 1e300, y_max = -1e300;
  for (const PlotSeries& s : series) {
    require(s.x.size() == s.y.size() && !s.x.empty(), "write_line_chart_svg: malformed series");
    for (double v : s.x) {
      require(!log_x || v > 0.0, "write_line_chart_svg: log axis needs positive x");
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
    for (double v : s.y) {
      y_min = std::min(y_min, v);
      y_max = std::max(y_max, v);
    }
  }
  if (y_max <= y_min) y_max = y_min + 1.0;
  if (x_max <= x_min) x_max = x_min + 1.0;

  const auto tx = [&](double v) {
    const double lo = log_x ? std::log10(x_min) : x_min;
    const double hi = log_x ? std::log10(x_max) : x_max;
    const double t = ((log_x ? std::log10(v) : v) - lo) / (hi - lo);
    return kMarginLeft + t * (kWidth - kMarginLeft - kMarginRight);
  };
  const auto ty = [&](double v) {
    const double t = (v - y_min) / (y_max - y_min);
    return kMarginTop + (1.0 - t) * (kHeight - kMarginTop - kMarginBottom);
  };

  std::ostringstream out;
  out << svg_header(title);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % 6];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t k = 0; k < series[i].x.size(); ++k)
      out << tx(series[i].x[k]) << "," << ty(series[i].y[k]) << " ";
    out << "\"/>\n";
    for (std::size_t k = 0; k < series[i].x.size(); ++k)
      out << "<circle cx=\"" << tx(series[i].x[k]) << "\" cy=\"" << ty(series[i].y[k])
          << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << kWidth - kMarginRight - 8 << "\" y=\""
        << kMarginTop + 16 + 16 * static_cast<double>(i) << "\" text-anchor=\"end\" "
        << "font-family=\"sans-serif\" font-size=\"12\" fill=\"" << color << "\">"
        << series[i].label << "</text>\n";
  }
  out << frame();
  out << tick_text(kMarginLeft, kHeight - kMarginBottom + 16, fmt(x_min), "middle");
  out << tick_text(kWidth - kMarginRight, kHeight - kMarginBottom + 16, fmt(x_max), "middle");
  out << tick_text(kMarginLeft - 6, kMarginTop + 4, fmt(y_max), "end");
  out << tick_text(kMarginLeft - 6, kHeight - kMarginBottom, fmt(y_min), "end");
  out << axis_labels(x_label, y_label);
  out << "</svg>\n";
  write_text_file(path, out.str());
}

}  // namespace trident
