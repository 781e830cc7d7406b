#include "scrfocus/plot.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "scrfocus/errors.h"

namespace scrfocus {
namespace {

constexpr int kWidth = 640;
constexpr int kHeight = 400;
constexpr int kMargin = 60;

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

std::string Header(const std::string& title) {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
    << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' '
    << kHeight << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
    << "font-size=\"15\">" << title << "</text>\n";
  return s.str();
}

void Axes(std::ostringstream& s, const std::string& xlabel,
          const std::string& ylabel) {
  const int x0 = kMargin;
  const int y0 = kHeight - kMargin;
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << kWidth - kMargin / 2
    << "\" y2=\"" << y0 << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
    << "\" y2=\"" << kMargin / 2 + 10 << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << (x0 + kWidth - kMargin / 2) / 2 << "\" y=\""
    << kHeight - 15 << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  s << "<text x=\"15\" y=\"" << kHeight / 2 << "\" text-anchor=\"middle\" "
    << "transform=\"rotate(-90 15 " << kHeight / 2 << ")\">" << ylabel
    << "</text>\n";
}

}  // namespace

std::string AblationPlotSvg(const std::vector<double>& radii,
                            const std::vector<double>& scores, int argmin) {
  if (radii.empty() || radii.size() != scores.size()) {
    throw InvalidArgument("one score per radius is required");
  }
  std::ostringstream s;
  s << Header("Sampling radius ablation");
  Axes(s, "radius (px, log scale)", "aggregate score");
  const double lx0 = std::log10(*std::min_element(radii.begin(), radii.end()));
  double lx1 = std::log10(*std::max_element(radii.begin(), radii.end()));
  if (lx1 <= lx0) lx1 = lx0 + 1.0;
  double y_lo = *std::min_element(scores.begin(), scores.end());
  double y_hi = *std::max_element(scores.begin(), scores.end());
  if (y_hi <= y_lo) y_hi = y_lo + 1.0;
  const double pad = 0.1 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;
  const double plot_w = kWidth - 1.5 * kMargin - 20;
  const double plot_h = kHeight - 2.0 * kMargin;
  auto px = [&](double r) {
    return kMargin + 10 + plot_w * (std::log10(r) - lx0) / (lx1 - lx0);
  };
  auto py = [&](double v) {
    return kHeight - kMargin - plot_h * (v - y_lo) / (y_hi - y_lo);
  };
  s << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < radii.size(); ++i) {
    s << Num(px(radii[i])) << ',' << Num(py(scores[i])) << ' ';
  }
  s << "\"/>\n";
  for (size_t i = 0; i < radii.size(); ++i) {
    const bool best = static_cast<int>(i) == argmin;
    s << "<circle cx=\"" << Num(px(radii[i])) << "\" cy=\"" << Num(py(scores[i]))
      << "\" r=\"" << (best ? 6 : 4) << "\" fill=\""
      << (best ? "crimson" : "steelblue") << "\"/>\n";
    s << "<text x=\"" << Num(px(radii[i])) << "\" y=\"" << kHeight - kMargin + 16
      << "\" text-anchor=\"middle\">" << Num(radii[i]) << "</text>\n";
    s << "<text x=\"" << Num(px(radii[i])) << "\" y=\""
      << Num(py(scores[i]) - 10) << "\" text-anchor=\"middle\">"
      << Num(scores[i]) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string ReportPlotSvg(const std::vector<ReportRow>& rows) {
  if (rows.empty()) throw InvalidArgument("nothing to plot");
  std::ostringstream s;
  s << Header("Buffer reprojection and pose error");
  Axes(s, "sequence / strategy", "value (see legend)");
  std::vector<double> reproj;
  std::vector<double> trans;
  for (const ReportRow& r : rows) {
    reproj.push_back(std::isfinite(r.median_reproj_px) && r.median_reproj_px > 0
                         ? std::log10(r.median_reproj_px)
                         : 0.0);
    trans.push_back(std::isfinite(r.median_trans) ? r.median_trans : 0.0);
  }
  const double reproj_hi =
      std::max(1e-9, *std::max_element(reproj.begin(), reproj.end()));
  const double trans_hi =
      std::max(1e-9, *std::max_element(trans.begin(), trans.end()));
  const double plot_w = kWidth - 1.5 * kMargin - 20;
  const double plot_h = kHeight - 2.0 * kMargin - 20;
  const double group_w = plot_w / rows.size();
  const double bar_w = group_w * 0.35;
  for (size_t i = 0; i < rows.size(); ++i) {
    const double gx = kMargin + 10 + i * group_w;
    const double h1 = plot_h * std::max(0.0, reproj[i]) / reproj_hi;
    const double h2 = plot_h * trans[i] / trans_hi;
    const double base = kHeight - kMargin;
    s << "<rect x=\"" << Num(gx) << "\" y=\"" << Num(base - h1) << "\" width=\""
      << Num(bar_w) << "\" height=\"" << Num(h1)
      << "\" fill=\"steelblue\"/>\n";
    s << "<rect x=\"" << Num(gx + bar_w) << "\" y=\"" << Num(base - h2)
      << "\" width=\"" << Num(bar_w) << "\" height=\"" << Num(h2)
      << "\" fill=\"darkorange\"/>\n";
    s << "<text x=\"" << Num(gx + bar_w) << "\" y=\"" << base + 16
      << "\" text-anchor=\"middle\">" << rows[i].sequence << '/'
      << rows[i].strategy << "</text>\n";
    s << "<text x=\"" << Num(gx + bar_w / 2) << "\" y=\"" << Num(base - h1 - 4)
      << "\" text-anchor=\"middle\" font-size=\"10\">"
      << Num(rows[i].median_reproj_px) << "px</text>\n";
    s << "<text x=\"" << Num(gx + 1.5 * bar_w) << "\" y=\"" << Num(base - h2 - 4)
      << "\" text-anchor=\"middle\" font-size=\"10\">"
      << Num(rows[i].median_trans) << "</text>\n";
  }
  s << "<rect x=\"" << kWidth - 230 << "\" y=\"40\" width=\"12\" height=\"12\" "
    << "fill=\"steelblue\"/><text x=\"" << kWidth - 212
    << "\" y=\"50\">log10 median reprojection (px)</text>\n";
  s << "<rect x=\"" << kWidth - 230 << "\" y=\"58\" width=\"12\" height=\"12\" "
    << "fill=\"darkorange\"/><text x=\"" << kWidth - 212
    << "\" y=\"68\">median translation error</text>\n";
  s << "</svg>\n";
  return s.str();
}

}  // namespace scrfocus
