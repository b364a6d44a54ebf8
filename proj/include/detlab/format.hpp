#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "detlab/errors.hpp"
#include "detlab/stats.hpp"

namespace detlab {

// 17 significant digits: enough to round-trip any double exactly. Infinities
// serialize as bare words so CSV consumers see a stable literal.
inline std::string fmt_float17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0.0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) {
    std::filesystem::create_directories(p.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + p.parent_path().string());
  }
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << content;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

namespace svg_detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace svg_detail

// Histogram of `samples` over 40 equal bins on [-4, 4]; out-of-range values
// land in the end bins and are tallied in the caption. Bars are density
// normalized; overlay_normal adds a 200-point standard normal density curve.
inline std::string render_histogram_svg(const std::vector<double>& samples, bool overlay_normal,
                                        const std::string& title = "") {
  constexpr int bins = 40;
  constexpr double lo = -4.0, hi = 4.0;
  constexpr double bin_width = (hi - lo) / bins;
  std::vector<long> counts(bins, 0);
  long clipped = 0, total = 0;
  for (double v : samples) {
    if (!std::isfinite(v)) continue;
    ++total;
    int idx;
    if (v < lo) {
      idx = 0;
      ++clipped;
    } else if (v > hi) {
      idx = bins - 1;
      ++clipped;
    } else {
      idx = std::min(bins - 1, static_cast<int>((v - lo) / bin_width));
    }
    ++counts[idx];
  }
  if (total == 0) throw EmptySample("histogram needs at least one finite sample");

  const double w = 800.0, h = 520.0;
  const double ml = 62.0, mr = 20.0, mt = 34.0, mb = 56.0;
  const double pw = w - ml - mr, ph = h - mt - mb;
  double max_density = std_normal_pdf(0.0);
  for (long c : counts)
    max_density = std::max(max_density, static_cast<double>(c) / (total * bin_width));
  const double ymax = max_density * 1.08;
  const auto xpix = [&](double x) { return ml + (x - lo) / (hi - lo) * pw; };
  const auto ypix = [&](double d) { return mt + ph - d / ymax * ph; };

  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 520\" "
       "font-family=\"sans-serif\" font-size=\"13\">\n";
  s += "<rect width=\"800\" height=\"520\" fill=\"white\"/>\n";
  if (!title.empty())
    s += "<text x=\"400\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" + title +
         "</text>\n";
  // axes
  s += "<line x1=\"" + svg_detail::num(ml) + "\" y1=\"" + svg_detail::num(mt + ph) + "\" x2=\"" +
       svg_detail::num(ml + pw) + "\" y2=\"" + svg_detail::num(mt + ph) +
       "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + svg_detail::num(ml) + "\" y1=\"" + svg_detail::num(mt) + "\" x2=\"" +
       svg_detail::num(ml) + "\" y2=\"" + svg_detail::num(mt + ph) + "\" stroke=\"black\"/>\n";
  for (int tx = -4; tx <= 4; tx += 2) {
    const double px = xpix(tx);
    s += "<line x1=\"" + svg_detail::num(px) + "\" y1=\"" + svg_detail::num(mt + ph) +
         "\" x2=\"" + svg_detail::num(px) + "\" y2=\"" + svg_detail::num(mt + ph + 5) +
         "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + svg_detail::num(px) + "\" y=\"" + svg_detail::num(mt + ph + 20) +
         "\" text-anchor=\"middle\">" + std::to_string(tx) + "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double ty = ymax * i / 4.0;
    const double py = ypix(ty);
    char lab[16];
    std::snprintf(lab, sizeof lab, "%.2f", ty);
    s += "<line x1=\"" + svg_detail::num(ml - 5) + "\" y1=\"" + svg_detail::num(py) + "\" x2=\"" +
         svg_detail::num(ml) + "\" y2=\"" + svg_detail::num(py) + "\" stroke=\"black\"/>\n";
    s += "<text x=\"" + svg_detail::num(ml - 9) + "\" y=\"" + svg_detail::num(py + 4) +
         "\" text-anchor=\"end\">" + lab + "</text>\n";
  }
  // bars
  for (int i = 0; i < bins; ++i) {
    if (counts[i] == 0) continue;
    const double density = static_cast<double>(counts[i]) / (total * bin_width);
    const double x0 = xpix(lo + i * bin_width);
    const double y0 = ypix(density);
    s += "<rect x=\"" + svg_detail::num(x0 + 0.5) + "\" y=\"" + svg_detail::num(y0) +
         "\" width=\"" + svg_detail::num(pw / bins - 1.0) + "\" height=\"" +
         svg_detail::num(mt + ph - y0) + "\" fill=\"#4878a8\" fill-opacity=\"0.75\"/>\n";
  }
  if (overlay_normal) {
    s += "<polyline fill=\"none\" stroke=\"#c02020\" stroke-width=\"1.5\" points=\"";
    for (int i = 0; i < 200; ++i) {
      const double x = lo + (hi - lo) * i / 199.0;
      s += svg_detail::num(xpix(x)) + "," + svg_detail::num(ypix(std_normal_pdf(x)));
      if (i + 1 < 200) s += " ";
    }
    s += "\"/>\n";
  }
  s += "<text x=\"" + svg_detail::num(ml) + "\" y=\"" + svg_detail::num(h - 12) + "\">T=" +
       std::to_string(total) + ", clipped=" + std::to_string(clipped) + "</text>\n";
  s += "</svg>\n";
  return s;
}

inline void emit_histogram_svg(const std::vector<double>& samples, const std::string& path,
                               bool overlay_normal, const std::string& title = "") {
  write_text_file(path, render_histogram_svg(samples, overlay_normal, title));
}

}  // namespace detlab
