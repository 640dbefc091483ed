#pragma once

// Output plumbing: run manifests and minimal SVG line plots. CSV is the
// normative output format everywhere; the SVG files are convenience views.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "markovsde/expr.hpp"

namespace markovsde {

inline std::uint64_t fnv1a_hash(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string utc_timestamp(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string subcommand;
  std::string started;
  double elapsed_seconds = 0.0;
};

inline void write_manifest(std::ostream& os, const Manifest& m) {
  os << "config_hash = " << m.config_hash << "\n";
  os << "seed = " << m.seed << "\n";
  os << "version = " << m.version << "\n";
  os << "subcommand = " << m.subcommand << "\n";
  os << "started = " << m.started << "\n";
  os << "elapsed_seconds = " << expr::detail::format_double(m.elapsed_seconds) << "\n";
}

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

// Poly-line chart with a framed plot area, tick labels and a small legend.
inline void write_svg_lines(std::ostream& os, const std::string& title,
                            const std::vector<SvgSeries>& series, int width = 840,
                            int height = 520) {
  static const char* kColors[] = {"#1f6feb", "#d73a49", "#1a7f37", "#8250df", "#bf8700"};
  const double left = 70, right = 20, top = 40, bottom = 50;

  double x_lo = 1e300, x_hi = -1e300, y_lo = 1e300, y_hi = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x_lo = std::min(x_lo, s.x[i]);
      x_hi = std::max(x_hi, s.x[i]);
      y_lo = std::min(y_lo, s.y[i]);
      y_hi = std::max(y_hi, s.y[i]);
    }
  if (!(x_lo < x_hi)) {
    x_lo -= 1.0;
    x_hi += 1.0;
  }
  if (!(y_lo < y_hi)) {
    y_lo -= 1.0;
    y_hi += 1.0;
  }
  const double y_pad = 0.05 * (y_hi - y_lo);
  y_lo -= y_pad;
  y_hi += y_pad;

  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto sx = [&](double x) { return left + (x - x_lo) / (x_hi - x_lo) * plot_w; };
  auto sy = [&](double y) { return top + (y_hi - y) / (y_hi - y_lo) * plot_h; };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return std::string(buf);
  };

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
     << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  os << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
     << "font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";
  os << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(plot_w)
     << "\" height=\"" << num(plot_h) << "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (int k = 0; k <= 4; ++k) {
    const double xv = x_lo + k * (x_hi - x_lo) / 4.0;
    const double yv = y_lo + k * (y_hi - y_lo) / 4.0;
    os << "<line x1=\"" << num(sx(xv)) << "\" y1=\"" << num(top + plot_h) << "\" x2=\""
       << num(sx(xv)) << "\" y2=\"" << num(top + plot_h + 5) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << num(sx(xv)) << "\" y=\"" << num(top + plot_h + 20)
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << num(xv) << "</text>\n";
    os << "<line x1=\"" << num(left - 5) << "\" y1=\"" << num(sy(yv)) << "\" x2=\""
       << num(left) << "\" y2=\"" << num(sy(yv)) << "\" stroke=\"#444\"/>\n";
    os << "<text x=\"" << num(left - 8) << "\" y=\"" << num(sy(yv) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(yv)
       << "</text>\n";
  }

  int color = 0;
  for (const auto& s : series) {
    os << "<polyline fill=\"none\" stroke=\"" << kColors[color % 5]
       << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (i) os << ' ';
      os << num(sx(s.x[i])) << ',' << num(sy(s.y[i]));
    }
    os << "\"/>\n";
    os << "<text x=\"" << num(width - right - 10) << "\" y=\"" << num(top + 16 + 16 * color)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\""
       << kColors[color % 5] << "\">" << s.label << "</text>\n";
    ++color;
  }
  os << "</svg>\n";
}

}  // namespace markovsde
