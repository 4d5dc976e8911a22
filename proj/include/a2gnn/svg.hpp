#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "a2gnn/graph.hpp"
#include "a2gnn/matrix.hpp"

// Minimal SVG skeleton heatmap: orthographic x/y projection, bones as lines,
// joints as circles colored by saliency through a fixed 256-step diverging
// colormap (blue 59,76,192 -> white 221,221,221 -> red 180,4,38, linear in
// each half, quantized to 256 levels). No plotting dependency.

namespace a2gnn::svg {

struct Rgb {
  int r, g, b;
};

inline Rgb colormap(double t) {
  t = std::clamp(t, 0.0, 1.0);
  t = std::floor(t * 255.0) / 255.0;  // quantize to the 256-step table
  auto lerp = [](double a, double b, double u) { return a + (b - a) * u; };
  const double lo[3] = {59, 76, 192}, mid[3] = {221, 221, 221}, hi[3] = {180, 4, 38};
  double c[3];
  if (t < 0.5) {
    const double u = t / 0.5;
    for (int i = 0; i < 3; ++i) c[i] = lerp(lo[i], mid[i], u);
  } else {
    const double u = (t - 0.5) / 0.5;
    for (int i = 0; i < 3; ++i) c[i] = lerp(mid[i], hi[i], u);
  }
  return {static_cast<int>(std::lround(c[0])), static_cast<int>(std::lround(c[1])),
          static_cast<int>(std::lround(c[2]))};
}

inline std::string color_hex(double t) {
  const Rgb c = colormap(t);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", c.r, c.g, c.b);
  return buf;
}

// `saliency` holds one nonnegative value per joint; colors are scaled by the
// maximum so the hottest joint is full red.
inline void write_skeleton_heatmap(std::ostream& os, const dmat& frame, const EdgeList& edges,
                                   const std::vector<double>& saliency, const std::vector<std::string>& joint_names) {
  const int n = frame.rows();
  if (static_cast<int>(saliency.size()) != n) throw std::invalid_argument("svg: saliency size != joint count");

  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (int i = 0; i < n; ++i) {
    min_x = std::min(min_x, frame(i, 0));
    max_x = std::max(max_x, frame(i, 0));
    min_y = std::min(min_y, frame(i, 1));
    max_y = std::max(max_y, frame(i, 1));
  }
  const double span = std::max(std::max(max_x - min_x, max_y - min_y), 1e-6);
  const double unit = 400.0 / span;  // fit into ~400px
  const double margin = 60.0;
  auto px = [&](double x) { return margin + (x - min_x) * unit; };
  auto py = [&](double y) { return margin + (max_y - y) * unit; };  // y up -> screen down

  double peak = 1e-12;
  for (double s : saliency) peak = std::max(peak, s);

  const double width = px(max_x) + margin + 70, height = py(min_y) + margin;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\" viewBox=\"0 0 "
     << width << " " << height << "\">\n";
  os << "  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (const auto& [a, b] : edges)
    os << "  <line x1=\"" << px(frame(a, 0)) << "\" y1=\"" << py(frame(a, 1)) << "\" x2=\"" << px(frame(b, 0))
       << "\" y2=\"" << py(frame(b, 1)) << "\" stroke=\"#888\" stroke-width=\"3\"/>\n";
  for (int i = 0; i < n; ++i) {
    os << "  <circle cx=\"" << px(frame(i, 0)) << "\" cy=\"" << py(frame(i, 1)) << "\" r=\"9\" fill=\""
       << color_hex(saliency[i] / peak) << "\" stroke=\"#333\" stroke-width=\"1\">\n";
    os << "    <title>" << (i < static_cast<int>(joint_names.size()) ? joint_names[i] : std::to_string(i)) << ": "
       << saliency[i] << "</title>\n  </circle>\n";
  }
  // colorbar
  const double bar_x = width - 50, bar_top = margin, bar_h = height - 2 * margin;
  for (int step = 0; step < 64; ++step) {
    const double t = 1.0 - static_cast<double>(step) / 63.0;
    os << "  <rect x=\"" << bar_x << "\" y=\"" << bar_top + step * bar_h / 64 << "\" width=\"16\" height=\""
       << bar_h / 64 + 0.5 << "\" fill=\"" << color_hex(t) << "\"/>\n";
  }
  os << "  <text x=\"" << bar_x - 4 << "\" y=\"" << bar_top + 10 << "\" font-size=\"12\" text-anchor=\"end\">high</text>\n";
  os << "  <text x=\"" << bar_x - 4 << "\" y=\"" << bar_top + bar_h << "\" font-size=\"12\" text-anchor=\"end\">low</text>\n";
  os << "</svg>\n";
}

inline void write_skeleton_heatmap(const std::string& path, const dmat& frame, const EdgeList& edges,
                                   const std::vector<double>& saliency, const std::vector<std::string>& joint_names) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("svg: cannot open " + path);
  write_skeleton_heatmap(f, frame, edges, saliency, joint_names);
  if (!f.good()) throw std::runtime_error("svg: write failed for " + path);
}

}  // namespace a2gnn::svg
