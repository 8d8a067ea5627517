#include "vidstereo/plot.hpp"

#include <algorithm>
#include <cmath>

#include "vidstereo/io.hpp"

namespace vidstereo {

namespace {

// 3x5 digit glyphs for tick labels (0-9, '.', '-', 'e').
const char* kGlyphs[13] = {
    "111101101101111", "010110010010111", "111001111100111", "111001111001111", "101101111001001",
    "111100111001111", "111100111101111", "111001001001001", "111101111101111", "111101111001111",
    "000000000000010", "000000111000000", "011101110100011",
};

int glyph_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c == '.') return 10;
  if (c == '-') return 11;
  if (c == 'e' || c == 'E') return 12;
  return -1;
}

struct Canvas {
  Tensor img;
  int w, h;
  Canvas(int width, int height) : img({3, height, width}), w(width), h(height) { img.fill(1.0); }

  void px(int x, int y, double r, double g, double b) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    img.at(0, y, x) = r;
    img.at(1, y, x) = g;
    img.at(2, y, x) = b;
  }
  void line(double x0, double y0, double x1, double y1, double r, double g, double b) {
    int steps = static_cast<int>(std::max(std::fabs(x1 - x0), std::fabs(y1 - y0))) * 2 + 1;
    for (int i = 0; i <= steps; ++i) {
      double t = static_cast<double>(i) / steps;
      px(static_cast<int>(std::lround(x0 + (x1 - x0) * t)), static_cast<int>(std::lround(y0 + (y1 - y0) * t)),
         r, g, b);
    }
  }
  void text(int x, int y, const std::string& s) {
    for (char c : s) {
      int gi = glyph_index(c);
      if (gi >= 0)
        for (int ry = 0; ry < 5; ++ry)
          for (int rx = 0; rx < 3; ++rx)
            if (kGlyphs[gi][ry * 3 + rx] == '1') px(x + rx, y + ry, 0.15, 0.15, 0.15);
      x += 4;
    }
  }
};

std::string fmt_tick(double v) {
  char buf[32];
  if (v != 0 && (std::fabs(v) < 1e-3 || std::fabs(v) >= 1e4))
    std::snprintf(buf, sizeof(buf), "%.1e", v);
  else
    std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

const double kColors[6][3] = {{0.12, 0.35, 0.80}, {0.85, 0.25, 0.10}, {0.10, 0.60, 0.25},
                              {0.70, 0.15, 0.65}, {0.85, 0.60, 0.05}, {0.10, 0.60, 0.60}};

}  // namespace

void LinePlot::add_series(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty()) {
    xs.resize(ys.size());
    for (std::size_t i = 0; i < ys.size(); ++i) xs[i] = static_cast<double>(i);
  }
  series_.emplace_back(std::move(xs), std::move(ys));
}

void LinePlot::save(const std::string& path) const {
  Canvas c(w_, h_);
  const int ml = 56, mr = 12, mt = 12, mb = 28;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& [xs, ys] : series_)
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (!std::isfinite(ys[i])) continue;
      xmin = std::min(xmin, xs[i]);
      xmax = std::max(xmax, xs[i]);
      ymin = std::min(ymin, ys[i]);
      ymax = std::max(ymax, ys[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (ymax - ymin < 1e-12) {
    ymax += 1;
    ymin -= 1;
  }
  if (xmax - xmin < 1e-12) xmax = xmin + 1;
  auto X = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * (w_ - ml - mr); };
  auto Y = [&](double v) { return h_ - mb - (v - ymin) / (ymax - ymin) * (h_ - mt - mb); };

  for (int i = 0; i <= 4; ++i) {  // grid + ticks
    double gy = ymin + (ymax - ymin) * i / 4.0;
    c.line(ml, Y(gy), w_ - mr, Y(gy), 0.88, 0.88, 0.88);
    c.text(4, static_cast<int>(Y(gy)) - 2, fmt_tick(gy));
    double gx = xmin + (xmax - xmin) * i / 4.0;
    c.line(X(gx), mt, X(gx), h_ - mb, 0.92, 0.92, 0.92);
    c.text(static_cast<int>(X(gx)) - 6, h_ - mb + 6, fmt_tick(gx));
  }
  c.line(ml, mt, ml, h_ - mb, 0.2, 0.2, 0.2);
  c.line(ml, h_ - mb, w_ - mr, h_ - mb, 0.2, 0.2, 0.2);

  for (std::size_t s = 0; s < series_.size(); ++s) {
    const auto& [xs, ys] = series_[s];
    const double* col = kColors[s % 6];
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      if (!std::isfinite(ys[i]) || !std::isfinite(ys[i + 1])) continue;
      c.line(X(xs[i]), Y(ys[i]), X(xs[i + 1]), Y(ys[i + 1]), col[0], col[1], col[2]);
    }
    if (xs.size() == 1) c.px(static_cast<int>(X(xs[0])), static_cast<int>(Y(ys[0])), col[0], col[1], col[2]);
  }
  write_png_rgb8(path, c.img);
}

Tensor colorize_disparity(const Tensor& disp, double dmax) {
  int h = disp.dim(0), w = disp.dim(1);
  double mx = dmax;
  if (mx <= 0)
    for (std::int64_t i = 0; i < disp.numel(); ++i) mx = std::max(mx, disp[i]);
  if (mx <= 0) mx = 1.0;
  Tensor out({3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = std::clamp(disp.at(y, x) / mx, 0.0, 1.0);
      // blue -> cyan -> green -> yellow -> red
      double r = std::clamp(1.5 - std::fabs(4.0 * v - 3.0), 0.0, 1.0);
      double g = std::clamp(1.5 - std::fabs(4.0 * v - 2.0), 0.0, 1.0);
      double b = std::clamp(1.5 - std::fabs(4.0 * v - 1.0), 0.0, 1.0);
      out.at(0, y, x) = r;
      out.at(1, y, x) = g;
      out.at(2, y, x) = b;
    }
  return out;
}

}  // namespace vidstereo
