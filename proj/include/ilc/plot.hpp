// Minimal raster figures without external dependencies: an RGB canvas with
// Bresenham lines, a 3x5 glyph set for numeric labels, a heat-map renderer
// for spatial grids and a basic line chart. Output is binary PPM.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "ilc/core.hpp"
#include "ilc/io.hpp"

namespace ilc::plot {

struct Color {
  uint8_t r = 0, g = 0, b = 0;
};

struct Canvas {
  int w = 0, h = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  Canvas(int w_, int h_, Color fill = {255, 255, 255}) : w(w_), h(h_) {
    check(w_ >= 1 && h_ >= 1, "Canvas: dimensions must be >= 1");
    rgb.resize(static_cast<size_t>(w_) * h_ * 3);
    for (size_t i = 0; i < rgb.size(); i += 3) {
      rgb[i] = fill.r;
      rgb[i + 1] = fill.g;
      rgb[i + 2] = fill.b;
    }
  }

  void set(int x, int y, Color c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const size_t i = (static_cast<size_t>(y) * w + x) * 3;
    rgb[i] = c.r;
    rgb[i + 1] = c.g;
    rgb[i + 2] = c.b;
  }

  void fill_rect(int x0, int y0, int x1, int y1, Color c) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) set(x, y, c);
  }

  void line(int x0, int y0, int x1, int y1, Color c) {
    int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void save(const std::string& path) const {
    Tensor3 img(3, h, w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const size_t i = (static_cast<size_t>(y) * w + x) * 3;
        img.at(0, y, x) = rgb[i] / 255.0;
        img.at(1, y, x) = rgb[i + 1] / 255.0;
        img.at(2, y, x) = rgb[i + 2] / 255.0;
      }
    io::write_ppm(path, img);
  }
};

// ---- numeric glyphs (3 columns x 5 rows) -------------------------------------

namespace detail {
// Each glyph is 5 rows of 3 bits, most significant bit = left column.
inline std::array<uint8_t, 5> glyph(char ch) {
  switch (ch) {
    case '0': return {0b111, 0b101, 0b101, 0b101, 0b111};
    case '1': return {0b010, 0b110, 0b010, 0b010, 0b111};
    case '2': return {0b111, 0b001, 0b111, 0b100, 0b111};
    case '3': return {0b111, 0b001, 0b111, 0b001, 0b111};
    case '4': return {0b101, 0b101, 0b111, 0b001, 0b001};
    case '5': return {0b111, 0b100, 0b111, 0b001, 0b111};
    case '6': return {0b111, 0b100, 0b111, 0b101, 0b111};
    case '7': return {0b111, 0b001, 0b010, 0b010, 0b010};
    case '8': return {0b111, 0b101, 0b111, 0b101, 0b111};
    case '9': return {0b111, 0b101, 0b111, 0b001, 0b111};
    case '.': return {0b000, 0b000, 0b000, 0b000, 0b010};
    case '-': return {0b000, 0b000, 0b111, 0b000, 0b000};
    case '+': return {0b000, 0b010, 0b111, 0b010, 0b000};
    case 'e': return {0b111, 0b100, 0b110, 0b100, 0b111};
    default: return {0b000, 0b000, 0b000, 0b000, 0b000};  // space
  }
}
}  // namespace detail

inline void draw_text(Canvas& canvas, int x, int y, const std::string& text,
                      Color c, int scale = 1) {
  int cx = x;
  for (char ch : text) {
    const auto g = detail::glyph(ch);
    for (int row = 0; row < 5; ++row)
      for (int col = 0; col < 3; ++col)
        if (g[row] & (0b100 >> col))
          canvas.fill_rect(cx + col * scale, y + row * scale,
                           cx + col * scale + scale - 1,
                           y + row * scale + scale - 1, c);
    cx += 4 * scale;
  }
}

// ---- heat map ----------------------------------------------------------------

// Black-red-yellow-white ramp over [0, 1].
inline Color heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  const auto chan = [](double x) {
    return static_cast<uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0));
  };
  return {chan(3.0 * v), chan(3.0 * v - 1.0), chan(3.0 * v - 2.0)};
}

// Renders a grid as a heat map, normalized by its own max (all-equal grids
// render flat black). Each cell becomes a cell_px x cell_px block.
inline Canvas heatmap(const Grid& grid, int cell_px = 8) {
  check(cell_px >= 1, "heatmap: cell size must be >= 1");
  Canvas canvas(grid.w * cell_px, grid.h * cell_px);
  double lo = grid.v[0], hi = grid.v[0];
  for (double v : grid.v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double span = hi - lo;
  for (int i = 0; i < grid.h; ++i)
    for (int j = 0; j < grid.w; ++j) {
      const double v = span > 0.0 ? (grid.at(i, j) - lo) / span : 0.0;
      canvas.fill_rect(j * cell_px, i * cell_px, (j + 1) * cell_px - 1,
                       (i + 1) * cell_px - 1, heat_color(v));
    }
  return canvas;
}

// ---- line chart ----------------------------------------------------------------

struct Series {
  std::vector<double> xs;
  std::vector<double> ys;
  Color color = {200, 40, 40};
};

// Axes with numeric tick labels; series drawn as polylines with point markers.
inline Canvas line_chart(const std::vector<Series>& series, int width = 480,
                         int height = 320) {
  check(!series.empty(), "line_chart: no series");
  Canvas canvas(width, height);
  const int ml = 46, mr = 12, mt = 12, mb = 26;  // margins
  const int x0 = ml, x1 = width - mr, y0 = height - mb, y1 = mt;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    check(s.xs.size() == s.ys.size(), "line_chart: xs/ys length mismatch");
    for (size_t i = 0; i < s.xs.size(); ++i) {
      if (first) {
        xmin = xmax = s.xs[i];
        ymin = ymax = s.ys[i];
        first = false;
      }
      xmin = std::min(xmin, s.xs[i]);
      xmax = std::max(xmax, s.xs[i]);
      ymin = std::min(ymin, s.ys[i]);
      ymax = std::max(ymax, s.ys[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const auto px = [&](double x) {
    return x0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) *
                                             (x1 - x0)));
  };
  const auto py = [&](double y) {
    return y0 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) *
                                             (y0 - y1)));
  };
  const Color axis{60, 60, 60};
  canvas.line(x0, y0, x1, y0, axis);
  canvas.line(x0, y0, x0, y1, axis);
  char buf[32];
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    const int tx = px(xv), ty = py(yv);
    canvas.line(tx, y0, tx, y0 + 3, axis);
    canvas.line(x0 - 3, ty, x0, ty, axis);
    std::snprintf(buf, sizeof(buf), "%.3g", xv);
    draw_text(canvas, tx - 6, y0 + 6, buf, axis);
    std::snprintf(buf, sizeof(buf), "%.3g", yv);
    draw_text(canvas, 4, ty - 2, buf, axis);
  }
  for (const auto& s : series)
    for (size_t i = 0; i < s.xs.size(); ++i) {
      const int cx = px(s.xs[i]), cy = py(s.ys[i]);
      canvas.fill_rect(cx - 1, cy - 1, cx + 1, cy + 1, s.color);
      if (i > 0)
        canvas.line(px(s.xs[i - 1]), py(s.ys[i - 1]), cx, cy, s.color);
    }
  return canvas;
}

}  // namespace ilc::plot
