#include "chart.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "sspix/image.hpp"
#include "sspix/png_io.hpp"

namespace sspix {
namespace {

constexpr int kW = 640, kH = 480;
constexpr int kLeft = 72, kRight = 24, kTop = 24, kBottom = 48;

struct Canvas {
  ImageU8 img;
  Canvas() {
    img.h = kH;
    img.w = kW;
    img.c = 3;
    img.pixels.assign((size_t)kH * kW * 3, 255);
  }
  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || x >= kW || y < 0 || y >= kH) return;
    size_t i = ((size_t)y * kW + x) * 3;
    img.pixels[i] = r;
    img.pixels[i + 1] = g;
    img.pixels[i + 2] = b;
  }
  void line(int x0, int y0, int x1, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, r, g, b);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
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
};

// 5x7 glyphs for numeric labels, one byte per row, low 5 bits used
struct Glyph {
  char ch;
  std::array<std::uint8_t, 7> rows;
};

constexpr Glyph kFont[] = {
    {'0', {0x0e, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0e}},
    {'1', {0x04, 0x0c, 0x04, 0x04, 0x04, 0x04, 0x0e}},
    {'2', {0x0e, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1f}},
    {'3', {0x1f, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0e}},
    {'4', {0x02, 0x06, 0x0a, 0x12, 0x1f, 0x02, 0x02}},
    {'5', {0x1f, 0x10, 0x1e, 0x01, 0x01, 0x11, 0x0e}},
    {'6', {0x06, 0x08, 0x10, 0x1e, 0x11, 0x11, 0x0e}},
    {'7', {0x1f, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0e, 0x11, 0x11, 0x0e, 0x11, 0x11, 0x0e}},
    {'9', {0x0e, 0x11, 0x11, 0x0f, 0x01, 0x02, 0x0c}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0c, 0x0c}},
    {'-', {0x00, 0x00, 0x00, 0x1e, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1f, 0x04, 0x04, 0x00}},
    {'e', {0x00, 0x00, 0x0e, 0x11, 0x1f, 0x10, 0x0e}},
};

const Glyph* find_glyph(char c) {
  for (const auto& g : kFont)
    if (g.ch == c) return &g;
  return nullptr;
}

void draw_text(Canvas& cv, int x, int y, const std::string& text) {
  for (char c : text) {
    if (const Glyph* g = find_glyph(c)) {
      for (int r = 0; r < 7; ++r)
        for (int col = 0; col < 5; ++col)
          if (g->rows[r] & (1 << (4 - col))) cv.set(x + col, y + r, 0, 0, 0);
    }
    x += 6;
  }
}

std::string fmt_tick(real v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace

void render_line_chart(const std::string& path, const std::vector<real>& xs,
                       const std::vector<real>& ys) {
  if (xs.size() != ys.size() || xs.empty())
    throw ValidationError("chart needs matching non-empty series");
  real x_lo = *std::min_element(xs.begin(), xs.end());
  real x_hi = *std::max_element(xs.begin(), xs.end());
  real y_lo = *std::min_element(ys.begin(), ys.end());
  real y_hi = *std::max_element(ys.begin(), ys.end());
  if (x_hi - x_lo <= 0) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo <= 0) {
    y_lo -= 0.5;
    y_hi += 0.5;
  }
  // pad the value range a little so the polyline stays off the frame
  real pad = 0.05 * (y_hi - y_lo);
  y_lo -= pad;
  y_hi += pad;

  Canvas cv;
  const int px0 = kLeft, px1 = kW - kRight, py0 = kH - kBottom, py1 = kTop;
  auto to_px = [&](real x) {
    return px0 + (int)std::lround((x - x_lo) / (x_hi - x_lo) * (px1 - px0));
  };
  auto to_py = [&](real y) {
    return py0 - (int)std::lround((y - y_lo) / (y_hi - y_lo) * (py0 - py1));
  };

  cv.line(px0, py0, px1, py0, 0, 0, 0);
  cv.line(px0, py0, px0, py1, 0, 0, 0);

  const int n_ticks = 5;
  for (int t = 0; t <= n_ticks; ++t) {
    real vx = x_lo + (x_hi - x_lo) * t / n_ticks;
    int x = to_px(vx);
    cv.line(x, py0, x, py0 + 4, 0, 0, 0);
    std::string s = fmt_tick(vx);
    draw_text(cv, x - 3 * (int)s.size(), py0 + 8, s);

    real vy = y_lo + (y_hi - y_lo) * t / n_ticks;
    int y = to_py(vy);
    cv.line(px0 - 4, y, px0, y, 0, 0, 0);
    s = fmt_tick(vy);
    draw_text(cv, px0 - 8 - 6 * (int)s.size(), y - 3, s);
  }

  for (size_t i = 1; i < xs.size(); ++i)
    cv.line(to_px(xs[i - 1]), to_py(ys[i - 1]), to_px(xs[i]), to_py(ys[i]), 30, 60, 180);
  for (size_t i = 0; i < xs.size(); ++i) {
    int x = to_px(xs[i]), y = to_py(ys[i]);
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) cv.set(x + dx, y + dy, 180, 40, 40);
  }

  write_png_rgb8(path, cv.img);
}

}  // namespace sspix
