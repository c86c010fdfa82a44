#include "sspix/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "sspix/nn.hpp"
#include "sspix/png_io.hpp"

namespace sspix {

namespace {

struct Shape {
  int type = 1;  // 1 rect, 2 disc, 3 triangle
  real cx = 0, cy = 0, size = 8;
  real color[3] = {0, 0, 0};
  int disparity = 0;
};

bool inside(const Shape& s, real x, real y) {
  switch (s.type) {
    case 1:
      return std::abs(x - s.cx) <= s.size * 0.9 && std::abs(y - s.cy) <= s.size * 0.65;
    case 2: {
      const real dx = x - s.cx, dy = y - s.cy;
      return dx * dx + dy * dy <= s.size * s.size;
    }
    default: {
      if (y < s.cy - s.size || y > s.cy + s.size) return false;
      const real frac = (y - (s.cy - s.size)) / (2.0 * s.size);
      return std::abs(x - s.cx) <= frac * s.size;
    }
  }
}

struct Scene {
  Tensor bg;  // (3,H,W) textured background
  int bg_disparity = 0;
  std::vector<Shape> shapes;  // sorted by disparity ascending (far to near)
};

// smooth lattice noise plus a fine grain, both per channel
Tensor textured_background(int h, int w, Rng& rng, real lo, real span) {
  std::uniform_real_distribution<real> u(0.0, 1.0);
  constexpr int kLattice = 5;
  real lat[3][kLattice][kLattice];
  for (auto& ch : lat)
    for (auto& row : ch)
      for (auto& v : row) v = lo + span * u(rng);
  Tensor bg({3, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const real fy = h > 1 ? static_cast<real>(y) / (h - 1) * (kLattice - 1) : 0;
      const real fx = w > 1 ? static_cast<real>(x) / (w - 1) * (kLattice - 1) : 0;
      const int y0 = std::min(static_cast<int>(fy), kLattice - 2);
      const int x0 = std::min(static_cast<int>(fx), kLattice - 2);
      const real wy = fy - y0, wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const real top = lat[c][y0][x0] * (1 - wx) + lat[c][y0][x0 + 1] * wx;
        const real bot = lat[c][y0 + 1][x0] * (1 - wx) + lat[c][y0 + 1][x0 + 1] * wx;
        bg[c * hw + y * static_cast<std::int64_t>(w) + x] = top * (1 - wy) + wy * bot;
      }
    }
  return bg;
}

Scene random_scene(const SynthConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<real> u(0.0, 1.0);
  Scene sc;
  sc.bg_disparity =
      cfg.max_disparity > 0 ? static_cast<int>(u(rng) * std::min(2, cfg.max_disparity + 1)) : 0;
  // canvas wide enough that the right view can sample the shifted background;
  // centered-object scenes keep the backdrop mild so the object carries the contrast
  const real bg_lo = cfg.centered_object ? 0.42 : 0.15;
  const real bg_span = cfg.centered_object ? 0.20 : 0.70;
  sc.bg = textured_background(cfg.h, cfg.w + sc.bg_disparity, rng, bg_lo, bg_span);

  const int n_shapes =
      cfg.centered_object ? 1 : 3 + static_cast<int>(u(rng) * 4);  // 3..6
  for (int i = 0; i < n_shapes; ++i) {
    Shape s;
    s.type = 1 + static_cast<int>(u(rng) * 3);
    if (s.type > 3) s.type = 3;
    if (cfg.centered_object) {
      s.cx = cfg.w / 2.0 + (u(rng) - 0.5) * cfg.w * 0.08;
      s.cy = cfg.h / 2.0 + (u(rng) - 0.5) * cfg.h * 0.08;
      s.size = cfg.h * (0.22 + 0.08 * u(rng));
    } else {
      s.cx = cfg.w * (0.1 + 0.8 * u(rng));
      s.cy = cfg.h * (0.1 + 0.8 * u(rng));
      s.size = cfg.h * (0.10 + 0.14 * u(rng));
    }
    const real bg_mid = bg_lo + bg_span / 2;
    for (int attempt = 0; attempt < 64; ++attempt) {
      real d2 = 0;
      for (auto& c : s.color) {
        c = 0.05 + 0.9 * u(rng);
        d2 += (c - bg_mid) * (c - bg_mid);
      }
      if (!cfg.centered_object || d2 >= 0.35 * 0.35) break;
    }
    s.disparity = cfg.max_disparity > 0
                      ? sc.bg_disparity + 1 +
                            static_cast<int>(u(rng) * (cfg.max_disparity - sc.bg_disparity))
                      : 0;
    s.disparity = std::min(s.disparity, cfg.max_disparity);
    sc.shapes.push_back(s);
  }
  std::sort(sc.shapes.begin(), sc.shapes.end(),
            [](const Shape& a, const Shape& b) { return a.disparity < b.disparity; });
  return sc;
}

struct Rendered {
  Tensor rgb;          // (3,H,W)
  LabelMap semantic;   // class ids
  LabelMap disparity;  // per-pixel disparity
};

// a surface at disparity d appears d pixels further left in the right view
Rendered render(const Scene& sc, int h, int w, bool right_view) {
  Rendered out;
  out.rgb = Tensor(std::vector<int>{3, h, w});
  const int bg_w = sc.bg.dim(2);
  const int bg_shift = right_view ? sc.bg_disparity : 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.rgb[(static_cast<std::int64_t>(c) * h + y) * w + x] =
            sc.bg[(static_cast<std::int64_t>(c) * h + y) * bg_w + x + bg_shift];
  out.semantic = make_label_map(h, w);
  out.disparity = make_label_map(h, w);
  for (auto& v : out.disparity.ids) v = sc.bg_disparity;
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (const auto& s : sc.shapes) {
    const real shift = right_view ? static_cast<real>(s.disparity) : 0.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!inside(s, x + shift, y)) continue;
        for (int c = 0; c < 3; ++c) out.rgb[c * hw + y * static_cast<std::int64_t>(w) + x] = s.color[c];
        out.semantic.at(y, x) = s.type;
        out.disparity.at(y, x) = s.disparity;
      }
  }
  return out;
}

void add_texture_grain(Tensor& left, Tensor& right, Rng& rng) {
  std::uniform_real_distribution<real> u(-0.02, 0.02);
  for (std::int64_t i = 0; i < left.size(); ++i) {
    const real g = u(rng);  // same grain on both views: texture, not sensor noise
    left[i] = std::clamp(left[i] + g, 0.0, 1.0);
    right[i] = std::clamp(right[i] + g, 0.0, 1.0);
  }
}

LabelMap occlusion_map(const Rendered& left, const Rendered& right) {
  LabelMap occ = make_label_map(left.semantic.h, left.semantic.w);
  for (int y = 0; y < occ.h; ++y)
    for (int x = 0; x < occ.w; ++x) {
      const int d = left.disparity.at(y, x);
      const int xr = x - d;
      occ.at(y, x) = (xr < 0 || right.disparity.at(y, xr) != d) ? 1 : 0;
    }
  return occ;
}

std::string scene_id(int idx) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", idx);
  return buf;
}

}  // namespace

DatasetLayout make_synthetic(const SynthConfig& cfg, const std::string& out_root) {
  if (cfg.n < 1 || cfg.h < 8 || cfg.w < 8)
    throw std::invalid_argument("synthetic config: bad scene count or size");
  if (cfg.max_disparity < 0 || cfg.max_disparity >= cfg.w / 4)
    throw std::invalid_argument("synthetic config: max_disparity must be < W/4");

  namespace fs = std::filesystem;
  for (const char* sub : {"left", "right", "labels", "disparity", "occlusion"})
    fs::create_directories(out_root + "/" + sub);
  if (cfg.centered_object) fs::create_directories(out_root + "/sodgt");

  Rng rng(cfg.seed);
  std::vector<std::string> ids;
  for (int i = 0; i < cfg.n; ++i) {
    const std::string id = scene_id(i);
    ids.push_back(id);
    const Scene sc = random_scene(cfg, rng);
    Rendered left = render(sc, cfg.h, cfg.w, false);
    Rendered right = render(sc, cfg.h, cfg.w, true);
    add_texture_grain(left.rgb, right.rgb, rng);

    write_png_rgb8(out_root + "/left/" + id + ".png", tensor_to_image_u8(left.rgb));
    write_png_rgb8(out_root + "/right/" + id + ".png", tensor_to_image_u8(right.rgb));
    write_png_label16(out_root + "/labels/" + id + ".png", left.semantic);
    write_png_label16(out_root + "/disparity/" + id + ".png", left.disparity);
    write_png_label16(out_root + "/occlusion/" + id + ".png", occlusion_map(left, right));
    if (cfg.centered_object) {
      // full-scale 16-bit mask so it doubles as a viewable image
      LabelMap mask = make_label_map(cfg.h, cfg.w);
      for (std::size_t p = 0; p < mask.ids.size(); ++p)
        mask.ids[p] = left.semantic.ids[p] != 0 ? 65535 : 0;
      write_png_label16(out_root + "/sodgt/" + id + ".png", mask);
    }
  }

  const int n_val = std::max(1, static_cast<int>(std::lround(cfg.n * cfg.val_fraction)));
  const int n_train = cfg.n - n_val;
  std::ofstream train_txt(out_root + "/train.txt"), val_txt(out_root + "/val.txt");
  for (int i = 0; i < cfg.n; ++i) (i < n_train ? train_txt : val_txt) << ids[static_cast<std::size_t>(i)] << "\n";
  train_txt.close();
  val_txt.close();

  return open_dataset(out_root);
}

}  // namespace sspix
