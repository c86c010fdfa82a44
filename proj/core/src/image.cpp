#include "sspix/image.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sspix {

namespace {

// sRGB <-> CIE XYZ (D65), then XYZ <-> Lab
constexpr real kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

real srgb_decode(real v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

real srgb_encode(real v) {
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

real lab_f(real t) {
  constexpr real d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

real lab_f_inv(real t) {
  constexpr real d = 6.0 / 29.0;
  return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

}  // namespace

std::int32_t LabelMap::max_id() const {
  std::int32_t m = -1;
  for (auto v : ids) m = std::max(m, v);
  return m;
}

int LabelMap::n_distinct() const {
  std::unordered_set<std::int32_t> s(ids.begin(), ids.end());
  return static_cast<int>(s.size());
}

LabelMap make_label_map(int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("label map dimensions must be positive");
  LabelMap m;
  m.h = h;
  m.w = w;
  m.ids.assign(static_cast<std::size_t>(h) * w, 0);
  return m;
}

LabelMap label_from_tensor(const Tensor& t) {
  if (t.ndim() != 2) throw ValidationError("label_from_tensor: expects (H,W)");
  LabelMap m = make_label_map(t.dim(0), t.dim(1));
  for (std::int64_t i = 0; i < t.size(); ++i) {
    const real v = t[i];
    if (!std::isfinite(v) || v < 0 || v != std::floor(v))
      throw ValidationError("label_from_tensor: entries must be non-negative integers");
    m.ids[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(v);
  }
  return m;
}

Tensor image_to_tensor(const ImageU8& img) {
  if (img.c != 3) throw ValidationError("image_to_tensor: expects 3 channels");
  Tensor t({3, img.h, img.w});
  const std::int64_t hw = static_cast<std::int64_t>(img.h) * img.w;
  for (std::int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch)
      t[ch * hw + p] = img.pixels[p * 3 + ch] / 255.0;
  return t;
}

ImageU8 tensor_to_image_u8(const Tensor& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3)
    throw ValidationError("tensor_to_image_u8: expects (3,H,W)");
  ImageU8 img;
  img.h = rgb.dim(1);
  img.w = rgb.dim(2);
  img.c = 3;
  const std::int64_t hw = static_cast<std::int64_t>(img.h) * img.w;
  img.pixels.resize(static_cast<std::size_t>(hw) * 3);
  for (std::int64_t p = 0; p < hw; ++p)
    for (int ch = 0; ch < 3; ++ch) {
      const real v = std::clamp(rgb[ch * hw + p], 0.0, 1.0);
      img.pixels[p * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  return img;
}

Tensor rgb_to_lab(const Tensor& rgb) {
  if (rgb.ndim() != 3 || rgb.dim(0) != 3) throw ValidationError("rgb_to_lab: expects (3,H,W)");
  const std::int64_t hw = static_cast<std::int64_t>(rgb.dim(1)) * rgb.dim(2);
  for (std::int64_t i = 0; i < rgb.size(); ++i)
    if (rgb[i] < -1e-9 || rgb[i] > 1.0 + 1e-9)
      throw ValidationError("rgb_to_lab: values must lie in [0,1]");
  Tensor lab({3, rgb.dim(1), rgb.dim(2)});
  for (std::int64_t p = 0; p < hw; ++p) {
    const real r = srgb_decode(rgb[p]);
    const real g = srgb_decode(rgb[hw + p]);
    const real b = srgb_decode(rgb[2 * hw + p]);
    const real x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    const real y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    const real z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    const real fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
    lab[p] = 116.0 * fy - 16.0;
    lab[hw + p] = 500.0 * (fx - fy);
    lab[2 * hw + p] = 200.0 * (fy - fz);
  }
  return lab;
}

Tensor lab_to_rgb(const Tensor& lab) {
  if (lab.ndim() != 3 || lab.dim(0) != 3) throw ValidationError("lab_to_rgb: expects (3,H,W)");
  const std::int64_t hw = static_cast<std::int64_t>(lab.dim(1)) * lab.dim(2);
  Tensor rgb({3, lab.dim(1), lab.dim(2)});
  for (std::int64_t p = 0; p < hw; ++p) {
    const real fy = (lab[p] + 16.0) / 116.0;
    const real fx = fy + lab[hw + p] / 500.0;
    const real fz = fy - lab[2 * hw + p] / 200.0;
    const real x = kXn * lab_f_inv(fx);
    const real y = kYn * lab_f_inv(fy);
    const real z = kZn * lab_f_inv(fz);
    const real r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
    const real g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
    const real b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
    rgb[p] = std::clamp(srgb_encode(r), 0.0, 1.0);
    rgb[hw + p] = std::clamp(srgb_encode(g), 0.0, 1.0);
    rgb[2 * hw + p] = std::clamp(srgb_encode(b), 0.0, 1.0);
  }
  return rgb;
}

const StereoPair& validate_pair(const StereoPair& pair) {
  if (!pair.left.defined() || !pair.right.defined())
    throw ValidationError("stereo pair: missing view");
  if (pair.left.ndim() != 3 || pair.left.dim(0) != 3)
    throw ValidationError("stereo pair: left view must be (3,H,W)");
  if (!pair.left.same_shape(pair.right))
    throw ValidationError("stereo pair: left/right shape mismatch");
  if (!pair.left.all_finite() || !pair.right.all_finite())
    throw ValidationError("stereo pair: non-finite pixel values");
  if (pair.label.defined()) {
    if (pair.label.h != pair.left.dim(1) || pair.label.w != pair.left.dim(2))
      throw ValidationError("stereo pair: label size mismatch");
    if (pair.label.ids.empty() || pair.label.n_distinct() < 1)
      throw ValidationError("stereo pair: label has no classes");
    for (auto v : pair.label.ids)
      if (v < 0) throw ValidationError("stereo pair: negative label id");
  }
  return pair;
}

}  // namespace sspix
