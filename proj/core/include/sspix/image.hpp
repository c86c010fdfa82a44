#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sspix/tensor.hpp"

namespace sspix {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Interleaved 8-bit image, row-major, origin top-left.
struct ImageU8 {
  int h = 0, w = 0, c = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int y, int x, int ch) const {
    return pixels[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
};

/// Integer label image (semantic classes or superpixel ids).
struct LabelMap {
  int h = 0, w = 0;
  std::vector<std::int32_t> ids;

  bool defined() const { return h > 0 && w > 0; }
  std::int32_t at(int y, int x) const { return ids[static_cast<std::size_t>(y) * w + x]; }
  std::int32_t& at(int y, int x) { return ids[static_cast<std::size_t>(y) * w + x]; }
  std::int32_t max_id() const;
  int n_distinct() const;
};

LabelMap make_label_map(int h, int w);

/// Converts an (H,W) tensor of integral values into a LabelMap; rejects
/// NaN/Inf and non-integral or negative entries.
LabelMap label_from_tensor(const Tensor& t);

// (3,H,W) planar float tensors; RGB in [0,1], Lab in CIE ranges (D65)
Tensor image_to_tensor(const ImageU8& img);
ImageU8 tensor_to_image_u8(const Tensor& rgb);
Tensor rgb_to_lab(const Tensor& rgb);
Tensor lab_to_rgb(const Tensor& lab);

struct StereoPair {
  Tensor left;   // (3,H,W) Lab
  Tensor right;  // (3,H,W) Lab
  LabelMap label;  // optional semantic map on the left view
  std::string id;

  int h() const { return left.defined() ? left.dim(1) : 0; }
  int w() const { return left.defined() ? left.dim(2) : 0; }
};

/// Returns the pair untouched when all invariants hold, throws otherwise.
const StereoPair& validate_pair(const StereoPair& pair);

}  // namespace sspix
