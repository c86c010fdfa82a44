#pragma once

#include <string>

#include "sspix/tensor.hpp"

namespace sspix {

// Debug exchange format: 16-byte header (magic 'FMP1', H, W, C as
// little-endian uint32) followed by row-major (H,W,C) float32 samples.
void write_feature_dump(const std::string& path, const Tensor& chw);
Tensor read_feature_dump(const std::string& path);  // returns (C,H,W)

}  // namespace sspix
