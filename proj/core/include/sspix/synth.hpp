#pragma once

#include <cstdint>
#include <string>

#include "sspix/dataset.hpp"

namespace sspix {

/// Scenes of colored geometric shapes over a textured background; the right
/// view shifts every shape by its disparity, occlusions fall out of the
/// painter order. Semantic classes: 0 background, 1 rectangle, 2 disc,
/// 3 triangle.
struct SynthConfig {
  int n = 64;
  int h = 64, w = 64;
  int max_disparity = 8;
  std::uint64_t seed = 1;
  bool centered_object = false;  // single salient shape + binary SOD mask
  real val_fraction = 0.25;
};

DatasetLayout make_synthetic(const SynthConfig& cfg, const std::string& out_root);

constexpr int kSynthClasses = 4;

}  // namespace sspix
