#pragma once

#include <utility>
#include <vector>

#include "sspix/nn.hpp"

namespace sspix {

struct ExtractorConfig {
  int in_channels = 3;
  int channels = 64;
  int kernel = 3;
  int n_blocks = 7;                          // six stages plus the fusing block
  std::vector<int> downsample_after = {2, 4};
  std::vector<int> tap_blocks = {2, 4, 6};

  void validate() const;
};

/// Multi-scale convolutional encoder: Conv-BN-ReLU stages with 2x max-pooling
/// after selected stages; tapped stage outputs are bilinearly upsampled back
/// to input resolution, concatenated and fused to `channels` channels.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(ParamStore& store, ExtractorConfig cfg, Rng& rng);

  Var forward(Var x, bool training);
  // Runs both views through the same parameters as one stacked batch.
  std::pair<Var, Var> forward_pair(Var left, Var right, bool training);

  const ExtractorConfig& config() const { return cfg_; }

 private:
  ExtractorConfig cfg_;
  std::vector<ConvBnRelu> blocks_;
  ConvBnRelu fuse_;
};

}  // namespace sspix
