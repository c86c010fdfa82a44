#pragma once

#include "sspix/nn.hpp"

namespace sspix {

/// Max-normalized 1-based coordinate ramps, values in (0,1].
struct SpatialGrids {
  Tensor x_hat, y_hat;  // (H,W) each
};

SpatialGrids normalize_coords(int h, int w);

/// Spatiality embedding (SE) re-adds coordinate ramps to fused features;
/// dynamic fusion (DF) reweights them through a channel-attention branch.
/// With both parts disabled the module is an exact identity (ablation B1).
class Dsem {
 public:
  Dsem() = default;
  Dsem(ParamStore& store, int channels, Rng& rng, bool se = true, bool df = true);

  Var spatial_embed(Var f, const SpatialGrids& grids) const;  // C -> 3C channels
  Var weighting_map(Var g) const;  // W = g * sigmoid(conv(relu(ln(conv(g)))))
  Var dynamic_fuse(Var f_cat, bool training);
  Var forward(Var f, bool training);

  bool se_enabled() const { return se_; }
  bool df_enabled() const { return df_; }

 private:
  bool se_ = true, df_ = true;
  Conv2d conv_x_, conv_y_;  // 1x1 branch convolutions
  ConvBnRelu coarse_;       // (3C or C) -> C
  ConvBnRelu g_block_;      // global descriptor head, 1x1
  Conv2d att1_, att2_;      // 1x1 attention bottleneck
  LayerNormChannels ln_;
  ConvBnRelu out_block_;
};

}  // namespace sspix
