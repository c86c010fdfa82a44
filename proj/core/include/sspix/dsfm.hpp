#pragma once

#include <utility>

#include "sspix/nn.hpp"

namespace sspix {

/// Row-wise (epipolar) attention maps, each (N,H,W,W) with softmax over the
/// last axis. m_r2l mixes right-view features into the left view; m_l2r the
/// converse.
struct ParallaxAttention {
  Var m_r2l, m_l2r;
};

/// Hard {0,1} occlusion masks, (N,H,W), detached from gradient flow.
/// o_l2r flags valid left-view pixels, o_r2l valid right-view pixels.
struct ValidMask {
  Tensor o_l2r, o_r2l;
  real tau = 0.1;
};

class Dsfm {
 public:
  Dsfm() = default;
  Dsfm(ParamStore& store, int channels, Rng& rng, real tau = 0.1);

  ParallaxAttention attention_maps(Var f_left, Var f_right) const;
  static std::pair<Var, Var> align(const ParallaxAttention& attn, Var f_left, Var f_right);
  ValidMask valid_mask(const ParallaxAttention& attn) const;
  // Pre-reduction fusion: concat(mask ? aligned : self, self), 2C channels.
  static Var fuse_concat(Var f_self, Var f_aligned, const Tensor& mask);
  Var reduce(Var f_cat, bool training) { return reduce_.forward(f_cat, training); }

  struct Output {
    Var left, right;
    ParallaxAttention attn;
    ValidMask mask;
  };
  // occlusion_handling=false replaces both masks with all-ones (ablation B5).
  Output forward(Var f_left, Var f_right, bool training, bool occlusion_handling = true);

  real tau() const { return tau_; }

 private:
  Conv2d proj_a_, proj_b_;
  ConvBnRelu reduce_;
  real tau_ = 0.1;
};

}  // namespace sspix
