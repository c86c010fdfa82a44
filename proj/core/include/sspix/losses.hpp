#pragma once

#include "sspix/dsfm.hpp"
#include "sspix/image.hpp"

namespace sspix {

struct LossConfig {
  real lambda_stereo = 1.0;
};

Tensor onehot_labels(const LabelMap& labels, int n_classes);  // (K,H,W)

/// Pixel-mean cross entropy -1/(HW) sum_p sum_k S log(S* + 1e-8).
Var semantic_loss(const Tensor& s_onehot, Var s_star);

/// Masked photometric L1 of both warp directions; each term is averaged over
/// its own valid entries, so occluded pixels never contribute.
Var stereo_loss(const Tensor& left_lab, const Tensor& right_lab, const ParallaxAttention& attn,
                const ValidMask& mask);

Var total_loss(Var l_sem, Var l_stereo, const LossConfig& cfg);

}  // namespace sspix
