#include "sspix/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sspix {

Tensor onehot_labels(const LabelMap& labels, int n_classes) {
  if (!labels.defined()) throw std::invalid_argument("onehot_labels: empty label map");
  if (labels.max_id() >= n_classes)
    throw std::invalid_argument("onehot_labels: id exceeds class count");
  Tensor out = Tensor::zeros({n_classes, labels.h, labels.w});
  const std::int64_t hw = static_cast<std::int64_t>(labels.h) * labels.w;
  for (std::int64_t p = 0; p < hw; ++p)
    out[static_cast<std::int64_t>(labels.ids[static_cast<std::size_t>(p)]) * hw + p] = 1.0;
  return out;
}

Var semantic_loss(const Tensor& s_onehot, Var s_star) {
  if (!s_onehot.same_shape(s_star->value))
    throw std::invalid_argument("semantic_loss: shape mismatch");
  if (s_onehot.ndim() != 3) throw std::invalid_argument("semantic_loss: expects (K,H,W)");
  const real inv_pixels = 1.0 / (static_cast<real>(s_onehot.dim(1)) * s_onehot.dim(2));
  Var ce = mul(constant(s_onehot), vlog(add_scalar(s_star, 1e-8)));
  return scale(sum_all(ce), -inv_pixels);
}

Var stereo_loss(const Tensor& left_lab, const Tensor& right_lab, const ParallaxAttention& attn,
                const ValidMask& mask) {
  if (!left_lab.same_shape(right_lab))
    throw std::invalid_argument("stereo_loss: image shape mismatch");
  if (left_lab.ndim() != 4) throw std::invalid_argument("stereo_loss: expects (N,C,H,W)");
  const Var il = constant(left_lab);
  const Var ir = constant(right_lab);
  Var term_l = masked_l1_mean(sub(il, row_mix(attn.m_r2l, ir)), mask.o_l2r);
  Var term_r = masked_l1_mean(sub(ir, row_mix(attn.m_l2r, il)), mask.o_r2l);
  return add(term_l, term_r);
}

Var total_loss(Var l_sem, Var l_stereo, const LossConfig& cfg) {
  if (cfg.lambda_stereo < 0) throw std::invalid_argument("total_loss: negative lambda");
  if (!std::isfinite(scalar_value(l_sem)) || !std::isfinite(scalar_value(l_stereo)))
    throw std::invalid_argument("total_loss: non-finite loss input");
  return add(l_sem, scale(l_stereo, cfg.lambda_stereo));
}

}  // namespace sspix
