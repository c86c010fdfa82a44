#include "sspix/dsfm.hpp"

#include <stdexcept>

namespace sspix {

Dsfm::Dsfm(ParamStore& store, int channels, Rng& rng, real tau) : tau_(tau) {
  proj_a_ = Conv2d(store, "dsfm.proj_a", channels, channels, 1, rng);
  proj_b_ = Conv2d(store, "dsfm.proj_b", channels, channels, 1, rng);
  reduce_ = ConvBnRelu(store, "dsfm.reduce", 2 * channels, channels, 3, rng);
}

ParallaxAttention Dsfm::attention_maps(Var f_left, Var f_right) const {
  if (!f_left->value.same_shape(f_right->value))
    throw std::invalid_argument("dsfm: stereo features must share shape");
  Var a = proj_a_.forward(f_left);
  Var b = proj_b_.forward(f_right);
  ParallaxAttention attn;
  attn.m_r2l = softmax_lastdim(row_scores(a, b));
  attn.m_l2r = softmax_lastdim(row_scores(b, a));
  return attn;
}

std::pair<Var, Var> Dsfm::align(const ParallaxAttention& attn, Var f_left, Var f_right) {
  return {row_mix(attn.m_r2l, f_right), row_mix(attn.m_l2r, f_left)};
}

namespace {

// O(i,j) = 1 iff sum_k M(i,k,j) > tau; the sum runs over the query axis.
Tensor column_sum_mask(const Tensor& m, real tau) {
  const auto& s = m.shape();
  const int n = s[0], h = s[1], w = s[2];
  Tensor out = Tensor::zeros({n, h, w});
  for (int bn = 0; bn < n; ++bn)
    for (int y = 0; y < h; ++y) {
      const real* rows = m.data() + ((static_cast<int64_t>(bn) * h + y) * w) * w;
      real* po = out.data() + (static_cast<int64_t>(bn) * h + y) * w;
      for (int j = 0; j < w; ++j) {
        real sum = 0;
        for (int k = 0; k < w; ++k) sum += rows[static_cast<int64_t>(k) * w + j];
        po[j] = sum > tau ? 1.0 : 0.0;
      }
    }
  return out;
}

}  // namespace

ValidMask Dsfm::valid_mask(const ParallaxAttention& attn) const {
  ValidMask vm;
  vm.tau = tau_;
  vm.o_l2r = column_sum_mask(attn.m_l2r->value, tau_);
  vm.o_r2l = column_sum_mask(attn.m_r2l->value, tau_);
  return vm;
}

Var Dsfm::fuse_concat(Var f_self, Var f_aligned, const Tensor& mask) {
  return concat_channels({masked_mix(f_aligned, f_self, mask), f_self});
}

Dsfm::Output Dsfm::forward(Var f_left, Var f_right, bool training, bool occlusion_handling) {
  Output out;
  out.attn = attention_maps(f_left, f_right);
  auto [al, ar] = align(out.attn, f_left, f_right);
  out.mask = valid_mask(out.attn);
  if (!occlusion_handling) {
    out.mask.o_l2r.fill(1);
    out.mask.o_r2l.fill(1);
  }
  out.left = reduce(fuse_concat(f_left, al, out.mask.o_l2r), training);
  out.right = reduce(fuse_concat(f_right, ar, out.mask.o_r2l), training);
  return out;
}

}  // namespace sspix
