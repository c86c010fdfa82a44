#include "sspix/dsem.hpp"

#include <stdexcept>

namespace sspix {

SpatialGrids normalize_coords(int h, int w) {
  if (h < 1 || w < 1) throw std::invalid_argument("normalize_coords: bad size");
  SpatialGrids g;
  g.x_hat = Tensor::zeros({h, w});
  g.y_hat = Tensor::zeros({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      g.x_hat[static_cast<int64_t>(y) * w + x] = static_cast<real>(x + 1) / w;
      g.y_hat[static_cast<int64_t>(y) * w + x] = static_cast<real>(y + 1) / h;
    }
  return g;
}

Dsem::Dsem(ParamStore& store, int channels, Rng& rng, bool se, bool df) : se_(se), df_(df) {
  if (!se_ && !df_) return;  // identity module, no parameters
  if (se_) {
    conv_x_ = Conv2d(store, "dsem.se.conv_x", channels, channels, 1, rng);
    conv_y_ = Conv2d(store, "dsem.se.conv_y", channels, channels, 1, rng);
  }
  const int cat_ch = se_ ? 3 * channels : channels;
  coarse_ = ConvBnRelu(store, "dsem.coarse", cat_ch, channels, 3, rng);
  if (df_) {
    g_block_ = ConvBnRelu(store, "dsem.df.g", channels, channels, 1, rng);
    att1_ = Conv2d(store, "dsem.df.att1", channels, channels, 1, rng);
    att2_ = Conv2d(store, "dsem.df.att2", channels, channels, 1, rng);
    ln_ = LayerNormChannels(store, "dsem.df.ln", channels);
  }
  out_block_ = ConvBnRelu(store, "dsem.out", channels, channels, 3, rng);
}

Var Dsem::spatial_embed(Var f, const SpatialGrids& grids) const {
  Var fx = conv_x_.forward(add_plane(f, constant(grids.x_hat)));
  Var fy = conv_y_.forward(add_plane(f, constant(grids.y_hat)));
  return concat_channels({fx, fy, f});
}

Var Dsem::weighting_map(Var g) const {
  return mul(g, sigmoid(att2_.forward(relu(ln_.forward(att1_.forward(g))))));
}

Var Dsem::dynamic_fuse(Var f_cat, bool training) {
  Var coarse = coarse_.forward(f_cat, training);
  if (df_) {
    Var g = g_block_.forward(global_avg_pool(coarse), training);
    coarse = add_channel_vec(coarse, weighting_map(g));
  }
  return out_block_.forward(coarse, training);
}

Var Dsem::forward(Var f, bool training) {
  if (!se_ && !df_) return f;
  Var cat = f;
  if (se_) {
    const SpatialGrids grids = normalize_coords(f->value.dim(2), f->value.dim(3));
    cat = spatial_embed(f, grids);
  }
  return dynamic_fuse(cat, training);
}

}  // namespace sspix
