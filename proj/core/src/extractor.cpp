#include "sspix/extractor.hpp"

#include <algorithm>
#include <stdexcept>

namespace sspix {

void ExtractorConfig::validate() const {
  if (in_channels < 1 || channels < 1 || kernel < 1 || kernel % 2 == 0)
    throw std::invalid_argument("extractor config: bad channel/kernel setup");
  if (n_blocks < 2) throw std::invalid_argument("extractor config: need at least two blocks");
  for (int t : tap_blocks)
    if (t < 1 || t >= n_blocks)
      throw std::invalid_argument("extractor config: tap outside [1, n_blocks)");
  for (int d : downsample_after) {
    const bool tapped_or_earlier =
        std::any_of(tap_blocks.begin(), tap_blocks.end(), [d](int t) { return d <= t; });
    if (d < 1 || d >= n_blocks || !tapped_or_earlier)
      throw std::invalid_argument("extractor config: bad downsample position");
  }
  if (tap_blocks.empty()) throw std::invalid_argument("extractor config: no taps");
}

FeatureExtractor::FeatureExtractor(ParamStore& store, ExtractorConfig cfg, Rng& rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  int in_ch = cfg_.in_channels;
  for (int b = 1; b < cfg_.n_blocks; ++b) {
    blocks_.emplace_back(store, "extractor.block" + std::to_string(b), in_ch, cfg_.channels,
                         cfg_.kernel, rng);
    in_ch = cfg_.channels;
  }
  const int cat_ch = static_cast<int>(cfg_.tap_blocks.size()) * cfg_.channels;
  fuse_ = ConvBnRelu(store, "extractor.block" + std::to_string(cfg_.n_blocks), cat_ch,
                     cfg_.channels, cfg_.kernel, rng);
}

Var FeatureExtractor::forward(Var x, bool training) {
  const auto& s = x->value.shape();
  if (s.size() != 4 || s[1] != cfg_.in_channels)
    throw std::invalid_argument("extractor: input must be (N," +
                                std::to_string(cfg_.in_channels) + ",H,W)");
  const int h = s[2], w = s[3];
  if (h < 4 || w < 4) throw std::invalid_argument("extractor: input smaller than 4x4");

  std::vector<Var> taps;
  Var cur = x;
  for (int b = 1; b < cfg_.n_blocks; ++b) {
    cur = blocks_[static_cast<std::size_t>(b - 1)].forward(cur, training);
    if (std::find(cfg_.tap_blocks.begin(), cfg_.tap_blocks.end(), b) != cfg_.tap_blocks.end())
      taps.push_back(cur);
    if (std::find(cfg_.downsample_after.begin(), cfg_.downsample_after.end(), b) !=
        cfg_.downsample_after.end())
      cur = maxpool2(cur);
  }

  for (auto& t : taps)
    if (t->value.dim(2) != h || t->value.dim(3) != w) t = upsample_bilinear(t, h, w);
  return fuse_.forward(concat_channels(taps), training);
}

std::pair<Var, Var> FeatureExtractor::forward_pair(Var left, Var right, bool training) {
  if (!left->value.same_shape(right->value))
    throw std::invalid_argument("extractor: stereo views must share shape");
  const int n = left->value.dim(0);
  Var both = forward(concat_batch({left, right}), training);
  return {narrow_batch(both, 0, n), narrow_batch(both, n, n)};
}

}  // namespace sspix
