#pragma once

#include <array>
#include <utility>
#include <vector>

#include "sspix/image.hpp"
#include "sspix/tensor.hpp"

namespace sspix {

/// Region adjacency graph over a superpixel segmentation. Edge weights are
/// Euclidean distances between mean Lab colors of adjacent regions.
struct SuperpixelGraph {
  int h = 0, w = 0;
  int n = 0;
  std::vector<std::array<real, 3>> mean_lab;
  std::vector<real> cx, cy;             // centroids, pixel units
  std::vector<long long> size;
  std::vector<bool> on_border;          // touches the image frame
  std::vector<std::vector<std::pair<int, real>>> adj;
  std::vector<int> region_of_pixel;     // dense region index per pixel
};

SuperpixelGraph build_superpixel_graph(const Tensor& lab, const LabelMap& labels);

/// Shortest-path appearance distances from one region to all regions.
std::vector<real> geodesic_distances(const SuperpixelGraph& g, int src);

/// Hard boundary connectivity of a region (a set of node indices):
/// |region ∩ border| / sqrt(|region|).
real boundary_connectivity(const SuperpixelGraph& g, const std::vector<int>& region);

/// Soft region membership: row p holds exp(-d_geo(p,q)^2 / (2 sigma_clr^2))
/// for every q.
std::vector<std::vector<real>> soft_regions(const SuperpixelGraph& g, real sigma_clr);

/// Boundary connectivity with soft counts: len_border(p) / sqrt(area(p)),
/// both sums of the soft memberships (border regions / all regions).
std::vector<real> soft_boundary_connectivity(const SuperpixelGraph& g, real sigma_clr);

real background_weight(real bndcon, real sigma_bndcon = 1.0);  // 1 - exp(-b^2/(2s^2))

struct SodConfig {
  real sigma_clr = 10.0;       // Lab units, geodesic softening
  real sigma_bndcon = 1.0;     // background-probability falloff
  real sigma_spa_frac = 0.25;  // spatial falloff as a fraction of the diagonal
};

/// Foreground probability (1 - w_bg) times background-weighted contrast per
/// region, min-max normalized to [0,1]. A graph whose scores are all equal
/// collapses to all zeros.
std::vector<real> saliency_scores(const SuperpixelGraph& g, const SodConfig& cfg = {});

/// Scatters per-region scores back to a (H*W) pixel map.
std::vector<real> saliency_map(const SuperpixelGraph& g, const std::vector<real>& scores);

real mae(const std::vector<real>& saliency, const std::vector<real>& gt);

/// 16-bit mask to [0,1] reals (full-scale value maps to 1).
std::vector<real> mask_to_real(const LabelMap& mask);

}  // namespace sspix
