#include "sspix/sod.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <unordered_map>

namespace sspix {
namespace {

real lab_dist(const std::array<real, 3>& a, const std::array<real, 3>& b) {
  real d0 = a[0] - b[0], d1 = a[1] - b[1], d2 = a[2] - b[2];
  return std::sqrt(d0 * d0 + d1 * d1 + d2 * d2);
}

}  // namespace

SuperpixelGraph build_superpixel_graph(const Tensor& lab, const LabelMap& labels) {
  if (lab.ndim() != 3 || lab.dim(0) != 3 || lab.dim(1) != labels.h || lab.dim(2) != labels.w)
    throw ValidationError("expected (3,H,W) Lab tensor matching the label map");
  SuperpixelGraph g;
  g.h = labels.h;
  g.w = labels.w;

  std::unordered_map<int32_t, int> lut;
  g.region_of_pixel.resize((size_t)g.h * g.w);
  for (size_t i = 0; i < labels.ids.size(); ++i) {
    auto [it, fresh] = lut.emplace(labels.ids[i], (int)lut.size());
    (void)fresh;
    g.region_of_pixel[i] = it->second;
  }
  g.n = (int)lut.size();
  g.mean_lab.assign(g.n, {0, 0, 0});
  g.cx.assign(g.n, 0);
  g.cy.assign(g.n, 0);
  g.size.assign(g.n, 0);
  g.on_border.assign(g.n, false);
  g.adj.assign(g.n, {});

  const real* L = lab.data();
  const size_t plane = (size_t)g.h * g.w;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      size_t i = (size_t)y * g.w + x;
      int r = g.region_of_pixel[i];
      g.mean_lab[r][0] += L[i];
      g.mean_lab[r][1] += L[plane + i];
      g.mean_lab[r][2] += L[2 * plane + i];
      g.cx[r] += x;
      g.cy[r] += y;
      g.size[r]++;
      if (y == 0 || x == 0 || y == g.h - 1 || x == g.w - 1) g.on_border[r] = true;
    }
  for (int r = 0; r < g.n; ++r) {
    real inv = 1.0 / (real)g.size[r];
    g.mean_lab[r][0] *= inv;
    g.mean_lab[r][1] *= inv;
    g.mean_lab[r][2] *= inv;
    g.cx[r] *= inv;
    g.cy[r] *= inv;
  }

  std::set<std::pair<int, int>> edges;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      int a = g.region_of_pixel[(size_t)y * g.w + x];
      if (x + 1 < g.w) {
        int b = g.region_of_pixel[(size_t)y * g.w + x + 1];
        if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
      }
      if (y + 1 < g.h) {
        int b = g.region_of_pixel[(size_t)(y + 1) * g.w + x];
        if (a != b) edges.emplace(std::min(a, b), std::max(a, b));
      }
    }
  for (auto [a, b] : edges) {
    real d = lab_dist(g.mean_lab[a], g.mean_lab[b]);
    g.adj[a].push_back({b, d});
    g.adj[b].push_back({a, d});
  }
  return g;
}

std::vector<real> geodesic_distances(const SuperpixelGraph& g, int src) {
  if (src < 0 || src >= g.n) throw ValidationError("geodesic source out of range");
  const real inf = std::numeric_limits<real>::infinity();
  std::vector<real> dist(g.n, inf);
  dist[src] = 0;
  using Item = std::pair<real, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> pq;
  pq.push({0, src});
  while (!pq.empty()) {
    auto [d, u] = pq.top();
    pq.pop();
    if (d > dist[u]) continue;
    for (auto [v, w] : g.adj[u]) {
      real nd = d + w;
      if (nd < dist[v]) {
        dist[v] = nd;
        pq.push({nd, v});
      }
    }
  }
  return dist;
}

real boundary_connectivity(const SuperpixelGraph& g, const std::vector<int>& region) {
  if (region.empty()) throw ValidationError("boundary connectivity of an empty region");
  long long on_border = 0;
  for (int p : region) {
    if (p < 0 || p >= g.n) throw ValidationError("region index out of range");
    if (g.on_border[p]) on_border++;
  }
  return (real)on_border / std::sqrt((real)region.size());
}

std::vector<std::vector<real>> soft_regions(const SuperpixelGraph& g, real sigma_clr) {
  if (sigma_clr <= 0) throw ValidationError("sigma_clr must be positive");
  const real denom = 2 * sigma_clr * sigma_clr;
  std::vector<std::vector<real>> member(g.n, std::vector<real>(g.n, 0.0));
  for (int p = 0; p < g.n; ++p) {
    std::vector<real> dist = geodesic_distances(g, p);
    for (int q = 0; q < g.n; ++q)
      if (std::isfinite(dist[q])) member[p][q] = std::exp(-dist[q] * dist[q] / denom);
  }
  return member;
}

std::vector<real> soft_boundary_connectivity(const SuperpixelGraph& g, real sigma_clr) {
  std::vector<std::vector<real>> member = soft_regions(g, sigma_clr);
  std::vector<real> bndcon(g.n, 0);
  for (int p = 0; p < g.n; ++p) {
    real area = 0, len = 0;
    for (int q = 0; q < g.n; ++q) {
      area += member[p][q];
      if (g.on_border[q]) len += member[p][q];
    }
    bndcon[p] = len / std::sqrt(area);
  }
  return bndcon;
}

real background_weight(real bndcon, real sigma_bndcon) {
  return 1.0 - std::exp(-bndcon * bndcon / (2 * sigma_bndcon * sigma_bndcon));
}

std::vector<real> saliency_scores(const SuperpixelGraph& g, const SodConfig& cfg) {
  std::vector<real> bndcon = soft_boundary_connectivity(g, cfg.sigma_clr);
  std::vector<real> w_bg(g.n);
  for (int p = 0; p < g.n; ++p) w_bg[p] = background_weight(bndcon[p], cfg.sigma_bndcon);

  const real diag = std::sqrt((real)g.h * g.h + (real)g.w * g.w);
  const real sigma_spa = cfg.sigma_spa_frac * diag;
  const real sden = 2 * sigma_spa * sigma_spa;
  std::vector<real> sal(g.n, 0);
  for (int p = 0; p < g.n; ++p) {
    real acc = 0;
    for (int q = 0; q < g.n; ++q) {
      if (q == p) continue;
      real dx = g.cx[p] - g.cx[q], dy = g.cy[p] - g.cy[q];
      real w_spa = std::exp(-(dx * dx + dy * dy) / sden);
      acc += lab_dist(g.mean_lab[p], g.mean_lab[q]) * w_spa * w_bg[q];
    }
    sal[p] = (1.0 - w_bg[p]) * acc;  // foreground probability times background-weighted contrast
  }

  real lo = *std::min_element(sal.begin(), sal.end());
  real hi = *std::max_element(sal.begin(), sal.end());
  if (hi - lo <= 0) return std::vector<real>(g.n, 0.0);
  for (real& v : sal) v = (v - lo) / (hi - lo);
  return sal;
}

std::vector<real> saliency_map(const SuperpixelGraph& g, const std::vector<real>& scores) {
  if ((int)scores.size() != g.n) throw ValidationError("score count does not match graph");
  std::vector<real> out((size_t)g.h * g.w);
  for (size_t i = 0; i < out.size(); ++i) out[i] = scores[g.region_of_pixel[i]];
  return out;
}

real mae(const std::vector<real>& saliency, const std::vector<real>& gt) {
  if (saliency.size() != gt.size() || saliency.empty())
    throw ValidationError("saliency and ground truth sizes differ");
  real acc = 0;
  for (size_t i = 0; i < saliency.size(); ++i) acc += std::abs(saliency[i] - gt[i]);
  return acc / (real)saliency.size();
}

std::vector<real> mask_to_real(const LabelMap& mask) {
  std::vector<real> out(mask.ids.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = (real)mask.ids[i] / 65535.0;
  return out;
}

}  // namespace sspix
