#include "sspix/soft_cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace sspix {

void ClusterConfig::validate() const {
  if (n_spixels < 1 || grid_h < 1 || grid_w < 1 || grid_h * grid_w != n_spixels)
    throw std::invalid_argument("cluster config: grid does not factor n_spixels");
  if (n_iters < 1) throw std::invalid_argument("cluster config: n_iters must be >= 1");
  if (candidate_radius != 1)
    throw std::invalid_argument("cluster config: only the 3x3 candidate scheme is supported");
}

ClusterConfig make_cluster_config(int n_spixels, int h, int w, int n_iters) {
  if (n_spixels < 1) throw std::invalid_argument("n_spixels must be positive");
  const real target = std::log(static_cast<real>(w) / h);
  ClusterConfig cfg;
  cfg.n_spixels = n_spixels;
  cfg.n_iters = n_iters;
  real best = 1e300;
  for (int gh = 1; gh <= n_spixels; ++gh) {
    if (n_spixels % gh != 0) continue;
    const int gw = n_spixels / gh;
    const real score = std::abs(std::log(static_cast<real>(gw) / gh) - target);
    if (score < best) {
      best = score;
      cfg.grid_h = gh;
      cfg.grid_w = gw;
    }
  }
  cfg.validate();
  return cfg;
}

CellGrid make_cell_grid(int h, int w, const ClusterConfig& cfg) {
  cfg.validate();
  if (h < cfg.grid_h || w < cfg.grid_w)
    throw std::invalid_argument("cell grid larger than image");
  CellGrid g;
  g.h = h;
  g.w = w;
  g.grid_h = cfg.grid_h;
  g.grid_w = cfg.grid_w;
  g.cell_of_pixel.resize(static_cast<std::size_t>(h) * w);
  auto pixels = std::make_shared<std::vector<std::vector<int>>>(
      static_cast<std::size_t>(cfg.n_spixels));
  auto cand = std::make_shared<std::vector<int>>(
      static_cast<std::size_t>(h) * w * CellGrid::n_slots);
  for (int y = 0; y < h; ++y) {
    const int gy = static_cast<int>(static_cast<std::int64_t>(y) * cfg.grid_h / h);
    for (int x = 0; x < w; ++x) {
      const int gx = static_cast<int>(static_cast<std::int64_t>(x) * cfg.grid_w / w);
      const int p = y * w + x;
      const int cell = gy * cfg.grid_w + gx;
      g.cell_of_pixel[static_cast<std::size_t>(p)] = cell;
      (*pixels)[static_cast<std::size_t>(cell)].push_back(p);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int slot = (dy + 1) * 3 + (dx + 1);
          const int ny = gy + dy, nx = gx + dx;
          const bool ok = ny >= 0 && ny < cfg.grid_h && nx >= 0 && nx < cfg.grid_w;
          (*cand)[static_cast<std::size_t>(p) * CellGrid::n_slots + slot] =
              ok ? ny * cfg.grid_w + nx : -1;
        }
    }
  }
  g.cell_pixels = pixels;
  g.candidates = cand;
  return g;
}

Var init_centers(Var features, const CellGrid& grid) {
  return cell_means(features, grid.cell_pixels);
}

ClusterResult cluster_iterate(Var features, Var centers, const CellGrid& grid, int n_iters) {
  if (n_iters < 1) throw std::invalid_argument("cluster_iterate: n_iters must be >= 1");
  const Var ones = constant(Tensor::full({1, grid.h, grid.w}, 1.0));
  ClusterResult res;
  res.centers = centers;
  for (int it = 0; it < n_iters; ++it) {
    Var d = candidate_sqdist(features, res.centers, grid.candidates, CellGrid::n_slots);
    res.q = neg_softmax_slots(d, grid.candidates);
    Var pool = assoc_pool(res.q, features, grid.candidates, grid.n_cells());
    Var mass = assoc_pool(res.q, ones, grid.candidates, grid.n_cells());
    res.centers = center_update(pool, mass, res.centers, 1e-12);
  }
  return res;
}

LabelMap hard_assign(const Tensor& q, const CellGrid& grid) {
  if (q.ndim() != 3 || q.dim(0) != grid.h || q.dim(1) != grid.w ||
      q.dim(2) != CellGrid::n_slots)
    throw std::invalid_argument("hard_assign: association shape mismatch");
  LabelMap out = make_label_map(grid.h, grid.w);
  const std::int64_t hw = static_cast<std::int64_t>(grid.h) * grid.w;
  for (std::int64_t p = 0; p < hw; ++p) {
    real best = -1;
    int best_cell = -1;
    for (int sl = 0; sl < CellGrid::n_slots; ++sl) {
      const int cell = (*grid.candidates)[p * CellGrid::n_slots + sl];
      if (cell < 0) continue;
      const real v = q[p * CellGrid::n_slots + sl];
      if (v > best || (v == best && cell < best_cell)) {
        best = v;
        best_cell = cell;
      }
    }
    out.ids[static_cast<std::size_t>(p)] = best_cell;
  }
  return out;
}

Var reconstruct_label(Var q, const CellGrid& grid, const Tensor& s_onehot) {
  if (s_onehot.ndim() != 3 || s_onehot.dim(1) != grid.h || s_onehot.dim(2) != grid.w)
    throw std::invalid_argument("reconstruct_label: one-hot shape mismatch");
  const int k = s_onehot.dim(0);
  const Var onehot = constant(s_onehot);
  const Var ones = constant(Tensor::full({1, grid.h, grid.w}, 1.0));
  Var pool = assoc_pool(q, onehot, grid.candidates, grid.n_cells());
  Var mass = assoc_pool(q, ones, grid.candidates, grid.n_cells());
  Var table = center_update(pool, mass, constant(Tensor::zeros({grid.n_cells(), k})), 1e-12);
  return assoc_mix(q, table, grid.candidates);
}

namespace {

struct Component {
  std::int32_t label = 0;
  std::vector<int> pixels;
};

std::vector<Component> find_components(const LabelMap& labels, std::vector<int>& comp_of) {
  const int h = labels.h, w = labels.w;
  comp_of.assign(static_cast<std::size_t>(h) * w, -1);
  std::vector<Component> comps;
  std::deque<int> queue;
  for (int start = 0; start < h * w; ++start) {
    if (comp_of[static_cast<std::size_t>(start)] >= 0) continue;
    const int id = static_cast<int>(comps.size());
    comps.push_back({labels.ids[static_cast<std::size_t>(start)], {}});
    comp_of[static_cast<std::size_t>(start)] = id;
    queue.push_back(start);
    while (!queue.empty()) {
      const int p = queue.front();
      queue.pop_front();
      comps[static_cast<std::size_t>(id)].pixels.push_back(p);
      const int y = p / w, x = p % w;
      const int ns[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1,
                         x + 1 < w ? p + 1 : -1};
      for (int np : ns) {
        if (np < 0 || comp_of[static_cast<std::size_t>(np)] >= 0) continue;
        if (labels.ids[static_cast<std::size_t>(np)] != comps[static_cast<std::size_t>(id)].label)
          continue;
        comp_of[static_cast<std::size_t>(np)] = id;
        queue.push_back(np);
      }
    }
  }
  return comps;
}

}  // namespace

LabelMap enforce_connectivity(const LabelMap& labels, int n_spixels) {
  if (!labels.defined()) throw std::invalid_argument("enforce_connectivity: empty labels");
  const int h = labels.h, w = labels.w;
  const int min_size = std::max(1, (h * w / std::max(1, n_spixels)) / 4);

  LabelMap cur = labels;
  for (int pass = 0; pass < 16; ++pass) {
    std::vector<int> comp_of;
    auto comps = find_components(cur, comp_of);
    bool changed = false;
    for (std::size_t ci = 0; ci < comps.size(); ++ci) {
      if (static_cast<int>(comps[ci].pixels.size()) >= min_size) continue;
      // longest shared border, measured in adjacent pixel contacts
      std::vector<std::pair<int, int>> contact;  // (component, count)
      for (int p : comps[ci].pixels) {
        const int y = p / w, x = p % w;
        const int ns[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1,
                           x + 1 < w ? p + 1 : -1};
        for (int np : ns) {
          if (np < 0) continue;
          const int nc = comp_of[static_cast<std::size_t>(np)];
          if (nc == static_cast<int>(ci)) continue;
          auto it = std::find_if(contact.begin(), contact.end(),
                                 [nc](const auto& e) { return e.first == nc; });
          if (it == contact.end())
            contact.emplace_back(nc, 1);
          else
            ++it->second;
        }
      }
      if (contact.empty()) continue;  // whole image is one tiny component
      const auto best = std::max_element(contact.begin(), contact.end(),
                                         [](const auto& a, const auto& b) {
                                           return a.second < b.second;
                                         });
      const std::int32_t target = comps[static_cast<std::size_t>(best->first)].label;
      for (int p : comps[ci].pixels) cur.ids[static_cast<std::size_t>(p)] = target;
      changed = true;
    }
    if (!changed) break;
  }

  // one sequential id per surviving component
  std::vector<int> comp_of;
  auto comps = find_components(cur, comp_of);
  LabelMap out = make_label_map(h, w);
  for (std::size_t i = 0; i < out.ids.size(); ++i)
    out.ids[i] = static_cast<std::int32_t>(comp_of[i]);
  (void)comps;
  return out;
}

ImageU8 boundary_overlay(const Tensor& rgb, const LabelMap& labels) {
  ImageU8 img = tensor_to_image_u8(rgb);
  if (img.h != labels.h || img.w != labels.w)
    throw std::invalid_argument("boundary_overlay: size mismatch");
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      const std::int32_t v = labels.at(y, x);
      const bool edge = (y + 1 < img.h && labels.at(y + 1, x) != v) ||
                        (x + 1 < img.w && labels.at(y, x + 1) != v);
      if (edge) {
        auto* px = &img.pixels[(static_cast<std::size_t>(y) * img.w + x) * 3];
        px[0] = 255;
        px[1] = 40;
        px[2] = 40;
      }
    }
  return img;
}

}  // namespace sspix
