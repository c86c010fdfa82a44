#pragma once

#include <memory>
#include <vector>

#include "sspix/autograd.hpp"
#include "sspix/image.hpp"

namespace sspix {

struct ClusterConfig {
  int n_spixels = 100;
  int grid_h = 10, grid_w = 10;  // grid_h * grid_w == n_spixels
  int n_iters = 5;               // 5 at train time, 10 at inference
  int candidate_radius = 1;      // 3x3 cell neighborhood, 9 slots

  void validate() const;
};

/// Picks the divisor pair of n_spixels whose aspect best matches the image.
ClusterConfig make_cluster_config(int n_spixels, int h, int w, int n_iters);

/// Regular cell partition of an image plus the per-pixel candidate table
/// (slot -> global cell id, -1 outside the grid).
struct CellGrid {
  int h = 0, w = 0, grid_h = 0, grid_w = 0;
  std::vector<int> cell_of_pixel;
  std::shared_ptr<const std::vector<std::vector<int>>> cell_pixels;
  CandTable candidates;

  int n_cells() const { return grid_h * grid_w; }
  static constexpr int n_slots = 9;
};

CellGrid make_cell_grid(int h, int w, const ClusterConfig& cfg);

/// Mean feature over each grid cell, (m,C).
Var init_centers(Var features, const CellGrid& grid);

struct ClusterResult {
  Var q;        // (H,W,9) soft association
  Var centers;  // (m,C)
};

/// n_iters rounds of association + mass-guarded center update, differentiable
/// end to end. features: (C,H,W).
ClusterResult cluster_iterate(Var features, Var centers, const CellGrid& grid, int n_iters);

/// Per-pixel argmax over candidate slots; ties go to the smallest cell id.
LabelMap hard_assign(const Tensor& q, const CellGrid& grid);

/// Soft semantic reconstruction: per-cell mass-normalized label pooling
/// followed by scatter through q. s_onehot: (K,H,W); result rows sum to 1.
Var reconstruct_label(Var q, const CellGrid& grid, const Tensor& s_onehot);

/// Relabels connected components, absorbing components smaller than
/// (H*W/m)/4 into the neighbor with the longest shared border. Output ids
/// are sequential per component.
LabelMap enforce_connectivity(const LabelMap& labels, int n_spixels);

ImageU8 boundary_overlay(const Tensor& rgb, const LabelMap& labels);

}  // namespace sspix
