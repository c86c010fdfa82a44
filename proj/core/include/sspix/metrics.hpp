#pragma once

#include <string>
#include <vector>

#include "sspix/image.hpp"

namespace sspix {

/// Achievable segmentation accuracy, Eq. over best-overlap counts:
/// sum_i max_j |S_i ∩ G_j| / total pixels.
real asa(const LabelMap& s, const LabelMap& g);

/// Undersegmentation error; per GT segment the leaked superpixel mass over
/// the segment size, averaged over segments. pixel_normalized switches the
/// normalizer from segment count to total pixel count.
real ue(const LabelMap& s, const LabelMap& g, bool pixel_normalized = false);

/// Boundary recall with Chebyshev tolerance r over 4-neighbor boundaries;
/// defined as 1.0 when the ground truth has no boundary at all.
real br(const LabelMap& s, const LabelMap& g, int r);

int default_br_radius(int h, int w);  // max(1, round(0.0025*diag))

std::vector<bool> boundary_mask(const LabelMap& labels);

struct EvalRow {
  std::string id;
  real asa = 0, ue = 0, br = 0;
};

struct EvalSummary {
  std::vector<EvalRow> rows;
  real mean_asa = 0, mean_ue = 0, mean_br = 0;
  std::vector<std::string> skipped;
};

/// Compares <id>.png 16-bit label maps between two directories; predictions
/// missing for a ground-truth id are reported and skipped.
EvalSummary evaluate_label_dirs(const std::string& pred_dir, const std::string& gt_dir, int r);

/// Per-image rows plus a trailing "mean" row.
void write_eval_csv(const std::string& path, const EvalSummary& summary);

}  // namespace sspix
