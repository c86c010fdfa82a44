#include "sspix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <unordered_map>

#include "sspix/png_io.hpp"

namespace sspix {
namespace {

void check_same_shape(const LabelMap& s, const LabelMap& g) {
  if (s.h != g.h || s.w != g.w)
    throw ValidationError("label maps differ in shape: " + std::to_string(s.h) + "x" +
                          std::to_string(s.w) + " vs " + std::to_string(g.h) + "x" +
                          std::to_string(g.w));
  if (s.h <= 0 || s.w <= 0) throw ValidationError("empty label map");
}

std::vector<int> dense_remap(const std::vector<int32_t>& ids, int& n_out) {
  std::unordered_map<int32_t, int> lut;
  std::vector<int> dense(ids.size());
  for (size_t i = 0; i < ids.size(); ++i) {
    auto [it, fresh] = lut.emplace(ids[i], (int)lut.size());
    (void)fresh;
    dense[i] = it->second;
  }
  n_out = (int)lut.size();
  return dense;
}

struct Contingency {
  int ns = 0, ng = 0;
  std::vector<long long> counts;    // ns * ng
  std::vector<long long> s_sizes;   // ns
  std::vector<long long> g_sizes;   // ng
};

Contingency build_contingency(const LabelMap& s, const LabelMap& g) {
  Contingency c;
  std::vector<int> sd = dense_remap(s.ids, c.ns);
  std::vector<int> gd = dense_remap(g.ids, c.ng);
  c.counts.assign((size_t)c.ns * c.ng, 0);
  c.s_sizes.assign(c.ns, 0);
  c.g_sizes.assign(c.ng, 0);
  for (size_t i = 0; i < sd.size(); ++i) {
    c.counts[(size_t)sd[i] * c.ng + gd[i]]++;
    c.s_sizes[sd[i]]++;
    c.g_sizes[gd[i]]++;
  }
  return c;
}

}  // namespace

real asa(const LabelMap& s, const LabelMap& g) {
  check_same_shape(s, g);
  Contingency c = build_contingency(s, g);
  long long hit = 0;
  for (int i = 0; i < c.ns; ++i) {
    long long best = 0;
    for (int j = 0; j < c.ng; ++j) best = std::max(best, c.counts[(size_t)i * c.ng + j]);
    hit += best;
  }
  return (real)hit / (real)((long long)s.h * s.w);
}

real ue(const LabelMap& s, const LabelMap& g, bool pixel_normalized) {
  check_same_shape(s, g);
  Contingency c = build_contingency(s, g);
  real acc = 0;
  for (int j = 0; j < c.ng; ++j) {
    long long covering = 0;
    for (int i = 0; i < c.ns; ++i)
      if (c.counts[(size_t)i * c.ng + j] > 0) covering += c.s_sizes[i];
    long long leak = covering - c.g_sizes[j];
    if (pixel_normalized)
      acc += (real)leak;
    else
      acc += (real)leak / (real)c.g_sizes[j];
  }
  if (pixel_normalized) return acc / (real)((long long)s.h * s.w);
  return acc / (real)c.ng;
}

std::vector<bool> boundary_mask(const LabelMap& labels) {
  const int h = labels.h, w = labels.w;
  std::vector<bool> b((size_t)h * w, false);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int32_t v = labels.ids[(size_t)y * w + x];
      bool edge = (x + 1 < w && labels.ids[(size_t)y * w + x + 1] != v) ||
                  (y + 1 < h && labels.ids[(size_t)(y + 1) * w + x] != v) ||
                  (x > 0 && labels.ids[(size_t)y * w + x - 1] != v) ||
                  (y > 0 && labels.ids[(size_t)(y - 1) * w + x] != v);
      if (edge) b[(size_t)y * w + x] = true;
    }
  return b;
}

int default_br_radius(int h, int w) {
  real diag = std::sqrt((real)h * h + (real)w * w);
  return std::max(1, (int)std::lround(0.0025 * diag));
}

real br(const LabelMap& s, const LabelMap& g, int r) {
  check_same_shape(s, g);
  if (r < 0) throw ValidationError("boundary recall radius must be >= 0");
  std::vector<bool> sb = boundary_mask(s);
  std::vector<bool> gb = boundary_mask(g);
  const int h = s.h, w = s.w;
  long long tp = 0, total = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!gb[(size_t)y * w + x]) continue;
      total++;
      bool found = false;
      for (int dy = -r; dy <= r && !found; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          if (sb[(size_t)yy * w + xx]) {
            found = true;
            break;
          }
        }
      }
      if (found) tp++;
    }
  if (total == 0) return 1.0;
  return (real)tp / (real)total;
}

EvalSummary evaluate_label_dirs(const std::string& pred_dir, const std::string& gt_dir, int r) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(gt_dir)) throw IoError("ground truth directory not found: " + gt_dir);
  if (!fs::is_directory(pred_dir)) throw IoError("prediction directory not found: " + pred_dir);
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(gt_dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".png") continue;
    ids.push_back(e.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw IoError("no .png label maps in " + gt_dir);

  EvalSummary out;
  for (const auto& id : ids) {
    fs::path pred = fs::path(pred_dir) / (id + ".png");
    if (!fs::exists(pred)) {
      out.skipped.push_back(id);
      continue;
    }
    LabelMap sp = read_png_label16(pred.string());
    LabelMap gt = read_png_label16((fs::path(gt_dir) / (id + ".png")).string());
    int radius = r >= 0 ? r : default_br_radius(gt.h, gt.w);
    EvalRow row;
    row.id = id;
    row.asa = asa(sp, gt);
    row.ue = ue(sp, gt);
    row.br = br(sp, gt, radius);
    out.rows.push_back(row);
  }
  if (!out.rows.empty()) {
    for (const auto& row : out.rows) {
      out.mean_asa += row.asa;
      out.mean_ue += row.ue;
      out.mean_br += row.br;
    }
    out.mean_asa /= (real)out.rows.size();
    out.mean_ue /= (real)out.rows.size();
    out.mean_br /= (real)out.rows.size();
  }
  return out;
}

void write_eval_csv(const std::string& path, const EvalSummary& summary) {
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw IoError("cannot open for writing: " + path);
  std::fprintf(f, "id,asa,ue,br\n");
  for (const auto& row : summary.rows)
    std::fprintf(f, "%s,%.12g,%.12g,%.12g\n", row.id.c_str(), row.asa, row.ue, row.br);
  std::fprintf(f, "mean,%.12g,%.12g,%.12g\n", summary.mean_asa, summary.mean_ue, summary.mean_br);
  std::fclose(f);
}

}  // namespace sspix
