#include "sspix/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "sspix/png_io.hpp"

namespace sspix {

namespace {

std::vector<std::string> read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open split manifest: " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(is, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

Tensor subsample(const Tensor& chw, int factor) {
  if (factor <= 1) return chw;
  const int c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  const int oh = h / factor, ow = w / factor;
  Tensor out({c, oh, ow});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  const std::int64_t ohw = static_cast<std::int64_t>(oh) * ow;
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        out[ci * ohw + static_cast<std::int64_t>(y) * ow + x] =
            chw[ci * hw + static_cast<std::int64_t>(y) * factor * w + x * factor];
  return out;
}

LabelMap subsample(const LabelMap& m, int factor) {
  if (factor <= 1) return m;
  LabelMap out = make_label_map(m.h / factor, m.w / factor);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x) out.at(y, x) = m.at(y * factor, x * factor);
  return out;
}

}  // namespace

DatasetLayout open_dataset(const std::string& root) {
  namespace fs = std::filesystem;
  DatasetLayout data;
  data.root = root;
  data.train_ids = read_manifest(root + "/train.txt");
  data.val_ids = read_manifest(root + "/val.txt");
  if (data.train_ids.empty() && data.val_ids.empty())
    throw IoError("dataset has empty split manifests: " + root);
  for (const auto& id : data.train_ids) {
    for (const auto& p : {data.left_path(id), data.right_path(id), data.label_path(id)})
      if (!fs::exists(p)) throw IoError("missing dataset file: " + p);
  }
  for (const auto& id : data.val_ids) {
    for (const auto& p : {data.left_path(id), data.right_path(id)})
      if (!fs::exists(p)) throw IoError("missing dataset file: " + p);
  }
  return data;
}

StereoPair load_pair(const DatasetLayout& data, const std::string& id, bool need_label,
                     int downscale) {
  StereoPair pair;
  pair.id = id;
  pair.left = subsample(rgb_to_lab(image_to_tensor(read_png_rgb8(data.left_path(id)))), downscale);
  pair.right =
      subsample(rgb_to_lab(image_to_tensor(read_png_rgb8(data.right_path(id)))), downscale);
  if (need_label) pair.label = subsample(read_png_label16(data.label_path(id)), downscale);
  validate_pair(pair);
  return pair;
}

LabelMap load_sod_gt(const DatasetLayout& data, const std::string& id) {
  return read_png_label16(data.sod_gt_path(id));
}

}  // namespace sspix
