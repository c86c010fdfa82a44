#pragma once

#include <string>
#include <vector>

#include "sspix/image.hpp"

namespace sspix {

/// KITTI-style directory layout: left/, right/, labels/ with matching
/// <id>.png names plus train.txt / val.txt split manifests.
struct DatasetLayout {
  std::string root;
  std::vector<std::string> train_ids, val_ids;

  std::string left_path(const std::string& id) const { return root + "/left/" + id + ".png"; }
  std::string right_path(const std::string& id) const { return root + "/right/" + id + ".png"; }
  std::string label_path(const std::string& id) const { return root + "/labels/" + id + ".png"; }
  std::string sod_gt_path(const std::string& id) const { return root + "/sodgt/" + id + ".png"; }
};

/// Reads the split manifests and checks that every referenced file exists.
DatasetLayout open_dataset(const std::string& root);

/// Loads one sample as a validated Lab StereoPair. downscale > 1 subsamples
/// every view (quarter-resolution style preprocessing).
StereoPair load_pair(const DatasetLayout& data, const std::string& id, bool need_label,
                     int downscale = 1);

LabelMap load_sod_gt(const DatasetLayout& data, const std::string& id);

}  // namespace sspix
