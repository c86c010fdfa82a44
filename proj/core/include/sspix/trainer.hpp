#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "sspix/dataset.hpp"
#include "sspix/network.hpp"

namespace sspix {

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int batch_size = 8;
  int total_iters = 20000;
  real lr0 = 2e-4;
  int lr_halve_every = 2000;
  int lr_floor_iter = 8000;  // fixed floor from this iteration on
  real lr_floor = 2e-5;
  int crop = 200;
  real eta = 2.5;            // input scale multiplier
  bool scale_input = true;
  real grad_clip = 5.0;
  int n_spixels = 100;
  int cluster_iters = 5;
  real lambda_stereo = 1.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 2000;
  std::string out_dir = "run";

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

/// Step schedule: lr0 * 0.5^floor(iter/2000) until the floor iteration,
/// then a constant floor value. iter is 0-based.
real lr_at(const TrainConfig& cfg, int iter);

/// eta * max(grid_w/w, grid_h/h); multiplies the Lab planes fed to the
/// network so feature distances match the clustering scale.
real input_scale(real eta, const ClusterConfig& cc, int h, int w);

struct CropWindow {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

/// Uniform crop position; the window shrinks to the image when crop exceeds it.
CropWindow random_crop_window(Rng& rng, int h, int w, int crop);
StereoPair crop_pair(const StereoPair& pair, const CropWindow& win);

struct TrainResult {
  std::string checkpoint_path;  // final checkpoint
  std::string log_path;
  real loss_iter10 = 0;  // total loss logged at iteration 10
  real loss_final = 0;   // total loss of the last iteration
};

TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const DatasetLayout& data);

struct SegmentOptions {
  int n_spixels = 100;
  int cluster_iters = 10;
  bool connectivity = true;
  real eta = 2.5;
  bool scale_input = true;
};

/// Inference path: eval-mode forward, soft clustering of the left embedding,
/// hard assignment, optional connectivity cleanup.
LabelMap segment_pair(StereoSpixelNet& net, const StereoPair& pair, const SegmentOptions& opt);

std::unique_ptr<StereoSpixelNet> load_model(const std::string& checkpoint_path,
                                            std::string* meta_json = nullptr);

real mean_asa_over(StereoSpixelNet& net, const DatasetLayout& data,
                   const std::vector<std::string>& ids, const SegmentOptions& opt);

}  // namespace sspix
