#pragma once

#include <string>

#include "sspix/dsem.hpp"
#include "sspix/dsfm.hpp"
#include "sspix/extractor.hpp"
#include "sspix/soft_cluster.hpp"

namespace sspix {

/// Component toggles matching the ablation table rows B0..B6.
struct AblationFlags {
  bool sfa = true;          // stereo feature alignment (DSFM)
  bool oh = true;           // occlusion handling inside DSFM
  bool se = true;           // spatiality embedding
  bool df = true;           // dynamic fusion
  bool use_stereo_loss = true;
  bool xy_input = false;    // append coordinate planes to the network input

  void validate() const;
  std::string name() const;  // "B0".."B6" or "custom"
  static AblationFlags preset(const std::string& id);
};

struct ModelConfig {
  int channels = 64;
  int kernel = 3;
  real tau = 0.1;
  AblationFlags ablation;
  std::uint64_t init_seed = 1;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

struct NetForward {
  Var embed_left;  // clustering embedding for the left view, (N,C,H,W)
  ParallaxAttention attn;
  ValidMask mask;
  bool has_stereo = false;
};

/// Extractor -> [DSFM] -> [DSEM] composition over a stereo pair. Single-view
/// ablations run the left view only.
class StereoSpixelNet {
 public:
  explicit StereoSpixelNet(ModelConfig cfg);

  NetForward forward(Var left, Var right, bool training);
  NetForward forward(const Tensor& left, const Tensor& right, bool training);

  ParamStore& params() { return store_; }
  const ModelConfig& config() const { return cfg_; }
  FeatureExtractor& extractor() { return extractor_; }
  Dsfm& dsfm() { return dsfm_; }
  Dsem& dsem() { return dsem_; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  FeatureExtractor extractor_;
  Dsfm dsfm_;
  Dsem dsem_;
};

}  // namespace sspix
