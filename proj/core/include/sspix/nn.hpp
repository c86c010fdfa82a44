#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "sspix/autograd.hpp"
#include "sspix/tensor.hpp"

namespace sspix {

/// Named parameter/buffer registry shared by all layers. Parameters get
/// gradients and optimizer state; buffers (BN running stats) are plain
/// tensors carried along in checkpoints.
struct ParamStore {
  std::vector<std::pair<std::string, Var>> params;
  // shallow Tensor copies sharing storage with the owning layer
  std::vector<std::pair<std::string, Tensor>> buffers;

  Var add_param(const std::string& name, Tensor init);
  void add_buffer(const std::string& name, const Tensor& t);
  Var find(const std::string& name) const;
  void zero_grad();
  int64_t param_count() const;
};

using Rng = std::mt19937_64;

struct Conv2d {
  Var weight, bias;
  int kernel = 3;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel, Rng& rng);
  Var forward(Var x) const { return conv2d(x, weight, bias); }
};

struct BatchNorm2d {
  Var gamma, beta;
  Tensor running_mean, running_var;
  real momentum = 0.9;
  real eps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore& store, const std::string& name, int ch);
  Var forward(Var x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, training, momentum, eps);
  }
};

struct ConvBnRelu {
  Conv2d conv;
  BatchNorm2d bn;

  ConvBnRelu() = default;
  ConvBnRelu(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
             Rng& rng);
  Var forward(Var x, bool training) { return relu(bn.forward(conv.forward(x), training)); }
};

struct LayerNormChannels {
  Var gamma, beta;
  real eps = 1e-5;

  LayerNormChannels() = default;
  LayerNormChannels(ParamStore& store, const std::string& name, int ch);
  Var forward(Var x) const { return layernorm_channels(x, gamma, beta, eps); }
};

Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng);

/// Adam with global-norm gradient clipping.
class Adam {
 public:
  Adam(std::vector<Var> params, real beta1 = 0.9, real beta2 = 0.999, real eps = 1e-8);

  void zero_grad();
  real clip_global_norm(real max_norm);
  void step(real lr);
  int64_t t() const { return t_; }

 private:
  std::vector<Var> params_;
  std::vector<Tensor> m_, v_;
  real beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

}  // namespace sspix
