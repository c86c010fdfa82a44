#include "sspix/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace sspix {

Var ParamStore::add_param(const std::string& name, Tensor init) {
  for (const auto& [n, v] : params)
    if (n == name) throw std::invalid_argument("duplicate parameter name: " + name);
  Var v = leaf(std::move(init), true);
  v->requires_grad = true;  // parameters stay trainable even inside NoGradGuard
  params.emplace_back(name, v);
  return v;
}

void ParamStore::add_buffer(const std::string& name, const Tensor& t) {
  buffers.emplace_back(name, t);
}

Var ParamStore::find(const std::string& name) const {
  for (const auto& [n, v] : params)
    if (n == name) return v;
  throw std::invalid_argument("no such parameter: " + name);
}

void ParamStore::zero_grad() {
  for (auto& [n, v] : params)
    if (v->grad.defined()) v->grad.zero_();
}

int64_t ParamStore::param_count() const {
  int64_t n = 0;
  for (const auto& [name, v] : params) n += v->value.size();
  return n;
}

Tensor he_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  const real bound = std::sqrt(6.0 / static_cast<real>(fan_in));
  std::uniform_real_distribution<real> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_ch, int out_ch, int kernel,
               Rng& rng)
    : kernel(kernel) {
  weight = store.add_param(name + ".weight",
                           he_uniform({out_ch, in_ch, kernel, kernel}, in_ch * kernel * kernel, rng));
  bias = store.add_param(name + ".bias", Tensor::zeros({out_ch}));
}

BatchNorm2d::BatchNorm2d(ParamStore& store, const std::string& name, int ch) {
  gamma = store.add_param(name + ".gamma", Tensor::full({ch}, 1.0));
  beta = store.add_param(name + ".beta", Tensor::zeros({ch}));
  running_mean = Tensor::zeros({ch});
  running_var = Tensor::full({ch}, 1.0);
  store.add_buffer(name + ".running_mean", running_mean);
  store.add_buffer(name + ".running_var", running_var);
}

ConvBnRelu::ConvBnRelu(ParamStore& store, const std::string& name, int in_ch, int out_ch,
                       int kernel, Rng& rng)
    : conv(store, name + ".conv", in_ch, out_ch, kernel, rng),
      bn(store, name + ".bn", out_ch) {}

LayerNormChannels::LayerNormChannels(ParamStore& store, const std::string& name, int ch) {
  gamma = store.add_param(name + ".gamma", Tensor::full({ch}, 1.0));
  beta = store.add_param(name + ".beta", Tensor::zeros({ch}));
}

Adam::Adam(std::vector<Var> params, real beta1, real beta2, real eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

void Adam::zero_grad() {
  for (auto& p : params_)
    if (p->grad.defined()) p->grad.zero_();
}

real Adam::clip_global_norm(real max_norm) {
  real sq = 0;
  for (const auto& p : params_) {
    if (!p->grad.defined()) continue;
    const real* g = p->grad.data();
    for (int64_t i = 0; i < p->grad.size(); ++i) sq += g[i] * g[i];
  }
  const real norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const real s = max_norm / norm;
    for (auto& p : params_) {
      if (!p->grad.defined()) continue;
      real* g = p->grad.data();
      for (int64_t i = 0; i < p->grad.size(); ++i) g[i] *= s;
    }
  }
  return norm;
}

void Adam::step(real lr) {
  ++t_;
  const real bc1 = 1.0 - std::pow(beta1_, static_cast<real>(t_));
  const real bc2 = 1.0 - std::pow(beta2_, static_cast<real>(t_));
  for (size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    if (!p->grad.defined()) continue;
    const real* g = p->grad.data();
    real* m = m_[k].data();
    real* v = v_[k].data();
    real* w = p->value.data();
    for (int64_t i = 0; i < p->value.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
      const real mhat = m[i] / bc1;
      const real vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

}  // namespace sspix
