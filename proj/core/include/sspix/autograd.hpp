#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sspix/tensor.hpp"

namespace sspix {

struct Node;
using Var = std::shared_ptr<Node>;

/// A node in the define-by-run computation graph. Ops allocate an output
/// node whose backward_fn accumulates into the parents' grad tensors.
struct Node {
  Tensor value;
  Tensor grad;  // allocated lazily, same shape as value
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
real scalar_value(const Var& v);

/// Reverse-mode accumulation from a scalar root into every reachable
/// grad-requiring node.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

// elementwise / scalar
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, real s);
Var add_scalar(Var a, real s);
Var relu(Var a);
Var sigmoid(Var a);
Var vlog(Var a);
Var sum_all(Var a);   // -> shape {1}
Var mean_all(Var a);  // -> shape {1}

// shape / assembly
Var reshape(Var a, std::vector<int> shape);
Var concat_channels(const std::vector<Var>& xs);  // NCHW along C
Var concat_batch(const std::vector<Var>& xs);     // NCHW along N
Var narrow_batch(Var x, int start, int count);    // NCHW slice along N

// broadcasts over NCHW
Var add_plane(Var x, Var plane);        // plane: (H,W), broadcast over N,C
Var add_channel_vec(Var x, Var v);      // v: (N,C,1,1)

// spatial layers (stride 1, same padding, odd kernel)
Var conv2d(Var x, Var weight, Var bias);
Var batch_norm2d(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                 bool training, real momentum, real eps);
Var maxpool2(Var x);
Var upsample_bilinear(Var x, int out_h, int out_w);
Var global_avg_pool(Var x);  // NCHW -> (N,C,1,1)
Var layernorm_channels(Var x, Var gamma, Var beta, real eps);

// row-wise (epipolar) attention pieces; attention maps are (N,H,W,W)
Var row_scores(Var a, Var b);            // (N,C,H,W)x2 -> (N,H,W,W)
Var softmax_lastdim(Var s);
Var row_mix(Var m, Var f);               // (N,H,W,W) x (N,C,H,W) -> (N,C,H,W)

// binary masks (constants, (N,H,W) against NCHW data)
Var masked_mix(Var a, Var b, const Tensor& mask);    // mask ? a : b, per pixel
Var masked_l1_mean(Var x, const Tensor& mask);       // mean |x| over valid entries

// soft-clustering primitives (per sample; features (C,H,W), centers (m,C));
// cand maps (pixel, slot) -> global cell id, -1 for out-of-grid slots
using CandTable = std::shared_ptr<const std::vector<int>>;
Var cell_means(Var f, const std::shared_ptr<const std::vector<std::vector<int>>>& cell_pixels);
Var candidate_sqdist(Var f, Var centers, const CandTable& cand, int n_slots);
Var neg_softmax_slots(Var d, const CandTable& cand);
Var assoc_pool(Var q, Var src, const CandTable& cand, int n_cells);  // -> (m, K)
Var center_update(Var pool, Var mass, Var prev, real eps);           // guarded division
Var assoc_mix(Var q, Var table, const CandTable& cand);              // -> (K,H,W)

}  // namespace sspix
