#include "sspix/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <utility>

#include <cblas.h>

namespace sspix {

namespace {

thread_local int g_no_grad_depth = 0;

void check(bool ok, const char* msg) {
  if (!ok) throw std::invalid_argument(msg);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  bool rg = false;
  for (const auto& p : parents) rg = rg || (p && p->requires_grad);
  if (grad_enabled() && rg) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(bw);
  }
  return n;
}

// accumulate g into p's grad if it participates in the graph
bool wants(const Var& p) { return p->requires_grad; }

}  // namespace

Tensor& Node::ensure_grad() {
  if (!grad.defined()) grad = Tensor::zeros(value.shape());
  return grad;
}

bool grad_enabled() { return g_no_grad_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }

Var leaf(Tensor value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = requires_grad && grad_enabled();
  return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

real scalar_value(const Var& v) {
  check(v && v->value.size() == 1, "scalar_value: not a scalar");
  return v->value[0];
}

void backward(const Var& root) {
  check(root && root->value.size() == 1, "backward: root must be scalar");
  if (!root->requires_grad) return;

  // iterative postorder DFS -> topological order (producers first)
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad().fill(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
  check(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor out = a->value.clone();
  const real* pb = b->value.data();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] += pb[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const real* g = self.grad.data();
    for (int k = 0; k < 2; ++k) {
      const Var& p = self.parents[k];
      if (!wants(p)) continue;
      real* pg = p->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  check(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor out = a->value.clone();
  const real* pb = b->value.data();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] -= pb[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const real* g = self.grad.data();
    if (wants(self.parents[0])) {
      real* pg = self.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
    }
    if (wants(self.parents[1])) {
      real* pg = self.parents[1]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  check(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor out = a->value.clone();
  const real* pb = b->value.data();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] *= pb[i];
  return make_op(std::move(out), {a, b}, [](Node& self) {
    const real* g = self.grad.data();
    const real* va = self.parents[0]->value.data();
    const real* vb = self.parents[1]->value.data();
    if (wants(self.parents[0])) {
      real* pg = self.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i] * vb[i];
    }
    if (wants(self.parents[1])) {
      real* pg = self.parents[1]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i] * va[i];
    }
  });
}

Var scale(Var a, real s) {
  Tensor out = a->value.clone();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] *= s;
  return make_op(std::move(out), {a}, [s](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i] * s;
  });
}

Var add_scalar(Var a, real s) {
  Tensor out = a->value.clone();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] += s;
  return make_op(std::move(out), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
  });
}

Var relu(Var a) {
  Tensor out = a->value.clone();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = po[i] > 0 ? po[i] : 0;
  return make_op(std::move(out), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    const real* v = self.parents[0]->value.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i)
      if (v[i] > 0) pg[i] += g[i];
  });
}

Var sigmoid(Var a) {
  Tensor out = a->value.clone();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = 1.0 / (1.0 + std::exp(-po[i]));
  Tensor y = out;  // shared handle, no copy
  return make_op(std::move(out), {a}, [y](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    const real* py = y.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i] * py[i] * (1.0 - py[i]);
  });
}

Var vlog(Var a) {
  Tensor out = a->value.clone();
  real* po = out.data();
  for (int64_t i = 0; i < out.size(); ++i) po[i] = std::log(po[i]);
  return make_op(std::move(out), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    const real* v = self.parents[0]->value.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i] / v[i];
  });
}

Var sum_all(Var a) {
  real s = 0;
  const real* pa = a->value.data();
  for (int64_t i = 0; i < a->value.size(); ++i) s += pa[i];
  return make_op(Tensor::full({1}, s), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    const real g = self.grad[0];
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.parents[0]->value.size(); ++i) pg[i] += g;
  });
}

Var mean_all(Var a) {
  return scale(sum_all(a), 1.0 / static_cast<real>(a->value.size()));
}

// ---------------------------------------------------------------------------
// shape / assembly

Var reshape(Var a, std::vector<int> shape) {
  check(numel(shape) == a->value.size(), "reshape: element count mismatch");
  Tensor out = a->value.clone();
  out.set_shape(std::move(shape));
  return make_op(std::move(out), {a}, [](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
  });
}

Var concat_channels(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_channels: empty input");
  const auto& s0 = xs[0]->value.shape();
  check(s0.size() == 4, "concat_channels: expects NCHW");
  int n = s0[0], h = s0[2], w = s0[3], ctot = 0;
  for (const auto& x : xs) {
    const auto& s = x->value.shape();
    check(s.size() == 4 && s[0] == n && s[2] == h && s[3] == w,
          "concat_channels: incompatible shapes");
    ctot += s[1];
  }
  Tensor out = Tensor::zeros({n, ctot, h, w});
  const int64_t plane = static_cast<int64_t>(h) * w;
  int64_t coff = 0;
  for (const auto& x : xs) {
    int c = x->value.dim(1);
    const real* px = x->value.data();
    for (int b = 0; b < n; ++b)
      std::copy(px + b * c * plane, px + (b + 1) * c * plane,
                out.data() + (b * ctot + coff) * plane);
    coff += c;
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_op(std::move(out), std::move(parents), [n, ctot, plane](Node& self) {
    const real* g = self.grad.data();
    int64_t coff = 0;
    for (auto& p : self.parents) {
      int c = p->value.dim(1);
      if (wants(p)) {
        real* pg = p->ensure_grad().data();
        for (int b = 0; b < n; ++b) {
          const real* gs = g + (b * ctot + coff) * plane;
          real* pd = pg + b * c * plane;
          for (int64_t i = 0; i < c * plane; ++i) pd[i] += gs[i];
        }
      }
      coff += c;
    }
  });
}

Var concat_batch(const std::vector<Var>& xs) {
  check(!xs.empty(), "concat_batch: empty input");
  const auto& s0 = xs[0]->value.shape();
  check(s0.size() == 4, "concat_batch: expects NCHW");
  int c = s0[1], h = s0[2], w = s0[3], ntot = 0;
  for (const auto& x : xs) {
    const auto& s = x->value.shape();
    check(s.size() == 4 && s[1] == c && s[2] == h && s[3] == w,
          "concat_batch: incompatible shapes");
    ntot += s[0];
  }
  Tensor out = Tensor::zeros({ntot, c, h, w});
  real* po = out.data();
  int64_t off = 0;
  for (const auto& x : xs) {
    std::copy(x->value.data(), x->value.data() + x->value.size(), po + off);
    off += x->value.size();
  }
  std::vector<Var> parents(xs.begin(), xs.end());
  return make_op(std::move(out), std::move(parents), [](Node& self) {
    const real* g = self.grad.data();
    int64_t off = 0;
    for (auto& p : self.parents) {
      if (wants(p)) {
        real* pg = p->ensure_grad().data();
        for (int64_t i = 0; i < p->value.size(); ++i) pg[i] += g[off + i];
      }
      off += p->value.size();
    }
  });
}

Var narrow_batch(Var x, int start, int count) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "narrow_batch: expects NCHW");
  check(start >= 0 && count > 0 && start + count <= s[0], "narrow_batch: bad range");
  const int64_t stride = x->value.size() / s[0];
  Tensor out = Tensor::zeros({count, s[1], s[2], s[3]});
  std::copy(x->value.data() + start * stride, x->value.data() + (start + count) * stride,
            out.data());
  return make_op(std::move(out), {x}, [start, stride](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data() + start * stride;
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
  });
}

Var add_plane(Var x, Var plane) {
  const auto& s = x->value.shape();
  const auto& ps = plane->value.shape();
  check(s.size() == 4 && ps.size() == 2 && ps[0] == s[2] && ps[1] == s[3],
        "add_plane: expects NCHW + (H,W)");
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
  const int64_t nc = static_cast<int64_t>(s[0]) * s[1];
  Tensor out = x->value.clone();
  const real* pp = plane->value.data();
  for (int64_t b = 0; b < nc; ++b) {
    real* po = out.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) po[i] += pp[i];
  }
  return make_op(std::move(out), {x, plane}, [nc, hw](Node& self) {
    const real* g = self.grad.data();
    if (wants(self.parents[0])) {
      real* pg = self.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
    }
    if (wants(self.parents[1])) {
      real* pg = self.parents[1]->ensure_grad().data();
      for (int64_t b = 0; b < nc; ++b)
        for (int64_t i = 0; i < hw; ++i) pg[i] += g[b * hw + i];
    }
  });
}

Var add_channel_vec(Var x, Var v) {
  const auto& s = x->value.shape();
  const auto& vs = v->value.shape();
  check(s.size() == 4 && vs.size() == 4 && vs[0] == s[0] && vs[1] == s[1] &&
            vs[2] == 1 && vs[3] == 1,
        "add_channel_vec: expects NCHW + (N,C,1,1)");
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
  const int64_t nc = static_cast<int64_t>(s[0]) * s[1];
  Tensor out = x->value.clone();
  const real* pv = v->value.data();
  for (int64_t b = 0; b < nc; ++b) {
    real* po = out.data() + b * hw;
    for (int64_t i = 0; i < hw; ++i) po[i] += pv[b];
  }
  return make_op(std::move(out), {x, v}, [nc, hw](Node& self) {
    const real* g = self.grad.data();
    if (wants(self.parents[0])) {
      real* pg = self.parents[0]->ensure_grad().data();
      for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += g[i];
    }
    if (wants(self.parents[1])) {
      real* pg = self.parents[1]->ensure_grad().data();
      for (int64_t b = 0; b < nc; ++b) {
        real s = 0;
        for (int64_t i = 0; i < hw; ++i) s += g[b * hw + i];
        pg[b] += s;
      }
    }
  });
}

// ---------------------------------------------------------------------------
// convolution (stride 1, same padding)

namespace {

void im2col(const real* x, int c, int h, int w, int k, real* col) {
  const int pad = k / 2;
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        real* dst = col + ((static_cast<int64_t>(ci) * k + ki) * k + kj) * hw;
        const int dy = ki - pad, dx = kj - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(dst + static_cast<int64_t>(y) * w, dst + static_cast<int64_t>(y + 1) * w, 0.0);
            continue;
          }
          const real* src = x + static_cast<int64_t>(ci) * hw + static_cast<int64_t>(sy) * w;
          real* d = dst + static_cast<int64_t>(y) * w;
          for (int xq = 0; xq < w; ++xq) {
            const int sx = xq + dx;
            d[xq] = (sx < 0 || sx >= w) ? 0.0 : src[sx];
          }
        }
      }
}

void col2im_acc(const real* col, int c, int h, int w, int k, real* x) {
  const int pad = k / 2;
  const int64_t hw = static_cast<int64_t>(h) * w;
  for (int ci = 0; ci < c; ++ci)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const real* src = col + ((static_cast<int64_t>(ci) * k + ki) * k + kj) * hw;
        const int dy = ki - pad, dx = kj - pad;
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          real* dst = x + static_cast<int64_t>(ci) * hw + static_cast<int64_t>(sy) * w;
          const real* s = src + static_cast<int64_t>(y) * w;
          for (int xq = 0; xq < w; ++xq) {
            const int sx = xq + dx;
            if (sx >= 0 && sx < w) dst[sx] += s[xq];
          }
        }
      }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias) {
  const auto& xs = x->value.shape();
  const auto& ws = weight->value.shape();
  check(xs.size() == 4 && ws.size() == 4, "conv2d: expects NCHW input, OIKK weight");
  check(ws[1] == xs[1], "conv2d: channel mismatch");
  check(ws[2] == ws[3] && ws[2] % 2 == 1, "conv2d: kernel must be square and odd");
  const int n = xs[0], cin = xs[1], h = xs[2], w = xs[3];
  const int cout = ws[0], k = ws[2];
  check(bias->value.size() == cout, "conv2d: bias size mismatch");
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t ckk = static_cast<int64_t>(cin) * k * k;

  Tensor out = Tensor::zeros({n, cout, h, w});
  {
    std::vector<real> col(ckk * hw);
    for (int b = 0; b < n; ++b) {
      im2col(x->value.data() + static_cast<int64_t>(b) * cin * hw, cin, h, w, k, col.data());
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, cout, static_cast<int>(hw),
                  static_cast<int>(ckk), 1.0, weight->value.data(), static_cast<int>(ckk),
                  col.data(), static_cast<int>(hw), 0.0,
                  out.data() + static_cast<int64_t>(b) * cout * hw, static_cast<int>(hw));
    }
    const real* pb = bias->value.data();
    for (int b = 0; b < n; ++b)
      for (int co = 0; co < cout; ++co) {
        real* po = out.data() + (static_cast<int64_t>(b) * cout + co) * hw;
        for (int64_t i = 0; i < hw; ++i) po[i] += pb[co];
      }
  }

  return make_op(std::move(out), {x, weight, bias},
                 [n, cin, h, w, cout, k, hw, ckk](Node& self) {
    const Var& x = self.parents[0];
    const Var& weight = self.parents[1];
    const Var& bias = self.parents[2];
    const real* g = self.grad.data();

    if (wants(bias)) {
      real* pg = bias->ensure_grad().data();
      for (int b = 0; b < n; ++b)
        for (int co = 0; co < cout; ++co) {
          const real* gs = g + (static_cast<int64_t>(b) * cout + co) * hw;
          real s = 0;
          for (int64_t i = 0; i < hw; ++i) s += gs[i];
          pg[co] += s;
        }
    }

    const bool need_w = wants(weight);
    const bool need_x = wants(x);
    if (!need_w && !need_x) return;

    std::vector<real> col(need_w ? ckk * hw : 0);
    std::vector<real> dcol(need_x ? ckk * hw : 0);
    real* wg = need_w ? weight->ensure_grad().data() : nullptr;
    real* xg = need_x ? x->ensure_grad().data() : nullptr;
    for (int b = 0; b < n; ++b) {
      const real* gb = g + static_cast<int64_t>(b) * cout * hw;
      if (need_w) {
        im2col(x->value.data() + static_cast<int64_t>(b) * cin * hw, cin, h, w, k, col.data());
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, cout, static_cast<int>(ckk),
                    static_cast<int>(hw), 1.0, gb, static_cast<int>(hw), col.data(),
                    static_cast<int>(hw), 1.0, wg, static_cast<int>(ckk));
      }
      if (need_x) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, static_cast<int>(ckk),
                    static_cast<int>(hw), cout, 1.0, weight->value.data(),
                    static_cast<int>(ckk), gb, static_cast<int>(hw), 0.0, dcol.data(),
                    static_cast<int>(hw));
        col2im_acc(dcol.data(), cin, h, w, k, xg + static_cast<int64_t>(b) * cin * hw);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// batch norm

Var batch_norm2d(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                 bool training, real momentum, real eps) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "batch_norm2d: expects NCHW");
  const int n = s[0], c = s[1];
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
  const int64_t m = static_cast<int64_t>(n) * hw;
  check(gamma->value.size() == c && beta->value.size() == c, "batch_norm2d: affine size");
  check(running_mean.size() == c && running_var.size() == c, "batch_norm2d: stats size");

  Tensor mean({c}), invstd({c});
  if (training) {
    for (int ci = 0; ci < c; ++ci) {
      real mu = 0;
      for (int b = 0; b < n; ++b) {
        const real* px = x->value.data() + (static_cast<int64_t>(b) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) mu += px[i];
      }
      mu /= static_cast<real>(m);
      real var = 0;
      for (int b = 0; b < n; ++b) {
        const real* px = x->value.data() + (static_cast<int64_t>(b) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          const real d = px[i] - mu;
          var += d * d;
        }
      }
      var /= static_cast<real>(m);
      mean[ci] = mu;
      invstd[ci] = 1.0 / std::sqrt(var + eps);
      running_mean[ci] = momentum * running_mean[ci] + (1.0 - momentum) * mu;
      running_var[ci] = momentum * running_var[ci] + (1.0 - momentum) * var;
    }
  } else {
    for (int ci = 0; ci < c; ++ci) {
      mean[ci] = running_mean[ci];
      invstd[ci] = 1.0 / std::sqrt(running_var[ci] + eps);
    }
  }

  Tensor out = Tensor::zeros(s);
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const real* px = x->value.data() + (static_cast<int64_t>(b) * c + ci) * hw;
      real* po = out.data() + (static_cast<int64_t>(b) * c + ci) * hw;
      const real ga = gamma->value[ci], be = beta->value[ci];
      const real mu = mean[ci], is = invstd[ci];
      for (int64_t i = 0; i < hw; ++i) po[i] = ga * (px[i] - mu) * is + be;
    }

  return make_op(std::move(out), {x, gamma, beta},
                 [n, c, hw, m, mean, invstd, training](Node& self) {
    const Var& x = self.parents[0];
    const Var& gamma = self.parents[1];
    const Var& beta = self.parents[2];
    const real* g = self.grad.data();

    for (int ci = 0; ci < c; ++ci) {
      const real mu = mean[ci], is = invstd[ci];
      real sum_g = 0, sum_gx = 0;  // sum of dy and dy*xhat over the channel
      for (int b = 0; b < n; ++b) {
        const real* px = x->value.data() + (static_cast<int64_t>(b) * c + ci) * hw;
        const real* pg = g + (static_cast<int64_t>(b) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          sum_g += pg[i];
          sum_gx += pg[i] * (px[i] - mu) * is;
        }
      }
      if (wants(gamma)) gamma->ensure_grad()[ci] += sum_gx;
      if (wants(beta)) beta->ensure_grad()[ci] += sum_g;
      if (wants(x)) {
        const real ga = gamma->value[ci];
        real* xg = x->ensure_grad().data();
        for (int b = 0; b < n; ++b) {
          const real* px = x->value.data() + (static_cast<int64_t>(b) * c + ci) * hw;
          const real* pg = g + (static_cast<int64_t>(b) * c + ci) * hw;
          real* pxg = xg + (static_cast<int64_t>(b) * c + ci) * hw;
          if (training) {
            const real inv_m = 1.0 / static_cast<real>(m);
            for (int64_t i = 0; i < hw; ++i) {
              const real xh = (px[i] - mu) * is;
              pxg[i] += ga * is * (pg[i] - sum_g * inv_m - xh * sum_gx * inv_m);
            }
          } else {
            for (int64_t i = 0; i < hw; ++i) pxg[i] += ga * is * pg[i];
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// pooling / resampling

Var maxpool2(Var x) {
  const auto& s = x->value.shape();
  check(s.size() == 4 && s[2] >= 2 && s[3] >= 2, "maxpool2: expects NCHW, H,W >= 2");
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  const int oh = h / 2, ow = w / 2;
  Tensor out = Tensor::zeros({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.size());
  const real* px = x->value.data();
  real* po = out.data();
  int64_t oi = 0;
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const int64_t base = (static_cast<int64_t>(b) * c + ci) * h * w;
      for (int y = 0; y < oh; ++y)
        for (int xq = 0; xq < ow; ++xq, ++oi) {
          real best = -1e300;
          int64_t bi = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              const int64_t idx = base + static_cast<int64_t>(2 * y + dy) * w + (2 * xq + dx);
              if (px[idx] > best) {
                best = px[idx];
                bi = idx;
              }
            }
          po[oi] = best;
          (*argmax)[oi] = bi;
        }
    }
  return make_op(std::move(out), {x}, [argmax](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[(*argmax)[i]] += g[i];
  });
}

Var upsample_bilinear(Var x, int out_h, int out_w) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "upsample_bilinear: expects NCHW");
  check(out_h >= 1 && out_w >= 1, "upsample_bilinear: bad size");
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  const real sy = static_cast<real>(h) / out_h;
  const real sx = static_cast<real>(w) / out_w;

  std::vector<int> y0(out_h), y1(out_h), x0(out_w), x1(out_w);
  std::vector<real> fy(out_h), fx(out_w);
  for (int oy = 0; oy < out_h; ++oy) {
    real p = (oy + 0.5) * sy - 0.5;
    if (p < 0) p = 0;
    int i0 = std::min(static_cast<int>(p), h - 1);
    y0[oy] = i0;
    y1[oy] = std::min(i0 + 1, h - 1);
    fy[oy] = p - i0;
  }
  for (int ox = 0; ox < out_w; ++ox) {
    real p = (ox + 0.5) * sx - 0.5;
    if (p < 0) p = 0;
    int i0 = std::min(static_cast<int>(p), w - 1);
    x0[ox] = i0;
    x1[ox] = std::min(i0 + 1, w - 1);
    fx[ox] = p - i0;
  }

  Tensor out = Tensor::zeros({n, c, out_h, out_w});
  const real* px = x->value.data();
  real* po = out.data();
  const int64_t planes = static_cast<int64_t>(n) * c;
  for (int64_t b = 0; b < planes; ++b) {
    const real* src = px + b * h * w;
    real* dst = po + b * static_cast<int64_t>(out_h) * out_w;
    for (int oy = 0; oy < out_h; ++oy)
      for (int ox = 0; ox < out_w; ++ox) {
        const real a00 = src[y0[oy] * w + x0[ox]], a01 = src[y0[oy] * w + x1[ox]];
        const real a10 = src[y1[oy] * w + x0[ox]], a11 = src[y1[oy] * w + x1[ox]];
        const real top = a00 + fx[ox] * (a01 - a00);
        const real bot = a10 + fx[ox] * (a11 - a10);
        dst[static_cast<int64_t>(oy) * out_w + ox] = top + fy[oy] * (bot - top);
      }
  }
  return make_op(std::move(out), {x},
                 [planes, h, w, out_h, out_w, y0, y1, x0, x1, fy, fx](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t b = 0; b < planes; ++b) {
      real* dst = pg + b * h * w;
      const real* gs = g + b * static_cast<int64_t>(out_h) * out_w;
      for (int oy = 0; oy < out_h; ++oy)
        for (int ox = 0; ox < out_w; ++ox) {
          const real gv = gs[static_cast<int64_t>(oy) * out_w + ox];
          const real wy1 = fy[oy], wy0 = 1.0 - wy1;
          const real wx1 = fx[ox], wx0 = 1.0 - wx1;
          dst[y0[oy] * w + x0[ox]] += gv * wy0 * wx0;
          dst[y0[oy] * w + x1[ox]] += gv * wy0 * wx1;
          dst[y1[oy] * w + x0[ox]] += gv * wy1 * wx0;
          dst[y1[oy] * w + x1[ox]] += gv * wy1 * wx1;
        }
    }
  });
}

Var global_avg_pool(Var x) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "global_avg_pool: expects NCHW");
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
  const int64_t nc = static_cast<int64_t>(s[0]) * s[1];
  Tensor out = Tensor::zeros({s[0], s[1], 1, 1});
  const real* px = x->value.data();
  for (int64_t b = 0; b < nc; ++b) {
    real sum = 0;
    for (int64_t i = 0; i < hw; ++i) sum += px[b * hw + i];
    out[b] = sum / static_cast<real>(hw);
  }
  return make_op(std::move(out), {x}, [nc, hw](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    const real inv = 1.0 / static_cast<real>(hw);
    for (int64_t b = 0; b < nc; ++b)
      for (int64_t i = 0; i < hw; ++i) pg[b * hw + i] += g[b] * inv;
  });
}

Var layernorm_channels(Var x, Var gamma, Var beta, real eps) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "layernorm_channels: expects NCHW");
  const int n = s[0], c = s[1], h = s[2], w = s[3];
  check(gamma->value.size() == c && beta->value.size() == c, "layernorm_channels: affine size");
  const int64_t hw = static_cast<int64_t>(h) * w;

  Tensor out = Tensor::zeros(s);
  Tensor mu({n, 1, h, w}), is({n, 1, h, w});
  const real* px = x->value.data();
  for (int b = 0; b < n; ++b)
    for (int64_t p = 0; p < hw; ++p) {
      real m = 0;
      for (int ci = 0; ci < c; ++ci) m += px[(static_cast<int64_t>(b) * c + ci) * hw + p];
      m /= c;
      real var = 0;
      for (int ci = 0; ci < c; ++ci) {
        const real d = px[(static_cast<int64_t>(b) * c + ci) * hw + p] - m;
        var += d * d;
      }
      var /= c;
      mu[b * hw + p] = m;
      is[b * hw + p] = 1.0 / std::sqrt(var + eps);
    }
  for (int b = 0; b < n; ++b)
    for (int ci = 0; ci < c; ++ci) {
      const real ga = gamma->value[ci], be = beta->value[ci];
      for (int64_t p = 0; p < hw; ++p) {
        const real xh = (px[(static_cast<int64_t>(b) * c + ci) * hw + p] - mu[b * hw + p]) *
                        is[b * hw + p];
        out[(static_cast<int64_t>(b) * c + ci) * hw + p] = ga * xh + be;
      }
    }

  return make_op(std::move(out), {x, gamma, beta}, [n, c, hw, mu, is](Node& self) {
    const Var& x = self.parents[0];
    const Var& gamma = self.parents[1];
    const Var& beta = self.parents[2];
    const real* g = self.grad.data();
    const real* px = x->value.data();
    real* gg = wants(gamma) ? gamma->ensure_grad().data() : nullptr;
    real* bg = wants(beta) ? beta->ensure_grad().data() : nullptr;
    real* xg = wants(x) ? x->ensure_grad().data() : nullptr;
    for (int b = 0; b < n; ++b)
      for (int64_t p = 0; p < hw; ++p) {
        const real m = mu[b * hw + p], s = is[b * hw + p];
        real sum_d = 0, sum_dx = 0;  // sums of dxhat and dxhat*xhat over channels
        for (int ci = 0; ci < c; ++ci) {
          const int64_t idx = (static_cast<int64_t>(b) * c + ci) * hw + p;
          const real xh = (px[idx] - m) * s;
          const real dxh = g[idx] * gamma->value[ci];
          sum_d += dxh;
          sum_dx += dxh * xh;
          if (gg) gg[ci] += g[idx] * xh;
          if (bg) bg[ci] += g[idx];
        }
        if (xg) {
          const real inv_c = 1.0 / c;
          for (int ci = 0; ci < c; ++ci) {
            const int64_t idx = (static_cast<int64_t>(b) * c + ci) * hw + p;
            const real xh = (px[idx] - m) * s;
            const real dxh = g[idx] * gamma->value[ci];
            xg[idx] += s * (dxh - sum_d * inv_c - xh * sum_dx * inv_c);
          }
        }
      }
  });
}

// ---------------------------------------------------------------------------
// epipolar attention

Var row_scores(Var a, Var b) {
  const auto& sa = a->value.shape();
  check(sa.size() == 4 && a->value.same_shape(b->value), "row_scores: expects matching NCHW");
  const int n = sa[0], c = sa[1], h = sa[2], w = sa[3];
  const int64_t hw = static_cast<int64_t>(h) * w;

  auto pack = [c, w, hw](const real* src, int64_t plane_base, int y, real* dst) {
    for (int i = 0; i < w; ++i)
      for (int ci = 0; ci < c; ++ci)
        dst[static_cast<int64_t>(i) * c + ci] = src[plane_base + ci * hw + static_cast<int64_t>(y) * w + i];
  };

  Tensor out = Tensor::zeros({n, h, w, w});
  {
    std::vector<real> pa(static_cast<size_t>(w) * c), pb(static_cast<size_t>(w) * c);
    for (int bn = 0; bn < n; ++bn) {
      const int64_t base = static_cast<int64_t>(bn) * c * hw;
      for (int y = 0; y < h; ++y) {
        pack(a->value.data(), base, y, pa.data());
        pack(b->value.data(), base, y, pb.data());
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, w, w, c, 1.0, pa.data(), c,
                    pb.data(), c, 0.0,
                    out.data() + ((static_cast<int64_t>(bn) * h + y) * w) * w, w);
      }
    }
  }

  return make_op(std::move(out), {a, b}, [n, c, h, w, hw, pack](Node& self) {
    const Var& a = self.parents[0];
    const Var& b = self.parents[1];
    const real* g = self.grad.data();
    std::vector<real> pa(static_cast<size_t>(w) * c), pb(static_cast<size_t>(w) * c);
    std::vector<real> dp(static_cast<size_t>(w) * c);
    auto scatter = [c, w, hw](const real* src, int64_t plane_base, int y, real* dst) {
      for (int i = 0; i < w; ++i)
        for (int ci = 0; ci < c; ++ci)
          dst[plane_base + ci * hw + static_cast<int64_t>(y) * w + i] +=
              src[static_cast<int64_t>(i) * c + ci];
    };
    for (int bn = 0; bn < n; ++bn) {
      const int64_t base = static_cast<int64_t>(bn) * c * hw;
      for (int y = 0; y < h; ++y) {
        const real* gs = g + ((static_cast<int64_t>(bn) * h + y) * w) * w;
        if (wants(a)) {
          pack(b->value.data(), base, y, pb.data());
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, w, c, w, 1.0, gs, w,
                      pb.data(), c, 0.0, dp.data(), c);
          scatter(dp.data(), base, y, a->ensure_grad().data());
        }
        if (wants(b)) {
          pack(a->value.data(), base, y, pa.data());
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, w, c, w, 1.0, gs, w,
                      pa.data(), c, 0.0, dp.data(), c);
          scatter(dp.data(), base, y, b->ensure_grad().data());
        }
      }
    }
  });
}

Var softmax_lastdim(Var s) {
  const auto& sh = s->value.shape();
  check(!sh.empty(), "softmax_lastdim: empty shape");
  const int64_t d = sh.back();
  const int64_t rows = s->value.size() / d;
  Tensor out = Tensor::zeros(sh);
  const real* px = s->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    const real* xi = px + r * d;
    real* yo = out.data() + r * d;
    real m = xi[0];
    for (int64_t i = 1; i < d; ++i) m = std::max(m, xi[i]);
    real sum = 0;
    for (int64_t i = 0; i < d; ++i) {
      yo[i] = std::exp(xi[i] - m);
      sum += yo[i];
    }
    const real inv = 1.0 / sum;
    for (int64_t i = 0; i < d; ++i) yo[i] *= inv;
  }
  Tensor y = out;
  return make_op(std::move(out), {s}, [rows, d, y](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    const real* py = y.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t r = 0; r < rows; ++r) {
      const real* gi = g + r * d;
      const real* yi = py + r * d;
      real dot = 0;
      for (int64_t i = 0; i < d; ++i) dot += gi[i] * yi[i];
      real* go = pg + r * d;
      for (int64_t i = 0; i < d; ++i) go[i] += yi[i] * (gi[i] - dot);
    }
  });
}

Var row_mix(Var m, Var f) {
  const auto& ms = m->value.shape();
  const auto& fs = f->value.shape();
  check(ms.size() == 4 && fs.size() == 4, "row_mix: bad ranks");
  check(ms[0] == fs[0] && ms[1] == fs[2] && ms[2] == fs[3] && ms[3] == fs[3],
        "row_mix: map (N,H,W,W) must match features (N,C,H,W)");
  const int n = fs[0], c = fs[1], h = fs[2], w = fs[3];
  const int64_t hw = static_cast<int64_t>(h) * w;

  auto pack = [c, w, hw](const real* src, int64_t plane_base, int y, real* dst) {
    for (int i = 0; i < w; ++i)
      for (int ci = 0; ci < c; ++ci)
        dst[static_cast<int64_t>(i) * c + ci] = src[plane_base + ci * hw + static_cast<int64_t>(y) * w + i];
  };
  auto unpack = [c, w, hw](const real* src, int64_t plane_base, int y, real* dst) {
    for (int i = 0; i < w; ++i)
      for (int ci = 0; ci < c; ++ci)
        dst[plane_base + ci * hw + static_cast<int64_t>(y) * w + i] = src[static_cast<int64_t>(i) * c + ci];
  };

  Tensor out = Tensor::zeros(fs);
  {
    std::vector<real> pf(static_cast<size_t>(w) * c), po(static_cast<size_t>(w) * c);
    for (int bn = 0; bn < n; ++bn) {
      const int64_t base = static_cast<int64_t>(bn) * c * hw;
      for (int y = 0; y < h; ++y) {
        pack(f->value.data(), base, y, pf.data());
        const real* mrow = m->value.data() + ((static_cast<int64_t>(bn) * h + y) * w) * w;
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, w, c, w, 1.0, mrow, w,
                    pf.data(), c, 0.0, po.data(), c);
        unpack(po.data(), base, y, out.data());
      }
    }
  }

  return make_op(std::move(out), {m, f}, [n, c, h, w, hw, pack](Node& self) {
    const Var& m = self.parents[0];
    const Var& f = self.parents[1];
    const real* g = self.grad.data();
    std::vector<real> pf(static_cast<size_t>(w) * c), pg(static_cast<size_t>(w) * c);
    std::vector<real> dp(static_cast<size_t>(w) * c);
    auto scatter = [c, w, hw](const real* src, int64_t plane_base, int y, real* dst) {
      for (int i = 0; i < w; ++i)
        for (int ci = 0; ci < c; ++ci)
          dst[plane_base + ci * hw + static_cast<int64_t>(y) * w + i] +=
              src[static_cast<int64_t>(i) * c + ci];
    };
    for (int bn = 0; bn < n; ++bn) {
      const int64_t base = static_cast<int64_t>(bn) * c * hw;
      for (int y = 0; y < h; ++y) {
        pack(g, base, y, pg.data());
        const int64_t mbase = ((static_cast<int64_t>(bn) * h + y) * w) * w;
        if (wants(m)) {
          pack(f->value.data(), base, y, pf.data());
          cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, w, w, c, 1.0, pg.data(), c,
                      pf.data(), c, 1.0, m->ensure_grad().data() + mbase, w);
        }
        if (wants(f)) {
          cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, w, c, w, 1.0,
                      m->value.data() + mbase, w, pg.data(), c, 0.0, dp.data(), c);
          scatter(dp.data(), base, y, f->ensure_grad().data());
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// masks

Var masked_mix(Var a, Var b, const Tensor& mask) {
  const auto& s = a->value.shape();
  check(s.size() == 4 && a->value.same_shape(b->value), "masked_mix: shape mismatch");
  const auto& ms = mask.shape();
  check(ms.size() == 3 && ms[0] == s[0] && ms[1] == s[2] && ms[2] == s[3],
        "masked_mix: mask must be (N,H,W)");
  const int n = s[0], c = s[1];
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];
  Tensor out = Tensor::zeros(s);
  const real* pa = a->value.data();
  const real* pb = b->value.data();
  for (int bn = 0; bn < n; ++bn) {
    const real* pm = mask.data() + static_cast<int64_t>(bn) * hw;
    for (int ci = 0; ci < c; ++ci) {
      const int64_t off = (static_cast<int64_t>(bn) * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i)
        out[off + i] = pm[i] != 0 ? pa[off + i] : pb[off + i];
    }
  }
  Tensor msk = mask;
  return make_op(std::move(out), {a, b}, [n, c, hw, msk](Node& self) {
    const real* g = self.grad.data();
    for (int bn = 0; bn < n; ++bn) {
      const real* pm = msk.data() + static_cast<int64_t>(bn) * hw;
      for (int ci = 0; ci < c; ++ci) {
        const int64_t off = (static_cast<int64_t>(bn) * c + ci) * hw;
        if (wants(self.parents[0])) {
          real* pg = self.parents[0]->ensure_grad().data();
          for (int64_t i = 0; i < hw; ++i)
            if (pm[i] != 0) pg[off + i] += g[off + i];
        }
        if (wants(self.parents[1])) {
          real* pg = self.parents[1]->ensure_grad().data();
          for (int64_t i = 0; i < hw; ++i)
            if (pm[i] == 0) pg[off + i] += g[off + i];
        }
      }
    }
  });
}

Var masked_l1_mean(Var x, const Tensor& mask) {
  const auto& s = x->value.shape();
  check(s.size() == 4, "masked_l1_mean: expects NCHW");
  const auto& ms = mask.shape();
  check(ms.size() == 3 && ms[0] == s[0] && ms[1] == s[2] && ms[2] == s[3],
        "masked_l1_mean: mask must be (N,H,W)");
  const int n = s[0], c = s[1];
  const int64_t hw = static_cast<int64_t>(s[2]) * s[3];

  int64_t valid = 0;
  for (int64_t i = 0; i < mask.size(); ++i)
    if (mask[i] != 0) ++valid;
  const int64_t count = valid * c;

  real total = 0;
  const real* px = x->value.data();
  for (int bn = 0; bn < n; ++bn) {
    const real* pm = mask.data() + static_cast<int64_t>(bn) * hw;
    for (int ci = 0; ci < c; ++ci) {
      const int64_t off = (static_cast<int64_t>(bn) * c + ci) * hw;
      for (int64_t i = 0; i < hw; ++i)
        if (pm[i] != 0) total += std::abs(px[off + i]);
    }
  }
  const real value = count > 0 ? total / static_cast<real>(count) : 0.0;

  Tensor msk = mask;
  return make_op(Tensor::full({1}, value), {x}, [n, c, hw, count, msk](Node& self) {
    if (!wants(self.parents[0]) || count == 0) return;
    const real g = self.grad[0] / static_cast<real>(count);
    const real* px = self.parents[0]->value.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int bn = 0; bn < n; ++bn) {
      const real* pm = msk.data() + static_cast<int64_t>(bn) * hw;
      for (int ci = 0; ci < c; ++ci) {
        const int64_t off = (static_cast<int64_t>(bn) * c + ci) * hw;
        for (int64_t i = 0; i < hw; ++i) {
          if (pm[i] == 0) continue;
          const real v = px[off + i];
          if (v > 0)
            pg[off + i] += g;
          else if (v < 0)
            pg[off + i] -= g;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// soft clustering

Var cell_means(Var f, const std::shared_ptr<const std::vector<std::vector<int>>>& cell_pixels) {
  const auto& s = f->value.shape();
  check(s.size() == 3, "cell_means: expects (C,H,W)");
  const int c = s[0];
  const int64_t hw = static_cast<int64_t>(s[1]) * s[2];
  const int m = static_cast<int>(cell_pixels->size());
  Tensor out = Tensor::zeros({m, c});
  const real* pf = f->value.data();
  for (int i = 0; i < m; ++i) {
    const auto& px = (*cell_pixels)[i];
    check(!px.empty(), "cell_means: empty cell");
    const real inv = 1.0 / static_cast<real>(px.size());
    for (int ci = 0; ci < c; ++ci) {
      real sum = 0;
      for (int p : px) sum += pf[ci * hw + p];
      out[static_cast<int64_t>(i) * c + ci] = sum * inv;
    }
  }
  return make_op(std::move(out), {f}, [c, hw, m, cell_pixels](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int i = 0; i < m; ++i) {
      const auto& px = (*cell_pixels)[i];
      const real inv = 1.0 / static_cast<real>(px.size());
      for (int ci = 0; ci < c; ++ci) {
        const real gv = g[static_cast<int64_t>(i) * c + ci] * inv;
        for (int p : px) pg[ci * hw + p] += gv;
      }
    }
  });
}

Var candidate_sqdist(Var f, Var centers, const CandTable& cand, int n_slots) {
  const auto& fs = f->value.shape();
  const auto& cs = centers->value.shape();
  check(fs.size() == 3 && cs.size() == 2 && cs[1] == fs[0], "candidate_sqdist: bad shapes");
  const int c = fs[0];
  const int64_t hw = static_cast<int64_t>(fs[1]) * fs[2];
  check(static_cast<int64_t>(cand->size()) == hw * n_slots, "candidate_sqdist: table size");
  Tensor out = Tensor::zeros({fs[1], fs[2], n_slots});
  const real* pf = f->value.data();
  const real* pc = centers->value.data();
  for (int64_t p = 0; p < hw; ++p)
    for (int sl = 0; sl < n_slots; ++sl) {
      const int cell = (*cand)[p * n_slots + sl];
      if (cell < 0) continue;
      real d = 0;
      for (int ci = 0; ci < c; ++ci) {
        const real diff = pf[ci * hw + p] - pc[static_cast<int64_t>(cell) * c + ci];
        d += diff * diff;
      }
      out[p * n_slots + sl] = d;
    }
  return make_op(std::move(out), {f, centers}, [c, hw, n_slots, cand](Node& self) {
    const Var& f = self.parents[0];
    const Var& centers = self.parents[1];
    const real* g = self.grad.data();
    const real* pf = f->value.data();
    const real* pc = centers->value.data();
    real* fg = wants(f) ? f->ensure_grad().data() : nullptr;
    real* cg = wants(centers) ? centers->ensure_grad().data() : nullptr;
    for (int64_t p = 0; p < hw; ++p)
      for (int sl = 0; sl < n_slots; ++sl) {
        const int cell = (*cand)[p * n_slots + sl];
        if (cell < 0) continue;
        const real gv = g[p * n_slots + sl];
        if (gv == 0) continue;
        for (int ci = 0; ci < c; ++ci) {
          const real diff = pf[ci * hw + p] - pc[static_cast<int64_t>(cell) * c + ci];
          if (fg) fg[ci * hw + p] += gv * 2.0 * diff;
          if (cg) cg[static_cast<int64_t>(cell) * c + ci] -= gv * 2.0 * diff;
        }
      }
  });
}

Var neg_softmax_slots(Var d, const CandTable& cand) {
  const auto& s = d->value.shape();
  check(s.size() == 3, "neg_softmax_slots: expects (H,W,S)");
  const int n_slots = s[2];
  const int64_t hw = static_cast<int64_t>(s[0]) * s[1];
  check(static_cast<int64_t>(cand->size()) == hw * n_slots, "neg_softmax_slots: table size");
  Tensor out = Tensor::zeros(s);
  const real* pd = d->value.data();
  for (int64_t p = 0; p < hw; ++p) {
    real m = -1e300;
    for (int sl = 0; sl < n_slots; ++sl)
      if ((*cand)[p * n_slots + sl] >= 0) m = std::max(m, -pd[p * n_slots + sl]);
    real sum = 0;
    for (int sl = 0; sl < n_slots; ++sl) {
      if ((*cand)[p * n_slots + sl] < 0) continue;
      const real e = std::exp(-pd[p * n_slots + sl] - m);
      out[p * n_slots + sl] = e;
      sum += e;
    }
    const real inv = 1.0 / sum;
    for (int sl = 0; sl < n_slots; ++sl) out[p * n_slots + sl] *= inv;
  }
  Tensor y = out;
  return make_op(std::move(out), {d}, [hw, n_slots, y](Node& self) {
    if (!wants(self.parents[0])) return;
    const real* g = self.grad.data();
    const real* py = y.data();
    real* pg = self.parents[0]->ensure_grad().data();
    for (int64_t p = 0; p < hw; ++p) {
      real dot = 0;
      for (int sl = 0; sl < n_slots; ++sl)
        dot += g[p * n_slots + sl] * py[p * n_slots + sl];
      for (int sl = 0; sl < n_slots; ++sl) {
        const real q = py[p * n_slots + sl];
        pg[p * n_slots + sl] -= q * (g[p * n_slots + sl] - dot);
      }
    }
  });
}

Var assoc_pool(Var q, Var src, const CandTable& cand, int n_cells) {
  const auto& qs = q->value.shape();
  const auto& ss = src->value.shape();
  check(qs.size() == 3 && ss.size() == 3, "assoc_pool: bad ranks");
  check(ss[1] == qs[0] && ss[2] == qs[1], "assoc_pool: spatial mismatch");
  const int n_slots = qs[2], k = ss[0];
  const int64_t hw = static_cast<int64_t>(qs[0]) * qs[1];
  Tensor out = Tensor::zeros({n_cells, k});
  const real* pq = q->value.data();
  const real* ps = src->value.data();
  for (int64_t p = 0; p < hw; ++p)
    for (int sl = 0; sl < n_slots; ++sl) {
      const int cell = (*cand)[p * n_slots + sl];
      if (cell < 0) continue;
      const real qv = pq[p * n_slots + sl];
      for (int ki = 0; ki < k; ++ki)
        out[static_cast<int64_t>(cell) * k + ki] += qv * ps[static_cast<int64_t>(ki) * hw + p];
    }
  return make_op(std::move(out), {q, src}, [n_slots, k, hw, cand](Node& self) {
    const Var& q = self.parents[0];
    const Var& src = self.parents[1];
    const real* g = self.grad.data();
    const real* pq = q->value.data();
    const real* ps = src->value.data();
    real* qg = wants(q) ? q->ensure_grad().data() : nullptr;
    real* sg = wants(src) ? src->ensure_grad().data() : nullptr;
    for (int64_t p = 0; p < hw; ++p)
      for (int sl = 0; sl < n_slots; ++sl) {
        const int cell = (*cand)[p * n_slots + sl];
        if (cell < 0) continue;
        if (qg) {
          real acc = 0;
          for (int ki = 0; ki < k; ++ki)
            acc += g[static_cast<int64_t>(cell) * k + ki] * ps[static_cast<int64_t>(ki) * hw + p];
          qg[p * n_slots + sl] += acc;
        }
        if (sg) {
          const real qv = pq[p * n_slots + sl];
          for (int ki = 0; ki < k; ++ki)
            sg[static_cast<int64_t>(ki) * hw + p] += qv * g[static_cast<int64_t>(cell) * k + ki];
        }
      }
  });
}

Var center_update(Var pool, Var mass, Var prev, real eps) {
  const auto& ps = pool->value.shape();
  const auto& ms = mass->value.shape();
  check(ps.size() == 2 && prev->value.same_shape(pool->value), "center_update: bad shapes");
  check(ms.size() == 2 && ms[0] == ps[0] && ms[1] == 1, "center_update: mass must be (m,1)");
  const int m = ps[0], c = ps[1];
  Tensor out = Tensor::zeros(ps);
  auto live = std::make_shared<std::vector<char>>(m);
  for (int i = 0; i < m; ++i) {
    const real w = mass->value[i];
    (*live)[i] = w >= eps ? 1 : 0;
    for (int ci = 0; ci < c; ++ci) {
      const int64_t idx = static_cast<int64_t>(i) * c + ci;
      out[idx] = (*live)[i] ? pool->value[idx] / w : prev->value[idx];
    }
  }
  return make_op(std::move(out), {pool, mass, prev}, [m, c, live](Node& self) {
    const Var& pool = self.parents[0];
    const Var& mass = self.parents[1];
    const Var& prev = self.parents[2];
    const real* g = self.grad.data();
    for (int i = 0; i < m; ++i) {
      if ((*live)[i]) {
        const real w = mass->value[i];
        const real inv = 1.0 / w;
        real dot = 0;
        for (int ci = 0; ci < c; ++ci) {
          const int64_t idx = static_cast<int64_t>(i) * c + ci;
          if (wants(pool)) pool->ensure_grad()[idx] += g[idx] * inv;
          dot += g[idx] * pool->value[idx];
        }
        if (wants(mass)) mass->ensure_grad()[i] -= dot * inv * inv;
      } else if (wants(prev)) {
        for (int ci = 0; ci < c; ++ci) {
          const int64_t idx = static_cast<int64_t>(i) * c + ci;
          prev->ensure_grad()[idx] += g[idx];
        }
      }
    }
  });
}

Var assoc_mix(Var q, Var table, const CandTable& cand) {
  const auto& qs = q->value.shape();
  const auto& ts = table->value.shape();
  check(qs.size() == 3 && ts.size() == 2, "assoc_mix: bad ranks");
  const int n_slots = qs[2], k = ts[1];
  const int64_t hw = static_cast<int64_t>(qs[0]) * qs[1];
  check(static_cast<int64_t>(cand->size()) == hw * n_slots, "assoc_mix: table size");
  Tensor out = Tensor::zeros({k, qs[0], qs[1]});
  const real* pq = q->value.data();
  const real* pt = table->value.data();
  for (int64_t p = 0; p < hw; ++p)
    for (int sl = 0; sl < n_slots; ++sl) {
      const int cell = (*cand)[p * n_slots + sl];
      if (cell < 0) continue;
      const real qv = pq[p * n_slots + sl];
      for (int ki = 0; ki < k; ++ki)
        out[static_cast<int64_t>(ki) * hw + p] += qv * pt[static_cast<int64_t>(cell) * k + ki];
    }
  return make_op(std::move(out), {q, table}, [n_slots, k, hw, cand](Node& self) {
    const Var& q = self.parents[0];
    const Var& table = self.parents[1];
    const real* g = self.grad.data();
    const real* pq = q->value.data();
    const real* pt = table->value.data();
    real* qg = wants(q) ? q->ensure_grad().data() : nullptr;
    real* tg = wants(table) ? table->ensure_grad().data() : nullptr;
    for (int64_t p = 0; p < hw; ++p)
      for (int sl = 0; sl < n_slots; ++sl) {
        const int cell = (*cand)[p * n_slots + sl];
        if (cell < 0) continue;
        if (qg) {
          real acc = 0;
          for (int ki = 0; ki < k; ++ki)
            acc += g[static_cast<int64_t>(ki) * hw + p] * pt[static_cast<int64_t>(cell) * k + ki];
          qg[p * n_slots + sl] += acc;
        }
        if (tg) {
          const real qv = pq[p * n_slots + sl];
          for (int ki = 0; ki < k; ++ki)
            tg[static_cast<int64_t>(cell) * k + ki] += qv * g[static_cast<int64_t>(ki) * hw + p];
        }
      }
  });
}

}  // namespace sspix
