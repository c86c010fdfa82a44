// Acceptance gate: ten go/no-go checks covering metric correctness, the
// stereo attention invariants, gradient fidelity, schedule values, training
// efficacy, ablation ordering, loss masking, and the saliency pipeline.
// Each criterion prints exactly one PASS/FAIL line; the exit code is the
// number of failures clamped to 1.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "sspix/dataset.hpp"
#include "sspix/dsem.hpp"
#include "sspix/dsfm.hpp"
#include "sspix/image.hpp"
#include "sspix/losses.hpp"
#include "sspix/metrics.hpp"
#include "sspix/network.hpp"
#include "sspix/sod.hpp"
#include "sspix/soft_cluster.hpp"
#include "sspix/synth.hpp"
#include "sspix/trainer.hpp"

using namespace sspix;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;
std::string g_work;

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

void report(int n, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", n, detail.c_str());
  std::fflush(stdout);
  if (!ok) g_failures++;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor rand_tensor(std::vector<int> shape, std::mt19937_64& rng, real lo = -1.0, real hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<real> d(lo, hi);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

LabelMap rand_labels(int h, int w, int k, std::mt19937_64& rng) {
  LabelMap m = make_label_map(h, w);
  std::uniform_int_distribution<int> d(0, k - 1);
  for (auto& v : m.ids) v = d(rng);
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), sizeof(real) * (size_t)a.size()) == 0;
}

// ---- criterion 1: metric oracles ---------------------------------------------
// Brute-force reimplementations from the metric definitions, sharing no code
// with the library versions.

real oracle_asa(const LabelMap& s, const LabelMap& g) {
  std::map<int, std::map<int, long long>> overlap;
  for (size_t i = 0; i < s.ids.size(); ++i) overlap[s.ids[i]][g.ids[i]]++;
  long long hit = 0;
  for (const auto& [sid, row] : overlap) {
    long long best = 0;
    for (const auto& [gid, c] : row) best = std::max(best, c);
    hit += best;
  }
  return (real)hit / (real)((long long)s.h * s.w);
}

real oracle_ue(const LabelMap& s, const LabelMap& g, bool pixel_normalized) {
  std::map<int, long long> s_size, g_size;
  std::map<int, std::map<int, long long>> touch;  // gid -> sid -> overlap
  for (size_t i = 0; i < s.ids.size(); ++i) {
    s_size[s.ids[i]]++;
    g_size[g.ids[i]]++;
    touch[g.ids[i]][s.ids[i]]++;
  }
  real acc = 0;
  for (const auto& [gid, row] : touch) {
    long long covering = 0;
    for (const auto& [sid, c] : row)
      if (c > 0) covering += s_size[sid];
    const long long leak = covering - g_size[gid];
    acc += pixel_normalized ? (real)leak : (real)leak / (real)g_size[gid];
  }
  if (pixel_normalized) return acc / (real)((long long)s.h * s.w);
  return acc / (real)g_size.size();
}

std::vector<bool> oracle_boundary(const LabelMap& m) {
  std::vector<bool> b(m.ids.size(), false);
  for (int y = 0; y < m.h; ++y)
    for (int x = 0; x < m.w; ++x) {
      const size_t p = (size_t)y * m.w + x;
      if (x + 1 < m.w && m.ids[p] != m.ids[p + 1]) b[p] = b[p + 1] = true;
      if (y + 1 < m.h && m.ids[p] != m.ids[p + m.w]) b[p] = b[p + m.w] = true;
    }
  return b;
}

real oracle_br(const LabelMap& s, const LabelMap& g, int r) {
  const std::vector<bool> sb = oracle_boundary(s);
  const std::vector<bool> gb = oracle_boundary(g);
  long long tp = 0, total = 0;
  for (int y = 0; y < g.h; ++y)
    for (int x = 0; x < g.w; ++x) {
      if (!gb[(size_t)y * g.w + x]) continue;
      total++;
      bool found = false;
      for (int yy = std::max(0, y - r); yy <= std::min(g.h - 1, y + r) && !found; ++yy)
        for (int xx = std::max(0, x - r); xx <= std::min(g.w - 1, x + r); ++xx)
          if (sb[(size_t)yy * g.w + xx]) {
            found = true;
            break;
          }
      if (found) tp++;
    }
  return total == 0 ? 1.0 : (real)tp / (real)total;
}

void criterion1() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  real worst = 0;
  for (int t = 0; t < 1000; ++t) {
    const int ks = 2 + t % 11, kg = 2 + t % 4, r = t % 3;
    LabelMap s = rand_labels(8, 8, ks, rng);
    LabelMap g = rand_labels(8, 8, kg, rng);
    worst = std::max(worst, std::fabs(asa(s, g) - oracle_asa(s, g)));
    worst = std::max(worst, std::fabs(ue(s, g) - oracle_ue(s, g, false)));
    worst = std::max(worst, std::fabs(ue(s, g, true) - oracle_ue(s, g, true)));
    worst = std::max(worst, std::fabs(br(s, g, r) - oracle_br(s, g, r)));
  }
  const double secs = seconds_since(t0);
  report(1, worst <= 1e-12 && secs < 30.0,
         fmt("ASA/UE/BR vs brute-force oracles, 1000 random 8x8 pairs, "
             "max |diff| %.3g (tol 1e-12), %.1f s (limit 30)",
             worst, secs));
}

// ---- criterion 2: analytical fixtures -----------------------------------------

void criterion2() {
  // one superpixel over a 60/40 two-segment ground truth
  LabelMap g = make_label_map(10, 10);
  for (int i = 60; i < 100; ++i) g.ids[(size_t)i] = 1;
  LabelMap s = make_label_map(10, 10);  // all a single id

  const real a = asa(s, g);
  const real u = ue(s, g);
  const real expected_u = (40.0 / 60.0 + 60.0 / 40.0) / 2.0;
  const bool ok = a == 0.6 && u == expected_u && std::fabs(u - 13.0 / 12.0) < 1e-15;
  report(2, ok, fmt("one-superpixel 60/40 fixture: asa %.17g (want 0.6), ue %.17g (want 13/12)",
                    a, u));
}

// ---- criterion 3: attention invariants ----------------------------------------

void criterion3() {
  NoGradGuard ng;
  real worst_row = 0;
  bool binary = true, local = true;
  const int C = 3, H = 3, W = 5;
  for (int t = 0; t < 100; ++t) {
    ParamStore store;
    Rng rng(100 + t);
    Dsfm dsfm(store, C, rng);
    std::mt19937_64 drng(500 + t);
    Tensor fl = rand_tensor({1, C, H, W}, drng);
    Tensor fr = rand_tensor({1, C, H, W}, drng);
    ParallaxAttention attn = dsfm.attention_maps(constant(fl), constant(fr));

    for (const Var& m : {attn.m_r2l, attn.m_l2r})
      for (int y = 0; y < H; ++y)
        for (int j = 0; j < W; ++j) {
          real sum = 0;
          for (int k = 0; k < W; ++k) sum += m->value[((std::int64_t)y * W + j) * W + k];
          worst_row = std::max(worst_row, std::fabs(sum - 1.0));
        }

    ValidMask vm = dsfm.valid_mask(attn);
    for (const Tensor* o : {&vm.o_l2r, &vm.o_r2l})
      for (std::int64_t i = 0; i < o->size(); ++i)
        if ((*o)[i] != 0.0 && (*o)[i] != 1.0) binary = false;

    // single-pixel perturbation stays on its epipolar row
    const int y0 = 1, x0 = 2;
    Tensor fr2 = fr.clone();
    fr2[((std::int64_t)0 * H + y0) * W + x0] += 0.9;
    ParallaxAttention attn2 = dsfm.attention_maps(constant(fl), constant(fr2));
    auto [al1, ar1] = Dsfm::align(attn, constant(fl), constant(fr));
    auto [al2, ar2] = Dsfm::align(attn2, constant(fl), constant(fr2));
    for (int y = 0; y < H && local; ++y) {
      if (y == y0) continue;
      for (int j = 0; j < W && local; ++j)
        for (int k = 0; k < W; ++k) {
          const std::int64_t at = ((std::int64_t)y * W + j) * W + k;
          if (attn.m_r2l->value[at] != attn2.m_r2l->value[at] ||
              attn.m_l2r->value[at] != attn2.m_l2r->value[at]) {
            local = false;
            break;
          }
        }
      for (int c = 0; c < C && local; ++c)
        for (int x = 0; x < W; ++x) {
          const std::int64_t at = ((std::int64_t)c * H + y) * W + x;
          if (al1->value[at] != al2->value[at] || ar1->value[at] != ar2->value[at]) {
            local = false;
            break;
          }
        }
    }
  }
  report(3, worst_row <= 1e-5 && binary && local,
         fmt("100 random inputs: worst row-sum error %.3g (tol 1e-5), masks binary %s, "
             "epipolar locality %s",
             worst_row, binary ? "yes" : "NO", local ? "holds" : "VIOLATED"));
}

// ---- criterion 4: gradient checks ----------------------------------------------

real fd_max_rel_err(const std::function<Var(Var)>& f, const Tensor& x0, real h = 1e-5) {
  Var x = leaf(x0.clone(), true);
  backward(f(x));
  Tensor analytic = x->grad.defined() ? x->grad.clone() : Tensor::zeros(x0.shape());
  real worst = 0;
  NoGradGuard ng;
  for (std::int64_t i = 0; i < x0.size(); ++i) {
    Tensor xp = x0.clone();
    xp[i] += h;
    Tensor xm = x0.clone();
    xm[i] -= h;
    const real fp = scalar_value(f(leaf(std::move(xp), false)));
    const real fm = scalar_value(f(leaf(std::move(xm), false)));
    const real fd = (fp - fm) / (2 * h);
    const real err = std::fabs(analytic[i] - fd);
    const real denom = std::max({std::fabs(fd), std::fabs(analytic[i]), (real)1e-4});
    worst = std::max(worst, err / denom);
  }
  return worst;
}

// The valid mask is a hard threshold on attention column sums; finite
// differences are only meaningful when no column sits near tau.
bool mask_margins_safe(const Tensor& m, real tau, real margin) {
  const int n = m.dim(0), h = m.dim(1), w = m.dim(2);
  for (int bn = 0; bn < n; ++bn)
    for (int y = 0; y < h; ++y)
      for (int j = 0; j < w; ++j) {
        real sum = 0;
        for (int k = 0; k < w; ++k)
          sum += m[(((std::int64_t)bn * h + y) * w + k) * w + j];
        if (std::fabs(sum - tau) < margin) return false;
      }
  return true;
}

void criterion4() {
  const auto t0 = Clock::now();
  const real tol = 1e-3;
  std::string parts;
  bool ok = true;
  auto record = [&](const char* name, real err) {
    parts += fmt("%s%s %.2g", parts.empty() ? "" : ", ", name, err);
    if (!(err < tol)) ok = false;
  };

  {  // stereo fusion, both inputs
    std::uint64_t seed = 40;
    for (;; ++seed) {
      ParamStore store;
      Rng rng(seed);
      Dsfm dsfm(store, 2, rng);
      std::mt19937_64 drng(seed + 1000);
      Tensor fl = rand_tensor({1, 2, 4, 4}, drng);
      Tensor fr = rand_tensor({1, 2, 4, 4}, drng);
      NoGradGuard ng;
      ParallaxAttention attn = dsfm.attention_maps(constant(fl), constant(fr));
      if (mask_margins_safe(attn.m_l2r->value, dsfm.tau(), 5e-3) &&
          mask_margins_safe(attn.m_r2l->value, dsfm.tau(), 5e-3))
        break;
    }
    ParamStore store;
    Rng rng(seed);
    Dsfm dsfm(store, 2, rng);
    std::mt19937_64 drng(seed + 1000);
    Tensor fl = rand_tensor({1, 2, 4, 4}, drng);
    Tensor fr = rand_tensor({1, 2, 4, 4}, drng);
    auto scalar_out = [](const Dsfm::Output& out) {
      return add(sum_all(mul(out.left, out.left)), sum_all(mul(out.right, out.right)));
    };
    record("dsfm/left", fd_max_rel_err(
                            [&](Var x) { return scalar_out(dsfm.forward(x, constant(fr), true)); },
                            fl));
    record("dsfm/right", fd_max_rel_err(
                             [&](Var x) { return scalar_out(dsfm.forward(constant(fl), x, true)); },
                             fr));

    // stereo loss through the same attention stack
    std::mt19937_64 irng(77);
    Tensor il = rand_tensor({1, 3, 4, 4}, irng, 0.0, 1.0);
    Tensor ir = rand_tensor({1, 3, 4, 4}, irng, 0.0, 1.0);
    record("stereo_loss", fd_max_rel_err(
                              [&](Var x) {
                                ParallaxAttention attn =
                                    dsfm.attention_maps(x, constant(fr));
                                return stereo_loss(il, ir, attn, dsfm.valid_mask(attn));
                              },
                              fl));
  }

  {  // spatiality embedding + dynamic fusion
    ParamStore store;
    Rng rng(50);
    Dsem dsem(store, 2, rng, true, true);
    std::mt19937_64 drng(51);
    Tensor f0 = rand_tensor({1, 2, 4, 4}, drng);
    record("dsem", fd_max_rel_err(
                       [&](Var x) {
                         Var y = dsem.forward(x, true);
                         return sum_all(mul(y, y));
                       },
                       f0));
  }

  {  // soft clustering + label reconstruction
    ClusterConfig cc = make_cluster_config(4, 4, 4, 2);
    CellGrid grid = make_cell_grid(4, 4, cc);
    std::mt19937_64 drng(60);
    Tensor f0 = rand_tensor({2, 4, 4}, drng);
    LabelMap lbl = rand_labels(4, 4, 2, drng);
    Tensor onehot = onehot_labels(lbl, 2);
    record("reconstruct", fd_max_rel_err(
                              [&](Var x) {
                                ClusterResult res =
                                    cluster_iterate(x, init_centers(x, grid), grid, 2);
                                Var recon = reconstruct_label(res.q, grid, onehot);
                                return sum_all(mul(recon, recon));
                              },
                              f0));
  }

  {  // semantic loss wrt the reconstructed probabilities
    std::mt19937_64 drng(70);
    Tensor probs = rand_tensor({3, 4, 4}, drng, 0.05, 0.95);
    LabelMap lbl = rand_labels(4, 4, 3, drng);
    Tensor onehot = onehot_labels(lbl, 3);
    record("semantic_loss",
           fd_max_rel_err([&](Var x) { return semantic_loss(onehot, x); }, probs));
  }

  const double secs = seconds_since(t0);
  if (secs >= 300.0) ok = false;
  report(4, ok, fmt("finite differences at 1e-3 rel: %s; %.1f s (limit 300)", parts.c_str(),
                    secs));
}

// ---- criterion 5: fusion degenerate cases ---------------------------------------

void criterion5() {
  NoGradGuard ng;
  std::mt19937_64 rng(5);
  const int N = 2, C = 3, H = 4, W = 5;
  Tensor self = rand_tensor({N, C, H, W}, rng);
  Tensor aligned = rand_tensor({N, C, H, W}, rng);
  Tensor ones({N, H, W});
  ones.fill(1.0);
  Tensor zeros = Tensor::zeros({N, H, W});

  auto manual_concat = [&](const Tensor& first, const Tensor& second) {
    Tensor out({N, C * 2, H, W});
    const std::int64_t plane = (std::int64_t)C * H * W;
    for (int n = 0; n < N; ++n) {
      std::memcpy(out.data() + (std::int64_t)n * 2 * plane, first.data() + n * plane,
                  sizeof(real) * plane);
      std::memcpy(out.data() + (std::int64_t)n * 2 * plane + plane, second.data() + n * plane,
                  sizeof(real) * plane);
    }
    return out;
  };

  Tensor got_ones =
      Dsfm::fuse_concat(constant(self), constant(aligned), ones)->value;
  Tensor got_zeros =
      Dsfm::fuse_concat(constant(self), constant(aligned), zeros)->value;
  const bool ok = bitwise_equal(got_ones, manual_concat(aligned, self)) &&
                  bitwise_equal(got_zeros, manual_concat(self, self));
  report(5, ok, "mask-all-one fuses concat(aligned,self), mask-all-zero concat(self,self), "
                "bitwise before reduction");
}

// ---- criterion 6: schedule fidelity ---------------------------------------------

void criterion6() {
  TrainConfig cfg;
  const bool ok = lr_at(cfg, 0) == 2e-4 && lr_at(cfg, 2000) == 1e-4 &&
                  lr_at(cfg, 8000) == 2e-5 && lr_at(cfg, 19999) == 2e-5;
  report(6, ok, fmt("lr(0)=%g lr(2000)=%g lr(8000)=%g lr(19999)=%g", lr_at(cfg, 0),
                    lr_at(cfg, 2000), lr_at(cfg, 8000), lr_at(cfg, 19999)));
}

// ---- criteria 7/8/10 share the toy datasets and the trained checkpoint ----------

DatasetLayout g_data;       // 64-scene stereo dataset
bool g_data_ok = false;
std::string g_ckpt;         // criterion 7's trained B0 checkpoint

const DatasetLayout& toy_dataset() {
  if (!g_data_ok) {
    SynthConfig sc;
    sc.n = 64;
    sc.h = sc.w = 64;
    sc.max_disparity = 8;
    sc.seed = 7;
    g_data = make_synthetic(sc, g_work + "/data");
    g_data_ok = true;
  }
  return g_data;
}

void criterion7() {
  const auto t0 = Clock::now();
  const DatasetLayout& data = toy_dataset();

  ModelConfig mcfg;
  mcfg.channels = 24;
  mcfg.kernel = 3;
  mcfg.ablation = AblationFlags::preset("B0");
  mcfg.init_seed = 7;

  TrainConfig tcfg;
  tcfg.batch_size = 4;
  tcfg.total_iters = 2000;
  tcfg.crop = 64;
  tcfg.n_spixels = 64;
  tcfg.cluster_iters = 5;
  tcfg.seed = 7;
  tcfg.checkpoint_every = 2000;
  tcfg.out_dir = g_work + "/run_b0";

  SegmentOptions opt;
  opt.n_spixels = 64;

  StereoSpixelNet fresh(mcfg);
  const real asa0 = mean_asa_over(fresh, data, data.val_ids, opt);

  TrainResult res = train_model(mcfg, tcfg, data);
  g_ckpt = res.checkpoint_path;
  std::unique_ptr<StereoSpixelNet> net = load_model(res.checkpoint_path);
  const real asa1 = mean_asa_over(*net, data, data.val_ids, opt);

  const double secs = seconds_since(t0);
  const bool ok = asa1 - asa0 >= 0.03 && res.loss_final < 0.5 * res.loss_iter10 &&
                  secs < 10800.0;
  report(7, ok,
         fmt("B0 2000 iters on 64-scene 64x64: val ASA %.4f -> %.4f (gain %.4f, need 0.03), "
             "loss iter10 %.3g -> final %.3g (need < 50%%), %.0f s (limit 10800)",
             asa0, asa1, asa1 - asa0, res.loss_iter10, res.loss_final, secs));
}

void criterion8() {
  const auto t0 = Clock::now();
  const DatasetLayout& data = toy_dataset();

  SegmentOptions opt;
  opt.n_spixels = 64;

  const char* presets[3] = {"B0", "B1", "B4"};
  real mean[3] = {0, 0, 0};
  for (int p = 0; p < 3; ++p) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      ModelConfig mcfg;
      mcfg.channels = 16;
      mcfg.ablation = AblationFlags::preset(presets[p]);
      mcfg.init_seed = seed;

      TrainConfig tcfg;
      tcfg.batch_size = 2;
      tcfg.total_iters = 600;
      tcfg.crop = 48;
      tcfg.n_spixels = 64;
      tcfg.cluster_iters = 5;
      tcfg.seed = seed;
      tcfg.checkpoint_every = 600;
      tcfg.out_dir = g_work + fmt("/run_%s_s%llu", presets[p], (unsigned long long)seed);

      TrainResult res = train_model(mcfg, tcfg, data);
      std::unique_ptr<StereoSpixelNet> net = load_model(res.checkpoint_path);
      mean[p] += mean_asa_over(*net, data, data.val_ids, opt) / 3.0;
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = mean[0] >= mean[1] && mean[0] >= mean[2];
  report(8, ok,
         fmt("3-seed mean val ASA at 64 superpixels: B0 %.4f vs B1 %.4f vs B4 %.4f "
             "(need B0 >= both), %.0f s",
             mean[0], mean[1], mean[2], secs));
}

// ---- criterion 9: stereo loss masking invariance --------------------------------

void criterion9() {
  NoGradGuard ng;
  ParamStore store;
  Rng rng(9);
  Dsfm dsfm(store, 1, rng);
  // identity projections so the features below become the attention logits
  store.find("dsfm.proj_a.weight")->value.fill(1.0);
  store.find("dsfm.proj_a.bias")->value.fill(0.0);
  store.find("dsfm.proj_b.weight")->value.fill(1.0);
  store.find("dsfm.proj_b.bias")->value.fill(0.0);

  const int H = 2, W = 4;
  std::mt19937_64 irng(19);
  const Tensor il = rand_tensor({1, 3, H, W}, irng, 0.0, 1.0);
  const Tensor ir = rand_tensor({1, 3, H, W}, irng, 0.0, 1.0);

  auto loss_of = [&](const Tensor& fl, const Tensor& fr, const Tensor& left,
                     const Tensor& right, ValidMask* vm_out) {
    ParallaxAttention attn = dsfm.attention_maps(constant(fl), constant(fr));
    ValidMask vm = dsfm.valid_mask(attn);
    if (vm_out) *vm_out = vm;
    return scalar_value(stereo_loss(left, right, attn, vm));
  };

  bool ok = true;
  std::string detail;

  {  // left-view occlusion: attention column k0 of m_l2r underflows to exact zero
    const int k0 = 2;
    Tensor fl = Tensor::zeros({1, 1, H, W});
    for (int y = 0; y < H; ++y) fl[(std::int64_t)y * W + k0] = -1e4;
    Tensor fr({1, 1, H, W});
    fr.fill(1.0);

    ValidMask vm;
    const real l0 = loss_of(fl, fr, il, ir, &vm);
    for (int y = 0; y < H; ++y) {
      if (vm.o_l2r[(std::int64_t)y * W + k0] != 0.0) ok = false;  // masked out
      if (vm.o_l2r[(std::int64_t)y * W + (k0 + 1) % W] != 1.0) ok = false;
    }
    Tensor il2 = il.clone();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y) il2[((std::int64_t)c * H + y) * W + k0] += 4.75;
    const real l1 = loss_of(fl, fr, il2, ir, nullptr);
    if (std::memcmp(&l0, &l1, sizeof l0) != 0) ok = false;

    Tensor il3 = il.clone();
    il3[0] += 0.25;  // unmasked position must matter
    const real l2 = loss_of(fl, fr, il3, ir, nullptr);
    if (l2 == l0) ok = false;
    detail += fmt("left: loss %.12g invariant under masked edits %s; ", l0,
                  l0 == l1 ? "bitwise" : "VIOLATED");
  }

  {  // mirrored construction for the right view
    const int k1 = 1;
    Tensor fl({1, 1, H, W});
    fl.fill(1.0);
    Tensor fr = Tensor::zeros({1, 1, H, W});
    for (int y = 0; y < H; ++y) fr[(std::int64_t)y * W + k1] = -1e4;

    ValidMask vm;
    const real l0 = loss_of(fl, fr, il, ir, &vm);
    for (int y = 0; y < H; ++y)
      if (vm.o_r2l[(std::int64_t)y * W + k1] != 0.0) ok = false;
    Tensor ir2 = ir.clone();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y) ir2[((std::int64_t)c * H + y) * W + k1] -= 3.5;
    const real l1 = loss_of(fl, fr, il, ir2, nullptr);
    if (std::memcmp(&l0, &l1, sizeof l0) != 0) ok = false;
    detail += fmt("right: loss %.12g %s", l0, l0 == l1 ? "bitwise" : "VIOLATED");
  }

  report(9, ok, "masked-position edits leave stereo loss unchanged (" + detail + ")");
}

// ---- criterion 10: SOD sanity ----------------------------------------------------

void criterion10() {
  if (g_ckpt.empty()) {
    report(10, false, "no trained checkpoint from criterion 7");
    return;
  }
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.n = 50;
  sc.h = sc.w = 64;
  sc.max_disparity = 8;
  sc.seed = 10;
  sc.centered_object = true;
  DatasetLayout data = make_synthetic(sc, g_work + "/sod_data");
  std::vector<std::string> ids = data.train_ids;
  ids.insert(ids.end(), data.val_ids.begin(), data.val_ids.end());

  std::unique_ptr<StereoSpixelNet> net = load_model(g_ckpt);
  SegmentOptions opt;
  opt.n_spixels = 64;

  int wins = 0;
  for (const auto& id : ids) {
    StereoPair pair = load_pair(data, id, false);
    const std::vector<real> gt = mask_to_real(load_sod_gt(data, id));

    LabelMap labels = segment_pair(*net, pair, opt);
    SuperpixelGraph graph = build_superpixel_graph(pair.left, labels);
    const real m_pipe = mae(saliency_map(graph, saliency_scores(graph)), gt);

    LabelMap degen = make_label_map(pair.h(), pair.w());  // one superpixel
    SuperpixelGraph dgraph = build_superpixel_graph(pair.left, degen);
    const real m_degen = mae(saliency_map(dgraph, saliency_scores(dgraph)), gt);

    if (m_pipe < m_degen) wins++;
  }
  const double secs = seconds_since(t0);
  report(10, wins >= 45 && (int)ids.size() == 50,
         fmt("saliency beats single-superpixel degenerate on %d/%d centered-object scenes "
             "(need 45/50), %.0f s",
             wins, (int)ids.size(), secs));
}

}  // namespace

int main() {
  char tmpl[] = "/tmp/sspix_accept_XXXXXX";
  if (!mkdtemp(tmpl)) {
    std::fprintf(stderr, "cannot create work directory\n");
    return 1;
  }
  g_work = tmpl;
  std::printf("acceptance work directory: %s\n", g_work.c_str());

  const std::pair<int, void (*)()> checks[] = {
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}, {10, criterion10},
  };
  for (const auto& [n, fn] : checks) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(n, false, std::string("exception: ") + e.what());
    }
  }

  if (g_failures == 0) {
    std::error_code ec;
    fs::remove_all(g_work, ec);
    std::printf("all 10 criteria passed\n");
    return 0;
  }
  std::printf("%d criteria failed, artifacts kept in %s\n", g_failures, g_work.c_str());
  return 1;
}
