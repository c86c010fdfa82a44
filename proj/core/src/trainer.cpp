#include "sspix/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "sspix/checkpoint.hpp"
#include "sspix/losses.hpp"
#include "sspix/metrics.hpp"
#include "sspix/png_io.hpp"

namespace sspix {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (total_iters < 1) throw ValidationError("total_iters must be >= 1");
  if (lr0 <= 0 || lr_floor <= 0) throw ValidationError("learning rates must be positive");
  if (lr_halve_every < 1) throw ValidationError("lr_halve_every must be >= 1");
  if (crop < 8) throw ValidationError("crop must be >= 8");
  if (eta <= 0) throw ValidationError("eta must be positive");
  if (grad_clip <= 0) throw ValidationError("grad_clip must be positive");
  if (n_spixels < 2) throw ValidationError("n_spixels must be >= 2");
  if (cluster_iters < 1) throw ValidationError("cluster_iters must be >= 1");
  if (lambda_stereo < 0) throw ValidationError("lambda_stereo must be >= 0");
  if (checkpoint_every < 1) throw ValidationError("checkpoint_every must be >= 1");
  if (out_dir.empty()) throw ValidationError("out_dir must be set");
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"batch_size", batch_size},
                        {"total_iters", total_iters},
                        {"lr0", lr0},
                        {"lr_halve_every", lr_halve_every},
                        {"lr_floor_iter", lr_floor_iter},
                        {"lr_floor", lr_floor},
                        {"crop", crop},
                        {"eta", eta},
                        {"scale_input", scale_input},
                        {"grad_clip", grad_clip},
                        {"n_spixels", n_spixels},
                        {"cluster_iters", cluster_iters},
                        {"lambda_stereo", lambda_stereo},
                        {"seed", seed},
                        {"checkpoint_every", checkpoint_every},
                        {"out_dir", out_dir}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.total_iters = j.value("total_iters", c.total_iters);
  c.lr0 = j.value("lr0", c.lr0);
  c.lr_halve_every = j.value("lr_halve_every", c.lr_halve_every);
  c.lr_floor_iter = j.value("lr_floor_iter", c.lr_floor_iter);
  c.lr_floor = j.value("lr_floor", c.lr_floor);
  c.crop = j.value("crop", c.crop);
  c.eta = j.value("eta", c.eta);
  c.scale_input = j.value("scale_input", c.scale_input);
  c.grad_clip = j.value("grad_clip", c.grad_clip);
  c.n_spixels = j.value("n_spixels", c.n_spixels);
  c.cluster_iters = j.value("cluster_iters", c.cluster_iters);
  c.lambda_stereo = j.value("lambda_stereo", c.lambda_stereo);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

real lr_at(const TrainConfig& cfg, int iter) {
  if (iter < 0) throw ValidationError("negative iteration");
  if (iter >= cfg.lr_floor_iter) return cfg.lr_floor;
  return cfg.lr0 * std::pow(0.5, iter / cfg.lr_halve_every);
}

real input_scale(real eta, const ClusterConfig& cc, int h, int w) {
  if (h < 1 || w < 1) throw ValidationError("empty image");
  real rw = (real)cc.grid_w / (real)w;
  real rh = (real)cc.grid_h / (real)h;
  return eta * std::max(rw, rh);
}

CropWindow random_crop_window(Rng& rng, int h, int w, int crop) {
  if (crop < 1) throw ValidationError("crop must be positive");
  CropWindow win;
  win.h = std::min(crop, h);
  win.w = std::min(crop, w);
  win.y0 = h == win.h ? 0 : (int)(rng() % (std::uint64_t)(h - win.h + 1));
  win.x0 = w == win.w ? 0 : (int)(rng() % (std::uint64_t)(w - win.w + 1));
  return win;
}

namespace {

Tensor crop_chw(const Tensor& t, const CropWindow& win) {
  const int c = t.dim(0), h = t.dim(1), w = t.dim(2);
  (void)h;
  Tensor out({c, win.h, win.w});
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < win.h; ++y) {
      const real* src = t.data() + ((std::int64_t)ch * t.dim(1) + (win.y0 + y)) * w + win.x0;
      real* dst = out.data() + ((std::int64_t)ch * win.h + y) * win.w;
      std::copy(src, src + win.w, dst);
    }
  return out;
}

}  // namespace

StereoPair crop_pair(const StereoPair& pair, const CropWindow& win) {
  StereoPair out;
  out.id = pair.id;
  out.left = crop_chw(pair.left, win);
  out.right = crop_chw(pair.right, win);
  if (pair.label.defined()) {
    out.label = make_label_map(win.h, win.w);
    for (int y = 0; y < win.h; ++y)
      for (int x = 0; x < win.w; ++x)
        out.label.at(y, x) = pair.label.at(win.y0 + y, win.x0 + x);
  }
  return out;
}

namespace {

// stacks (3,h,w) Lab planes into (N,3,h,w), optionally scaled
Tensor stack_views(const std::vector<StereoPair>& batch, bool right, real scale) {
  const int n = (int)batch.size();
  const Tensor& first = batch[0].left;
  const int c = first.dim(0), h = first.dim(1), w = first.dim(2);
  Tensor out({n, c, h, w});
  const std::int64_t per = (std::int64_t)c * h * w;
  for (int i = 0; i < n; ++i) {
    const Tensor& src = right ? batch[i].right : batch[i].left;
    const real* s = src.data();
    real* d = out.data() + i * per;
    for (std::int64_t k = 0; k < per; ++k) d[k] = s[k] * scale;
  }
  return out;
}

struct LogFile {
  FILE* f = nullptr;
  explicit LogFile(const std::string& path) {
    f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open training log: " + path);
    std::fprintf(f, "iter,l_sem,l_stereo,l_total,lr\n");
  }
  ~LogFile() {
    if (f) std::fclose(f);
  }
  void row(int iter, real l_sem, bool has_stereo, real l_stereo, real l_total, real lr) {
    if (has_stereo)
      std::fprintf(f, "%d,%.12g,%.12g,%.12g,%.12g\n", iter, l_sem, l_stereo, l_total, lr);
    else
      std::fprintf(f, "%d,%.12g,,%.12g,%.12g\n", iter, l_sem, l_total, lr);
    std::fflush(f);
  }
};

std::string checkpoint_meta(const ModelConfig& mcfg, const TrainConfig& tcfg, int n_classes,
                            const std::string& data_root, int iters_done) {
  nlohmann::json meta;
  meta["model"] = nlohmann::json::parse(mcfg.to_json());
  meta["train"] = tcfg.to_json();
  meta["n_classes"] = n_classes;
  meta["dataset_root"] = data_root;
  meta["iters_done"] = iters_done;
  return meta.dump();
}

}  // namespace

TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const DatasetLayout& data) {
  mcfg.ablation.validate();
  tcfg.validate();
  if (data.train_ids.empty()) throw ValidationError("dataset has no training ids");

  namespace fs = std::filesystem;
  fs::create_directories(tcfg.out_dir);

  std::vector<StereoPair> pairs;
  pairs.reserve(data.train_ids.size());
  int n_classes = 0;
  int crop = tcfg.crop;
  for (const auto& id : data.train_ids) {
    pairs.push_back(load_pair(data, id, true));
    n_classes = std::max(n_classes, (int)pairs.back().label.max_id() + 1);
    crop = std::min({crop, pairs.back().h(), pairs.back().w()});
  }
  if (n_classes < 1) throw ValidationError("no label classes in training split");

  StereoSpixelNet net(mcfg);
  std::vector<Var> plist;
  for (auto& [name, v] : net.params().params) plist.push_back(v);
  Adam adam(plist);

  ClusterConfig cc = make_cluster_config(tcfg.n_spixels, crop, crop, tcfg.cluster_iters);
  CellGrid grid = make_cell_grid(crop, crop, cc);
  const real beta = tcfg.scale_input ? input_scale(tcfg.eta, cc, crop, crop) : 1.0;
  const bool stereo_on = mcfg.ablation.use_stereo_loss;

  Rng rng(tcfg.seed);
  std::vector<int> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  size_t pos = order.size();  // force an initial shuffle

  TrainResult result;
  result.log_path = (fs::path(tcfg.out_dir) / "train_log.csv").string();
  LogFile log(result.log_path);

  std::vector<Tensor> onehots_scratch(tcfg.batch_size);
  for (int iter = 0; iter < tcfg.total_iters; ++iter) {
    std::vector<StereoPair> batch;
    batch.reserve(tcfg.batch_size);
    std::vector<std::string> batch_ids;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      int idx;
      if (order.size() < (size_t)tcfg.batch_size) {
        idx = (int)(rng() % order.size());
      } else {
        if (pos >= order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          pos = 0;
        }
        idx = order[pos++];
      }
      CropWindow win = random_crop_window(rng, pairs[idx].h(), pairs[idx].w(), crop);
      batch.push_back(crop_pair(pairs[idx], win));
      batch_ids.push_back(pairs[idx].id);
    }

    Tensor left_in = stack_views(batch, false, beta);
    Tensor right_in = stack_views(batch, true, beta);

    net.params().zero_grad();
    NetForward fwd = net.forward(constant(left_in), constant(right_in), true);

    Var l_sem;
    for (int b = 0; b < tcfg.batch_size; ++b) {
      Var emb = reshape(narrow_batch(fwd.embed_left, b, 1),
                        {fwd.embed_left->value.dim(1), crop, crop});
      Var centers = init_centers(emb, grid);
      ClusterResult cl = cluster_iterate(emb, centers, grid, tcfg.cluster_iters);
      onehots_scratch[b] = onehot_labels(batch[b].label, n_classes);
      Var s_star = reconstruct_label(cl.q, grid, onehots_scratch[b]);
      Var ce = semantic_loss(onehots_scratch[b], s_star);
      l_sem = l_sem ? add(l_sem, ce) : ce;
    }
    l_sem = scale(l_sem, 1.0 / tcfg.batch_size);

    Var total;
    real l_stereo_val = 0;
    if (stereo_on) {
      if (!fwd.has_stereo)
        throw TrainingError("stereo loss requested without stereo attention (check ablation)");
      Tensor left_raw = stack_views(batch, false, 1.0);
      Tensor right_raw = stack_views(batch, true, 1.0);
      Var l_stereo = stereo_loss(left_raw, right_raw, fwd.attn, fwd.mask);
      l_stereo_val = scalar_value(l_stereo);
      total = total_loss(l_sem, l_stereo, LossConfig{tcfg.lambda_stereo});
    } else {
      total = l_sem;
    }

    const real l_sem_val = scalar_value(l_sem);
    const real l_total_val = scalar_value(total);
    if (!std::isfinite(l_total_val)) {
      std::string ids;
      for (const auto& s : batch_ids) ids += (ids.empty() ? "" : ",") + s;
      throw TrainingError("non-finite loss at iteration " + std::to_string(iter) + " (batch " +
                          ids + ")");
    }

    const real lr = lr_at(tcfg, iter);
    backward(total);
    adam.clip_global_norm(tcfg.grad_clip);
    adam.step(lr);

    log.row(iter, l_sem_val, stereo_on, l_stereo_val, l_total_val, lr);
    if (iter == 10) result.loss_iter10 = l_total_val;
    result.loss_final = l_total_val;

    if ((iter + 1) % tcfg.checkpoint_every == 0 && iter + 1 < tcfg.total_iters) {
      char name[64];
      std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", iter + 1);
      save_checkpoint((fs::path(tcfg.out_dir) / name).string(), net.params(),
                      checkpoint_meta(mcfg, tcfg, n_classes, data.root, iter + 1));
    }
  }

  result.checkpoint_path = (fs::path(tcfg.out_dir) / "checkpoint_final.ckpt").string();
  save_checkpoint(result.checkpoint_path, net.params(),
                  checkpoint_meta(mcfg, tcfg, n_classes, data.root, tcfg.total_iters));
  return result;
}

LabelMap segment_pair(StereoSpixelNet& net, const StereoPair& pair, const SegmentOptions& opt) {
  NoGradGuard ng;
  const int h = pair.h(), w = pair.w();
  ClusterConfig cc = make_cluster_config(opt.n_spixels, h, w, opt.cluster_iters);
  CellGrid grid = make_cell_grid(h, w, cc);
  const real beta = opt.scale_input ? input_scale(opt.eta, cc, h, w) : 1.0;

  Tensor left_in({1, 3, h, w}), right_in({1, 3, h, w});
  for (std::int64_t k = 0; k < pair.left.size(); ++k) {
    left_in[k] = pair.left[k] * beta;
    right_in[k] = pair.right[k] * beta;
  }
  NetForward fwd = net.forward(constant(left_in), constant(right_in), false);
  Var emb = reshape(fwd.embed_left, {fwd.embed_left->value.dim(1), h, w});
  Var centers = init_centers(emb, grid);
  ClusterResult cl = cluster_iterate(emb, centers, grid, opt.cluster_iters);
  LabelMap labels = hard_assign(cl.q->value, grid);
  if (opt.connectivity) labels = enforce_connectivity(labels, grid.n_cells());
  return labels;
}

std::unique_ptr<StereoSpixelNet> load_model(const std::string& checkpoint_path,
                                            std::string* meta_json) {
  LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
  nlohmann::json meta = nlohmann::json::parse(ckpt.meta_json);
  if (!meta.contains("model")) throw IoError("checkpoint lacks a model config: " + checkpoint_path);
  ModelConfig mcfg = ModelConfig::from_json(meta["model"].dump());
  auto net = std::make_unique<StereoSpixelNet>(mcfg);
  restore_into(ckpt, net->params());
  if (meta_json) *meta_json = ckpt.meta_json;
  return net;
}

real mean_asa_over(StereoSpixelNet& net, const DatasetLayout& data,
                   const std::vector<std::string>& ids, const SegmentOptions& opt) {
  if (ids.empty()) throw ValidationError("no ids to evaluate");
  real acc = 0;
  for (const auto& id : ids) {
    StereoPair pair = load_pair(data, id, true);
    LabelMap pred = segment_pair(net, pair, opt);
    acc += asa(pred, pair.label);
  }
  return acc / (real)ids.size();
}

}  // namespace sspix
