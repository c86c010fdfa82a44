#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "chart.hpp"
#include "sspix/checkpoint.hpp"
#include "sspix/dataset.hpp"
#include "sspix/feature_dump.hpp"
#include "sspix/image.hpp"
#include "sspix/losses.hpp"
#include "sspix/manifest.hpp"
#include "sspix/metrics.hpp"
#include "sspix/network.hpp"
#include "sspix/png_io.hpp"
#include "sspix/sod.hpp"
#include "sspix/soft_cluster.hpp"
#include "sspix/synth.hpp"
#include "sspix/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sspix;

namespace {

std::string join_args(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

json load_config_arg(int argc, char** argv) {
  std::string path;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--config" && i + 1 < argc)
      path = argv[i + 1];
    else if (a.rfind("--config=", 0) == 0)
      path = a.substr(9);
  }
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw IoError("config file not found: " + path);
  json j;
  in >> j;
  if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
  return j;
}

template <class T>
void cfg_seed(const json& j, const char* key, T& var) {
  if (j.contains(key)) var = j.at(key).get<T>();
}

std::vector<std::string> list_output_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    if (e.path().filename() == "manifest.json") continue;
    out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> ids_for_split(const DatasetLayout& data, const std::string& split) {
  if (split == "train") return data.train_ids;
  if (split == "val") return data.val_ids;
  if (split == "all") {
    std::vector<std::string> ids = data.train_ids;
    ids.insert(ids.end(), data.val_ids.begin(), data.val_ids.end());
    return ids;
  }
  throw ValidationError("unknown split: " + split + " (use train|val|all)");
}

std::vector<int> parse_counts(const std::string& text) {
  std::vector<int> counts;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',') {
      if (!cur.empty()) counts.push_back(std::stoi(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (counts.empty()) throw ValidationError("empty superpixel count list");
  return counts;
}

StereoPair pair_from_files(const std::string& left, const std::string& right, Tensor* rgb_left) {
  Tensor rl = image_to_tensor(read_png_rgb8(left));
  Tensor rr = image_to_tensor(read_png_rgb8(right));
  if (rgb_left) *rgb_left = rl;
  StereoPair pair;
  pair.left = rgb_to_lab(rl);
  pair.right = rgb_to_lab(rr);
  pair.id = fs::path(left).stem().string();
  return validate_pair(pair), pair;
}

void write_gray_png(const std::string& path, const Tensor& hw, real lo, real hi) {
  const int h = hw.dim(0), w = hw.dim(1);
  std::vector<std::uint8_t> g((size_t)h * w);
  const real span = hi > lo ? hi - lo : 1.0;
  for (std::int64_t i = 0; i < hw.size(); ++i) {
    real v = (hw[i] - lo) / span;
    g[(size_t)i] = (std::uint8_t)std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  }
  write_png_gray8(path, g, h, w);
}

Tensor slice2d(const Tensor& t, std::int64_t offset, int h, int w) {
  Tensor out({h, w});
  std::copy(t.data() + offset, t.data() + offset + (std::int64_t)h * w, out.data());
  return out;
}

// ---- subcommand option bags -------------------------------------------------

struct SynthOpts {
  std::string out;
  int n = 64;
  std::string size = "64x64";
  int disparity = 8;
  std::uint64_t seed = 1;
  bool centered_object = false;
  real val_fraction = 0.25;
};

struct TrainOpts {
  std::string data, out;
  std::string ablation = "B0";
  int spixels = 100;
  int iters = 20000;
  int batch = 8;
  int crop = 200;
  std::uint64_t seed = 0;
  int channels = 64;
  int kernel = 3;
  real tau = 0.1;
  real lr0 = 2e-4;
  real lambda = 1.0;
  real eta = 2.5;
  int cluster_iters = 5;
  int checkpoint_every = 2000;
  bool scale_input = true;
};

struct SegmentOpts {
  std::string checkpoint, out;
  std::string left, right;  // pair mode
  std::string data, split = "val";  // dataset mode
  int spixels = 100;
  int cluster_iters = 10;
  bool connectivity = true;
  bool overlays = true;
};

struct EvalOpts {
  std::string pred, gt;
  std::string checkpoint, data, split = "val", counts = "64";
  int r = -1;
  std::string out = "results.csv";
};

struct PlotOpts {
  std::string in, out;
};

struct SodOpts {
  std::string checkpoint, data, out, split = "val";
  int spixels = 100;
  real sigma_clr = 10.0;
  real sigma_spa = 0.25;
};

struct DumpOpts {
  std::string checkpoint, out;
  std::string data, id;
  std::string left, right;
};

// ---- subcommand bodies ------------------------------------------------------

int run_synth(const SynthOpts& o, const std::string& cmdline) {
  SynthConfig cfg;
  cfg.n = o.n;
  if (std::sscanf(o.size.c_str(), "%dx%d", &cfg.h, &cfg.w) != 2)
    throw ValidationError("--size expects HxW, got " + o.size);
  cfg.max_disparity = o.disparity;
  cfg.seed = o.seed;
  cfg.centered_object = o.centered_object;
  cfg.val_fraction = o.val_fraction;
  DatasetLayout data = make_synthetic(cfg, o.out);
  std::printf("synth: %d scenes (%d train / %d val) in %s\n", cfg.n, (int)data.train_ids.size(),
              (int)data.val_ids.size(), o.out.c_str());
  json rc{{"n", cfg.n},
          {"size", o.size},
          {"disparity", cfg.max_disparity},
          {"seed", cfg.seed},
          {"centered_object", cfg.centered_object},
          {"val_fraction", cfg.val_fraction},
          {"out", o.out}};
  write_manifest(o.out, cmdline, rc, list_output_files(o.out));
  return 0;
}

int run_train(const TrainOpts& o, const std::string& cmdline) {
  if (o.data.empty() || o.out.empty()) throw ValidationError("train needs --data and --out");
  ModelConfig mcfg;
  mcfg.channels = o.channels;
  mcfg.kernel = o.kernel;
  mcfg.tau = o.tau;
  mcfg.ablation = AblationFlags::preset(o.ablation);
  mcfg.init_seed = o.seed;

  TrainConfig tcfg;
  tcfg.batch_size = o.batch;
  tcfg.total_iters = o.iters;
  tcfg.lr0 = o.lr0;
  tcfg.crop = o.crop;
  tcfg.eta = o.eta;
  tcfg.scale_input = o.scale_input;
  tcfg.n_spixels = o.spixels;
  tcfg.cluster_iters = o.cluster_iters;
  tcfg.lambda_stereo = o.lambda;
  tcfg.seed = o.seed;
  tcfg.checkpoint_every = o.checkpoint_every;
  tcfg.out_dir = o.out;

  DatasetLayout data = open_dataset(o.data);
  TrainResult res = train_model(mcfg, tcfg, data);
  std::printf("train: %d iters, final loss %.6g, checkpoint %s\n", tcfg.total_iters,
              res.loss_final, res.checkpoint_path.c_str());
  json rc{{"model", json::parse(mcfg.to_json())}, {"train", tcfg.to_json()}, {"data", o.data},
          {"seed", o.seed}};
  write_manifest(o.out, cmdline, rc, list_output_files(o.out));
  return 0;
}

int run_segment(const SegmentOpts& o, const std::string& cmdline) {
  if (o.checkpoint.empty() || o.out.empty())
    throw ValidationError("segment needs --checkpoint and --out");
  const bool pair_mode = !o.left.empty() || !o.right.empty();
  if (pair_mode && (o.left.empty() || o.right.empty()))
    throw ValidationError("segment pair mode needs both --left and --right");
  if (!pair_mode && o.data.empty())
    throw ValidationError("segment needs either --left/--right or --data");

  std::unique_ptr<StereoSpixelNet> net = load_model(o.checkpoint);
  SegmentOptions opt;
  opt.n_spixels = o.spixels;
  opt.cluster_iters = o.cluster_iters;
  opt.connectivity = o.connectivity;
  fs::create_directories(o.out);

  if (pair_mode) {
    Tensor rgb_left;
    StereoPair pair = pair_from_files(o.left, o.right, &rgb_left);
    Tensor rgb_right = lab_to_rgb(pair.right);
    LabelMap ll = segment_pair(*net, pair, opt);
    StereoPair swapped;
    swapped.left = pair.right;
    swapped.right = pair.left;
    swapped.id = pair.id;
    LabelMap lr = segment_pair(*net, swapped, opt);
    write_png_label16((fs::path(o.out) / "left_labels.png").string(), ll);
    write_png_label16((fs::path(o.out) / "right_labels.png").string(), lr);
    write_png_rgb8((fs::path(o.out) / "left_overlay.png").string(),
                   boundary_overlay(rgb_left, ll));
    write_png_rgb8((fs::path(o.out) / "right_overlay.png").string(),
                   boundary_overlay(rgb_right, lr));
  } else {
    DatasetLayout data = open_dataset(o.data);
    std::vector<std::string> ids = ids_for_split(data, o.split);
    if (o.overlays) fs::create_directories(fs::path(o.out) / "overlays");
    for (const auto& id : ids) {
      StereoPair pair = load_pair(data, id, false);
      LabelMap labels = segment_pair(*net, pair, opt);
      write_png_label16((fs::path(o.out) / (id + ".png")).string(), labels);
      if (o.overlays)
        write_png_rgb8((fs::path(o.out) / "overlays" / (id + ".png")).string(),
                       boundary_overlay(lab_to_rgb(pair.left), labels));
    }
    std::printf("segment: %d label maps in %s\n", (int)ids.size(), o.out.c_str());
  }
  json rc{{"checkpoint", o.checkpoint}, {"spixels", o.spixels},
          {"cluster_iters", o.cluster_iters}, {"connectivity", o.connectivity},
          {"out", o.out}};
  if (pair_mode) {
    rc["left"] = o.left;
    rc["right"] = o.right;
  } else {
    rc["data"] = o.data;
    rc["split"] = o.split;
  }
  write_manifest(o.out, cmdline, rc, list_output_files(o.out));
  return 0;
}

int run_eval(const EvalOpts& o, const std::string& cmdline) {
  const bool sweep = !o.checkpoint.empty();
  fs::path out_path(o.out);
  fs::path out_dir = out_path.has_parent_path() ? out_path.parent_path() : fs::path(".");
  fs::create_directories(out_dir);

  json rc{{"r", o.r}, {"out", o.out}};
  std::vector<std::string> artifacts;
  if (sweep) {
    if (o.data.empty()) throw ValidationError("eval sweep mode needs --data");
    std::unique_ptr<StereoSpixelNet> net = load_model(o.checkpoint);
    DatasetLayout data = open_dataset(o.data);
    std::vector<std::string> ids = ids_for_split(data, o.split);
    if (ids.empty()) throw ValidationError("empty split: " + o.split);
    std::vector<int> counts = parse_counts(o.counts);

    FILE* f = std::fopen(o.out.c_str(), "wb");
    if (!f) throw IoError("cannot write " + o.out);
    std::fprintf(f, "n_spixels,asa,ue,br\n");
    std::vector<real> xs, mean_asa, mean_ue, mean_br;
    for (int m : counts) {
      SegmentOptions opt;
      opt.n_spixels = m;
      real sa = 0, su = 0, sb = 0;
      for (const auto& id : ids) {
        StereoPair pair = load_pair(data, id, true);
        LabelMap pred = segment_pair(*net, pair, opt);
        int radius = o.r >= 0 ? o.r : default_br_radius(pair.h(), pair.w());
        sa += asa(pred, pair.label);
        su += ue(pred, pair.label);
        sb += br(pred, pair.label, radius);
      }
      const real n = (real)ids.size();
      std::fprintf(f, "%d,%.12g,%.12g,%.12g\n", m, sa / n, su / n, sb / n);
      xs.push_back(m);
      mean_asa.push_back(sa / n);
      mean_ue.push_back(su / n);
      mean_br.push_back(sb / n);
      std::printf("eval: %d superpixels: asa %.4f ue %.4f br %.4f\n", m, sa / n, su / n, sb / n);
    }
    std::fclose(f);
    artifacts.push_back(o.out);
    const char* names[3] = {"asa", "ue", "br"};
    const std::vector<real>* series[3] = {&mean_asa, &mean_ue, &mean_br};
    for (int i = 0; i < 3; ++i) {
      std::string p = (out_dir / (std::string(names[i]) + ".png")).string();
      render_line_chart(p, xs, *series[i]);
      artifacts.push_back(p);
    }
    rc["checkpoint"] = o.checkpoint;
    rc["data"] = o.data;
    rc["split"] = o.split;
    rc["counts"] = o.counts;
  } else {
    if (o.pred.empty() || o.gt.empty())
      throw ValidationError("eval needs --pred and --gt (or --checkpoint for a sweep)");
    EvalSummary summary = evaluate_label_dirs(o.pred, o.gt, o.r);
    for (const auto& id : summary.skipped)
      std::fprintf(stderr, "warning: missing prediction for %s, skipped\n", id.c_str());
    if (summary.rows.empty()) throw ValidationError("no prediction/ground-truth pairs evaluated");
    write_eval_csv(o.out, summary);
    artifacts.push_back(o.out);
    std::printf("eval: %d images: asa %.4f ue %.4f br %.4f\n", (int)summary.rows.size(),
                summary.mean_asa, summary.mean_ue, summary.mean_br);
    rc["pred"] = o.pred;
    rc["gt"] = o.gt;
  }
  write_manifest(out_dir.string(), cmdline, rc, artifacts);
  return 0;
}

int run_plot(const PlotOpts& o, const std::string& cmdline) {
  if (o.in.empty() || o.out.empty()) throw ValidationError("plot needs --in and --out");
  std::ifstream in(o.in);
  if (!in) throw IoError("cannot read " + o.in);
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("empty CSV: " + o.in);
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : s + ",") {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur += c;
      }
    }
    return cells;
  };
  std::vector<std::string> header = split(line);
  if (header.size() < 2) throw ValidationError("CSV needs at least two columns");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split(line);
    if (cells.size() != header.size())
      throw ValidationError("ragged CSV row in " + o.in);
    if (cells[0] == "mean") continue;
    rows.push_back(cells);
  }
  if (rows.empty()) throw ValidationError("CSV has no data rows");

  auto numeric = [](const std::string& s, real& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end && *end == '\0';
  };

  std::vector<real> xs(rows.size());
  bool x_numeric = true;
  for (size_t i = 0; i < rows.size(); ++i)
    if (!numeric(rows[i][0], xs[i])) {
      x_numeric = false;
      break;
    }
  if (!x_numeric)
    for (size_t i = 0; i < rows.size(); ++i) xs[i] = (real)i;

  fs::create_directories(o.out);
  std::vector<std::string> artifacts;
  for (size_t j = 1; j < header.size(); ++j) {
    std::vector<real> px, py;
    for (size_t i = 0; i < rows.size(); ++i) {
      real v;
      if (numeric(rows[i][j], v)) {
        px.push_back(xs[i]);
        py.push_back(v);
      }
    }
    if (px.empty()) continue;
    std::string p = (fs::path(o.out) / (header[j] + ".png")).string();
    render_line_chart(p, px, py);
    artifacts.push_back(p);
  }
  if (artifacts.empty()) throw ValidationError("no numeric columns to plot in " + o.in);
  std::printf("plot: %d charts in %s\n", (int)artifacts.size(), o.out.c_str());
  write_manifest(o.out, cmdline, json{{"in", o.in}, {"out", o.out}}, artifacts);
  return 0;
}

int run_sod(const SodOpts& o, const std::string& cmdline) {
  if (o.checkpoint.empty() || o.data.empty() || o.out.empty())
    throw ValidationError("sod needs --checkpoint, --data and --out");
  std::unique_ptr<StereoSpixelNet> net = load_model(o.checkpoint);
  DatasetLayout data = open_dataset(o.data);
  std::vector<std::string> ids = ids_for_split(data, o.split);
  if (ids.empty()) throw ValidationError("empty split: " + o.split);
  fs::create_directories(o.out);

  SegmentOptions seg;
  seg.n_spixels = o.spixels;
  SodConfig scfg;
  scfg.sigma_clr = o.sigma_clr;
  scfg.sigma_spa_frac = o.sigma_spa;

  FILE* f = std::fopen((fs::path(o.out) / "mae.csv").string().c_str(), "wb");
  if (!f) throw IoError("cannot write mae.csv in " + o.out);
  std::fprintf(f, "id,mae\n");
  real mae_acc = 0;
  int mae_n = 0;
  for (const auto& id : ids) {
    StereoPair pair = load_pair(data, id, false);
    LabelMap labels = segment_pair(*net, pair, seg);
    SuperpixelGraph graph = build_superpixel_graph(pair.left, labels);
    std::vector<real> sal = saliency_map(graph, saliency_scores(graph, scfg));

    const int h = pair.h(), w = pair.w();
    std::vector<std::uint8_t> gray((size_t)h * w);
    for (size_t i = 0; i < gray.size(); ++i)
      gray[i] = (std::uint8_t)std::lround(std::clamp(sal[i], 0.0, 1.0) * 255.0);
    write_png_gray8((fs::path(o.out) / (id + ".png")).string(), gray, h, w);

    if (fs::exists(data.sod_gt_path(id))) {
      real m = mae(sal, mask_to_real(load_sod_gt(data, id)));
      std::fprintf(f, "%s,%.12g\n", id.c_str(), m);
      mae_acc += m;
      mae_n++;
    }
  }
  if (mae_n > 0) std::fprintf(f, "mean,%.12g\n", mae_acc / mae_n);
  std::fclose(f);
  if (mae_n > 0) std::printf("sod: mean mae %.4f over %d scenes\n", mae_acc / mae_n, mae_n);
  json rc{{"checkpoint", o.checkpoint}, {"data", o.data},    {"split", o.split},
          {"spixels", o.spixels},       {"sigma_clr", o.sigma_clr},
          {"sigma_spa", o.sigma_spa},   {"out", o.out}};
  write_manifest(o.out, cmdline, rc, list_output_files(o.out));
  return 0;
}

int run_dump(const DumpOpts& o, const std::string& cmdline) {
  if (o.checkpoint.empty() || o.out.empty())
    throw ValidationError("dump-debug needs --checkpoint and --out");
  StereoPair pair;
  if (!o.left.empty() && !o.right.empty()) {
    pair = pair_from_files(o.left, o.right, nullptr);
  } else if (!o.data.empty() && !o.id.empty()) {
    pair = load_pair(open_dataset(o.data), o.id, false);
  } else {
    throw ValidationError("dump-debug needs --left/--right or --data/--id");
  }
  std::unique_ptr<StereoSpixelNet> net = load_model(o.checkpoint);
  fs::create_directories(o.out);

  NoGradGuard ng;
  const int h = pair.h(), w = pair.w();
  Tensor left_in({1, 3, h, w}), right_in({1, 3, h, w});
  for (std::int64_t k = 0; k < pair.left.size(); ++k) {
    left_in[k] = pair.left[k];
    right_in[k] = pair.right[k];
  }
  NetForward fwd = net->forward(constant(left_in), constant(right_in), false);

  const Tensor& emb = fwd.embed_left->value;  // (1,C,H,W)
  Tensor emb_chw({emb.dim(1), h, w});
  std::copy(emb.data(), emb.data() + emb.size(), emb_chw.data());
  write_feature_dump((fs::path(o.out) / "embed_left.fmp").string(), emb_chw);

  if (fwd.has_stereo) {
    auto dump_attention = [&](const Tensor& m, const std::string& stem) {
      Tensor rows({h, w, w});  // per-row W x W maps stacked as channels
      std::copy(m.data(), m.data() + rows.size(), rows.data());
      write_feature_dump((fs::path(o.out) / (stem + ".fmp")).string(), rows);
      const int y = h / 2;
      Tensor mid = slice2d(m, (std::int64_t)y * w * w, w, w);
      write_gray_png((fs::path(o.out) / (stem + "_midrow.png")).string(), mid, 0.0,
                     mid.max_abs() > 0 ? mid.max_abs() : 1.0);
    };
    dump_attention(fwd.attn.m_r2l->value, "attn_r2l");
    dump_attention(fwd.attn.m_l2r->value, "attn_l2r");

    auto dump_mask = [&](const Tensor& m, const std::string& stem) {
      Tensor hw = slice2d(m, 0, h, w);
      Tensor chw({1, h, w});
      std::copy(hw.data(), hw.data() + hw.size(), chw.data());
      write_feature_dump((fs::path(o.out) / (stem + ".fmp")).string(), chw);
      write_gray_png((fs::path(o.out) / (stem + ".png")).string(), hw, 0.0, 1.0);
    };
    dump_mask(fwd.mask.o_l2r, "o_l2r");
    dump_mask(fwd.mask.o_r2l, "o_r2l");
  }
  std::printf("dump-debug: wrote %s\n", o.out.c_str());
  json rc{{"checkpoint", o.checkpoint}, {"out", o.out}};
  if (!o.left.empty()) {
    rc["left"] = o.left;
    rc["right"] = o.right;
  } else {
    rc["data"] = o.data;
    rc["id"] = o.id;
  }
  write_manifest(o.out, cmdline, rc, list_output_files(o.out));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stereo superpixel segmentation toolkit"};
  app.require_subcommand(1);
  std::string cmdline = join_args(argc, argv);

  SynthOpts so;
  TrainOpts to;
  SegmentOpts go;
  EvalOpts eo;
  PlotOpts po;
  SodOpts do_;
  DumpOpts du;
  std::string config_path;  // consumed via load_config_arg, declared for --help
  int rc = 0;

  try {
    const json cfg = load_config_arg(argc, argv);
    cfg_seed(cfg, "n", so.n);
    cfg_seed(cfg, "size", so.size);
    cfg_seed(cfg, "disparity", so.disparity);
    cfg_seed(cfg, "centered_object", so.centered_object);
    cfg_seed(cfg, "val_fraction", so.val_fraction);
    cfg_seed(cfg, "ablation", to.ablation);
    cfg_seed(cfg, "spixels", to.spixels);
    cfg_seed(cfg, "iters", to.iters);
    cfg_seed(cfg, "batch", to.batch);
    cfg_seed(cfg, "crop", to.crop);
    cfg_seed(cfg, "channels", to.channels);
    cfg_seed(cfg, "kernel", to.kernel);
    cfg_seed(cfg, "tau", to.tau);
    cfg_seed(cfg, "lr0", to.lr0);
    cfg_seed(cfg, "lambda", to.lambda);
    cfg_seed(cfg, "eta", to.eta);
    cfg_seed(cfg, "cluster_iters", to.cluster_iters);
    cfg_seed(cfg, "checkpoint_every", to.checkpoint_every);
    cfg_seed(cfg, "scale_input", to.scale_input);
    cfg_seed(cfg, "spixels", go.spixels);
    cfg_seed(cfg, "cluster_iters", go.cluster_iters);
    cfg_seed(cfg, "connectivity", go.connectivity);
    cfg_seed(cfg, "split", go.split);
    cfg_seed(cfg, "r", eo.r);
    cfg_seed(cfg, "counts", eo.counts);
    cfg_seed(cfg, "split", eo.split);
    cfg_seed(cfg, "spixels", do_.spixels);
    cfg_seed(cfg, "split", do_.split);
    cfg_seed(cfg, "sigma_clr", do_.sigma_clr);
    cfg_seed(cfg, "sigma_spa", do_.sigma_spa);
    {
      std::uint64_t s;
      if (cfg.contains("seed")) {
        s = cfg.at("seed").get<std::uint64_t>();
        so.seed = s;
        to.seed = s;
      }
    }

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic stereo dataset");
    synth->add_option("--out", so.out, "output dataset root")->required();
    synth->add_option("--n", so.n, "number of scenes");
    synth->add_option("--size", so.size, "scene size HxW");
    synth->add_option("--disparity", so.disparity, "maximum disparity");
    synth->add_option("--seed", so.seed, "rng seed");
    synth->add_flag("--centered-object", so.centered_object, "single salient object per scene");
    synth->add_option("--val-fraction", so.val_fraction, "validation fraction");
    synth->add_option("--config", config_path, "JSON config file");

    CLI::App* train = app.add_subcommand("train", "train a segmentation network");
    train->add_option("--data", to.data, "dataset root")->required();
    train->add_option("--out", to.out, "run output directory")->required();
    train->add_option("--ablation", to.ablation, "B0..B6");
    train->add_option("--spixels", to.spixels, "superpixel count during training");
    train->add_option("--iters", to.iters, "total iterations");
    train->add_option("--batch", to.batch, "batch size");
    train->add_option("--crop", to.crop, "square crop size");
    train->add_option("--seed", to.seed, "rng seed");
    train->add_option("--channels", to.channels, "feature channels");
    train->add_option("--kernel", to.kernel, "conv kernel size");
    train->add_option("--tau", to.tau, "valid-mask threshold");
    train->add_option("--lr0", to.lr0, "initial learning rate");
    train->add_option("--lambda", to.lambda, "stereo loss weight");
    train->add_option("--eta", to.eta, "input scale multiplier");
    train->add_option("--cluster-iters", to.cluster_iters, "soft clustering rounds");
    train->add_option("--checkpoint-every", to.checkpoint_every, "checkpoint period");
    bool no_scale = false;
    train->add_flag("--no-scale-input", no_scale, "feed unscaled Lab");
    train->add_option("--config", config_path, "JSON config file");

    CLI::App* seg = app.add_subcommand("segment", "superpixel segmentation inference");
    seg->add_option("--checkpoint", go.checkpoint, "trained checkpoint")->required();
    seg->add_option("--out", go.out, "output directory")->required();
    seg->add_option("--left", go.left, "left image (pair mode)");
    seg->add_option("--right", go.right, "right image (pair mode)");
    seg->add_option("--data", go.data, "dataset root (dataset mode)");
    seg->add_option("--split", go.split, "train|val|all");
    seg->add_option("--spixels", go.spixels, "superpixel count");
    seg->add_option("--cluster-iters", go.cluster_iters, "soft clustering rounds");
    bool no_conn = false, no_overlays = false;
    seg->add_flag("--no-connectivity", no_conn, "skip connectivity cleanup");
    seg->add_flag("--no-overlays", no_overlays, "skip boundary overlays");
    seg->add_option("--config", config_path, "JSON config file");

    CLI::App* ev = app.add_subcommand("eval", "metric evaluation / checkpoint sweep");
    ev->add_option("--pred", eo.pred, "prediction label directory");
    ev->add_option("--gt", eo.gt, "ground truth label directory");
    ev->add_option("--checkpoint", eo.checkpoint, "checkpoint (sweep mode)");
    ev->add_option("--data", eo.data, "dataset root (sweep mode)");
    ev->add_option("--split", eo.split, "train|val|all");
    ev->add_option("--counts", eo.counts, "comma-separated superpixel counts");
    ev->add_option("--r", eo.r, "boundary recall radius (-1 = auto)");
    ev->add_option("--out", eo.out, "output CSV path");
    ev->add_option("--config", config_path, "JSON config file");

    CLI::App* plot = app.add_subcommand("plot", "render CSV metric columns as charts");
    plot->add_option("--in", po.in, "input CSV")->required();
    plot->add_option("--out", po.out, "output directory")->required();
    plot->add_option("--config", config_path, "JSON config file");

    CLI::App* sod = app.add_subcommand("sod", "salient object detection over superpixels");
    sod->add_option("--checkpoint", do_.checkpoint, "trained checkpoint")->required();
    sod->add_option("--data", do_.data, "dataset root")->required();
    sod->add_option("--out", do_.out, "output directory")->required();
    sod->add_option("--split", do_.split, "train|val|all");
    sod->add_option("--spixels", do_.spixels, "superpixel count");
    sod->add_option("--sigma-clr", do_.sigma_clr, "geodesic color sigma");
    sod->add_option("--sigma-spa", do_.sigma_spa, "spatial sigma (diagonal fraction)");
    sod->add_option("--config", config_path, "JSON config file");

    CLI::App* dump = app.add_subcommand("dump-debug", "dump features, attention and masks");
    dump->add_option("--checkpoint", du.checkpoint, "trained checkpoint")->required();
    dump->add_option("--out", du.out, "output directory")->required();
    dump->add_option("--data", du.data, "dataset root");
    dump->add_option("--id", du.id, "sample id");
    dump->add_option("--left", du.left, "left image");
    dump->add_option("--right", du.right, "right image");
    dump->add_option("--config", config_path, "JSON config file");

    app.parse(argc, argv);

    if (no_scale) to.scale_input = false;
    if (no_conn) go.connectivity = false;
    if (no_overlays) go.overlays = false;

    if (synth->parsed()) rc = run_synth(so, cmdline);
    if (train->parsed()) rc = run_train(to, cmdline);
    if (seg->parsed()) rc = run_segment(go, cmdline);
    if (ev->parsed()) rc = run_eval(eo, cmdline);
    if (plot->parsed()) rc = run_plot(po, cmdline);
    if (sod->parsed()) rc = run_sod(do_, cmdline);
    if (dump->parsed()) rc = run_dump(du, cmdline);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    std::fprintf(stderr, "%s\n", app.help().c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
