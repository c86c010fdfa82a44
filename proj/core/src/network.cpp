#include "sspix/network.hpp"

#include <stdexcept>

#include <json.hpp>

namespace sspix {

namespace {

ExtractorConfig extractor_config(const ModelConfig& cfg) {
  ExtractorConfig ec;
  ec.in_channels = cfg.ablation.xy_input ? 5 : 3;
  ec.channels = cfg.channels;
  ec.kernel = cfg.kernel;
  return ec;
}

FeatureExtractor build_extractor(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  return FeatureExtractor(store, extractor_config(cfg), rng);
}

}  // namespace

void AblationFlags::validate() const {
  if (oh && !sfa) throw std::invalid_argument("ablation: occlusion handling requires SFA");
  if (use_stereo_loss && !sfa)
    throw std::invalid_argument("ablation: stereo loss requires SFA attention maps");
  if (xy_input && (se || df))
    throw std::invalid_argument("ablation: XY input excludes the embedding modules");
}

std::string AblationFlags::name() const {
  const AblationFlags presets[] = {preset("B0"), preset("B1"), preset("B2"), preset("B3"),
                                   preset("B4"), preset("B5"), preset("B6")};
  for (int i = 0; i < 7; ++i) {
    const auto& p = presets[i];
    if (p.sfa == sfa && p.oh == oh && p.se == se && p.df == df &&
        p.use_stereo_loss == use_stereo_loss && p.xy_input == xy_input)
      return "B" + std::to_string(i);
  }
  return "custom";
}

AblationFlags AblationFlags::preset(const std::string& id) {
  AblationFlags f;  // B0
  if (id == "B0") return f;
  if (id == "B1") {
    f.se = f.df = false;
    return f;
  }
  if (id == "B2") {
    f.se = f.df = false;
    f.xy_input = true;
    return f;
  }
  if (id == "B3") {
    f.df = false;
    return f;
  }
  if (id == "B4") {
    f.sfa = f.oh = f.use_stereo_loss = false;
    return f;
  }
  if (id == "B5") {
    f.oh = false;
    return f;
  }
  if (id == "B6") {
    f.use_stereo_loss = false;
    return f;
  }
  throw std::invalid_argument("unknown ablation preset: " + id);
}

std::string ModelConfig::to_json() const {
  nlohmann::json j;
  j["channels"] = channels;
  j["kernel"] = kernel;
  j["tau"] = tau;
  j["init_seed"] = init_seed;
  j["ablation"] = {{"sfa", ablation.sfa},   {"oh", ablation.oh},
                   {"se", ablation.se},     {"df", ablation.df},
                   {"stereo_loss", ablation.use_stereo_loss},
                   {"xy_input", ablation.xy_input}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  ModelConfig cfg;
  cfg.channels = j.at("channels").get<int>();
  cfg.kernel = j.at("kernel").get<int>();
  cfg.tau = j.at("tau").get<real>();
  cfg.init_seed = j.at("init_seed").get<std::uint64_t>();
  const auto& a = j.at("ablation");
  cfg.ablation.sfa = a.at("sfa").get<bool>();
  cfg.ablation.oh = a.at("oh").get<bool>();
  cfg.ablation.se = a.at("se").get<bool>();
  cfg.ablation.df = a.at("df").get<bool>();
  cfg.ablation.use_stereo_loss = a.at("stereo_loss").get<bool>();
  cfg.ablation.xy_input = a.at("xy_input").get<bool>();
  return cfg;
}

StereoSpixelNet::StereoSpixelNet(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.ablation.validate();
  Rng rng(cfg_.init_seed);
  extractor_ = build_extractor(store_, cfg_, rng);
  if (cfg_.ablation.sfa) dsfm_ = Dsfm(store_, cfg_.channels, rng, cfg_.tau);
  dsem_ = Dsem(store_, cfg_.channels, rng, cfg_.ablation.se, cfg_.ablation.df);
}

namespace {

Var append_coords(Var x) {
  const int h = x->value.dim(2), w = x->value.dim(3);
  const SpatialGrids g = normalize_coords(h, w);
  const int n = x->value.dim(0);
  Tensor planes = Tensor::zeros({n, 2, h, w});
  const std::int64_t hw = static_cast<std::int64_t>(h) * w;
  for (int b = 0; b < n; ++b)
    for (std::int64_t p = 0; p < hw; ++p) {
      planes[(static_cast<std::int64_t>(b) * 2) * hw + p] = g.x_hat[p];
      planes[(static_cast<std::int64_t>(b) * 2 + 1) * hw + p] = g.y_hat[p];
    }
  return concat_channels({x, constant(planes)});
}

}  // namespace

NetForward StereoSpixelNet::forward(Var left, Var right, bool training) {
  NetForward out;
  Var l = cfg_.ablation.xy_input ? append_coords(left) : left;
  if (cfg_.ablation.sfa) {
    Var r = cfg_.ablation.xy_input ? append_coords(right) : right;
    auto [fl, fr] = extractor_.forward_pair(l, r, training);
    auto fused = dsfm_.forward(fl, fr, training, cfg_.ablation.oh);
    out.embed_left = dsem_.forward(fused.left, training);
    out.attn = fused.attn;
    out.mask = fused.mask;
    out.has_stereo = true;
  } else {
    out.embed_left = dsem_.forward(extractor_.forward(l, training), training);
  }
  return out;
}

NetForward StereoSpixelNet::forward(const Tensor& left, const Tensor& right, bool training) {
  return forward(constant(left), constant(right), training);
}

}  // namespace sspix
