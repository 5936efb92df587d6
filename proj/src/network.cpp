#include "rfbtd/network.hpp"

#include <algorithm>
#include <cmath>

#include "rfbtd/errors.hpp"
#include "rfbtd/geometry.hpp"

namespace rfbtd {

using nn::Conv2d;

ModelConfig ModelConfig::resnet50() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny() {
  ModelConfig cfg;
  cfg.stem = StemConfig{8, 8, 2, {1, 1, 1, 1}};
  cfg.decoder_widths = {32, 16, 16};
  cfg.distance_scale = 128.0;
  return cfg;
}

// ---------------------------------------------------------------- Bottleneck

Bottleneck::Bottleneck(const std::string& name, int in, int width, int out, int stride)
    : reduce_(name + ".conv1", in, width, 1, {}),
      conv_(name + ".conv2", width, width, 3, {.stride = stride}),
      expand_(name + ".conv3", width, out, 1, {}) {
  if (in != out || stride != 1)
    project_ = std::make_unique<Conv2d>(name + ".downsample", in, out, 1, Conv2d::Options{.stride = stride});
}

Tensor Bottleneck::forward(const Tensor& x) {
  Tensor t = relu1_.forward(reduce_.forward(x));
  t = relu2_.forward(conv_.forward(t));
  t = expand_.forward(t);
  if (project_) {
    nn::add_inplace(t, project_->forward(x));
  } else {
    nn::add_inplace(t, x);
  }
  return relu_out_.forward(t);
}

Tensor Bottleneck::backward(const Tensor& g) {
  const Tensor gsum = relu_out_.backward(g);
  Tensor gx = reduce_.backward(relu1_.backward(conv_.backward(relu2_.backward(expand_.backward(gsum)))));
  if (project_) {
    nn::add_inplace(gx, project_->backward(gsum));
  } else {
    nn::add_inplace(gx, gsum);
  }
  return gx;
}

void Bottleneck::visit(const nn::ParamVisitor& f) {
  reduce_.visit(f);
  conv_.visit(f);
  expand_.visit(f);
  if (project_) project_->visit(f);
}

void Bottleneck::init(nn::Rng& rng) {
  reduce_.init(rng);
  conv_.init(rng);
  // Residual branch starts as the zero map so every block is initially the
  // (projected) identity.
  expand_.zero_weights();
  if (project_) project_->init(rng, std::sqrt(0.5));
}

std::vector<LayerSpec> Bottleneck::main_path() const { return {reduce_.spec(), conv_.spec(), expand_.spec()}; }

// ------------------------------------------------------------------ Backbone

Backbone::Backbone(const StemConfig& cfg) : stem_("backbone.stem", 3, cfg.stem_width, 7, {.stride = 2}) {
  channels_[0] = cfg.stem_width;
  int in = cfg.stem_width;
  for (std::size_t s = 0; s < 4; ++s) {
    const int width = cfg.base_width << s;
    const int out = width * cfg.expansion;
    for (int b = 0; b < cfg.blocks[s]; ++b) {
      const int stride = (b == 0 && s > 0) ? 2 : 1;
      stages_[s].emplace_back("backbone.layer" + std::to_string(s + 1) + "." + std::to_string(b), in, width, out,
                              stride);
      in = out;
    }
    if (cfg.blocks[s] < 1) throw ConfigError("every residual stage needs at least one block");
    channels_[s + 1] = out;
  }
}

std::vector<FeatureStage> Backbone::forward(const Tensor& image) {
  if (image.h % kInputMultiple != 0 || image.w % kInputMultiple != 0)
    throw ShapeError("backbone input must be padded to a multiple of 32, got " + image.shape_string());
  std::vector<FeatureStage> out;
  out.reserve(5);
  Tensor t = stem_relu_.forward(stem_.forward(image));
  out.push_back({1, 2, t});
  t = pool_.forward(t);
  for (std::size_t s = 0; s < 4; ++s) {
    stage_input_h_[s] = t.h;
    stage_input_w_[s] = t.w;
    for (auto& block : stages_[s]) t = block.forward(t);
    out.push_back({static_cast<int>(s) + 2, 2 << (s + 1), t});
  }
  return out;
}

Tensor Backbone::backward(std::vector<Tensor> grads) {
  grads.resize(5);
  Tensor g = grads[4];
  for (std::size_t s = 4; s-- > 0;) {
    if (g.size() == 0) {
      const int ch = channels_[s + 1];
      const int stride = 2 << (s + 1);
      g = Tensor(ch, stage_input_h_[0] * 4 / stride, stage_input_w_[0] * 4 / stride);
    }
    for (auto it = stages_[s].rbegin(); it != stages_[s].rend(); ++it) g = it->backward(g);
    if (s > 0 && grads[s].size() > 0) nn::add_inplace(g, grads[s]);
  }
  g = pool_.backward(g);
  if (grads[0].size() > 0) nn::add_inplace(g, grads[0]);
  return stem_.backward(stem_relu_.backward(g));
}

void Backbone::visit(const nn::ParamVisitor& f) {
  stem_.visit(f);
  for (auto& stage : stages_)
    for (auto& block : stage) block.visit(f);
}

void Backbone::init(nn::Rng& rng) {
  stem_.init(rng);
  for (auto& stage : stages_)
    for (auto& block : stage) block.init(rng);
}

std::array<std::vector<LayerSpec>, 5> Backbone::stage_paths() const {
  std::array<std::vector<LayerSpec>, 5> paths;
  paths[0] = {stem_.spec()};
  for (std::size_t s = 0; s < 4; ++s) {
    if (s == 0) paths[1].push_back(nn::MaxPool::spec());
    for (const auto& block : stages_[s]) {
      const auto p = block.main_path();
      paths[s + 1].insert(paths[s + 1].end(), p.begin(), p.end());
    }
  }
  return paths;
}

// ------------------------------------------------------------------- RFB

RfbConfig RfbConfig::rfb(int in, int out) {
  RfbConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.bottleneck = std::max(1, in / 4);
  c.branches = {{{}, 1}, {{{3, 3}}, 3}, {{{5, 5}}, 5}};
  return c;
}

RfbConfig RfbConfig::rfb_s(int in, int out) {
  RfbConfig c;
  c.in_channels = in;
  c.out_channels = out;
  c.bottleneck = std::max(1, in / 4);
  c.branches = {{{}, 1}, {{{3, 1}}, 3}, {{{1, 3}}, 3}, {{{3, 3}}, 5}};
  return c;
}

RfbBlock::RfbBlock(const std::string& name, RfbConfig cfg)
    : cfg_(std::move(cfg)),
      project_(name + ".project", static_cast<int>(cfg_.branches.size()) * cfg_.bottleneck, cfg_.out_channels, 1, {}) {
  if (cfg_.in_channels <= 0 || cfg_.out_channels <= 0 || cfg_.bottleneck <= 0 || cfg_.branches.empty())
    throw ConfigError(name + ": invalid RFB configuration");
  const int cb = cfg_.bottleneck;
  for (std::size_t b = 0; b < cfg_.branches.size(); ++b) {
    const std::string bn = name + ".branch" + std::to_string(b);
    const RfbBranch& spec = cfg_.branches[b];
    Branch br{Conv2d(bn + ".reduce", cfg_.in_channels, cb, 1, {}), {}, {}, {},
              Conv2d(bn + ".atrous", cb, cb, 3, {.dilation = spec.dilation})};
    for (std::size_t m = 0; m < spec.mid_kernels.size(); ++m) {
      br.mids.emplace_back(bn + ".mid" + std::to_string(m), cb, cb, spec.mid_kernels[m].first,
                           spec.mid_kernels[m].second, Conv2d::Options{});
      br.mid_relus.emplace_back();
    }
    branches_.push_back(std::move(br));
    branch_channels_.push_back(cb);
  }
  if (cfg_.in_channels != cfg_.out_channels)
    shortcut_ = std::make_unique<Conv2d>(name + ".shortcut", cfg_.in_channels, cfg_.out_channels, 1, Conv2d::Options{});
}

Tensor RfbBlock::forward(const Tensor& x) {
  if (x.c != cfg_.in_channels)
    throw ShapeError("RFB block expects " + std::to_string(cfg_.in_channels) + " channels, got " + std::to_string(x.c));
  Tensor cat(static_cast<int>(branches_.size()) * cfg_.bottleneck, x.h, x.w);
  std::size_t offset = 0;
  for (auto& br : branches_) {
    Tensor t = br.reduce_relu.forward(br.reduce.forward(x));
    for (std::size_t m = 0; m < br.mids.size(); ++m) t = br.mid_relus[m].forward(br.mids[m].forward(t));
    t = br.atrous.forward(t);
    std::copy(t.data.begin(), t.data.end(), cat.data.begin() + static_cast<std::ptrdiff_t>(offset));
    offset += t.size();
  }
  Tensor y = project_.forward(cat);
  if (shortcut_) {
    nn::add_inplace(y, shortcut_->forward(x));
  } else {
    nn::add_inplace(y, x);
  }
  return y;
}

Tensor RfbBlock::backward(const Tensor& g) {
  const Tensor gcat = project_.backward(g);
  Tensor gx = shortcut_ ? shortcut_->backward(g) : g;
  std::size_t offset = 0;
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    auto& br = branches_[b];
    Tensor gb(branch_channels_[b], g.h, g.w);
    std::copy_n(gcat.data.begin() + static_cast<std::ptrdiff_t>(offset), gb.size(), gb.data.begin());
    offset += gb.size();
    Tensor t = br.atrous.backward(gb);
    for (std::size_t m = br.mids.size(); m-- > 0;) t = br.mids[m].backward(br.mid_relus[m].backward(t));
    nn::add_inplace(gx, br.reduce.backward(br.reduce_relu.backward(t)));
  }
  return gx;
}

void RfbBlock::visit(const nn::ParamVisitor& f) {
  for (auto& br : branches_) {
    br.reduce.visit(f);
    for (auto& m : br.mids) m.visit(f);
    br.atrous.visit(f);
  }
  project_.visit(f);
  if (shortcut_) shortcut_->visit(f);
}

void RfbBlock::init(nn::Rng& rng) {
  for (auto& br : branches_) {
    br.reduce.init(rng);
    for (auto& m : br.mids) m.init(rng);
    br.atrous.init(rng);
  }
  project_.init(rng, std::sqrt(0.5));
  if (shortcut_) shortcut_->init(rng, std::sqrt(0.5));
}

void RfbBlock::zero_branches() {
  for (auto& br : branches_) {
    br.reduce.zero_weights();
    for (auto& m : br.mids) m.zero_weights();
    br.atrous.zero_weights();
  }
  project_.zero_weights();
}

std::size_t RfbBlock::parameter_count() {
  std::size_t n = 0;
  visit([&](nn::Param& p) { n += p.size(); });
  return n;
}

std::vector<std::vector<LayerSpec>> RfbBlock::branch_specs() const {
  std::vector<std::vector<LayerSpec>> out;
  for (const auto& br : branches_) {
    std::vector<LayerSpec> path{br.reduce.spec()};
    for (const auto& m : br.mids) path.push_back(m.spec());
    path.push_back(br.atrous.spec());
    out.push_back(std::move(path));
  }
  return out;
}

// ------------------------------------------------------------ FusionDecoder

FusionDecoder::FusionDecoder(const std::array<int, 5>& ch, const std::array<int, 3>& widths)
    : widths_(widths),
      top_("decoder.lateral5", ch[4], widths[0], 1, {}),
      lateral_{Conv2d("decoder.lateral4", ch[3], widths[0], 1, {}), Conv2d("decoder.lateral3", ch[2], widths[1], 1, {}),
               Conv2d("decoder.lateral2", ch[1], widths[2], 1, {})} {
  refine_.emplace_back("decoder.refine4", RfbConfig::rfb_s(widths[0], widths[1]));
  refine_.emplace_back("decoder.refine3", RfbConfig::rfb_s(widths[1], widths[2]));
  refine_.emplace_back("decoder.refine2", RfbConfig::rfb_s(widths[2], widths[2]));
}

Tensor FusionDecoder::forward(const std::vector<FeatureStage>& stages) {
  if (stages.size() != 5) throw ShapeError("fusion expects five feature stages");
  Tensor g = top_.forward(stages[4].grid);
  for (std::size_t s = 0; s < 3; ++s) {
    const Tensor& f = stages[3 - s].grid;
    up_in_h_[s] = g.h;
    up_in_w_[s] = g.w;
    Tensor u = nn::upsample2x(g);
    nn::add_inplace(u, lateral_[s].forward(f));
    g = refine_[s].forward(relu_[s].forward(u));
  }
  return g;
}

std::vector<Tensor> FusionDecoder::backward(const Tensor& grad) {
  std::vector<Tensor> out(5);
  Tensor g = grad;
  for (std::size_t s = 3; s-- > 0;) {
    const Tensor gu = relu_[s].backward(refine_[s].backward(g));
    out[3 - s] = lateral_[s].backward(gu);
    g = nn::upsample2x_backward(gu, up_in_h_[s], up_in_w_[s]);
  }
  out[4] = top_.backward(g);
  return out;
}

void FusionDecoder::visit(const nn::ParamVisitor& f) {
  top_.visit(f);
  for (auto& l : lateral_) l.visit(f);
  for (auto& r : refine_) r.visit(f);
}

void FusionDecoder::init(nn::Rng& rng) {
  top_.init(rng);
  for (auto& l : lateral_) l.init(rng);
  for (auto& r : refine_) r.init(rng);
}

void FusionDecoder::zero_laterals() {
  for (auto& l : lateral_) l.zero_weights();
}

// --------------------------------------------------------------------- Heads

Heads::Heads(int in, double distance_scale)
    : scale_(distance_scale),
      score_("heads.score", in, 1, 1, {}),
      distance_("heads.distance", in, 4, 1, {}),
      angle_("heads.angle", in, 1, 1, {}) {}

namespace {

inline float sigmoid(float z) { return 1.0f / (1.0f + std::exp(-z)); }

}  // namespace

ModelOutput Heads::forward(const Tensor& feature) {
  Tensor s = score_.forward(feature);
  Tensor d = distance_.forward(feature);
  Tensor a = angle_.forward(feature);
  ModelOutput out;
  out.score = Tensor(1, feature.h, feature.w);
  out.geometry = Tensor(5, feature.h, feature.w);
  const std::size_t n = out.score.plane();
  const float scale = static_cast<float>(scale_);
  const float half_pi = static_cast<float>(kPi / 2.0);
  for (std::size_t i = 0; i < n; ++i) out.score.data[i] = sigmoid(s.data[i]);
  for (std::size_t i = 0; i < 4 * n; ++i) out.geometry.data[i] = sigmoid(d.data[i]) * scale;
  for (std::size_t i = 0; i < n; ++i) out.geometry.data[4 * n + i] = (sigmoid(a.data[i]) - 0.5f) * half_pi;
  out.valid_h = feature.h;
  out.valid_w = feature.w;
  if (nn::grad_enabled()) cached_ = out;
  return out;
}

Tensor Heads::backward(const OutputGrad& g) {
  const std::size_t n = cached_.score.plane();
  const int h = cached_.score.h, w = cached_.score.w;
  Tensor gs(1, h, w), gd(4, h, w), ga(1, h, w);
  const float scale = static_cast<float>(scale_);
  const float half_pi = static_cast<float>(kPi / 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const float s = cached_.score.data[i];
    gs.data[i] = g.score.data[i] * s * (1.0f - s);
  }
  for (std::size_t i = 0; i < 4 * n; ++i) {
    const float sg = cached_.geometry.data[i] / scale;
    gd.data[i] = g.geometry.data[i] * scale * sg * (1.0f - sg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    const float sg = cached_.geometry.data[4 * n + i] / half_pi + 0.5f;
    ga.data[i] = g.geometry.data[4 * n + i] * half_pi * sg * (1.0f - sg);
  }
  Tensor gx = score_.backward(gs);
  nn::add_inplace(gx, distance_.backward(gd));
  nn::add_inplace(gx, angle_.backward(ga));
  cached_ = ModelOutput{};
  return gx;
}

void Heads::visit(const nn::ParamVisitor& f) {
  score_.visit(f);
  distance_.visit(f);
  angle_.visit(f);
}

void Heads::init(nn::Rng& rng) {
  score_.init(rng, 0.1);
  distance_.init(rng, 0.1);
  angle_.init(rng, 0.1);
}

void Heads::zero() {
  score_.zero_weights();
  distance_.zero_weights();
  angle_.zero_weights();
}

// --------------------------------------------------------------------- Model

Model::Model(const ModelConfig& cfg)
    : cfg_(cfg),
      backbone_(cfg.stem),
      decoder_(backbone_.stage_channels(), cfg.decoder_widths),
      final_("final", RfbConfig::rfb(cfg.decoder_widths[2], cfg.decoder_widths[2])),
      heads_(cfg.decoder_widths[2], cfg.distance_scale) {
  if (!(cfg.distance_scale > 0.0)) throw ConfigError("distance scale must be positive");
}

void Model::init(std::uint64_t seed) {
  nn::Rng rng(seed);
  backbone_.init(rng);
  decoder_.init(rng);
  final_.init(rng);
  heads_.init(rng);
}

std::vector<FeatureStage> Model::extract_stages(const Tensor& image) {
  return backbone_.forward(pad_to_multiple(image, kInputMultiple));
}

Tensor Model::fuse_stages(const std::vector<FeatureStage>& stages) { return decoder_.forward(stages); }

ModelOutput Model::predict_heads(const Tensor& feature) { return heads_.forward(feature); }

ModelOutput Model::forward(const Tensor& image) {
  if (image.c != 3) throw ShapeError("model expects a 3-channel image, got " + image.shape_string());
  in_h_ = image.h;
  in_w_ = image.w;
  const auto stages = extract_stages(image);
  ModelOutput out = predict_heads(final_.forward(fuse_stages(stages)));
  out.valid_h = (image.h + kOutputStride - 1) / kOutputStride;
  out.valid_w = (image.w + kOutputStride - 1) / kOutputStride;
  return out;
}

void Model::backward(const OutputGrad& g) {
  const Tensor gf = final_.backward(heads_.backward(g));
  backbone_.backward(decoder_.backward(gf));
}

void Model::visit(const nn::ParamVisitor& f) {
  backbone_.visit(f);
  decoder_.visit(f);
  final_.visit(f);
  heads_.visit(f);
}

std::vector<nn::Param*> Model::parameters() {
  std::vector<nn::Param*> out;
  visit([&](nn::Param& p) { out.push_back(&p); });
  return out;
}

void Model::zero_grad() {
  visit([](nn::Param& p) { p.zero_grad(); });
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  visit([&](nn::Param& p) { n += p.size(); });
  return n;
}

int Model::receptive_field_bound() const {
  RFProfile p;
  for (const auto& path : backbone_.stage_paths())
    for (const auto& spec : path) p = compose(p, spec);
  // Bilinear x2 upsampling reads two neighbours at the coarse spacing, then
  // halves the sample spacing.
  auto upsample = [](RFProfile q) {
    q.size_h += q.jump;
    q.size_w += q.jump;
    q.size = std::max(q.size_h, q.size_w);
    q.jump /= 2;
    return q;
  };
  for (int stage = 4; stage >= 2; --stage) {
    p = upsample(p);
    const auto branches = decoder_.refinement(stage).branch_specs();
    p = compute_rf_profile(branches, p);
  }
  p = compute_rf_profile(final_.branch_specs(), p);
  return p.size;
}

}  // namespace rfbtd
