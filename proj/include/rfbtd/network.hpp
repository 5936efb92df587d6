#pragma once

// The detector: residual stem -> additive top-down fusion with RFB-s
// refinement -> RFB -> score / geometry heads at output stride 4.

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "rfbtd/nn/layers.hpp"
#include "rfbtd/rf_profile.hpp"
#include "rfbtd/tensor.hpp"

namespace rfbtd {

inline constexpr int kOutputStride = 4;
inline constexpr int kInputMultiple = 32;

struct StemConfig {
  int stem_width = 64;                     // 7x7 stem conv output (stage 1)
  int base_width = 64;                     // bottleneck width of the first residual stage
  int expansion = 4;                       // bottleneck output = width * expansion
  std::array<int, 4> blocks{3, 4, 6, 3};   // residual blocks per stage 2..5

  bool operator==(const StemConfig&) const = default;
};

struct ModelConfig {
  StemConfig stem;
  std::array<int, 3> decoder_widths{128, 64, 32};  // fusion stages at f4, f3, f2
  double distance_scale = 512.0;

  static ModelConfig resnet50();
  // Small stem and decoder with the same topology; used by tests and the
  // overfit harness.
  static ModelConfig tiny();

  bool operator==(const ModelConfig&) const = default;
};

struct FeatureStage {
  int index = 0;   // 1..5
  int stride = 0;  // 2^index
  Tensor grid;
};

struct ModelOutput {
  Tensor score;     // (1, H/4, W/4), values in [0, 1]
  Tensor geometry;  // (5, H/4, W/4): top, right, bottom, left distances in pixels, then theta
  // Cells covering the unpadded input.
  int valid_h = 0;
  int valid_w = 0;
};

// dLoss/dOutput, same shapes as ModelOutput.
struct OutputGrad {
  Tensor score;
  Tensor geometry;
};

class Bottleneck {
 public:
  Bottleneck(const std::string& name, int in, int width, int out, int stride);
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& g);
  void visit(const nn::ParamVisitor& f);
  void init(nn::Rng& rng);
  std::vector<LayerSpec> main_path() const;

 private:
  nn::Conv2d reduce_, conv_, expand_;
  nn::ReLU relu1_, relu2_, relu_out_;
  std::unique_ptr<nn::Conv2d> project_;
};

class Backbone {
 public:
  explicit Backbone(const StemConfig& cfg);

  // Input must already be padded to a multiple of 32.
  std::vector<FeatureStage> forward(const Tensor& image);
  // grads[i] is dLoss/d(stage i+1); empty tensors mean zero.
  Tensor backward(std::vector<Tensor> grads);

  void visit(const nn::ParamVisitor& f);
  void init(nn::Rng& rng);
  std::array<int, 5> stage_channels() const { return channels_; }
  // Specs along the deepest path, one list per stage.
  std::array<std::vector<LayerSpec>, 5> stage_paths() const;

 private:
  nn::Conv2d stem_;
  nn::ReLU stem_relu_;
  nn::MaxPool pool_;
  std::array<std::vector<Bottleneck>, 4> stages_;
  std::array<int, 5> channels_{};
  std::array<int, 4> stage_input_h_{}, stage_input_w_{};
};

struct RfbBranch {
  std::vector<std::pair<int, int>> mid_kernels;  // (kh, kw) convs between bottleneck and atrous conv
  int dilation = 1;
};

struct RfbConfig {
  int in_channels = 0;
  int out_channels = 0;
  int bottleneck = 0;
  std::vector<RfbBranch> branches;

  // Three branches, mid kernels {1, 3x3, 5x5}, dilations {1, 3, 5}.
  static RfbConfig rfb(int in, int out);
  // Four branches with 3x3 / 3x1 / 1x3 mid kernels, dilations {1, 3, 3, 5}.
  static RfbConfig rfb_s(int in, int out);
};

class RfbBlock {
 public:
  RfbBlock(const std::string& name, RfbConfig cfg);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& g);
  void visit(const nn::ParamVisitor& f);
  void init(nn::Rng& rng);
  void zero_branches();
  std::size_t parameter_count();
  const RfbConfig& config() const { return cfg_; }
  std::vector<std::vector<LayerSpec>> branch_specs() const;

 private:
  struct Branch {
    nn::Conv2d reduce;
    nn::ReLU reduce_relu;
    std::vector<nn::Conv2d> mids;
    std::vector<nn::ReLU> mid_relus;
    nn::Conv2d atrous;
  };

  RfbConfig cfg_;
  std::vector<Branch> branches_;
  nn::Conv2d project_;
  std::unique_ptr<nn::Conv2d> shortcut_;
  std::vector<int> branch_channels_;
};

// Top-down additive fusion of f5..f2.
class FusionDecoder {
 public:
  FusionDecoder(const std::array<int, 5>& stage_channels, const std::array<int, 3>& widths);

  Tensor forward(const std::vector<FeatureStage>& stages);
  // Returns gradients for stages 1..5 (stage 1 unused -> empty).
  std::vector<Tensor> backward(const Tensor& g);

  void visit(const nn::ParamVisitor& f);
  void init(nn::Rng& rng);
  void zero_laterals();
  int output_channels() const { return widths_[2]; }
  const RfbBlock& refinement(int stage) const { return refine_[static_cast<std::size_t>(4 - stage)]; }

 private:
  std::array<int, 3> widths_;
  nn::Conv2d top_;
  std::array<nn::Conv2d, 3> lateral_;
  std::array<nn::ReLU, 3> relu_;
  std::vector<RfbBlock> refine_;
  std::array<int, 3> up_in_h_{}, up_in_w_{};
};

class Heads {
 public:
  Heads(int in_channels, double distance_scale);
  ModelOutput forward(const Tensor& feature);
  Tensor backward(const OutputGrad& g);
  void visit(const nn::ParamVisitor& f);
  void init(nn::Rng& rng);
  // Puts every head pre-activation at zero regardless of input.
  void zero();

 private:
  double scale_;
  nn::Conv2d score_, distance_, angle_;
  ModelOutput cached_;
};

class Model {
 public:
  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  void init(std::uint64_t seed);

  // Pads to a multiple of 32 as needed; valid_h/valid_w record the unpadded
  // extent of the output grid.
  ModelOutput forward(const Tensor& image);
  void backward(const OutputGrad& g);

  std::vector<FeatureStage> extract_stages(const Tensor& image);
  Tensor fuse_stages(const std::vector<FeatureStage>& stages);
  ModelOutput predict_heads(const Tensor& feature);

  void visit(const nn::ParamVisitor& f);
  std::vector<nn::Param*> parameters();
  void zero_grad();
  std::size_t parameter_count();

  Backbone& backbone() { return backbone_; }
  FusionDecoder& decoder() { return decoder_; }
  RfbBlock& final_block() { return final_; }
  Heads& heads() { return heads_; }

  // Upper bound on the receptive field of one output cell, in input pixels.
  int receptive_field_bound() const;

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  FusionDecoder decoder_;
  RfbBlock final_;
  Heads heads_;
  int in_h_ = 0, in_w_ = 0;
};

}  // namespace rfbtd
