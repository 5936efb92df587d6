#pragma once

// Run configuration as "key = value" text. Keys are emitted in a fixed order
// and numbers in shortest round-trip form, so serialize(parse(serialize(c)))
// reproduces the same bytes.

#include <cstdint>
#include <string>
#include <string_view>

#include "rfbtd/network.hpp"
#include "rfbtd/postprocess.hpp"

namespace rfbtd {

struct TrainConfig {
  std::string train_dir;
  std::string val_dir;
  std::string output_dir = "run";

  std::string model = "resnet50";  // "resnet50" or "tiny"
  double distance_scale = 512.0;

  int crop_size = 512;
  int batch_size = 16;
  int max_image_side = 2400;  // longer images are downscaled at ingestion

  double initial_lr = 1e-3;
  double decay_factor = 0.1;
  std::int64_t decay_every = 27300;
  double lr_floor = 1e-5;
  double adagrad_initial_accumulator = 0.1;
  double adagrad_epsilon = 1e-10;

  double lambda_g = 1.0;
  double lambda_theta = 10.0;
  double iou_smoothing = 1.0;

  std::uint64_t seed = 42;
  std::int64_t max_steps = 200000;
  std::int64_t checkpoint_every = 1000;
  std::int64_t eval_every = 1000;
  int patience = 5;

  int infer_long_side = 1280;  // 0 keeps the input size
  double score_threshold = 0.8;
  double nms_iou_threshold = 0.2;
  std::string nms_mode = "locality_aware";  // or "standard"
  bool use_native_nms = false;
  std::string native_nms_path;

  bool operator==(const TrainConfig&) const = default;
};

// Throws ConfigError naming the first offending field.
void validate(const TrainConfig& cfg);

std::string serialize_config(const TrainConfig& cfg);
// Blank lines and '#' comments are ignored. Unknown keys, duplicates and
// malformed values throw ConfigError. Missing keys keep their defaults.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::string& path);

// max(initial_lr * decay_factor^floor(step / decay_every), lr_floor)
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

ModelConfig model_config(const TrainConfig& cfg);
NmsConfig nms_config(const TrainConfig& cfg);

}  // namespace rfbtd
