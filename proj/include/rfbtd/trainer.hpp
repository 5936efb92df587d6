#pragma once

// Training loop, inference pipeline and the run manifest.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rfbtd/config.hpp"
#include "rfbtd/dataset.hpp"
#include "rfbtd/evalproto.hpp"
#include "rfbtd/losses.hpp"
#include "rfbtd/network.hpp"
#include "rfbtd/optim.hpp"
#include "rfbtd/postprocess.hpp"

namespace rfbtd {

struct InferOptions {
  int long_side = 1280;  // 0 keeps the input size
  NmsConfig nms;
};

// Resize -> pad to /32 -> forward -> decode -> NMS, with quads mapped back to
// the original image coordinates.
std::vector<Detection> detect(Model& model, const Image& image, const InferOptions& opt, const NmsRunner& nms);

struct StepRecord {
  std::int64_t step = 0;
  LossReport loss;
  double lr = 0.0;
};

struct RunManifest {
  std::string config_text;
  std::string code_version;
  std::uint64_t seed = 0;
  std::vector<StepRecord> losses;
  std::vector<std::pair<std::int64_t, std::string>> checkpoints;
  std::vector<std::pair<std::int64_t, double>> validation;  // (step, F-score)
  std::int64_t final_step = 0;
  bool early_stopped = false;

  std::string to_json() const;
};

std::string step_record_json(const StepRecord& r);

class Trainer {
 public:
  // Throws DatasetError before any training when train is empty.
  Trainer(TrainConfig cfg, std::vector<Sample> train, std::vector<Sample> val = {});

  Model& model() { return *model_; }
  const TrainConfig& config() const { return cfg_; }
  std::int64_t step_index() const { return step_; }

  // Sample index and crop seed for slot `slot` (= step * batch + item). A
  // pure function of the seed, so replay and resume see the same sequence.
  std::size_t sample_for_slot(std::int64_t slot) const;
  std::uint64_t crop_seed_for_slot(std::int64_t slot) const;

  // One minibatch: forward/backward per sample, averaged, one optimizer step.
  StepRecord step();

  // Runs until max_steps or early stop. When output_dir is non-empty,
  // checkpoints, loss.jsonl and manifest.json are written there.
  RunManifest run(const std::function<void(const StepRecord&)>& on_step = {});

  // Micro-averaged F-score on `samples` with the configured inference path.
  EvalResult evaluate_on(std::span<const Sample> samples);

  void save(const std::filesystem::path& path);
  void resume(const std::filesystem::path& path);

 private:
  TrainConfig cfg_;
  std::vector<Sample> train_;
  std::vector<Sample> val_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<Adagrad> optimizer_;
  NmsRunner nms_;
  std::int64_t step_ = 0;
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::vector<std::size_t> permutation_;
};

}  // namespace rfbtd
