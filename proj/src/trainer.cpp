#include "rfbtd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>

#include "rfbtd/checkpoint.hpp"
#include "rfbtd/errors.hpp"

namespace rfbtd {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

nlohmann::json loss_json(const LossReport& r) {
  return {{"total", r.total},
          {"score", r.score_loss},
          {"geo", r.geo_loss},
          {"iou", r.iou_term},
          {"angle", r.angle_term}};
}

void scale(Tensor& t, float s) {
  for (float& v : t.data) v *= s;
}

}  // namespace

std::vector<Detection> detect(Model& model, const Image& image, const InferOptions& opt, const NmsRunner& nms) {
  const Image* input = &image;
  Image resized;
  double sx = 1.0, sy = 1.0;
  const int long_side = std::max(image.width, image.height);
  if (opt.long_side > 0 && long_side != opt.long_side) {
    const double s = static_cast<double>(opt.long_side) / long_side;
    const int w = std::max(1, static_cast<int>(std::lround(image.width * s)));
    const int h = std::max(1, static_cast<int>(std::lround(image.height * s)));
    resized = resize_bilinear(image, w, h);
    input = &resized;
    sx = static_cast<double>(image.width) / w;
    sy = static_cast<double>(image.height) / h;
  }
  nn::NoGrad no_grad;
  const ModelOutput out = model.forward(to_tensor(*input));
  std::vector<Detection> dets = nms.run(decode_predictions(out, opt.nms, 1.0), opt.nms);
  for (Detection& d : dets)
    for (Point& p : d.quad.v) p = {p.x * sx, p.y * sy};
  return dets;
}

std::string step_record_json(const StepRecord& r) {
  nlohmann::json j = loss_json(r.loss);
  j["step"] = r.step;
  j["lr"] = r.lr;
  return j.dump();
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["config"] = config_text;
  j["code_version"] = code_version;
  j["seed"] = seed;
  j["final_step"] = final_step;
  j["early_stopped"] = early_stopped;
  auto& ck = j["checkpoints"] = nlohmann::json::array();
  for (const auto& [step, path] : checkpoints) ck.push_back({{"step", step}, {"path", path}});
  auto& va = j["validation"] = nlohmann::json::array();
  for (const auto& [step, f] : validation) va.push_back({{"step", step}, {"fscore", f}});
  auto& ls = j["losses"] = nlohmann::json::array();
  for (const StepRecord& r : losses) {
    nlohmann::json e = loss_json(r.loss);
    e["step"] = r.step;
    e["lr"] = r.lr;
    ls.push_back(std::move(e));
  }
  return j.dump(1);
}

Trainer::Trainer(TrainConfig cfg, std::vector<Sample> train, std::vector<Sample> val)
    : cfg_(std::move(cfg)),
      train_(std::move(train)),
      val_(std::move(val)),
      nms_(cfg_.use_native_nms, cfg_.native_nms_path) {
  validate(cfg_);
  if (train_.empty()) throw DatasetError("training set is empty");
  for (Sample& s : train_) limit_long_side(s, cfg_.max_image_side);
  for (Sample& s : val_) limit_long_side(s, cfg_.max_image_side);
  model_ = std::make_unique<Model>(model_config(cfg_));
  model_->init(cfg_.seed);
  optimizer_ = std::make_unique<Adagrad>(model_->parameters(), cfg_.adagrad_initial_accumulator, cfg_.adagrad_epsilon);
}

std::size_t Trainer::sample_for_slot(std::int64_t slot) const {
  const auto n = static_cast<std::int64_t>(train_.size());
  const std::int64_t epoch = slot / n;
  if (epoch != cached_epoch_) {
    permutation_.resize(train_.size());
    std::iota(permutation_.begin(), permutation_.end(), 0);
    nn::Rng rng(splitmix64(cfg_.seed ^ splitmix64(static_cast<std::uint64_t>(epoch))));
    for (std::size_t i = permutation_.size(); i > 1; --i) std::swap(permutation_[i - 1], permutation_[rng.below(i)]);
    cached_epoch_ = epoch;
  }
  return permutation_[static_cast<std::size_t>(slot % n)];
}

std::uint64_t Trainer::crop_seed_for_slot(std::int64_t slot) const {
  return splitmix64(cfg_.seed + 0x632BE59BD9B4E019ull * static_cast<std::uint64_t>(slot + 1));
}

StepRecord Trainer::step() {
  optimizer_->zero_grad();
  const LossWeights w{cfg_.lambda_g, cfg_.lambda_theta};
  const IouLossOptions iou_opt{cfg_.iou_smoothing};
  const float inv_batch = 1.0f / static_cast<float>(cfg_.batch_size);
  StepRecord rec;
  rec.step = step_;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const std::int64_t slot = step_ * cfg_.batch_size + b;
    const Sample& s = train_[sample_for_slot(slot)];
    const Crop crop = sample_crop(s.image, s.annotations, cfg_.crop_size, crop_seed_for_slot(slot));
    const TrainTarget target = build_targets(crop.annotations, cfg_.crop_size, cfg_.crop_size);
    const ModelOutput out = model_->forward(to_tensor(crop.image));
    OutputGrad g;
    const LossReport r = total_loss(out, target, w, &g, iou_opt);
    scale(g.score, inv_batch);
    scale(g.geometry, inv_batch);
    model_->backward(g);
    rec.loss.total += r.total * inv_batch;
    rec.loss.score_loss += r.score_loss * inv_batch;
    rec.loss.geo_loss += r.geo_loss * inv_batch;
    rec.loss.iou_term += r.iou_term * inv_batch;
    rec.loss.angle_term += r.angle_term * inv_batch;
  }
  rec.lr = lr_schedule(step_, cfg_);
  optimizer_->step(rec.lr);
  ++step_;
  return rec;
}

EvalResult Trainer::evaluate_on(std::span<const Sample> samples) {
  const InferOptions opt{cfg_.infer_long_side, nms_config(cfg_)};
  std::vector<EvalCounts> counts;
  counts.reserve(samples.size());
  for (const Sample& s : samples) counts.push_back(evaluate(detect(*model_, s.image, opt, nms_), s.annotations).counts);
  return aggregate(counts);
}

void Trainer::save(const std::filesystem::path& path) {
  save_checkpoint(path, *model_, optimizer_.get(), step_, serialize_config(cfg_));
}

void Trainer::resume(const std::filesystem::path& path) {
  const CheckpointInfo info = read_checkpoint_info(path);
  if (!(info.model == model_->config())) throw CheckpointError("checkpoint model configuration differs from the run");
  load_checkpoint(path, *model_, optimizer_.get());
  step_ = info.step;
}

RunManifest Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  namespace fs = std::filesystem;
  RunManifest m;
  m.config_text = serialize_config(cfg_);
  m.code_version = code_version();
  m.seed = cfg_.seed;

  const bool persist = !cfg_.output_dir.empty();
  const fs::path dir = cfg_.output_dir;
  std::ofstream log;
  if (persist) {
    fs::create_directories(dir);
    log.open(dir / "loss.jsonl", step_ > 0 ? std::ios::app : std::ios::trunc);
    std::ofstream(dir / "config.txt", std::ios::trunc) << m.config_text;
  }
  const auto checkpoint = [&](const std::string& name) {
    if (!persist) return;
    const fs::path p = dir / name;
    save(p);
    m.checkpoints.emplace_back(step_, p.string());
  };

  double best_f = -1.0;
  int stale_rounds = 0;
  while (step_ < cfg_.max_steps) {
    const StepRecord rec = step();
    m.losses.push_back(rec);
    if (log.is_open()) log << step_record_json(rec) << '\n' << std::flush;
    if (on_step) on_step(rec);
    if (step_ % cfg_.checkpoint_every == 0) checkpoint("ckpt_" + std::to_string(step_) + ".bin");
    if (!val_.empty() && step_ % cfg_.eval_every == 0) {
      const double f = evaluate_on(val_).fscore;
      m.validation.emplace_back(step_, f);
      if (f > best_f) {
        best_f = f;
        stale_rounds = 0;
        checkpoint("best.bin");
      } else if (++stale_rounds >= cfg_.patience) {
        m.early_stopped = true;
        break;
      }
    }
  }
  m.final_step = step_;
  checkpoint("final.bin");
  if (persist) std::ofstream(dir / "manifest.json", std::ios::trunc) << m.to_json() << '\n';
  return m;
}

}  // namespace rfbtd
