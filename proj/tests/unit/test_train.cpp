#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "rfbtd/checkpoint.hpp"
#include "rfbtd/config.hpp"
#include "rfbtd/errors.hpp"
#include "rfbtd/optim.hpp"
#include "rfbtd/trainer.hpp"

using namespace rfbtd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

TrainConfig tiny_config() {
  TrainConfig c;
  c.model = "tiny";
  c.distance_scale = 64;
  c.crop_size = 64;
  c.batch_size = 2;
  c.max_steps = 4;
  c.checkpoint_every = 2;
  c.eval_every = 2;
  c.infer_long_side = 0;
  c.output_dir = "";
  c.initial_lr = 1e-2;
  c.seed = 3;
  return c;
}

std::vector<Sample> tiny_set(int n, std::uint64_t seed) {
  return make_synthetic_set({.width = 96, .height = 80}, n, seed);
}

std::vector<std::vector<float>> snapshot(Model& m) {
  std::vector<std::vector<float>> out;
  for (nn::Param* p : m.parameters()) out.push_back(p->value);
  return out;
}

}  // namespace

TEST(Config, DefaultsFollowTheTrainingRecipe) {
  const TrainConfig c;
  EXPECT_EQ(c.crop_size, 512);
  EXPECT_EQ(c.batch_size, 16);
  EXPECT_EQ(c.decay_every, 27300);
  EXPECT_EQ(c.lr_floor, 1e-5);
  EXPECT_EQ(c.initial_lr, 1e-3);
  EXPECT_EQ(c.lambda_g, 1.0);
  EXPECT_EQ(c.lambda_theta, 10.0);
  EXPECT_NO_THROW(validate(c));
}

TEST(Config, RoundTripIsByteIdentical) {
  TrainConfig c = tiny_config();
  c.train_dir = "/data/train set";
  c.native_nms_path = "/opt/libnms.so";
  c.use_native_nms = true;
  c.initial_lr = 0.1 + 0.2;
  c.nms_mode = "standard";
  const std::string text = serialize_config(c);
  const TrainConfig back = parse_config(text);
  EXPECT_EQ(back, c);
  EXPECT_EQ(serialize_config(back), text);
}

TEST(Config, ParseIgnoresCommentsAndKeepsDefaults) {
  const TrainConfig c = parse_config("# comment\n\nbatch_size = 4\n  seed=9  \n");
  EXPECT_EQ(c.batch_size, 4);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.crop_size, 512);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_config("no_such_key = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = four\n"), ConfigError);
  EXPECT_THROW(parse_config("batch_size 4\n"), ConfigError);
  EXPECT_THROW(parse_config("batch_size = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("lr_floor = 0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("model = vgg\n"), ConfigError);
  EXPECT_THROW(parse_config("nms_mode = fancy\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/rfbtd.cfg"), ConfigError);
}

TEST(Config, DerivedConfigs) {
  TrainConfig c = tiny_config();
  c.nms_mode = "standard";
  c.score_threshold = 0.6;
  const NmsConfig n = nms_config(c);
  EXPECT_EQ(n.merge_mode, MergeMode::standard);
  EXPECT_EQ(n.score_threshold, 0.6);
  const ModelConfig m = model_config(c);
  EXPECT_EQ(m.distance_scale, 64);
  EXPECT_EQ(m.stem, ModelConfig::tiny().stem);
  EXPECT_EQ(model_config(TrainConfig{}).stem, ModelConfig::resnet50().stem);
}

TEST(Schedule, StepsDownTenfoldAndFloors) {
  const TrainConfig c;
  EXPECT_EQ(lr_schedule(0, c), 1e-3);
  EXPECT_EQ(lr_schedule(27299, c), 1e-3);
  EXPECT_NEAR(lr_schedule(27300, c), 1e-4, 1e-18);
  EXPECT_NEAR(lr_schedule(54600, c), 1e-5, 1e-18);
  EXPECT_EQ(lr_schedule(81900, c), 1e-5);
  EXPECT_EQ(lr_schedule(10'000'000, c), 1e-5);
  double prev = lr_schedule(0, c);
  for (std::int64_t s = 0; s < 200000; s += 997) {
    const double lr = lr_schedule(s, c);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, c.lr_floor);
    prev = lr;
  }
}

TEST(Optim, AdagradUpdateRule) {
  nn::Param p("w", {3});
  p.value = {1.0f, -2.0f, 0.5f};
  p.grad = {0.5f, -1.0f, 0.0f};
  Adagrad opt({&p}, 0.1, 1e-10);
  opt.step(0.01);
  const double acc0 = 0.1 + 0.25, acc1 = 0.1 + 1.0;
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.5 / std::sqrt(acc0), 1e-6);
  EXPECT_NEAR(p.value[1], -2.0 + 0.01 * 1.0 / std::sqrt(acc1), 1e-6);
  EXPECT_EQ(p.value[2], 0.5f);
  EXPECT_NEAR(opt.state()[0][0], acc0, 1e-6);
  opt.zero_grad();
  EXPECT_EQ(p.grad[1], 0.0f);
}

TEST(Checkpoint, RoundTripRestoresParametersAndOptimizer) {
  TempDir dir("rfbtd_ckpt");
  Model a(ModelConfig::tiny());
  a.init(1);
  Adagrad oa(a.parameters());
  for (auto& acc : oa.state()) std::fill(acc.begin(), acc.end(), 0.7f);
  const fs::path path = dir.path / "a.bin";
  save_checkpoint(path, a, &oa, 123, "seed = 5\n");

  const CheckpointInfo info = read_checkpoint_info(path);
  EXPECT_EQ(info.version, kCheckpointVersion);
  EXPECT_EQ(info.step, 123);
  EXPECT_EQ(info.model, ModelConfig::tiny());
  EXPECT_EQ(info.config_text, "seed = 5\n");
  EXPECT_TRUE(info.has_optimizer);
  EXPECT_EQ(info.code_version, code_version());

  Model b(ModelConfig::tiny());
  b.init(2);
  Adagrad ob(b.parameters());
  load_checkpoint(path, b, &ob);
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_EQ(ob.state()[3][0], 0.7f);
}

TEST(Checkpoint, ShapeMismatchLeavesTheModelUntouched) {
  TempDir dir("rfbtd_ckpt_bad");
  ModelConfig other = ModelConfig::tiny();
  other.decoder_widths[0] = 24;
  Model src(other);
  src.init(1);
  save_checkpoint(dir.path / "o.bin", src, nullptr, 0);
  Model dst(ModelConfig::tiny());
  dst.init(4);
  const auto before = snapshot(dst);
  EXPECT_THROW(load_checkpoint(dir.path / "o.bin", dst), CheckpointError);
  EXPECT_EQ(snapshot(dst), before);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir("rfbtd_ckpt_corrupt");
  std::ofstream(dir.path / "junk.bin") << "not a checkpoint";
  Model m(ModelConfig::tiny());
  EXPECT_THROW(read_checkpoint_info(dir.path / "junk.bin"), CheckpointError);
  EXPECT_THROW(load_checkpoint(dir.path / "missing.bin", m), CheckpointError);

  m.init(1);
  save_checkpoint(dir.path / "t.bin", m, nullptr, 1);
  const auto size = fs::file_size(dir.path / "t.bin");
  fs::resize_file(dir.path / "t.bin", size - 16);
  EXPECT_THROW(load_checkpoint(dir.path / "t.bin", m), CheckpointError);
}

TEST(Trainer, EmptyTrainingSetIsRejected) {
  EXPECT_THROW(Trainer(tiny_config(), {}), DatasetError);
}

TEST(Trainer, SampleSequenceIsAPureFunctionOfTheSeed) {
  const auto data = tiny_set(5, 1);
  const Trainer a(tiny_config(), data), b(tiny_config(), data);
  TrainConfig other = tiny_config();
  other.seed = 4;
  const Trainer c(other, data);
  bool differs = false;
  std::vector<int> seen(5, 0);
  for (std::int64_t slot = 0; slot < 50; ++slot) {
    EXPECT_EQ(a.sample_for_slot(slot), b.sample_for_slot(slot));
    EXPECT_EQ(a.crop_seed_for_slot(slot), b.crop_seed_for_slot(slot));
    differs = differs || a.sample_for_slot(slot) != c.sample_for_slot(slot);
    if (slot < 5) ++seen[a.sample_for_slot(slot)];
  }
  EXPECT_TRUE(differs);
  // The first epoch is a permutation.
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Trainer, ResumeReproducesAnUninterruptedRun) {
  TempDir dir("rfbtd_resume");
  const auto data = tiny_set(3, 2);
  Trainer full(tiny_config(), data);
  for (int i = 0; i < 4; ++i) full.step();

  Trainer first(tiny_config(), data);
  first.step();
  first.step();
  first.save(dir.path / "mid.bin");
  Trainer second(tiny_config(), data);
  second.resume(dir.path / "mid.bin");
  EXPECT_EQ(second.step_index(), 2);
  second.step();
  const StepRecord last = second.step();
  EXPECT_EQ(last.step, 3);
  EXPECT_EQ(second.step_index(), 4);
  EXPECT_EQ(snapshot(second.model()), snapshot(full.model()));
}

TEST(Trainer, ResumeRefusesAnotherArchitecture) {
  TempDir dir("rfbtd_resume_bad");
  TrainConfig c = tiny_config();
  c.distance_scale = 32;
  Trainer a(c, tiny_set(1, 3));
  a.save(dir.path / "a.bin");
  Trainer b(tiny_config(), tiny_set(1, 3));
  EXPECT_THROW(b.resume(dir.path / "a.bin"), CheckpointError);
}

TEST(Trainer, RunWritesArtifacts) {
  TempDir dir("rfbtd_run");
  TrainConfig c = tiny_config();
  c.output_dir = dir.path.string();
  Trainer t(c, tiny_set(2, 4), tiny_set(1, 5));
  int calls = 0;
  const RunManifest m = t.run([&](const StepRecord& r) {
    ++calls;
    EXPECT_TRUE(std::isfinite(r.loss.total));
    EXPECT_EQ(r.lr, lr_schedule(r.step, c));
  });
  EXPECT_EQ(calls, 4);
  EXPECT_EQ(m.final_step, 4);
  EXPECT_EQ(m.losses.size(), 4u);
  EXPECT_EQ(m.validation.size(), 2u);
  for (const char* f : {"loss.jsonl", "config.txt", "ckpt_2.bin", "ckpt_4.bin", "best.bin", "final.bin", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir.path / f)) << f;
  std::ifstream in(dir.path / "manifest.json");
  const auto j = nlohmann::json::parse(in);
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), c.seed);
  EXPECT_EQ(parse_config(j.at("config").get<std::string>()), c);
  std::ifstream log(dir.path / "loss.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto rec = nlohmann::json::parse(line);
    EXPECT_TRUE(rec.contains("lr"));
    EXPECT_TRUE(rec.contains("total"));
    ++lines;
  }
  EXPECT_EQ(lines, 4);
}

TEST(Trainer, EarlyStoppingHonoursPatience) {
  TrainConfig c = tiny_config();
  c.max_steps = 50;
  c.eval_every = 1;
  c.checkpoint_every = 1000;
  c.patience = 2;
  // Negligible updates, so the validation F-score never improves.
  c.initial_lr = 1e-30;
  c.lr_floor = 1e-30;
  Trainer t(c, tiny_set(1, 6), tiny_set(1, 7));
  const RunManifest m = t.run();
  EXPECT_TRUE(m.early_stopped);
  EXPECT_EQ(m.final_step, 3);
}

TEST(Detect, BlankImageYieldsNothingAndCoordinatesScaleBack) {
  Model m(ModelConfig::tiny());
  m.init(1);
  InferOptions opt;
  opt.long_side = 64;
  const NmsRunner nms(false);
  EXPECT_TRUE(detect(m, Image(128, 96, 3), opt, nms).empty());

  // Heads zeroed: score 0.5 everywhere and distances at half the scale, so a
  // threshold below 0.5 fires at every cell.
  m.heads().zero();
  opt.nms.score_threshold = 0.4;
  opt.nms.merge_mode = MergeMode::standard;
  opt.nms.nms_iou_threshold = 1.0;
  const auto dets = detect(m, Image(128, 96, 3), opt, nms);
  ASSERT_FALSE(dets.empty());
  // 64 x 48 input -> 16 x 12 cells; mapped back by a factor of 2.
  EXPECT_EQ(dets.size(), 16u * 12u);
  const double half = ModelConfig::tiny().distance_scale / 2 * 2.0;
  EXPECT_NEAR(dets[0].quad.v[0].x, 2.0 * 2.0 - half, 1e-3);
  EXPECT_NEAR(dets[0].quad.v[2].y, 2.0 * 2.0 + half, 1e-3);
}
