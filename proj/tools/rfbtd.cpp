// rfbtd command-line front end: synth, train, infer, eval, rf-analyze.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "rfbtd/checkpoint.hpp"
#include "rfbtd/config.hpp"
#include "rfbtd/dataset.hpp"
#include "rfbtd/errors.hpp"
#include "rfbtd/evalproto.hpp"
#include "rfbtd/io/image_io.hpp"
#include "rfbtd/network.hpp"
#include "rfbtd/rf_profile.hpp"
#include "rfbtd/simd/kernels.hpp"
#include "rfbtd/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rfbtd;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool use_native_nms = false;
  std::string native_nms_path;
};

TrainConfig resolve_config(const CommonFlags& f, const std::string& fallback_text = {}) {
  TrainConfig cfg;
  if (!f.config_path.empty()) cfg = load_config(f.config_path);
  else if (!fallback_text.empty()) cfg = parse_config(fallback_text);
  if (f.seed) cfg.seed = *f.seed;
  if (f.use_native_nms) cfg.use_native_nms = true;
  if (!f.native_nms_path.empty()) cfg.native_nms_path = f.native_nms_path;
  return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "Run configuration (key = value file)");
  cmd->add_option("--seed", f.seed, "Override the configured seed");
  cmd->add_flag("--use-native-nms", f.use_native_nms, "Use a native NMS kernel when one loads");
  cmd->add_option("--native-nms", f.native_nms_path, "Path of the native NMS kernel library");
}

std::string profile_json(const RFProfile& p) {
  json j{{"size", p.size}, {"size_h", p.size_h}, {"size_w", p.size_w}, {"jump", p.jump}, {"radii", p.radii}};
  return j.dump();
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
  std::string output;
  int count = 5;
  std::uint64_t seed = 1;
  int width = 128, height = 128;
  double dont_care_rate = 0.0;
};

int run_synth(const SynthArgs& a) {
  SynthOptions opt;
  opt.width = a.width;
  opt.height = a.height;
  opt.dont_care_rate = a.dont_care_rate;
  fs::create_directories(a.output);
  for (const Sample& s : make_synthetic_set(opt, a.count, a.seed)) {
    io::write_image(fs::path(a.output) / (s.name + ".png"), s.image);
    std::ofstream gt(fs::path(a.output) / ("gt_" + s.name + ".txt"));
    for (const Annotation& ann : s.annotations) {
      for (const Point& p : ann.quad.v) gt << std::lround(p.x) << ',' << std::lround(p.y) << ',';
      gt << ann.transcription << '\n';
    }
  }
  std::cout << "wrote " << a.count << " synthetic images to " << a.output << "\n";
  return 0;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  CommonFlags common;
  std::string train_dir, val_dir, output_dir, checkpoint;
  std::optional<std::int64_t> max_steps;
  bool quiet = false;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg = resolve_config(a.common);
  if (!a.train_dir.empty()) cfg.train_dir = a.train_dir;
  if (!a.val_dir.empty()) cfg.val_dir = a.val_dir;
  if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
  if (a.max_steps) cfg.max_steps = *a.max_steps;
  validate(cfg);
  if (cfg.train_dir.empty()) throw ConfigError("train_dir is not set");

  auto train = io::load_dataset(cfg.train_dir);
  std::vector<Sample> val;
  if (!cfg.val_dir.empty()) val = io::load_dataset(cfg.val_dir);
  std::cerr << "train: " << train.size() << " images, val: " << val.size() << " images, kernels: "
            << simd::isa_name(simd::active_isa()) << "\n";

  Trainer trainer(cfg, std::move(train), std::move(val));
  if (!a.checkpoint.empty()) {
    trainer.resume(a.checkpoint);
    std::cerr << "resumed from " << a.checkpoint << " at step " << trainer.step_index() << "\n";
  }
  const RunManifest m = trainer.run([&](const StepRecord& r) {
    if (!a.quiet) std::cout << step_record_json(r) << "\n" << std::flush;
  });
  std::cerr << "finished at step " << m.final_step << (m.early_stopped ? " (early stop)" : "") << "\n";
  return 0;
}

// infer ---------------------------------------------------------------------

struct InferArgs {
  CommonFlags common;
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string output_dir = "detections";
  bool overlay = false;
  std::optional<int> long_side;
  std::optional<double> score_threshold;
};

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && io::is_image_file(e.path())) found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.emplace_back(in);
    }
  }
  return out;
}

int run_infer(const InferArgs& a) {
  const CheckpointInfo info = read_checkpoint_info(a.checkpoint);
  const TrainConfig cfg = resolve_config(a.common, info.config_text);
  Model model(info.model);
  load_checkpoint(a.checkpoint, model);

  InferOptions opt;
  opt.long_side = a.long_side.value_or(cfg.infer_long_side);
  opt.nms = nms_config(cfg);
  if (a.score_threshold) opt.nms.score_threshold = *a.score_threshold;
  const NmsRunner nms(cfg.use_native_nms, cfg.native_nms_path);
  std::cerr << "nms: " << nms.note() << "\n";

  fs::create_directories(a.output_dir);
  int failures = 0, processed = 0;
  for (const fs::path& p : expand_inputs(a.inputs)) {
    const auto img = io::read_image(p);
    if (!img) {
      std::cerr << "warning: cannot read " << p.string() << ", skipped\n";
      ++failures;
      continue;
    }
    const auto dets = detect(model, *img, opt, nms);
    const std::string stem = p.stem().string();
    std::ofstream(fs::path(a.output_dir) / ("res_" + stem + ".txt")) << format_submission(dets);
    if (a.overlay) io::write_image(fs::path(a.output_dir) / (stem + "_overlay.png"), io::draw_overlay(*img, dets));
    std::cout << stem << ": " << dets.size() << " detections\n";
    ++processed;
  }
  std::cout << processed << " images processed, " << failures << " skipped\n";
  return failures > 0 ? 2 : 0;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string det_dir, gt_dir, json_path;
  double iou = 0.5;
  bool per_image = false;
};

int run_eval(const EvalArgs& a) {
  const DirectoryEvaluation e = evaluate_directories(a.det_dir, a.gt_dir, a.iou);
  const EvalResult& t = e.total;
  if (a.per_image)
    for (const auto& [stem, c] : e.per_image)
      std::cout << stem << ": matched " << c.matched << ", detections " << c.detections << ", gt " << c.ground_truths
                << "\n";
  std::cout << std::fixed << std::setprecision(4) << "precision " << t.precision << "  recall " << t.recall
            << "  fscore " << t.fscore << "  (matched " << t.counts.matched << ", detections " << t.counts.detections
            << ", gt " << t.counts.ground_truths << ")\n";
  if (!a.json_path.empty()) {
    json j{{"precision", t.precision},
           {"recall", t.recall},
           {"fscore", t.fscore},
           {"matched", t.counts.matched},
           {"detections", t.counts.detections},
           {"ground_truths", t.counts.ground_truths},
           {"iou_threshold", a.iou}};
    json per = json::object();
    for (const auto& [stem, c] : e.per_image)
      per[stem] = {{"matched", c.matched}, {"detections", c.detections}, {"ground_truths", c.ground_truths}};
    j["per_image"] = per;
    std::ofstream(a.json_path) << j.dump(2) << "\n";
  }
  return 0;
}

// rf-analyze ----------------------------------------------------------------

struct RfArgs {
  std::string model = "resnet50";
  std::string map_dir;
  int canvas = 64;
};

int run_rf(const RfArgs& a) {
  const ModelConfig mc = a.model == "tiny" ? ModelConfig::tiny() : ModelConfig::resnet50();
  if (a.model != "tiny" && a.model != "resnet50") throw ConfigError("unknown model '" + a.model + "'");

  const std::vector<LayerSpec> plain{LayerSpec::square(3), LayerSpec::square(3)};
  const RFProfile plain_p = compute_rf_profile(plain);
  const RFProfile rfb_p = compute_rf_profile(RfbBlock("rfb", RfbConfig::rfb(32, 32)).branch_specs());
  const RFProfile rfbs_p = compute_rf_profile(RfbBlock("rfb_s", RfbConfig::rfb_s(32, 32)).branch_specs());

  Model model(mc);
  RFProfile backbone;
  for (const auto& path : model.backbone().stage_paths())
    for (const auto& s : path) backbone = compose(backbone, s);

  std::cout << "plain 3x3 stack      " << profile_json(plain_p) << "\n"
            << "RFB block            " << profile_json(rfb_p) << "\n"
            << "RFB-s block          " << profile_json(rfbs_p) << "\n"
            << "backbone (" << a.model << ")  " << profile_json(backbone) << "\n"
            << "output cell RF bound " << model.receptive_field_bound() << " px\n"
            << "RFB-s max radius " << rfbs_p.size << (rfbs_p.size > plain_p.size ? " > " : " <= ") << plain_p.size
            << " (plain stack)\n";
  if (!a.map_dir.empty()) {
    fs::create_directories(a.map_dir);
    io::write_image(fs::path(a.map_dir) / "rf_plain.png", render_rf_map(plain_p, a.canvas));
    io::write_image(fs::path(a.map_dir) / "rf_rfb.png", render_rf_map(rfb_p, a.canvas));
    io::write_image(fs::path(a.map_dir) / "rf_rfb_s.png", render_rf_map(rfbs_p, a.canvas));
    std::cout << "maps written to " << a.map_dir << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rfbtd: scene text detection with receptive field blocks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(RFBTD_VERSION_STRING) + " (" + code_version() + ")");

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write a synthetic dataset (images + ground truth)");
  s->add_option("--output,-o", synth.output, "Output directory")->required();
  s->add_option("--count,-n", synth.count, "Number of images")->check(CLI::PositiveNumber);
  s->add_option("--seed", synth.seed, "Generator seed");
  s->add_option("--width", synth.width)->check(CLI::PositiveNumber);
  s->add_option("--height", synth.height)->check(CLI::PositiveNumber);
  s->add_option("--dont-care-rate", synth.dont_care_rate)->check(CLI::Range(0.0, 1.0));

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model");
  add_common(t, train.common);
  t->add_option("--train-dir", train.train_dir, "Training images with gt_<stem>.txt files");
  t->add_option("--val-dir", train.val_dir, "Validation set for early stopping");
  t->add_option("--output,-o", train.output_dir, "Run directory");
  t->add_option("--checkpoint", train.checkpoint, "Resume from this checkpoint");
  t->add_option("--max-steps", train.max_steps);
  t->add_flag("--quiet", train.quiet, "Do not echo per-step records");

  InferArgs infer;
  auto* i = app.add_subcommand("infer", "Detect text in images");
  add_common(i, infer.common);
  i->add_option("--checkpoint", infer.checkpoint, "Trained checkpoint")->required();
  i->add_option("--output,-o", infer.output_dir, "Directory for res_<stem>.txt files");
  i->add_flag("--overlay", infer.overlay, "Also write <stem>_overlay.png");
  i->add_option("--long-side", infer.long_side, "Resize long side before inference (0 keeps size)");
  i->add_option("--score-threshold", infer.score_threshold);
  i->add_option("inputs", infer.inputs, "Image files or directories")->required();

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Score submission files against ground truth");
  e->add_option("--det", eval.det_dir, "Directory of res_<stem>.txt")->required();
  e->add_option("--gt", eval.gt_dir, "Directory of gt_<stem>.txt")->required();
  e->add_option("--iou", eval.iou)->check(CLI::Range(0.0, 1.0));
  e->add_option("--json", eval.json_path, "Write the result as JSON");
  e->add_flag("--per-image", eval.per_image);

  RfArgs rf;
  auto* r = app.add_subcommand("rf-analyze", "Print receptive-field profiles");
  r->add_option("--model", rf.model, "tiny or resnet50");
  r->add_option("--map-dir", rf.map_dir, "Write RF map images here");
  r->add_option("--canvas", rf.canvas)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return run_synth(synth);
    if (t->parsed()) return run_train(train);
    if (i->parsed()) return run_infer(infer);
    if (e->parsed()) return run_eval(eval);
    if (r->parsed()) return run_rf(rf);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
