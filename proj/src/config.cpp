#include "rfbtd/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <type_traits>
#include <variant>
#include <vector>

#include "rfbtd/errors.hpp"

namespace rfbtd {

namespace {

using FieldRef = std::variant<std::string*, double*, int*, std::int64_t*, std::uint64_t*, bool*>;

struct Field {
  const char* key;
  FieldRef ref;
};

std::vector<Field> fields(TrainConfig& c) {
  return {
      {"train_dir", &c.train_dir},
      {"val_dir", &c.val_dir},
      {"output_dir", &c.output_dir},
      {"model", &c.model},
      {"distance_scale", &c.distance_scale},
      {"crop_size", &c.crop_size},
      {"batch_size", &c.batch_size},
      {"max_image_side", &c.max_image_side},
      {"initial_lr", &c.initial_lr},
      {"decay_factor", &c.decay_factor},
      {"decay_every", &c.decay_every},
      {"lr_floor", &c.lr_floor},
      {"adagrad_initial_accumulator", &c.adagrad_initial_accumulator},
      {"adagrad_epsilon", &c.adagrad_epsilon},
      {"lambda_g", &c.lambda_g},
      {"lambda_theta", &c.lambda_theta},
      {"iou_smoothing", &c.iou_smoothing},
      {"seed", &c.seed},
      {"max_steps", &c.max_steps},
      {"checkpoint_every", &c.checkpoint_every},
      {"eval_every", &c.eval_every},
      {"patience", &c.patience},
      {"infer_long_side", &c.infer_long_side},
      {"score_threshold", &c.score_threshold},
      {"nms_iou_threshold", &c.nms_iou_threshold},
      {"nms_mode", &c.nms_mode},
      {"use_native_nms", &c.use_native_nms},
      {"native_nms_path", &c.native_nms_path},
  };
}

template <typename T>
std::string number_to_string(T v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string value_to_string(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) return *p;
        else if constexpr (std::is_same_v<T, bool>) return *p ? "true" : "false";
        else return number_to_string(*p);
      },
      ref);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void assign(const FieldRef& ref, std::string_view value, std::string_view key) {
  const auto bad = [&] { return ConfigError("bad value for " + std::string(key) + ": '" + std::string(value) + "'"); };
  std::visit(
      [&](auto* p) {
        using T = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<T, std::string>) {
          *p = std::string(value);
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true") *p = true;
          else if (value == "false") *p = false;
          else throw bad();
        } else {
          T v{};
          const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
          if (res.ec != std::errc() || res.ptr != value.data() + value.size()) throw bad();
          *p = v;
        }
      },
      ref);
}

}  // namespace

void validate(const TrainConfig& c) {
  const auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (c.model != "resnet50" && c.model != "tiny") fail("model must be resnet50 or tiny");
  if (!(c.distance_scale > 0)) fail("distance_scale must be positive");
  if (c.crop_size <= 0 || c.crop_size % kInputMultiple != 0) fail("crop_size must be a positive multiple of 32");
  if (c.batch_size <= 0) fail("batch_size must be positive");
  if (c.max_image_side <= 0) fail("max_image_side must be positive");
  if (!(c.initial_lr > 0)) fail("initial_lr must be positive");
  if (!(c.decay_factor > 0 && c.decay_factor <= 1)) fail("decay_factor must be in (0, 1]");
  if (c.decay_every <= 0) fail("decay_every must be positive");
  if (!(c.lr_floor > 0 && c.lr_floor <= c.initial_lr)) fail("lr_floor must be in (0, initial_lr]");
  if (!(c.adagrad_initial_accumulator >= 0)) fail("adagrad_initial_accumulator must be non-negative");
  if (!(c.adagrad_epsilon >= 0)) fail("adagrad_epsilon must be non-negative");
  if (!(c.lambda_g >= 0 && c.lambda_theta >= 0)) fail("loss weights must be non-negative");
  if (!(c.iou_smoothing >= 0)) fail("iou_smoothing must be non-negative");
  if (c.max_steps < 0) fail("max_steps must be non-negative");
  if (c.checkpoint_every <= 0 || c.eval_every <= 0) fail("checkpoint_every and eval_every must be positive");
  if (c.patience <= 0) fail("patience must be positive");
  if (c.infer_long_side < 0) fail("infer_long_side must be non-negative");
  if (!(c.score_threshold >= 0 && c.score_threshold <= 1)) fail("score_threshold must be in [0, 1]");
  if (!(c.nms_iou_threshold > 0 && c.nms_iou_threshold <= 1)) fail("nms_iou_threshold must be in (0, 1]");
  if (c.nms_mode != "standard" && c.nms_mode != "locality_aware") fail("nms_mode must be standard or locality_aware");
  for (const std::string* s : {&c.train_dir, &c.val_dir, &c.output_dir, &c.native_nms_path})
    if (s->find('\n') != std::string::npos) fail("paths must not contain newlines");
}

std::string serialize_config(const TrainConfig& cfg) {
  TrainConfig copy = cfg;
  std::string out = "# rfbtd run configuration\n";
  for (const Field& f : fields(copy)) {
    out += f.key;
    out += " = ";
    out += value_to_string(f.ref);
    out += '\n';
  }
  return out;
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  auto table = fields(cfg);
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const std::size_t nl = text.find('\n');
    std::string_view line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string_view key = trim(line.substr(0, eq));
    const std::string_view value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return key == f.key; });
    if (it == table.end()) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second)
      throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + std::string(key) + "'");
    assign(it->ref, value, key);
  }
  validate(cfg);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  const std::int64_t k = std::max<std::int64_t>(step, 0) / cfg.decay_every;
  return std::max(cfg.initial_lr * std::pow(cfg.decay_factor, static_cast<double>(k)), cfg.lr_floor);
}

ModelConfig model_config(const TrainConfig& cfg) {
  ModelConfig m = cfg.model == "tiny" ? ModelConfig::tiny() : ModelConfig::resnet50();
  m.distance_scale = cfg.distance_scale;
  return m;
}

NmsConfig nms_config(const TrainConfig& cfg) {
  NmsConfig n;
  n.score_threshold = cfg.score_threshold;
  n.nms_iou_threshold = cfg.nms_iou_threshold;
  n.merge_mode = cfg.nms_mode == "standard" ? MergeMode::standard : MergeMode::locality_aware;
  return n;
}

}  // namespace rfbtd
