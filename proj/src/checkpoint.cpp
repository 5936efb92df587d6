#include "rfbtd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>
#include <map>

#include "rfbtd/errors.hpp"

#ifndef RFBTD_VERSION_STRING
#define RFBTD_VERSION_STRING "unknown"
#endif

namespace rfbtd {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'R', 'F', 'B', 'T', 'D', 'C', 'K', 'P'};

json model_to_json(const ModelConfig& m) {
  return {{"stem_width", m.stem.stem_width},     {"base_width", m.stem.base_width},
          {"expansion", m.stem.expansion},       {"blocks", m.stem.blocks},
          {"decoder_widths", m.decoder_widths}, {"distance_scale", m.distance_scale}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.stem.stem_width = j.at("stem_width").get<int>();
  m.stem.base_width = j.at("base_width").get<int>();
  m.stem.expansion = j.at("expansion").get<int>();
  m.stem.blocks = j.at("blocks").get<std::array<int, 4>>();
  m.decoder_widths = j.at("decoder_widths").get<std::array<int, 3>>();
  m.distance_scale = j.at("distance_scale").get<double>();
  return m;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw CheckpointError("truncated checkpoint");
  return v;
}

struct Parsed {
  CheckpointInfo info;
  json header;
  std::streamoff data_offset = 0;
};

Parsed parse_header(std::ifstream& in, const std::filesystem::path& path) {
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
    throw CheckpointError("not a checkpoint file: " + path.string());
  Parsed p;
  p.info.version = read_pod<std::uint32_t>(in);
  if (p.info.version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(p.info.version));
  const auto len = read_pod<std::uint64_t>(in);
  if (len > (1u << 30)) throw CheckpointError("implausible header length");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError("truncated checkpoint header");
  try {
    p.header = json::parse(text);
    p.info.step = p.header.at("step").get<std::int64_t>();
    p.info.model = model_from_json(p.header.at("model"));
    p.info.config_text = p.header.value("config", std::string{});
    p.info.code_version = p.header.value("code_version", std::string{});
    p.info.has_optimizer = p.header.at("optimizer").get<bool>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint header: ") + e.what());
  }
  p.data_offset = in.tellg();
  return p;
}

}  // namespace

const char* code_version() { return RFBTD_VERSION_STRING; }

void save_checkpoint(const std::filesystem::path& path, Model& model, const Adagrad* optimizer, std::int64_t step,
                     const std::string& config_text) {
  const auto params = model.parameters();
  json header;
  header["step"] = step;
  header["code_version"] = code_version();
  header["model"] = model_to_json(model.config());
  header["optimizer"] = optimizer != nullptr;
  if (!config_text.empty()) header["config"] = config_text;
  json list = json::array();
  for (const nn::Param* p : params) list.push_back({{"name", p->name}, {"shape", p->shape}});
  header["params"] = std::move(list);
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(kMagic, 8);
    write_pod(out, kCheckpointVersion);
    write_pod(out, static_cast<std::uint64_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const nn::Param* p : params)
      out.write(reinterpret_cast<const char*>(p->value.data()), static_cast<std::streamsize>(p->size() * sizeof(float)));
    if (optimizer) {
      for (const auto& acc : optimizer->state())
        out.write(reinterpret_cast<const char*>(acc.data()), static_cast<std::streamsize>(acc.size() * sizeof(float)));
    }
    if (!out) throw CheckpointError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return parse_header(in, path).info;
}

CheckpointInfo load_checkpoint(const std::filesystem::path& path, Model& model, Adagrad* optimizer) {
  std::ifstream in(path, std::ios::binary);
  Parsed parsed = parse_header(in, path);

  const auto params = model.parameters();
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < params.size(); ++i) index[params[i]->name] = i;

  const json& list = parsed.header.at("params");
  if (list.size() != params.size())
    throw CheckpointError("parameter count mismatch: file has " + std::to_string(list.size()) + ", model has " +
                          std::to_string(params.size()));
  std::vector<std::size_t> order;
  order.reserve(list.size());
  for (const json& e : list) {
    const std::string name = e.at("name").get<std::string>();
    const auto shape = e.at("shape").get<std::vector<int>>();
    auto it = index.find(name);
    if (it == index.end()) throw CheckpointError("unknown parameter in checkpoint: " + name);
    if (params[it->second]->shape != shape) throw CheckpointError("shape mismatch for " + name);
    order.push_back(it->second);
  }

  std::vector<std::vector<float>> values(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    values[k].resize(params[order[k]]->size());
    if (!in.read(reinterpret_cast<char*>(values[k].data()), static_cast<std::streamsize>(values[k].size() * sizeof(float))))
      throw CheckpointError("truncated parameter data");
  }
  std::vector<std::vector<float>> accs;
  if (optimizer && parsed.info.has_optimizer) {
    if (optimizer->params().size() != params.size()) throw CheckpointError("optimizer does not match model");
    accs.resize(order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      accs[k].resize(params[order[k]]->size());
      if (!in.read(reinterpret_cast<char*>(accs[k].data()), static_cast<std::streamsize>(accs[k].size() * sizeof(float))))
        throw CheckpointError("truncated optimizer state");
    }
  }

  for (std::size_t k = 0; k < order.size(); ++k) params[order[k]]->value = std::move(values[k]);
  if (!accs.empty()) {
    // Optimizer state is indexed like model.parameters().
    for (std::size_t k = 0; k < order.size(); ++k) optimizer->state()[order[k]] = std::move(accs[k]);
  }
  return parsed.info;
}

}  // namespace rfbtd
