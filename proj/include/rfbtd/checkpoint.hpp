#pragma once

// Binary parameter archive:
//   8-byte magic "RFBTDCKP", uint32 format version, uint64 header length,
//   JSON header (model config, parameter names and shapes, step), then the
//   float32 parameter values in header order, then the optimizer
//   accumulators in the same order when present. Little-endian.

#include <cstdint>
#include <filesystem>
#include <string>

#include "rfbtd/network.hpp"
#include "rfbtd/optim.hpp"

namespace rfbtd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  std::uint32_t version = 0;
  std::int64_t step = 0;
  ModelConfig model;
  std::string config_text;  // serialized TrainConfig, may be empty
  std::string code_version;
  bool has_optimizer = false;
};

void save_checkpoint(const std::filesystem::path& path, Model& model, const Adagrad* optimizer, std::int64_t step,
                     const std::string& config_text = {});

// Reads only the header.
CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Loads into an existing model. Every parameter must be present with the same
// shape, otherwise CheckpointError is thrown and the model is left untouched.
// Optimizer state is restored when `optimizer` is non-null and the file has it.
CheckpointInfo load_checkpoint(const std::filesystem::path& path, Model& model, Adagrad* optimizer = nullptr);

const char* code_version();

}  // namespace rfbtd
