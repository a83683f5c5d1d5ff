#pragma once

#include <string>
#include <vector>

#include "biasly/model.hpp"
#include "json.hpp"

namespace biasly::model {

// Binary layout, all integers and floats little-endian:
//   8 bytes   magic "BIASLYCK"
//   u32       format version (1)
//   u64       length of the JSON header, then that many bytes of UTF-8 JSON:
//             {"model": ModelConfig, "vocab": [...], "meta": {...}}
//   u64       parameter count, then per parameter:
//             u32 name length, name bytes, u32 rank, u64 dims..., f64 values
inline constexpr char kCheckpointMagic[8] = {'B', 'I', 'A', 'S', 'L', 'Y', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> vocab;
  nlohmann::json meta = nlohmann::json::object();
  std::vector<NamedParam> params;
};

Checkpoint make_checkpoint(const Model& model, std::vector<std::string> vocab,
                           nlohmann::json meta = nlohmann::json::object());

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Rebuilds the model described by the checkpoint and loads its weights.
Model restore_model(const Checkpoint& ckpt);

}  // namespace biasly::model
