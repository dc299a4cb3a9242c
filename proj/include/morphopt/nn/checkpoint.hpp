#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "morphopt/nn/policy.hpp"

namespace morphopt::nn {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'R', 'P', 'H', 'O', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Named float32 tensors plus a JSON manifest. The first tensor is always the
// policy parameter vector; optimizer moments may follow. Byte layout is
// documented in docs/FORMATS.md.
struct Checkpoint {
  PolicySpec spec;
  Vector<float> params;
  std::vector<std::pair<std::string, Vector<float>>> extra_tensors;
  nlohmann::json manifest = nlohmann::json::object();  // caller-defined fields
};

nlohmann::json spec_to_json(const PolicySpec& spec);
PolicySpec spec_from_json(const nlohmann::json& j);

// Throws CheckpointError on I/O failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws CheckpointError on a malformed or inconsistent file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

// In-memory variants used by the file functions and by tests.
std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace morphopt::nn
