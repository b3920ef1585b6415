#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adaplan/nn/mlp.hpp"

namespace adaplan::nn {

inline constexpr char kCheckpointMagic[4] = {'A', 'D', 'P', 'L'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  nlohmann::json header;
  std::vector<MlpParams> networks;
};

// Layout:
//   "ADPL" | u16 version | u32 header length | UTF-8 JSON header |
//   per network, per layer: f32 weights (row-major) then f32 bias.
// All integers and floats are little-endian. The writer adds a "networks"
// array (layer_sizes, activation) to the header; the reader uses it for shapes.
void write_checkpoint(const std::filesystem::path& path, nlohmann::json header,
                      std::span<const MlpParams> networks);

/// Throws FileError if the file cannot be opened, FormatError on bad magic,
/// version, header or truncated payload.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to the nearest 32-bit float, i.e. what a
/// write/read cycle produces.
MlpParams quantize_f32(const MlpParams& params);

}  // namespace adaplan::nn
